//! Odometers, product-type cocycles and the squashable odometer cocycle.
//!
//! The odometer with digits `a_1, a_2, ...` is addition of `(1, 0, 0, ...)`
//! with carry on `prod {0..a_k-1}`. We truncate at a finite depth `K`, so
//! the map becomes `+1` on a cyclic group of order `q_{K+1} = a_1 ... a_K`.
//! Points are identified with the integers `sum x_k q_k`.

use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{balanced_block, find_witness_shift, GammaVector, DEFAULT_MATCH_TOL};
use crate::error::{Error, Result};
use crate::measure::{self, Measure};

/// Largest block order we materialize (`a_k = m 4^m` entries per level).
pub const MAX_MATERIALIZED_ORDER: u64 = 8;

/// Tolerance for comparing partial transfer function differences.
pub const VALUE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdometerSpec {
    digits: Vec<u64>,
    /// `q[i] = q_{i+1}`, so `q[0] = 1` and `q[K]` is the period.
    q: Vec<u128>,
}

impl OdometerSpec {
    pub fn new(digits: Vec<u64>) -> Result<Self> {
        if digits.is_empty() {
            return Err(Error::InvalidDigits("need at least one digit".into()));
        }
        if let Some(d) = digits.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDigits(format!("digit {d} is below 2")));
        }
        let mut q = Vec::with_capacity(digits.len() + 1);
        q.push(1u128);
        for &a in &digits {
            let next = q
                .last()
                .unwrap()
                .checked_mul(a as u128)
                .ok_or_else(|| Error::Overflow("odometer period exceeds u128".into()))?;
            q.push(next);
        }
        Ok(Self { digits, q })
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    /// `q_n` for `n = 1..=K+1`.
    pub fn q(&self, n: usize) -> u128 {
        self.q[n - 1]
    }

    pub fn period(&self) -> u128 {
        *self.q.last().unwrap()
    }

    /// Period as a `u64`, for finite-system use.
    pub fn period_u64(&self) -> Result<u64> {
        u64::try_from(self.period()).map_err(|_| Error::Overflow("period exceeds u64".into()))
    }

    pub fn zero(&self) -> OdometerPoint {
        OdometerPoint { coords: vec![0; self.depth()] }
    }

    pub fn point(&self, coords: Vec<u64>) -> Result<OdometerPoint> {
        if coords.len() != self.depth() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates, got {}",
                self.depth(),
                coords.len()
            )));
        }
        if let Some((k, (&x, &a))) = coords.iter().zip(&self.digits).enumerate().find(|(_, (&x, &a))| x >= a) {
            return Err(Error::InvalidPoint(format!("coordinate {} is {x}, digit is {a}", k + 1)));
        }
        Ok(OdometerPoint { coords })
    }

    pub fn index_of(&self, x: &OdometerPoint) -> u128 {
        x.coords.iter().zip(&self.q).map(|(&c, &q)| c as u128 * q).sum()
    }

    pub fn point_at(&self, index: u128) -> OdometerPoint {
        let mut rest = index % self.period();
        let coords = self
            .digits
            .iter()
            .map(|&a| {
                let c = (rest % a as u128) as u64;
                rest /= a as u128;
                c
            })
            .collect();
        OdometerPoint { coords }
    }

    /// Group addition with carry; returns the sum and the carry entering
    /// each coordinate (`carries[0]` is always 0).
    pub fn add_with_carries(&self, x: &OdometerPoint, y: &OdometerPoint) -> (OdometerPoint, Vec<bool>) {
        let mut carry = 0u64;
        let mut carries = Vec::with_capacity(self.depth());
        let coords = x
            .coords
            .iter()
            .zip(&y.coords)
            .zip(&self.digits)
            .map(|((&a, &b), &d)| {
                carries.push(carry == 1);
                let s = a + b + carry;
                carry = u64::from(s >= d);
                s % d
            })
            .collect();
        (OdometerPoint { coords }, carries)
    }

    pub fn add(&self, x: &OdometerPoint, y: &OdometerPoint) -> OdometerPoint {
        self.add_with_carries(x, y).0
    }

    /// `T^n x`; negative `n` runs the odometer backwards.
    pub fn step(&self, x: &OdometerPoint, n: i128) -> OdometerPoint {
        let period = self.period() as i128;
        let shift = n.rem_euclid(period) as u128;
        self.add(x, &self.point_at(shift))
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> OdometerPoint {
        OdometerPoint {
            coords: self.digits.iter().map(|&a| rng.gen_range(0..a)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OdometerPoint {
    coords: Vec<u64>,
}

impl OdometerPoint {
    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    /// Coordinate `k` (1-based).
    pub fn coord(&self, k: usize) -> u64 {
        self.coords[k - 1]
    }
}

/// Cylinder set: fixed coordinates `u_1..u_{k-1}` and optionally a window
/// `lo <= x_k < hi` on the next coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cylinder {
    pub prefix: Vec<u64>,
    pub window: Option<(u64, u64)>,
}

impl Cylinder {
    pub fn validate(&self, spec: &OdometerSpec) -> Result<()> {
        let constrained = self.prefix.len() + usize::from(self.window.is_some());
        if constrained > spec.depth() {
            return Err(Error::InvalidPoint("cylinder deeper than truncation".into()));
        }
        for (k, (&u, &a)) in self.prefix.iter().zip(spec.digits()).enumerate() {
            if u >= a {
                return Err(Error::InvalidPoint(format!("prefix coordinate {} is {u}", k + 1)));
            }
        }
        if let Some((lo, hi)) = self.window {
            if lo >= hi || hi > spec.digits()[self.prefix.len()] {
                return Err(Error::InvalidPoint(format!("bad window [{lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Exact Haar measure `prod 1/a_nu * (hi - lo)/a_k`.
    pub fn measure(&self, spec: &OdometerSpec) -> Measure {
        let k = self.prefix.len();
        let mut denom = spec.q(k + 1);
        let mut numer = 1u128;
        if let Some((lo, hi)) = self.window {
            numer = (hi - lo) as u128;
            denom *= spec.digits()[k] as u128;
        }
        measure::from_u128(numer, denom)
    }

    pub fn contains(&self, x: &OdometerPoint) -> bool {
        let k = self.prefix.len();
        x.coords[..k] == self.prefix[..]
            && self.window.map_or(true, |(lo, hi)| (lo..hi).contains(&x.coords[k]))
    }

    /// Indices of all points of the truncated odometer in the cylinder, ascending.
    pub fn indices(&self, spec: &OdometerSpec) -> Vec<u128> {
        let k = self.prefix.len();
        let base: u128 = self.prefix.iter().zip(&spec.q).map(|(&u, &q)| u as u128 * q).sum();
        let (lo, hi, free_from) = match self.window {
            Some((lo, hi)) => (lo, hi, k + 2),
            None => (0, 1, k + 1),
        };
        let step = spec.q(free_from.min(spec.depth() + 1));
        let reps = spec.period() / step;
        let mut out = Vec::new();
        for rep in 0..reps {
            for xk in lo..hi {
                let window_part = if self.window.is_some() { xk as u128 * spec.q(k + 1) } else { 0 };
                out.push(base + window_part + rep * step);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Product-type cocycle `phi(x) = sum_k [beta_k((Tx)_k) - beta_k(x_k)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCocycle {
    betas: Vec<Vec<f64>>,
}

impl ProductCocycle {
    pub fn new(spec: &OdometerSpec, betas: Vec<Vec<f64>>) -> Result<Self> {
        if betas.len() != spec.depth() {
            return Err(Error::InvalidParameter(format!(
                "{} partial transfer functions for depth {}",
                betas.len(),
                spec.depth()
            )));
        }
        for (k, (beta, &a)) in betas.iter().zip(spec.digits()).enumerate() {
            if beta.len() as u64 != a {
                return Err(Error::InvalidParameter(format!(
                    "beta_{} has {} values, digit is {a}",
                    k + 1,
                    beta.len()
                )));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("partial transfer function"));
            }
        }
        Ok(Self { betas })
    }

    pub fn zero(spec: &OdometerSpec) -> Self {
        Self {
            betas: spec.digits().iter().map(|&a| vec![0.0; a as usize]).collect(),
        }
    }

    pub fn betas(&self) -> &[Vec<f64>] {
        &self.betas
    }

    /// `beta_k` (1-based).
    pub fn beta(&self, k: usize) -> &[f64] {
        &self.betas[k - 1]
    }

    /// `h(x) = sum_k beta_k(x_k)`, the transfer function of the truncation.
    pub fn transfer(&self, x: &OdometerPoint) -> f64 {
        self.betas.iter().zip(x.coords()).map(|(b, &c)| b[c as usize]).sum()
    }

    /// Per-level differences `beta_k(y_k) - beta_k(x_k)`, zero where the coordinates agree.
    fn level_differences<'a>(&'a self, x: &'a OdometerPoint, y: &'a OdometerPoint) -> impl Iterator<Item = f64> + 'a {
        self.betas
            .iter()
            .zip(x.coords().iter().zip(y.coords()))
            .map(|(b, (&xc, &yc))| if xc == yc { 0.0 } else { b[yc as usize] - b[xc as usize] })
    }

    pub fn cocycle_value(&self, spec: &OdometerSpec, x: &OdometerPoint) -> f64 {
        let tx = spec.step(x, 1);
        self.level_differences(x, &tx).sum()
    }

    /// Birkhoff sum `phi_n(x)` through the telescoped closed form.
    pub fn birkhoff_sum(&self, spec: &OdometerSpec, x: &OdometerPoint, n: u128) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let y = spec.step(x, (n % spec.period()) as i128);
        self.level_differences(x, &y).sum()
    }
}

/// Parameters of the squashable odometer construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section6Params {
    pub mu: Vec<u128>,
    pub nu: Vec<u128>,
    /// Overrides the default sequence `g_{2n} = 1, g_{2n+1} = 1/sqrt 2`.
    #[serde(default)]
    pub g: Option<Vec<f64>>,
}

/// Default `g_k`: 1 at even `k`, `1/sqrt 2` at odd `k`.
pub fn default_g(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    }
}

impl Section6Params {
    pub fn new(mu: Vec<u128>, nu: Vec<u128>) -> Result<Self> {
        let params = Self { mu, nu, g: None };
        params.validate()?;
        Ok(params)
    }

    /// `mu_k = k^2`, `nu_k = k^2 3^(4k^2)`; far too large to materialize.
    pub fn paper(levels: usize) -> Result<Self> {
        let mut mu = Vec::with_capacity(levels);
        let mut nu = Vec::with_capacity(levels);
        for k in 1..=levels as u32 {
            let k2 = (k as u128).pow(2);
            let pow = 3u128
                .checked_pow(4 * k * k)
                .and_then(|p| p.checked_mul(k2))
                .ok_or_else(|| Error::Overflow(format!("nu_{k} = k^2 3^(4k^2) exceeds u128")))?;
            mu.push(k2);
            nu.push(pow);
        }
        Self::new(mu, nu)
    }

    pub fn levels(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() || self.mu.len() != self.nu.len() {
            return Err(Error::InvalidParameter("mu and nu must be non-empty lists of equal length".into()));
        }
        if self.mu.iter().chain(&self.nu).any(|&v| v == 0) {
            return Err(Error::InvalidParameter("mu_k and nu_k must be positive".into()));
        }
        if let Some(g) = &self.g {
            if g.len() != self.mu.len() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("g override must give one finite value per level".into()));
            }
        }
        Ok(())
    }

    pub fn g(&self, k: usize) -> f64 {
        self.g.as_ref().map_or_else(|| default_g(k), |g| g[k - 1])
    }

    /// `m_k = mu_k nu_k`.
    pub fn order(&self, k: usize) -> Result<u128> {
        self.mu[k - 1]
            .checked_mul(self.nu[k - 1])
            .ok_or_else(|| Error::Overflow(format!("m_{k} exceeds u128")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMeta {
    pub level: usize,
    pub mu: u64,
    pub nu: u64,
    pub m: u64,
    pub digit: u64,
    /// `4^m`, the width of the windows `j 4^m <= x_k < (j+1) 4^m`.
    pub window: u64,
    pub g: f64,
    pub gammas: Vec<f64>,
    /// `n(j, k)` for `j = 0..m-1`.
    pub witness_shifts: Vec<u64>,
    /// Exact display-(6) counts at the recorded shifts.
    pub witness_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section6 {
    pub params: Section6Params,
    pub spec: OdometerSpec,
    pub cocycle: ProductCocycle,
    pub levels: Vec<LevelMeta>,
}

impl Section6 {
    pub fn level(&self, k: usize) -> &LevelMeta {
        &self.levels[k - 1]
    }
}

/// Counts `nu` in window `j` with `beta(j 4^m + nu + n) - beta(j 4^m + nu) = g` (to `tol`),
/// keeping `nu + n` inside the window.
pub fn window_match_count(beta: &[f64], window: u64, j: u64, shift: u64, g: f64, tol: f64) -> u64 {
    if shift >= window {
        return 0;
    }
    let start = (j * window) as usize;
    (0..(window - shift) as usize)
        .filter(|&nu| {
            let i = start + nu;
            (beta[i + shift as usize] - beta[i] - g).abs() <= tol
        })
        .count() as u64
}

/// Builds the odometer with digits `a_k = m_k 4^(m_k)` and the product
/// cocycle `beta_k(j 4^m + nu) = e^(j/nu_k) b_k(nu)`.
pub fn build_section6(params: &Section6Params) -> Result<Section6> {
    params.validate()?;
    let mut digits = Vec::with_capacity(params.levels());
    let mut betas = Vec::with_capacity(params.levels());
    let mut levels = Vec::with_capacity(params.levels());
    for k in 1..=params.levels() {
        let m = params.order(k)?;
        if m > MAX_MATERIALIZED_ORDER as u128 {
            return Err(Error::Overflow(format!(
                "m_{k} = {m} exceeds the materialization limit {MAX_MATERIALIZED_ORDER}"
            )));
        }
        let (m, mu, nu) = (m as u64, params.mu[k - 1] as u64, params.nu[k - 1] as u64);
        let window = 4u64.pow(m as u32);
        let digit = m * window;
        let g = params.g(k);
        let gammas: Vec<f64> = (1..=m).map(|j| g * (-((j - 1) as f64) / nu as f64).exp()).collect();
        let block = balanced_block(&GammaVector::new(gammas.clone())?);
        let mut beta = Vec::with_capacity(digit as usize);
        for j in 0..m {
            let scale = (j as f64 / nu as f64).exp();
            beta.extend(block.values().iter().map(|b| scale * b));
        }
        let mut witness_shifts = Vec::with_capacity(m as usize);
        let mut witness_counts = Vec::with_capacity(m as usize);
        for j in 0..m {
            let shift = find_witness_shift(&block, gammas[j as usize], DEFAULT_MATCH_TOL)
                .ok_or_else(|| Error::Construction(format!("no witness shift for level {k}, window {j}")))?
                as u64;
            witness_counts.push(window_match_count(&beta, window, j, shift, g, VALUE_TOL));
            witness_shifts.push(shift);
        }
        digits.push(digit);
        betas.push(beta);
        levels.push(LevelMeta {
            level: k,
            mu,
            nu,
            m,
            digit,
            window,
            g,
            gammas,
            witness_shifts,
            witness_counts,
        });
    }
    let spec = OdometerSpec::new(digits)?;
    let cocycle = ProductCocycle::new(&spec, betas)?;
    Ok(Section6 {
        params: params.clone(),
        spec,
        cocycle,
        levels,
    })
}

/// Translation `S = (r_1 4^(m_1), r_2 4^(m_2), ...)` with `r_k = floor(nu_k log c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashTranslation {
    pub c: f64,
    pub r: Vec<u64>,
    pub point: OdometerPoint,
    /// Levels where `r_k 4^(m_k)` had to be reduced modulo `a_k`.
    pub overflow_levels: Vec<usize>,
}

pub fn squash_translation(build: &Section6, c: f64) -> Result<SquashTranslation> {
    if !(c > 1.0 && c < std::f64::consts::E) {
        return Err(Error::SquashConstant(c));
    }
    let log_c = c.ln();
    let mut r = Vec::with_capacity(build.levels.len());
    let mut coords = Vec::with_capacity(build.levels.len());
    let mut overflow_levels = Vec::new();
    for meta in &build.levels {
        let rk = (meta.nu as f64 * log_c).floor() as u64;
        let raw = rk as u128 * meta.window as u128;
        if raw >= meta.digit as u128 {
            overflow_levels.push(meta.level);
        }
        coords.push((raw % meta.digit as u128) as u64);
        r.push(rk);
    }
    Ok(SquashTranslation {
        c,
        r,
        point: build.spec.point(coords)?,
        overflow_levels,
    })
}

/// Per-level terms `|beta_k((Sx)_k) - c beta_k(x_k)|`.
pub fn coboundary_defect(build: &Section6, squash: &SquashTranslation, x: &OdometerPoint) -> Vec<f64> {
    let sx = build.spec.add(x, &squash.point);
    build
        .cocycle
        .betas()
        .iter()
        .zip(x.coords().iter().zip(sx.coords()))
        .map(|(beta, (&xk, &sk))| (beta[sk as usize] - squash.c * beta[xk as usize]).abs())
        .collect()
}

/// Whether `x` avoids the exceptional sets at level `k`: no carry enters
/// level `k` when adding `S`, the translated coordinate does not wrap, and
/// `|beta_k(x_k)| <= m_k^(3/4)`.
pub fn non_exceptional_at(build: &Section6, squash: &SquashTranslation, x: &OdometerPoint, k: usize) -> bool {
    let (_, carries) = build.spec.add_with_carries(x, &squash.point);
    let meta = build.level(k);
    let xk = x.coord(k);
    let shifted = xk as u128 + squash.r[k - 1] as u128 * meta.window as u128;
    !carries[k - 1]
        && shifted < meta.digit as u128
        && build.cocycle.beta(k)[xk as usize].abs() <= (meta.m as f64).powf(0.75)
}

/// Chain bound `c m_k^(3/4) / nu_k` on non-exceptional points.
pub fn defect_bound(meta: &LevelMeta, c: f64) -> f64 {
    c * (meta.m as f64).powf(0.75) / meta.nu as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalMass {
    pub level: usize,
    pub count: u64,
    pub mass: String,
    /// `e^(2 mu_k) a_k / sqrt(m_k)`.
    pub count_bound: f64,
    pub pass: bool,
}

/// Exact count of `nu` with `|beta_k(nu)| >= m_k^(3/4)` against `e^(2 mu_k) a_k / sqrt(m_k)`.
pub fn exceptional_mass(build: &Section6, k: usize) -> ExceptionalMass {
    let meta = build.level(k);
    let threshold = (meta.m as f64).powf(0.75);
    let count = build.cocycle.beta(k).iter().filter(|b| b.abs() >= threshold).count() as u64;
    let count_bound = (2.0 * meta.mu as f64).exp() * meta.digit as f64 / (meta.m as f64).sqrt();
    ExceptionalMass {
        level: k,
        count,
        mass: measure::fraction_string(&measure::ratio(count, meta.digit)),
        count_bound,
        pass: (count as f64) <= count_bound,
    }
}

/// `q_k` as `u64` (the witness time unit at level `k`).
pub fn q_u64(spec: &OdometerSpec, k: usize) -> Result<u64> {
    spec.q(k)
        .to_u64()
        .ok_or_else(|| Error::Overflow(format!("q_{k} exceeds u64")))
}
