//! Level parameters for the smooth rotation cocycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cf::ContinuedFraction;

/// How the growth constants `c_k`, `r_k` are materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `c_k = ceil(k^3 e^k)`, `r_k = ceil(k^4 e^k)`.
    Paper,
    /// `c_k = r_k = 3k`.
    Toy,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "toy" => Ok(Profile::Toy),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

impl Profile {
    /// `(c_k, r_k)` before rounding.
    pub fn exact(self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        match self {
            Profile::Paper => (kf.powi(3) * kf.exp(), kf.powi(4) * kf.exp()),
            Profile::Toy => (3.0 * kf, 3.0 * kf),
        }
    }

    pub fn constants(self, k: usize) -> (u64, u64) {
        let (c, r) = self.exact(k);
        (c.ceil() as u64, r.ceil() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelParams {
    pub k: usize,
    /// Continued-fraction index `n_k`.
    pub n: usize,
    pub a_n: u64,
    pub q_n: String,
    pub q_prev: String,
    pub c: u64,
    pub r: u64,
    pub c_exact: f64,
    pub r_exact: f64,
    /// Block length in floors of height `q_{n-1}`; even.
    pub ell: u64,
    pub ell_half: u64,
    /// Plateau height `e^k k^6 / q_n`.
    pub d: f64,
    /// `ln(d (r q_{n-1})^p)`.
    pub ln_d_bar: f64,
    pub d_bar: f64,
}

impl LevelParams {
    /// `(-1)^j (1 + 1/c)^j`.
    pub fn block_scale(&self, j: u64) -> f64 {
        let s = (1.0 + 1.0 / self.c as f64).powi(j as i32);
        if j % 2 == 0 {
            s
        } else {
            -s
        }
    }

    /// `d e^k`.
    pub fn f_bound(&self) -> f64 {
        self.d * (self.k as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section7Params {
    pub profile: Profile,
    pub smoothness: usize,
    pub levels: Vec<LevelParams>,
}

/// `2 floor((a - 1) / 2r)`.
pub fn block_length(a: u64, r: u64) -> u64 {
    2 * (a.saturating_sub(1) / (2 * r))
}

pub fn level_params(cf: &ContinuedFraction, k: usize, n: usize, profile: Profile, p: usize) -> Result<LevelParams> {
    if n == 0 || n + 2 > cf.depth() {
        return Err(Error::TowerLevel { level: n, depth: cf.depth() });
    }
    let (c, r) = profile.constants(k);
    let (c_exact, r_exact) = profile.exact(k);
    let a_n = cf.a(n);
    let ell = block_length(a_n, r);
    if ell < 4 {
        return Err(Error::InvalidParameter(format!(
            "level {k} at index {n}: block length {ell} < 4 (a_n = {a_n}, r = {r})"
        )));
    }
    let kf = k as f64;
    let ln_d = kf + 6.0 * kf.ln() - cf.ln_q(n);
    let ln_d_bar = ln_d + p as f64 * ((r as f64).ln() + cf.ln_q(n - 1));
    Ok(LevelParams {
        k,
        n,
        a_n,
        q_n: cf.q(n).to_string(),
        q_prev: cf.q(n - 1).to_string(),
        c,
        r,
        c_exact,
        r_exact,
        ell,
        ell_half: ell / 2,
        d: ln_d.exp(),
        ln_d_bar,
        d_bar: ln_d_bar.exp(),
    })
}

/// Levels `k = 1, 2, ...` at the given increasing indices.
pub fn section7_params(cf: &ContinuedFraction, indices: &[usize], profile: Profile, p: usize) -> Result<Section7Params> {
    if p == 0 {
        return Err(Error::InvalidParameter("smoothness p must be at least 1".into()));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("level indices must increase".into()));
    }
    let levels = indices
        .iter()
        .enumerate()
        .map(|(i, &n)| level_params(cf, i + 1, n, profile, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Section7Params {
        profile,
        smoothness: p,
        levels,
    })
}

/// Greedy ascending choice of indices whose quotient gives a block length of at least 4.
pub fn auto_indices(cf: &ContinuedFraction, profile: Profile) -> Vec<usize> {
    let mut out = Vec::new();
    for n in 1..=cf.depth().saturating_sub(2) {
        let (_, r) = profile.constants(out.len() + 1);
        if block_length(cf.a(n), r) >= 4 {
            out.push(n);
        }
    }
    out
}

impl Section7Params {
    /// `d_bar_k e^k` strictly decreasing over the levels.
    pub fn summability_decreasing(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].ln_d_bar + (w[1].k as f64) < w[0].ln_d_bar + (w[0].k as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_lengths() {
        assert_eq!(block_length(256, 3), 84);
        assert_eq!(block_length(512, 6), 84);
        assert_eq!(block_length(5, 3), 0);
    }

    #[test]
    fn designated_indices() {
        let cf = ContinuedFraction::new(vec![1, 1, 1, 200, 1, 1, 1, 500]).unwrap();
        assert_eq!(auto_indices(&cf, Profile::Toy), vec![4]);
        let params = section7_params(&cf, &[4], Profile::Toy, 1).unwrap();
        let level = &params.levels[0];
        assert_eq!((level.c, level.r, level.ell, level.ell_half), (3, 3, 66, 33));
        assert!(section7_params(&cf, &[3], Profile::Toy, 1).is_err());
        assert!(section7_params(&cf, &[7], Profile::Toy, 1).is_err());
    }

    #[test]
    fn paper_constants_round_up() {
        assert_eq!(Profile::Paper.constants(1), (3, 3));
        assert_eq!(Profile::Paper.constants(2), (60, 119));
        assert_eq!(Profile::Toy.constants(2), (6, 6));
    }

    #[test]
    fn signs_alternate() {
        let cf = ContinuedFraction::new(vec![1, 256, 512, 1, 1]).unwrap();
        let params = section7_params(&cf, &[2, 3], Profile::Toy, 1).unwrap();
        let l = &params.levels[0];
        assert_eq!(l.block_scale(0), 1.0);
        assert!((l.block_scale(1) + 4.0 / 3.0).abs() < 1e-15);
        assert!((l.d - std::f64::consts::E / 257.0).abs() < 1e-15);
    }
}
