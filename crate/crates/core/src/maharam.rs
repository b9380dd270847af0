//! Maharam skew products of finite nonsingular systems.
//!
//! `T(w, y) = (Rw, y - log(p(Rw)/p(w)))` on `states x R` preserves
//! `dp(w) e^y dy`, and the translations `Q_t(w, y) = (w, y + t)` commute
//! with `T` and multiply the measure by `e^t`.

use num_traits::{One, Signed};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{self, Measure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsingularSystem {
    #[serde(with = "fraction_vec")]
    masses: Vec<Measure>,
    perm: Vec<usize>,
}

mod fraction_vec {
    use crate::measure::{fraction_string, parse_fraction, Measure};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[Measure], serializer: S) -> Result<S::Ok, S::Error> {
        values.iter().map(fraction_string).collect::<Vec<_>>().serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Measure>, D::Error> {
        Vec::<String>::deserialize(deserializer)?
            .iter()
            .map(|t| parse_fraction(t).ok_or_else(|| D::Error::custom(format!("bad fraction {t:?}"))))
            .collect()
    }
}

impl NonsingularSystem {
    pub fn new(masses: Vec<Measure>, perm: Vec<usize>) -> Result<Self> {
        let system = Self { masses, perm };
        system.validate()?;
        Ok(system)
    }

    pub fn validate(&self) -> Result<()> {
        if self.masses.is_empty() || self.masses.len() != self.perm.len() {
            return Err(Error::InvalidSystem("need one mass and one image per state".into()));
        }
        if let Some(i) = self.masses.iter().position(|p| !p.is_positive()) {
            return Err(Error::InvalidSystem(format!("state {i} has non-positive mass")));
        }
        let total = self.masses.iter().fold(measure::zero(), |a, p| a + p);
        if !total.is_one() {
            return Err(Error::InvalidSystem(format!(
                "masses sum to {}, not 1",
                measure::fraction_string(&total)
            )));
        }
        let mut seen = vec![false; self.perm.len()];
        for &j in &self.perm {
            if j >= seen.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidSystem("map is not a bijection".into()));
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, state: usize) -> &Measure {
        &self.masses[state]
    }

    pub fn image(&self, state: usize) -> usize {
        self.perm[state]
    }

    /// `p(Rw) / p(w)`.
    pub fn derivative(&self, state: usize) -> Measure {
        &self.masses[self.perm[state]] / &self.masses[state]
    }
}

/// `log` of an exact positive rational, via numerator and denominator.
pub fn log_ratio(value: &Measure) -> f64 {
    ln_big(value.numer()) - ln_big(value.denom())
}

fn ln_big(value: &num_bigint::BigInt) -> f64 {
    let bits = value.bits();
    if bits < 1000 {
        measure::to_f64(&Measure::from_integer(value.clone())).ln()
    } else {
        let shift = bits - 900;
        let top = measure::to_f64(&Measure::from_integer(value >> shift));
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Box `{w} x [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassBox {
    pub state: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Affine fibre map `y -> y - log(ratio) + shift`, kept symbolic so that
/// compositions can be compared exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FibreMap {
    pub target: usize,
    #[serde(with = "measure::fraction")]
    pub ratio: Measure,
    #[serde(with = "measure::fraction")]
    pub shift: Measure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaharamProduct {
    system: NonsingularSystem,
    derivatives: Vec<Measure>,
    offsets: Vec<f64>,
}

pub fn build_maharam(system: &NonsingularSystem) -> Result<MaharamProduct> {
    system.validate()?;
    let derivatives: Vec<Measure> = (0..system.states()).map(|w| system.derivative(w)).collect();
    let offsets = derivatives.iter().map(|d| -log_ratio(d)).collect();
    Ok(MaharamProduct {
        system: system.clone(),
        derivatives,
        offsets,
    })
}

impl MaharamProduct {
    pub fn system(&self) -> &NonsingularSystem {
        &self.system
    }

    /// Fibre offset `-log(p(Rw)/p(w))`.
    pub fn offset(&self, state: usize) -> f64 {
        self.offsets[state]
    }

    pub fn apply(&self, state: usize, y: f64) -> (usize, f64) {
        (self.system.image(state), y + self.offsets[state])
    }

    /// `m(B) = p(w)(e^hi - e^lo)`.
    pub fn box_mass(&self, b: &MassBox) -> f64 {
        measure::to_f64(self.system.mass(b.state)) * b.lo.exp() * (b.hi - b.lo).exp_m1()
    }

    pub fn map_box(&self, b: &MassBox) -> MassBox {
        let off = self.offsets[b.state];
        MassBox {
            state: self.system.image(b.state),
            lo: b.lo + off,
            hi: b.hi + off,
        }
    }

    pub fn random_box<R: Rng + ?Sized>(&self, rng: &mut R) -> MassBox {
        let state = rng.gen_range(0..self.system.states());
        let lo = rng.gen_range(-5.0..5.0);
        let width = rng.gen_range(1e-3..3.0);
        MassBox { state, lo, hi: lo + width }
    }

    /// `T` as a symbolic fibre map.
    pub fn symbolic(&self, state: usize) -> FibreMap {
        FibreMap {
            target: self.system.image(state),
            ratio: self.derivatives[state].clone(),
            shift: measure::zero(),
        }
    }
}

/// `Q_t` as a symbolic fibre map at `state`.
pub fn flow_map(state: usize, t: &Measure) -> FibreMap {
    FibreMap {
        target: state,
        ratio: measure::one(),
        shift: t.clone(),
    }
}

/// `g o f` for symbolic fibre maps (`f` first).
pub fn compose(f: &FibreMap, g: &FibreMap) -> FibreMap {
    FibreMap {
        target: g.target,
        ratio: &f.ratio * &g.ratio,
        shift: &f.shift + &g.shift,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilationReport {
    pub t: f64,
    pub boxes: usize,
    pub commutes: bool,
    pub flow_law: bool,
    pub max_preservation_error: f64,
    pub max_dilation_error: f64,
    /// `|D(Q_t) D(Q_-t) - 1|`.
    pub inverse_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn relative(measured: f64, expected: f64) -> f64 {
    ((measured - expected) / expected).abs()
}

/// Checks `Q_t T = T Q_t`, `Q_{t+s} = Q_t Q_s` (both exactly, `s` drawn
/// from the boxes' generator), measure preservation and `D(Q_t) = e^t` on the boxes.
pub fn dilation_flow_check(prod: &MaharamProduct, t: f64, s: f64, boxes: &[MassBox], tolerance: f64) -> Result<DilationReport> {
    if !t.is_finite() || !s.is_finite() {
        return Err(Error::NonFinite("flow time"));
    }
    let t_exact = measure::from_f64(t);
    let s_exact = measure::from_f64(s);
    let states = prod.system().states();
    let commutes = (0..states).all(|w| {
        let qt_t = compose(&prod.symbolic(w), &flow_map(prod.system().image(w), &t_exact));
        let t_qt = compose(&flow_map(w, &t_exact), &prod.symbolic(w));
        qt_t == t_qt
    });
    let sum = &t_exact + &s_exact;
    let flow_law = (0..states).all(|w| compose(&flow_map(w, &s_exact), &flow_map(w, &t_exact)) == flow_map(w, &sum));

    let mut max_preservation_error = 0.0_f64;
    let mut max_dilation_error = 0.0_f64;
    let mut inverse_error = 0.0_f64;
    for b in boxes {
        if b.state >= states || !(b.lo < b.hi) {
            return Err(Error::InvalidParameter(format!("bad box {b:?}")));
        }
        let mass = prod.box_mass(b);
        max_preservation_error = max_preservation_error.max(relative(prod.box_mass(&prod.map_box(b)), mass));
        let forward = MassBox { lo: b.lo + t, hi: b.hi + t, ..*b };
        let backward = MassBox { lo: b.lo - t, hi: b.hi - t, ..*b };
        let d_plus = prod.box_mass(&forward) / mass;
        let d_minus = prod.box_mass(&backward) / mass;
        max_dilation_error = max_dilation_error.max(relative(d_plus, t.exp()));
        inverse_error = inverse_error.max((d_plus * d_minus - 1.0).abs());
    }
    Ok(DilationReport {
        t,
        boxes: boxes.len(),
        commutes,
        flow_law,
        max_preservation_error,
        max_dilation_error,
        inverse_error,
        tolerance,
        pass: commutes
            && flow_law
            && max_preservation_error <= tolerance
            && max_dilation_error <= tolerance
            && inverse_error <= tolerance,
    })
}

/// Converse check: a skew map `(w, y) -> (Rw, y + shift(w))` commuting with
/// the translations is the Maharam map of `R` iff `shift(w) = -log(p(Rw)/p(w))`.
/// Returns the per-state residuals.
pub fn maharam_form_residuals(system: &NonsingularSystem, shifts: &[f64]) -> Result<Vec<f64>> {
    system.validate()?;
    if shifts.len() != system.states() {
        return Err(Error::InvalidSystem("one shift per state required".into()));
    }
    Ok(shifts
        .iter()
        .enumerate()
        .map(|(w, s)| (s + log_ratio(&system.derivative(w))).abs())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> NonsingularSystem {
        NonsingularSystem::new(vec![measure::ratio(1, 3), measure::ratio(2, 3)], vec![1, 0]).unwrap()
    }

    #[test]
    fn swap_offsets() {
        let prod = build_maharam(&two_state()).unwrap();
        let (w, y) = prod.apply(0, 0.5);
        assert_eq!(w, 1);
        assert!((y - (0.5 - 2f64.ln())).abs() < 1e-15);
        assert!((prod.offset(1) - 2f64.ln()).abs() < 1e-15);
        let b = MassBox { state: 0, lo: -1.0, hi: 0.7 };
        let expected = (0.7f64.exp() - (-1.0f64).exp()) / 3.0;
        assert!(relative(prod.box_mass(&prod.map_box(&b)), expected) < 1e-14);
    }

    #[test]
    fn measure_preserving_base_leaves_fibre() {
        let sys = NonsingularSystem::new(vec![measure::ratio(1, 2); 2], vec![1, 0]).unwrap();
        let prod = build_maharam(&sys).unwrap();
        assert_eq!(prod.apply(0, 1.25), (1, 1.25));
    }

    #[test]
    fn rejects_invalid_systems() {
        assert!(NonsingularSystem::new(vec![measure::zero(), measure::one()], vec![1, 0]).is_err());
        assert!(NonsingularSystem::new(vec![measure::ratio(1, 2); 2], vec![0, 0]).is_err());
        assert!(NonsingularSystem::new(vec![measure::ratio(1, 3); 2], vec![1, 0]).is_err());
    }

    #[test]
    fn dilation_by_log_two_doubles() {
        let sys = NonsingularSystem::new(
            vec![measure::ratio(1, 2), measure::ratio(1, 3), measure::ratio(1, 6)],
            vec![1, 2, 0],
        )
        .unwrap();
        let prod = build_maharam(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let boxes: Vec<MassBox> = (0..100).map(|_| prod.random_box(&mut rng)).collect();
        let report = dilation_flow_check(&prod, 2f64.ln(), 0.3, &boxes, 1e-12).unwrap();
        assert!(report.pass, "{report:?}");
        let report = dilation_flow_check(&prod, 0.0, 0.0, &boxes, 1e-12).unwrap();
        assert!(report.pass && report.max_dilation_error == 0.0);
    }

    #[test]
    fn converse_form() {
        let sys = two_state();
        let prod = build_maharam(&sys).unwrap();
        let shifts = [prod.offset(0), prod.offset(1)];
        assert!(maharam_form_residuals(&sys, &shifts).unwrap().iter().all(|r| *r < 1e-15));
        assert!(maharam_form_residuals(&sys, &[0.0, 0.0]).unwrap()[0] > 0.5);
    }
}
