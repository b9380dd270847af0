//! Greedy search for the squashing rotation of the summed cocycle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{self, Measure};

use super::level::{eval_at, Point, RotationLevel};
use super::piecewise::{to_f64, PiecewisePoly};

/// Per-level exponent and scaling: `lambda = (-1)^j (1 + 1/c_k)^j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelScale {
    pub k: usize,
    pub j: u64,
    pub lambda: f64,
    /// `|c - lambda|` against `2|c|/c_k`.
    pub gap: f64,
    pub gap_bound: f64,
    pub gap_pass: bool,
}

/// Greatest positive `j`, even for `c > 1` and odd for `c < -1`, with
/// `(1 + 1/c_k)^j < |c|`.
pub fn squash_exponent(c: f64, c_k: u64) -> Option<u64> {
    if !(c.abs() > 1.0) || !c.is_finite() {
        return None;
    }
    let base = 1.0 + 1.0 / c_k as f64;
    let mut j = (c.abs().ln() / base.ln()).ceil() as u64 + 1;
    while j > 0 && base.powi(j as i32) >= c.abs() {
        j -= 1;
    }
    let parity = if c > 0.0 { 0 } else { 1 };
    while j > 0 && j % 2 != parity {
        j -= 1;
    }
    (j > 0).then_some(j)
}

pub fn level_scale(c: f64, k: usize, c_k: u64) -> Option<LevelScale> {
    let j = squash_exponent(c, c_k)?;
    let mag = (1.0 + 1.0 / c_k as f64).powi(j as i32);
    let lambda = if j % 2 == 0 { mag } else { -mag };
    let gap = (c - lambda).abs();
    let gap_bound = 2.0 * c.abs() / c_k as f64;
    Some(LevelScale {
        k,
        j,
        lambda,
        gap,
        gap_bound,
        gap_pass: gap <= gap_bound,
    })
}

/// `sup_y |g(y + a) - g(y + b)|` over the breakpoints of both shifted
/// copies and ten points per piece.
pub fn shifted_sup(g: &PiecewisePoly, a: i64, b: i64) -> f64 {
    let delta = b - a;
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let (lo, hi, _) = g.piece(i);
        let (lo, len) = (to_f64(&lo), to_f64(&(hi - lo)));
        for s in 0..10 {
            let z = Point::new(lo + len * s as f64 / 10.0);
            let v = eval_at(g, z);
            let ahead = eval_at(g, Point { base: z.base + delta, ..z });
            let behind = eval_at(g, Point { base: z.base - delta, ..z });
            worst = worst.max((v - ahead).abs()).max((behind - v).abs());
        }
    }
    worst
}

/// Largest `|G o sigma - lambda G|` at three points per floor of the
/// region where the shift maps whole rows onto rows: floors
/// `u + t ell q + p q` with `u + v < q` and `t + j < r`.
pub fn claimed_region_max(level: &RotationLevel, scale: &LevelScale, v: u64, sigma: i64) -> f64 {
    let q = level.q_prev;
    let block = level.block_floors();
    let w = level.tower.width as f64;
    let mut worst: f64 = 0.0;
    for t in 0..(level.params.r as i64 - scale.j as i64) {
        for p in 0..level.ell() {
            for u in 0..(q - v as i64) {
                let left = level.tower.lefts[(u + t * block + p * q) as usize];
                for frac in [0.1, 0.5, 0.9] {
                    let x = Point::at(left, frac * w);
                    let moved = Point { base: x.base + sigma, ..x };
                    let d = eval_at(&level.g, moved) - scale.lambda * eval_at(&level.g, x);
                    worst = worst.max(d.abs());
                }
            }
        }
    }
    worst
}

/// Circle distance of two lattice shifts, in circle units.
pub fn circle_distance(a: i64, b: i64, order: i64) -> Measure {
    let d = (a - b).rem_euclid(order);
    measure::ratio(d.min(order - d) as u64, order as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedLevel {
    pub k: usize,
    pub v: u64,
    /// `(v + j ell q_{n-1}) alpha mod 1`.
    #[serde(with = "measure::fraction")]
    pub sigma: Measure,
    pub sigma_lattice: i64,
    /// `sup |G_k o S - G_k o sigma(k)|` against `2^(1-m)`.
    pub term_shift: f64,
    pub shift_bound: f64,
    pub shift_pass: bool,
    /// `sup |G_k o sigma(k) - lambda G_k|` where rows map onto rows.
    pub claimed_region_max: f64,
    /// Circle mass where `G_k o sigma(k) - lambda G_k` is nonzero.
    #[serde(with = "measure::fraction")]
    pub support: Measure,
    pub support_bound: f64,
    pub support_pass: bool,
    /// `|lambda - c| sup |G_k|`.
    pub term_scale: f64,
    /// `|c| e^k k^2 / c_k`.
    pub term_scale_paper: f64,
    pub partial_shift: f64,
    pub partial_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLevel {
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquashReport {
    pub c: f64,
    pub scales: Vec<LevelScale>,
    pub selected: Vec<SelectedLevel>,
    pub skipped: Vec<SkippedLevel>,
    #[serde(with = "measure::fraction")]
    pub sigma: Measure,
    pub gaps_pass: bool,
    /// Support and shift-term bounds on every selected level.
    pub bounds_pass: bool,
    /// Per-level shift terms, scale terms and supports are non-increasing.
    pub terms_decreasing: bool,
    pub pass: bool,
}

fn sigma_of(level: &RotationLevel, j: u64, v: u64) -> i64 {
    let n = v as i64 + j as i64 * level.block_floors();
    level.tower.rotate(0, n)
}

/// Runs the recursion over `levels` (in increasing `k`, all on one lattice).
pub fn squash_rotation_search(levels: &[&RotationLevel], c: f64) -> Result<SquashReport> {
    if !(c.abs() > 1.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("|c| = {} must exceed 1", c.abs())));
    }
    let order = levels.first().map(|l| l.order()).ok_or(Error::EmptyPartition)?;
    if levels.iter().any(|l| l.order() != order) {
        return Err(Error::InvalidParameter("levels live on different lattices".into()));
    }
    let mut scales = Vec::new();
    let mut skipped = Vec::new();
    let mut candidates = Vec::new();
    for &level in levels {
        let k = level.params.k;
        match level_scale(c, k, level.params.c) {
            Some(s) if s.j < level.params.r => {
                candidates.push((level, s.clone()));
                scales.push(s);
            }
            Some(s) => {
                skipped.push(SkippedLevel {
                    k,
                    reason: format!("exponent {} is not below r_k = {}", s.j, level.params.r),
                });
                scales.push(s);
            }
            None => skipped.push(SkippedLevel {
                k,
                reason: format!("no admissible exponent: (1 + 1/{})^j < {} fails for every allowed j", level.params.c, c.abs()),
            }),
        }
    }
    let Some(((first, first_scale), rest)) = candidates.split_first() else {
        return Err(Error::RecursionStalled {
            level: 0,
            reason: "no level admits an exponent".into(),
        });
    };
    let mut chosen: Vec<(&RotationLevel, LevelScale, u64, i64)> =
        vec![(first, first_scale.clone(), 0, sigma_of(first, first_scale.j, 0))];
    for (level, scale) in rest {
        let m = chosen.len() - 1;
        let tol = 0.5f64.powi(m as i32);
        let current = chosen[m].3;
        let budget = (level.q_prev as u64).div_ceil(level.params.k as u64);
        let found = (0..budget).find_map(|v| {
            let s = sigma_of(level, scale.j, v);
            if measure::to_f64(&circle_distance(current, s, order)) >= tol {
                return None;
            }
            chosen
                .iter()
                .all(|(prev, ..)| shifted_sup(&prev.g, current, s) < tol)
                .then_some((v, s))
        });
        match found {
            Some((v, s)) => chosen.push((level, scale.clone(), v, s)),
            None => skipped.push(SkippedLevel {
                k: level.params.k,
                reason: format!("no v < {budget} meets the 2^-{m} conditions"),
            }),
        }
    }
    let limit = chosen.last().map(|c| c.3).unwrap_or(0);
    let mut selected = Vec::with_capacity(chosen.len());
    let (mut partial_shift, mut partial_scale) = (0.0, 0.0);
    for (m, (level, scale, v, s)) in chosen.iter().enumerate() {
        let k = level.params.k;
        let shift_bound = 0.5f64.powi(m as i32 - 1);
        let kf = k as f64;
        let term_shift = shifted_sup(&level.g, limit, *s);
        let defect = level.g.combine(-scale.lambda, &level.g, *s, 1.0)?;
        let tol = 1e-9 * level.g.sup_abs().max(f64::MIN_POSITIVE);
        let len = defect.support_length(tol);
        let support = measure::from_u128(*len.numer() as u128, *len.denom() as u128) / Measure::from_integer(order.into());
        let support_bound = (3.0 + c.abs().ln()) / kf;
        let term_scale = (scale.lambda - c).abs() * level.g.sup_abs();
        partial_shift += term_shift;
        partial_scale += term_scale;
        selected.push(SelectedLevel {
            k,
            v: *v,
            sigma: measure::ratio(*s as u64, order as u64),
            sigma_lattice: *s,
            term_shift,
            shift_bound,
            shift_pass: term_shift < shift_bound,
            claimed_region_max: claimed_region_max(level, scale, *v, *s),
            support_pass: measure::to_f64(&support) < support_bound,
            support,
            support_bound,
            term_scale,
            term_scale_paper: c.abs() * kf.exp() * kf * kf / level.params.c as f64,
            partial_shift,
            partial_scale,
        });
    }
    let gaps_pass = scales.iter().all(|s| s.gap_pass);
    let bounds_pass = selected.iter().all(|s| s.support_pass && s.shift_pass);
    let terms_decreasing = selected.windows(2).all(|w| {
        w[1].term_shift <= w[0].term_shift && w[1].term_scale <= w[0].term_scale && w[1].support <= w[0].support
    });
    Ok(SquashReport {
        c,
        scales,
        selected,
        skipped,
        sigma: measure::ratio(limit as u64, order as u64),
        gaps_pass,
        bounds_pass,
        terms_decreasing,
        pass: gaps_pass && bounds_pass && terms_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents() {
        // (4/3)^2 < 2 < (4/3)^3.
        assert_eq!(squash_exponent(2.0, 3), Some(2));
        assert_eq!(squash_exponent(-2.0, 3), Some(1));
        // Even exponents need |c| > (1 + 1/c_k)^2.
        assert_eq!(squash_exponent(1.5, 3), None);
        assert_eq!(squash_exponent(1.0, 3), None);
        assert_eq!(squash_exponent(2.0, 60), Some(40));
    }

    #[test]
    fn gap_bound_holds() {
        for c_k in [3, 6, 9, 60, 500] {
            for c in [1.9, 2.0, 2.5, -2.0, -3.0] {
                if let Some(s) = level_scale(c, 1, c_k) {
                    assert!(s.gap_pass, "c = {c}, c_k = {c_k}: {s:?}");
                }
            }
        }
    }

    #[test]
    fn distances() {
        assert_eq!(circle_distance(1, 9, 10), measure::ratio(1, 5));
        assert_eq!(circle_distance(3, 3, 10), measure::zero());
    }
}
