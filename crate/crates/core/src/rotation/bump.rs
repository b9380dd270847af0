//! Smooth plateau bumps.
//!
//! The rise on `[0, W]` is `d` times the integral of the cardinal B-spline
//! of degree `p`, rescaled to `[0, W]`; it is `C^p` with derivatives of
//! orders `1..=p` vanishing at both ends. The plateau `[W, 3W]` holds `d`
//! and the fall on `[3W, 4W]` mirrors the rise.

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};

use super::piecewise::{poly_derivative, poly_eval, reflect, taylor_shift, to_f64, Piece, PiecewisePoly};

pub const MAX_SMOOTHNESS: usize = 8;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pieces of `x -> int_0^x B_p` on `[i, i+1]`, `i = 0..=p`, in `t = x - i`.
pub fn integrated_spline(p: usize) -> Vec<Vec<f64>> {
    let fact: f64 = (1..=p).map(|v| v as f64).product();
    let mut out = Vec::with_capacity(p + 1);
    let mut acc = 0.0;
    for i in 0..=p {
        let mut spline = vec![0.0; p + 1];
        for k in 0..=i {
            let w = if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(p + 1, k) / fact;
            let a = (i - k) as f64;
            for (m, s) in spline.iter_mut().enumerate() {
                *s += w * binomial(p, m) * a.powi((p - m) as i32);
            }
        }
        let mut integral = vec![acc];
        integral.extend(spline.iter().enumerate().map(|(m, b)| b / (m + 1) as f64));
        acc = poly_eval(&integral, 1.0);
        out.push(integral);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpProfile {
    pub smoothness: usize,
    pub height: f64,
    /// Rise width `W` in lattice units; the support is `[0, 4W]`.
    pub width: Rational64,
    pub pieces: Vec<Piece>,
}

impl BumpProfile {
    /// Bump of height `d` supported on `ell_half * w` lattice units.
    pub fn new(height: f64, ell_half: u64, w: i64, p: usize) -> Result<Self> {
        if p == 0 || p > MAX_SMOOTHNESS {
            return Err(Error::InvalidParameter(format!("smoothness {p} outside 1..={MAX_SMOOTHNESS}")));
        }
        if ell_half < 2 || w <= 0 {
            return Err(Error::Degenerate(format!("bump support {ell_half} x {w}")));
        }
        let width = Rational64::new(ell_half as i64 * w, 4);
        let step = width / (p as i64 + 1);
        let step_f = to_f64(&step);
        let rise: Vec<Vec<f64>> = integrated_spline(p)
            .into_iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(m, v)| height * v / step_f.powi(m as i32))
                    .collect()
            })
            .collect();
        let mut pieces = Vec::with_capacity(2 * p + 3);
        for (i, c) in rise.iter().enumerate() {
            let lo = step * i as i64;
            pieces.push(Piece { lo, hi: lo + step, coeffs: c.clone() });
        }
        pieces.push(Piece { lo: width, hi: width * 3, coeffs: vec![height] });
        for i in 0..=p {
            let lo = width * 3 + step * i as i64;
            pieces.push(Piece {
                lo,
                hi: lo + step,
                coeffs: reflect(&rise[p - i], step_f),
            });
        }
        Ok(Self {
            smoothness: p,
            height,
            width,
            pieces,
        })
    }

    pub fn support(&self) -> Rational64 {
        self.width * 4
    }

    fn piece_at(&self, s: Rational64) -> Option<&Piece> {
        self.pieces.iter().find(|pc| pc.lo <= s && s < pc.hi)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.pieces
            .iter()
            .find(|pc| to_f64(&pc.lo) <= s && s < to_f64(&pc.hi))
            .map(|pc| poly_eval(&pc.coeffs, s - to_f64(&pc.lo)))
            .unwrap_or(0.0)
    }

    /// Coefficients on the cell starting at `s0`, which must not straddle a
    /// breakpoint; zero outside the support.
    pub fn cell(&self, s0: Rational64) -> Vec<f64> {
        match self.piece_at(s0) {
            Some(pc) => taylor_shift(&pc.coeffs, to_f64(&(s0 - pc.lo))),
            None => vec![0.0],
        }
    }

    /// Pieces placed at `offset`, scaled by `scale`.
    pub fn placed(&self, offset: Rational64, scale: f64) -> Vec<Piece> {
        self.pieces
            .iter()
            .map(|pc| Piece {
                lo: pc.lo + offset,
                hi: pc.hi + offset,
                coeffs: pc.coeffs.iter().map(|c| c * scale).collect(),
            })
            .collect()
    }

    /// Bump on the circle of `period` lattice units, starting at `offset`.
    pub fn on_circle(&self, period: i64, offset: i64) -> Result<PiecewisePoly> {
        if offset < 0 || Rational64::from_integer(offset) + self.support() > Rational64::from_integer(period) {
            return Err(Error::Construction(format!("bump at {offset} wraps the circle")));
        }
        PiecewisePoly::from_pieces(period, self.smoothness + 1, self.placed(Rational64::from_integer(offset), 1.0))
    }

    /// Largest relative jump of derivatives `0..=p` across the breakpoints,
    /// including the two ends of the support.
    pub fn continuity_defects(&self) -> Vec<f64> {
        let p = self.smoothness;
        (0..=p)
            .map(|order| {
                let scale = self
                    .pieces
                    .iter()
                    .map(|pc| {
                        let h = to_f64(&(pc.hi - pc.lo));
                        poly_derivative(&pc.coeffs, 0.0, order)
                            .abs()
                            .max(poly_derivative(&pc.coeffs, h, order).abs())
                    })
                    .fold(0.0, f64::max)
                    .max(f64::MIN_POSITIVE);
                let mut worst: f64 = 0.0;
                let mut left = 0.0;
                for pc in &self.pieces {
                    let right = poly_derivative(&pc.coeffs, 0.0, order);
                    worst = worst.max((right - left).abs());
                    left = poly_derivative(&pc.coeffs, to_f64(&(pc.hi - pc.lo)), order);
                }
                worst = worst.max(left.abs());
                worst / scale
            })
            .collect()
    }

    /// Largest `|F^(r)|`, `1 <= r <= p`, at the plateau edges, relative to
    /// the order's sup.
    pub fn plateau_edge_derivative(&self) -> f64 {
        let edges = [self.width, self.width * 3];
        let mut worst: f64 = 0.0;
        for order in 1..=self.smoothness {
            let sup = self
                .pieces
                .iter()
                .map(|pc| {
                    super::piecewise::poly_sup_abs(
                        &derivative_coeffs(&pc.coeffs, order),
                        to_f64(&(pc.hi - pc.lo)),
                    )
                })
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            for pc in &self.pieces {
                let h = pc.hi - pc.lo;
                for e in edges {
                    if pc.lo == e {
                        worst = worst.max(poly_derivative(&pc.coeffs, 0.0, order).abs() / sup);
                    }
                    if pc.hi == e {
                        worst = worst.max(poly_derivative(&pc.coeffs, to_f64(&h), order).abs() / sup);
                    }
                }
            }
        }
        worst
    }

    pub fn mass(&self) -> f64 {
        self.pieces
            .iter()
            .map(|pc| {
                let h = to_f64(&(pc.hi - pc.lo));
                pc.coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * h.powi(k as i32 + 1) / (k as f64 + 1.0))
                    .sum::<f64>()
            })
            .sum()
    }
}

fn derivative_coeffs(c: &[f64], order: usize) -> Vec<f64> {
    (order..c.len())
        .map(|k| c[k] * ((k - order + 1)..=k).map(|v| v as f64).product::<f64>())
        .collect()
}

/// `C^p` norm of a placed bump in circle units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpNorm {
    /// `sup |F^(r)|` for `r = 0..=p`, derivatives taken in circle units.
    pub orders: Vec<f64>,
    pub norm: f64,
    pub d_bar: f64,
    pub ratio: f64,
}

pub fn cp_norm(f: &PiecewisePoly, p: usize, d_bar: f64) -> CpNorm {
    let q = f.period() as f64;
    let orders: Vec<f64> = (0..=p).map(|r| f.sup_abs_derivative(r) * q.powi(r as i32)).collect();
    let norm = orders.iter().copied().fold(0.0, f64::max);
    CpNorm {
        orders,
        norm,
        d_bar,
        ratio: norm / d_bar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_integrals_reach_one() {
        for p in 1..=5 {
            let pieces = integrated_spline(p);
            assert_eq!(pieces.len(), p + 1);
            let end = poly_eval(&pieces[p], 1.0);
            assert!((end - 1.0).abs() < 1e-12, "p = {p}: {end}");
        }
        // p = 1: the tent integral is t^2/2 then 1/2 + t - t^2/2.
        let tent = integrated_spline(1);
        assert_eq!(tent[0], vec![0.0, 0.0, 0.5]);
        assert_eq!(tent[1], vec![0.5, 1.0, -0.5]);
    }

    #[test]
    fn plateau_and_smoothness() {
        for p in 1..=4 {
            let b = BumpProfile::new(0.25, 8, 3, p).unwrap();
            assert_eq!(b.support(), Rational64::from_integer(24));
            assert_eq!(b.eval(12.0), 0.25);
            assert!((b.eval(6.0) - 0.25).abs() < 1e-15);
            assert_eq!(b.eval(24.5), 0.0);
            assert!(b.continuity_defects().iter().all(|&m| m < 1e-9), "p = {p}");
            assert!(b.plateau_edge_derivative() < 1e-9);
            // Rise and fall carry half the plateau mass each.
            assert!((b.mass() - 0.25 * 18.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tent_slope_for_p1() {
        // The derivative peaks at 8d/(ell' w) at the middle of the rise.
        let b = BumpProfile::new(1.0, 4, 5, 1).unwrap();
        let f = b.on_circle(100, 10).unwrap();
        assert!((f.sup_abs_derivative(1) - 8.0 / 20.0).abs() < 1e-12);
        assert!(b.on_circle(100, 90).is_err());
        assert!(BumpProfile::new(1.0, 1, 5, 1).is_err());
    }
}
