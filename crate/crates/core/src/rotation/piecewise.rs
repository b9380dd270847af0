//! Piecewise polynomials on the lattice circle `[0, Q)`.
//!
//! Breakpoints are exact rationals in lattice units (one unit is `1/Q` of
//! the circle). Each piece stores its coefficients in the local variable
//! `s = y - lo`, also in lattice units; derivatives in circle units pick up
//! a factor `Q^r`.

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: Rational64,
    pub hi: Rational64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    period: i64,
    degree: usize,
    breaks: Vec<Rational64>,
    breaks_f: Vec<f64>,
    coeffs: Vec<f64>,
}

pub fn to_f64(r: &Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn poly_eval(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// `r`-th derivative of `sum c_i s^i` at `s`.
pub fn poly_derivative(coeffs: &[f64], s: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for i in (order..coeffs.len()).rev() {
        let falling: f64 = ((i - order + 1)..=i).map(|v| v as f64).product();
        acc = acc * s + coeffs[i] * falling;
    }
    acc
}

/// Coefficients of `s -> p(s + delta)`.
pub fn taylor_shift(coeffs: &[f64], delta: f64) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n.saturating_sub(1)).rev() {
            out[j] += delta * out[j + 1];
        }
    }
    out
}

/// Coefficients of `s -> p(h - s)`.
pub fn reflect(coeffs: &[f64], h: f64) -> Vec<f64> {
    taylor_shift(coeffs, h)
        .into_iter()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { c } else { -c })
        .collect()
}

/// Largest `|p|` on `[0, len]`: endpoints plus critical points located by
/// sampling the derivative and bisecting sign changes.
pub fn poly_sup_abs(coeffs: &[f64], len: f64) -> f64 {
    let mut best = poly_eval(coeffs, 0.0).abs().max(poly_eval(coeffs, len).abs());
    match coeffs.len() {
        0..=2 => return best,
        3 => {
            if coeffs[2] != 0.0 {
                let s = -coeffs[1] / (2.0 * coeffs[2]);
                if s > 0.0 && s < len {
                    best = best.max(poly_eval(coeffs, s).abs());
                }
            }
            return best;
        }
        _ => {}
    }
    const SAMPLES: usize = 32;
    let deriv = |s: f64| poly_derivative(coeffs, s, 1);
    let mut prev_s = 0.0;
    let mut prev_d = deriv(0.0);
    for i in 1..=SAMPLES {
        let s = len * i as f64 / SAMPLES as f64;
        let d = deriv(s);
        best = best.max(poly_eval(coeffs, s).abs());
        if prev_d == 0.0 || prev_d.signum() != d.signum() {
            let (mut a, mut b) = (prev_s, s);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if deriv(a).signum() == deriv(m).signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            best = best.max(poly_eval(coeffs, 0.5 * (a + b)).abs());
        }
        prev_s = s;
        prev_d = d;
    }
    best
}

impl PiecewisePoly {
    pub fn zero(period: i64, degree: usize) -> Result<Self> {
        Self::from_pieces(period, degree, Vec::new())
    }

    /// Assembles pieces (in any order) and fills gaps with zero.
    pub fn from_pieces(period: i64, degree: usize, mut pieces: Vec<Piece>) -> Result<Self> {
        if period <= 0 {
            return Err(Error::InvalidParameter("period must be positive".into()));
        }
        let zero = Rational64::zero();
        let end = Rational64::from_integer(period);
        pieces.sort_by(|a, b| a.lo.cmp(&b.lo));
        let stride = degree + 1;
        let mut breaks = vec![zero];
        let mut coeffs = Vec::with_capacity((pieces.len() * 2 + 1) * stride);
        let mut cursor = zero;
        for piece in pieces {
            if piece.lo >= piece.hi || piece.lo < zero || piece.hi > end {
                return Err(Error::Degenerate(format!("piece [{}, {}) on [0, {period})", piece.lo, piece.hi)));
            }
            if piece.coeffs.len() > stride {
                return Err(Error::Construction(format!("piece of degree {} above {degree}", piece.coeffs.len() - 1)));
            }
            if piece.lo < cursor {
                return Err(Error::Construction(format!("overlapping pieces at {}", piece.lo)));
            }
            if piece.lo > cursor {
                coeffs.extend(std::iter::repeat(0.0).take(stride));
                breaks.push(piece.lo);
            }
            coeffs.extend(piece.coeffs.iter().copied());
            coeffs.extend(std::iter::repeat(0.0).take(stride - piece.coeffs.len()));
            breaks.push(piece.hi);
            cursor = piece.hi;
        }
        if cursor < end {
            coeffs.extend(std::iter::repeat(0.0).take(stride));
            breaks.push(end);
        }
        let breaks_f = breaks.iter().map(to_f64).collect();
        Ok(Self {
            period,
            degree,
            breaks,
            breaks_f,
            coeffs,
        })
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn breakpoints(&self) -> &[Rational64] {
        &self.breaks
    }

    pub fn piece(&self, i: usize) -> (Rational64, Rational64, &[f64]) {
        let stride = self.degree + 1;
        (self.breaks[i], self.breaks[i + 1], &self.coeffs[i * stride..(i + 1) * stride])
    }

    pub fn wrap(&self, y: f64) -> f64 {
        let q = self.period as f64;
        let r = y.rem_euclid(q);
        if r >= q {
            0.0
        } else {
            r
        }
    }

    pub fn piece_index(&self, y: f64) -> usize {
        let y = self.wrap(y);
        let idx = self.breaks_f.partition_point(|&b| b <= y);
        idx.clamp(1, self.len()) - 1
    }

    pub fn eval(&self, y: f64) -> f64 {
        let y = self.wrap(y);
        let i = self.piece_index(y);
        poly_eval(self.piece(i).2, y - self.breaks_f[i])
    }

    /// `f(base + frac)` with the local coordinate formed exactly from the
    /// integer part, so far-out positions keep full relative precision.
    pub fn eval_split(&self, base: i64, frac: f64) -> f64 {
        let base = base.rem_euclid(self.period);
        let i = self.piece_index(base as f64 + frac);
        let lo = self.breaks[i];
        let s = (base * lo.denom() - lo.numer()) as f64 / *lo.denom() as f64 + frac;
        poly_eval(self.piece(i).2, s)
    }

    /// Derivative in lattice units (right-continuous at breakpoints).
    pub fn derivative(&self, y: f64, order: usize) -> f64 {
        let y = self.wrap(y);
        let i = self.piece_index(y);
        poly_derivative(self.piece(i).2, y - self.breaks_f[i], order)
    }

    /// Left and right limits of the `order`-th derivative at breakpoint `i`.
    pub fn one_sided_derivatives(&self, i: usize, order: usize) -> (f64, f64) {
        let n = self.len();
        let left_piece = (i + n - 1) % n;
        let (lo, hi, c) = self.piece(left_piece);
        let left = poly_derivative(c, to_f64(&(hi - lo)), order);
        let right = poly_derivative(self.piece(i % n).2, 0.0, order);
        (left, right)
    }

    pub fn sup_abs(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (lo, hi, c) = self.piece(i);
                poly_sup_abs(c, to_f64(&(hi - lo)))
            })
            .fold(0.0, f64::max)
    }

    /// `sup |f^(order)|` in lattice units.
    pub fn sup_abs_derivative(&self, order: usize) -> f64 {
        if order == 0 {
            return self.sup_abs();
        }
        (0..self.len())
            .map(|i| {
                let (lo, hi, c) = self.piece(i);
                let d: Vec<f64> = (order..c.len())
                    .map(|k| c[k] * ((k - order + 1)..=k).map(|v| v as f64).product::<f64>())
                    .collect();
                poly_sup_abs(&d, to_f64(&(hi - lo)))
            })
            .fold(0.0, f64::max)
    }

    /// `int_0^Q f(y) dy` in lattice units.
    pub fn integral(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (lo, hi, c) = self.piece(i);
                let h = to_f64(&(hi - lo));
                c.iter()
                    .enumerate()
                    .map(|(k, a)| a * h.powi(k as i32 + 1) / (k as f64 + 1.0))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Exact lattice length of the pieces with a coefficient above `tol`.
    pub fn support_length(&self, tol: f64) -> Rational64 {
        (0..self.len())
            .filter(|&i| self.piece(i).2.iter().any(|c| c.abs() > tol))
            .map(|i| {
                let (lo, hi, _) = self.piece(i);
                hi - lo
            })
            .fold(Rational64::zero(), |a, b| a + b)
    }

    /// `a f(y) + b g(y + shift)` with exact merged breakpoints.
    pub fn combine(&self, a: f64, other: &PiecewisePoly, shift: i64, b: f64) -> Result<PiecewisePoly> {
        if other.period != self.period {
            return Err(Error::InvalidParameter("periods differ".into()));
        }
        let q = self.period;
        let shift = shift.rem_euclid(q);
        let end = Rational64::from_integer(q);
        let mut cuts: Vec<Rational64> = self.breaks.clone();
        let offset = Rational64::from_integer(shift);
        cuts.extend(other.breaks.iter().map(|&br| {
            let z = br - offset;
            if z < Rational64::zero() {
                z + end
            } else {
                z
            }
        }));
        cuts.sort();
        cuts.dedup();
        let degree = self.degree.max(other.degree);
        let mut pieces = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = to_f64(&((lo + hi) / 2));
            let i = self.piece_index(mid);
            let (slo, _, sc) = self.piece(i);
            let mut coeffs = vec![0.0; degree + 1];
            for (k, c) in taylor_shift(sc, to_f64(&(lo - slo))).into_iter().enumerate() {
                coeffs[k] += a * c;
            }
            let z = {
                let z = lo + offset;
                if z >= end {
                    z - end
                } else {
                    z
                }
            };
            let j = other.piece_index(to_f64(&z) + to_f64(&(hi - lo)) / 2.0);
            let (olo, _, oc) = other.piece(j);
            for (k, c) in taylor_shift(oc, to_f64(&(z - olo))).into_iter().enumerate() {
                coeffs[k] += b * c;
            }
            pieces.push(Piece { lo, hi, coeffs });
        }
        PiecewisePoly::from_pieces(q, degree, pieces)
    }

    /// Writes `breakpoint,value,derivative` rows; breakpoints as exact
    /// fractions of the circle, derivatives in circle units.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["breakpoint", "value", "derivative"])?;
        let q = self.period as f64;
        for i in 0..self.len() {
            let (lo, _, c) = self.piece(i);
            let frac = lo / self.period;
            out.write_record([
                format!("{}/{}", frac.numer(), frac.denom()),
                format!("{:e}", poly_eval(c, 0.0)),
                format!("{:e}", poly_derivative(c, 0.0, 1) * q),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn shift_and_reflect() {
        let p = [1.0, 2.0, 3.0];
        let shifted = taylor_shift(&p, 0.5);
        for s in [0.0, 0.3, 1.7] {
            assert!((poly_eval(&shifted, s) - poly_eval(&p, s + 0.5)).abs() < 1e-12);
            assert!((poly_eval(&reflect(&p, 2.0), s) - poly_eval(&p, 2.0 - s)).abs() < 1e-12);
        }
        assert_eq!(poly_derivative(&p, 1.0, 1), 8.0);
        assert_eq!(poly_derivative(&p, 1.0, 2), 6.0);
    }

    #[test]
    fn gaps_are_zero_and_overlaps_rejected() {
        let f = PiecewisePoly::from_pieces(
            10,
            1,
            vec![Piece { lo: r(2, 1), hi: r(5, 2), coeffs: vec![1.0, 2.0] }],
        )
        .unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(2.25), 1.5);
        assert_eq!(f.eval(12.25), 1.5);
        let bad = PiecewisePoly::from_pieces(
            10,
            0,
            vec![
                Piece { lo: r(1, 1), hi: r(3, 1), coeffs: vec![1.0] },
                Piece { lo: r(2, 1), hi: r(4, 1), coeffs: vec![1.0] },
            ],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn integral_support_and_sup() {
        let f = PiecewisePoly::from_pieces(
            8,
            2,
            vec![Piece { lo: r(0, 1), hi: r(2, 1), coeffs: vec![0.0, 2.0, -1.0] }],
        )
        .unwrap();
        assert!((f.integral() - (4.0 - 8.0 / 3.0)).abs() < 1e-12);
        assert_eq!(f.support_length(0.0), r(2, 1));
        assert!((f.sup_abs() - 1.0).abs() < 1e-12);
        assert!((f.sup_abs_derivative(1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn combine_matches_pointwise() {
        let f = PiecewisePoly::from_pieces(
            12,
            1,
            vec![Piece { lo: r(1, 3), hi: r(7, 2), coeffs: vec![1.0, 0.5] }],
        )
        .unwrap();
        let g = PiecewisePoly::from_pieces(
            12,
            2,
            vec![Piece { lo: r(10, 1), hi: r(12, 1), coeffs: vec![2.0, 0.0, 1.0] }],
        )
        .unwrap();
        let h = f.combine(2.0, &g, 5, -1.5).unwrap();
        for i in 0..240 {
            let y = i as f64 * 0.05 + 0.013;
            let expected = 2.0 * f.eval(y) - 1.5 * g.eval(y + 5.0);
            assert!((h.eval(y) - expected).abs() < 1e-12, "y = {y}");
        }
    }
}
