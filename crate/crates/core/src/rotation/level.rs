//! One materialized level: the bump, the block cocycle `F_k` and its
//! transfer function `G_k` with `F_k = G_k - G_k o T`.

use num_rational::Rational64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure;

use super::bump::{cp_norm, BumpProfile, CpNorm};
use super::cf::ContinuedFraction;
use super::params::LevelParams;
use super::piecewise::{Piece, PiecewisePoly};
use super::towers::{build_towers, TowerDecomposition};

#[derive(Debug, Clone)]
pub struct RotationLevel {
    pub params: LevelParams,
    pub tower: TowerDecomposition,
    /// `q_{n-1}`.
    pub q_prev: i64,
    pub bump: BumpProfile,
    /// The bump placed on the first positive half-block.
    pub bump_on_circle: PiecewisePoly,
    pub f: PiecewisePoly,
    pub g: PiecewisePoly,
}

impl RotationLevel {
    pub fn order(&self) -> i64 {
        self.tower.order
    }

    pub fn step(&self) -> i64 {
        self.tower.step
    }

    pub fn ell(&self) -> i64 {
        self.params.ell as i64
    }

    pub fn ell_half(&self) -> i64 {
        self.params.ell_half as i64
    }

    /// Floors in one block `J_{u,j}`.
    pub fn block_floors(&self) -> i64 {
        self.ell() * self.q_prev
    }

    /// Left ends of the positive and negative halves of `J_{u,j}`.
    pub fn halves(&self, u: i64, j: i64) -> Result<(i64, i64)> {
        let t = &self.tower;
        let base = t.lefts[(u + j * self.block_floors()) as usize];
        let half = self.ell_half() * t.width;
        let (pos, neg) = if t.orientation == 1 {
            (base, base + half)
        } else {
            (base + t.width - half, base + t.width - 2 * half)
        };
        if pos.min(neg) < 0 || pos.max(neg) + half > t.order {
            return Err(Error::Construction(format!("block ({u}, {j}) wraps the circle")));
        }
        Ok((pos, neg))
    }

    /// `x -> x + n alpha`.
    pub fn rotate(&self, x: Point, n: i64) -> Point {
        Point {
            base: self.tower.rotate(x.base, n),
            frac: x.frac,
        }
    }

    /// A uniform random point of the circle.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Point {
        Point {
            base: rng.gen_range(0..self.order()),
            frac: rng.gen(),
        }
    }
}

/// A circle point as a lattice site plus an offset in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub base: i64,
    pub frac: f64,
}

impl Point {
    pub fn new(y: f64) -> Self {
        let base = y.floor();
        Self {
            base: base as i64,
            frac: y - base,
        }
    }

    pub fn at(base: i64, offset: f64) -> Self {
        let whole = offset.floor();
        Self {
            base: base + whole as i64,
            frac: offset - whole,
        }
    }

    pub fn value(&self) -> f64 {
        self.base as f64 + self.frac
    }
}

/// `f` evaluated at a split point.
pub fn eval_at(f: &PiecewisePoly, x: Point) -> f64 {
    f.eval_split(x.base, x.frac)
}

/// Materializes level `params.k` on the lattice of `cf`.
pub fn build_level(cf: &ContinuedFraction, params: &LevelParams, p: usize) -> Result<RotationLevel> {
    let tower = build_towers(cf, params.n)?;
    let q_prev = cf.q_u64(params.n - 1)? as i64;
    let bump = BumpProfile::new(params.d, params.ell_half, tower.width, p)?;
    let mut level = RotationLevel {
        params: params.clone(),
        tower,
        q_prev,
        bump,
        bump_on_circle: PiecewisePoly::zero(1, 0)?,
        f: PiecewisePoly::zero(1, 0)?,
        g: PiecewisePoly::zero(1, 0)?,
    };
    let (first, _) = level.halves(0, 0)?;
    level.bump_on_circle = level.bump.on_circle(level.order(), first)?;
    level.f = build_fk(&level)?;
    level.g = build_gk(&level)?;
    Ok(level)
}

pub fn build_fk(level: &RotationLevel) -> Result<PiecewisePoly> {
    let mut pieces = Vec::new();
    for j in 0..level.params.r as i64 {
        let scale = level.params.block_scale(j as u64);
        for u in 0..level.q_prev {
            let (pos, neg) = level.halves(u, j)?;
            pieces.extend(level.bump.placed(Rational64::from_integer(pos), scale));
            pieces.extend(level.bump.placed(Rational64::from_integer(neg), -scale));
        }
    }
    PiecewisePoly::from_pieces(level.order(), level.bump.smoothness + 1, pieces)
}

/// Cells per floor; the bump breakpoints fall on this grid.
pub fn cells_per_floor(p: usize) -> i64 {
    4 * (p as i64 + 1)
}

/// `F` restricted to floor `m q_{n-1}` of a block, per cell, in the floor
/// offset.
fn floor_profiles(level: &RotationLevel) -> Vec<Vec<Vec<f64>>> {
    let w = level.tower.width;
    let half = level.ell_half();
    let cells = cells_per_floor(level.bump.smoothness);
    (0..level.ell())
        .map(|m| {
            let sign = if m < half { 1.0 } else { -1.0 };
            let slot = m % half;
            let base = if level.tower.orientation == 1 { slot } else { half - 1 - slot } * w;
            (0..cells)
                .map(|c| {
                    let s0 = Rational64::from_integer(base) + Rational64::new(c * w, cells);
                    level.bump.cell(s0).into_iter().map(|v| sign * v).collect()
                })
                .collect()
        })
        .collect()
}

pub fn build_gk(level: &RotationLevel) -> Result<PiecewisePoly> {
    let degree = level.bump.smoothness + 1;
    let profiles = floor_profiles(level);
    let cells = cells_per_floor(level.bump.smoothness);
    let w = level.tower.width;
    let q = level.q_prev;
    // Running sums of the floor profiles over whole rows of q floors.
    let mut partial = Vec::with_capacity(profiles.len());
    let mut acc = vec![vec![0.0; degree + 1]; cells as usize];
    for prof in &profiles {
        partial.push(acc.clone());
        for (a, c) in acc.iter_mut().zip(prof) {
            for (x, y) in a.iter_mut().zip(c) {
                *x += y;
            }
        }
    }
    let block = level.block_floors();
    let mut pieces = Vec::new();
    for i in 0..(level.params.r as i64 * block) {
        let (j, rem) = (i / block, i % block);
        let (m, u) = ((rem / q) as usize, (rem % q) as f64);
        let scale = -level.params.block_scale(j as u64);
        let left = level.tower.lefts[i as usize];
        for c in 0..cells as usize {
            let mut coeffs = vec![0.0; degree + 1];
            for (k, v) in coeffs.iter_mut().enumerate() {
                let full = partial[m][c].get(k).copied().unwrap_or(0.0);
                let own = profiles[m][c].get(k).copied().unwrap_or(0.0);
                *v = scale * (q as f64 * full + u * own);
            }
            if coeffs.iter().all(|&v| v == 0.0) {
                continue;
            }
            let lo = Rational64::from_integer(left) + Rational64::new(c as i64 * w, cells);
            pieces.push(Piece {
                lo,
                hi: lo + Rational64::new(w, cells),
                coeffs,
            });
        }
    }
    PiecewisePoly::from_pieces(level.order(), degree, pieces)
}

/// `sum_{m < n} F(T^m x)` by direct orbit summation.
pub fn orbit_sum(f: &dyn Fn(Point) -> f64, level: &RotationLevel, x: Point, n: i64) -> f64 {
    let q = level.order();
    let step = level.step();
    let mut z = Point {
        base: x.base.rem_euclid(q),
        frac: x.frac,
    };
    let mut acc = 0.0;
    for _ in 0..n {
        acc += f(z);
        z.base += step;
        if z.base >= q {
            z.base -= q;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(measured: f64, bound: f64) -> Self {
        Self {
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// Relative jumps of derivatives `0..=p` across the bump breakpoints.
    pub continuity: Vec<f64>,
    pub plateau_edges: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub k: usize,
    pub n: usize,
    pub pieces_f: usize,
    pub pieces_g: usize,
    pub cp_norm: CpNorm,
    pub smoothness: SmoothnessReport,
    pub plateau: Verdict,
    pub f_sup: Verdict,
    pub f_integral: Verdict,
    /// Block sums over `x` in the base floor vanish.
    pub block_sums: Verdict,
    /// `F = G - G o T` on random points.
    pub coboundary: Verdict,
    /// Orbit sums against `G(x) - G(T^n x)`.
    pub telescoping: Verdict,
    /// `sup |G| <= ell q_{n-1} sup |F|`.
    pub transfer_bound: Verdict,
    /// `sup |G| / (e^k k^2)`, the constant of the growth bound.
    pub transfer_constant: f64,
    /// `sup |G| <= e^k k^2 / 2`; claimed for the paper profile only, so
    /// not part of `pass`.
    pub transfer_growth: Verdict,
    pub pass: bool,
}

pub const SMOOTHNESS_TOL: f64 = 1e-9;

/// Sample sizes for [`check_level`].
#[derive(Debug, Clone, Copy)]
pub struct LevelSampling {
    pub coboundary: usize,
    pub telescoping: usize,
    pub block_sums: usize,
}

impl Default for LevelSampling {
    fn default() -> Self {
        Self {
            coboundary: 10_000,
            telescoping: 20,
            block_sums: 20,
        }
    }
}

pub fn check_level<R: Rng>(level: &RotationLevel, sampling: LevelSampling, rng: &mut R) -> LevelReport {
    let par = &level.params;
    let q = level.order() as f64;
    let f = |x: Point| eval_at(&level.f, x);
    let g = |x: Point| eval_at(&level.g, x);
    let scale = (level.block_floors() as f64) * 1e-10;

    let continuity = level.bump.continuity_defects();
    let plateau_edges = level.bump.plateau_edge_derivative();
    let smooth_pass = continuity.iter().all(|&v| v <= SMOOTHNESS_TOL) && plateau_edges <= SMOOTHNESS_TOL;

    let bump_max = level.bump_on_circle.sup_abs();
    let plateau = Verdict {
        measured: bump_max,
        bound: par.d,
        pass: (bump_max - par.d).abs() <= 1e-12 * par.d,
    };
    let f_sup_val = level.f.sup_abs();
    let f_sup = Verdict::at_most(f_sup_val, par.f_bound());
    let integral = level.f.integral() / q;
    let f_integral = Verdict::at_most(integral.abs(), 1e-12 * f_sup_val.max(1.0));

    let mut worst_block: f64 = 0.0;
    let blocks = level.block_floors();
    for _ in 0..sampling.block_sums {
        let y = Point::at(level.tower.lefts[0], rng.gen::<f64>() * level.tower.width as f64);
        for j in 0..(par.r as i64 - 1) {
            let start = level.rotate(y, j * blocks);
            worst_block = worst_block.max(orbit_sum(&f, level, start, blocks).abs());
        }
    }
    let block_sums = Verdict::at_most(worst_block, blocks as f64 * 1e-14 * f_sup_val.max(1.0));

    let mut worst_cob: f64 = 0.0;
    for _ in 0..sampling.coboundary {
        let y = level.random_point(rng);
        let d = f(y) - (g(y) - g(level.rotate(y, 1)));
        worst_cob = worst_cob.max(d.abs());
    }
    let coboundary = Verdict::at_most(worst_cob, scale);

    let height = level.tower.height() as i64;
    let mut worst_tel: f64 = 0.0;
    for _ in 0..sampling.telescoping {
        let y = level.random_point(rng);
        let n = rng.gen_range(1..=height);
        let d = orbit_sum(&f, level, y, n) - (g(y) - g(level.rotate(y, n)));
        worst_tel = worst_tel.max(d.abs());
    }
    let telescoping = Verdict::at_most(worst_tel, scale);

    let g_sup = level.g.sup_abs();
    let transfer_bound = Verdict::at_most(g_sup, blocks as f64 * f_sup_val);
    let kf = par.k as f64;
    let transfer_constant = g_sup / (kf.exp() * kf * kf);
    let transfer_growth = Verdict::at_most(g_sup, 0.5 * kf.exp() * kf * kf);
    let cp = cp_norm(&level.bump_on_circle, level.bump.smoothness, par.d_bar);

    let pass = smooth_pass
        && plateau.pass
        && f_sup.pass
        && f_integral.pass
        && block_sums.pass
        && coboundary.pass
        && telescoping.pass
        && transfer_bound.pass;
    LevelReport {
        k: par.k,
        n: par.n,
        pieces_f: level.f.len(),
        pieces_g: level.g.len(),
        cp_norm: cp,
        smoothness: SmoothnessReport {
            continuity,
            plateau_edges,
            tolerance: SMOOTHNESS_TOL,
            pass: smooth_pass,
        },
        plateau,
        f_sup,
        f_integral,
        block_sums,
        coboundary,
        telescoping,
        transfer_bound,
        transfer_constant,
        transfer_growth,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidRow {
    pub i: u64,
    pub samples: usize,
    pub max_error: f64,
    pub closed_form_pass: bool,
    /// `lambda(E and T^{-i q} E) / lambda(E)`, summed over all cells.
    #[serde(with = "measure::fraction")]
    pub overlap: measure::Measure,
    pub overlap_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidReport {
    pub k: usize,
    /// `floor(ell' / k)`.
    pub max_index: u64,
    /// Largest `i` with `30 i < ell'`, where the overlap exceeds 9/10.
    pub desk_threshold: u64,
    pub tolerance: f64,
    pub rows: Vec<RigidRow>,
    pub pass: bool,
}

pub fn desk_threshold(ell_half: u64) -> u64 {
    (ell_half - 1) / 30
}

/// Orbit sums of `f` along `i q_{n-1}` from the middle third `E` of every
/// positive half-block, against `i q_{n-1} (-1)^j (1 + 1/c)^j d`.
pub fn rigid_time_report(
    level: &RotationLevel,
    indices: &[u64],
    f: &dyn Fn(Point) -> f64,
    tol: f64,
) -> Result<RigidReport> {
    let par = &level.params;
    let max_index = par.ell_half / par.k as u64;
    let w = level.tower.width;
    let half = level.ell_half() * w;
    let q = level.q_prev;
    let order = level.order();
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        if i > max_index {
            return Err(Error::RigidIndex { index: i, max: max_index });
        }
        let n = i as i64 * q;
        let mut max_error: f64 = 0.0;
        let mut samples = 0;
        for j in 0..par.r as i64 {
            let expected = n as f64 * par.block_scale(j as u64) * par.d;
            for u in 0..q {
                let (pos, _) = level.halves(u, j)?;
                for frac in [1.0 / 6.0, 0.5, 5.0 / 6.0] {
                    let y = Point::at(pos, half as f64 * (1.0 + frac) / 3.0);
                    let sum = orbit_sum(f, level, y, n);
                    max_error = max_error.max((sum - expected).abs());
                    samples += 1;
                }
            }
        }
        // E = [a, a + L) with L = ell' w / 3 moves rigidly by the signed shift.
        let len = Rational64::new(half, 3);
        let mut shift = level.tower.rotate(0, n);
        if 2 * shift > order {
            shift -= order;
        }
        let shift = Rational64::from_integer(shift.abs());
        let kept = if shift >= len { Rational64::from_integer(0) } else { len - shift };
        let ratio = kept / len;
        let overlap = measure::from_u128(*ratio.numer() as u128, *ratio.denom() as u128);
        let overlap_pass = overlap > measure::ratio(9, 10);
        rows.push(RigidRow {
            i,
            samples,
            max_error,
            closed_form_pass: max_error <= tol,
            overlap,
            overlap_pass,
        });
    }
    let threshold = desk_threshold(par.ell_half);
    let pass = rows
        .iter()
        .all(|r| r.closed_form_pass && (r.i > threshold || r.overlap_pass));
    Ok(RigidReport {
        k: par.k,
        max_index,
        desk_threshold: threshold,
        tolerance: tol,
        rows,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::params::{section7_params, Profile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(quotients: Vec<u64>, n: usize, p: usize) -> RotationLevel {
        let cf = ContinuedFraction::new(quotients).unwrap();
        let params = section7_params(&cf, &[n], Profile::Toy, p).unwrap();
        build_level(&cf, &params.levels[0], p).unwrap()
    }

    #[test]
    fn odd_and_even_levels_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sampling = LevelSampling {
            coboundary: 2000,
            telescoping: 5,
            block_sums: 5,
        };
        for (quotients, n) in [(vec![2, 3, 40, 1, 2], 3), (vec![3, 40, 2, 1], 2)] {
            for p in [1, 2] {
                let level = small(quotients.clone(), n, p);
                let report = check_level(&level, sampling, &mut rng);
                assert!(report.pass, "n = {n}, p = {p}: {report:#?}");
            }
        }
    }

    #[test]
    fn rigid_sums_and_overlap() {
        let level = small(vec![1, 200, 1, 1], 2, 1);
        let f = |x: Point| eval_at(&level.f, x);
        let report = rigid_time_report(&level, &[0, 1], &f, 1e-9).unwrap();
        assert!(report.pass, "{report:#?}");
        assert_eq!(report.rows[0].max_error, 0.0);
        assert_eq!(report.rows[1].overlap, measure::ratio(30, 33));
        assert!(rigid_time_report(&level, &[34], &f, 1e-9).is_err());
    }
}
