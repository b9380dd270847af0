//! The two Rokhlin towers of a continued-fraction level.
//!
//! Everything lives on the lattice `Z/Q` with `alpha = P/Q`; a lattice point
//! `y` stands for `y/Q` on the circle and `T` adds `P`.

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{self, Measure};

use super::cf::ContinuedFraction;

/// Largest `q_N` materialized on the lattice.
pub const MAX_LATTICE: i64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerDecomposition {
    pub level: usize,
    pub order: i64,
    pub step: i64,
    /// `||q_{n-1} alpha||` in lattice units.
    pub width: i64,
    /// `+1` when `T^{q_{n-1}}` moves `I_0` right by `width`, `-1` when left.
    pub orientation: i64,
    pub lefts: Vec<i64>,
    /// `||q_n alpha||` in lattice units; the second tower has `q_{n-1}` floors.
    pub second_width: i64,
    pub second_lefts: Vec<i64>,
}

impl TowerDecomposition {
    pub fn height(&self) -> usize {
        self.lefts.len()
    }

    /// Exact endpoints of `I_i` as fractions of the circle.
    pub fn interval(&self, i: usize) -> (Measure, Measure) {
        let q = self.order as u64;
        let lo = self.lefts[i] as u64;
        (
            measure::ratio(lo, q),
            measure::ratio(lo + self.width as u64, q),
        )
    }

    pub fn rotate(&self, y: i64, times: i64) -> i64 {
        let shift = ((times as i128 * self.step as i128).rem_euclid(self.order as i128)) as i64;
        (y + shift).rem_euclid(self.order)
    }

    /// Tower floor containing the lattice position `y` with its offset.
    pub fn locate(&self, y: f64) -> Option<(usize, f64)> {
        let idx = self.sorted_index();
        let k = idx.partition_point(|&(l, _)| (l as f64) <= y);
        if k == 0 {
            return None;
        }
        let (l, i) = idx[k - 1];
        let off = y - l as f64;
        (off < self.width as f64).then_some((i, off))
    }

    fn sorted_index(&self) -> Vec<(i64, usize)> {
        let mut v: Vec<(i64, usize)> = self.lefts.iter().copied().zip(0..).collect();
        v.sort_unstable();
        v
    }

    pub fn tower_mass(&self) -> Measure {
        measure::ratio(self.width as u64 * self.height() as u64, self.order as u64)
    }

    pub fn second_mass(&self) -> Measure {
        measure::ratio(
            self.second_width as u64 * self.second_lefts.len() as u64,
            self.order as u64,
        )
    }

    /// Both towers tile `[0, Q)` with non-wrapping floors.
    pub fn verify_partition(&self) -> Result<()> {
        let mut floors: Vec<(i64, i64)> = self
            .lefts
            .iter()
            .map(|&l| (l, self.width))
            .chain(self.second_lefts.iter().map(|&l| (l, self.second_width)))
            .collect();
        floors.sort_unstable();
        let mut cursor = 0;
        for (l, w) in floors {
            if l != cursor {
                return Err(Error::Construction(format!(
                    "tower floors leave a gap or overlap at {cursor} (next floor at {l})"
                )));
            }
            cursor = l + w;
        }
        if cursor != self.order {
            return Err(Error::Construction(format!("towers cover {cursor} of {}", self.order)));
        }
        Ok(())
    }

    /// `T^{q_{n-1}}` translates by `orientation * width`.
    pub fn verify_return_shift(&self, q_prev: i64) -> Result<()> {
        let moved = self.rotate(0, q_prev);
        let expected = (self.orientation * self.width).rem_euclid(self.order);
        if moved != expected {
            return Err(Error::Construction(format!(
                "T^q_(n-1) moves 0 to {moved}, expected {expected}"
            )));
        }
        Ok(())
    }

    /// `I_{j+q}, I_{j+2q}, ..., I_{j+a_n q}` are adjacent for `j < q = q_{n-1}`.
    pub fn verify_adjacency(&self, q_prev: usize, a_n: usize) -> Result<()> {
        for j in 0..q_prev {
            for i in 1..a_n {
                let (lo, hi) = (j + i * q_prev, j + (i + 1) * q_prev);
                if hi >= self.height() {
                    break;
                }
                let expected = self.lefts[lo] + self.orientation * self.width;
                if self.lefts[hi] != expected {
                    return Err(Error::Construction(format!("floors {lo} and {hi} are not adjacent")));
                }
            }
        }
        Ok(())
    }
}

/// Builds the towers of level `n` (`1 <= n < N`) on the lattice of `cf`.
pub fn build_towers(cf: &ContinuedFraction, n: usize) -> Result<TowerDecomposition> {
    if n == 0 || n >= cf.depth() {
        return Err(Error::TowerLevel {
            level: n,
            depth: cf.depth(),
        });
    }
    let (order, step) = cf.lattice(MAX_LATTICE)?;
    let width = cf
        .lattice_norm(n - 1)
        .to_i64()
        .ok_or_else(|| Error::Overflow("tower width".into()))?;
    let second_width = cf
        .lattice_norm(n)
        .to_i64()
        .ok_or_else(|| Error::Overflow("tower width".into()))?;
    let height = cf.q_u64(n)? as i64;
    let second_height = cf.q_u64(n - 1)? as i64;
    // q_{n-1} alpha - p_{n-1} has sign (-1)^{n-1}.
    let orientation = if n % 2 == 1 { 1 } else { -1 };
    let (base, second_base) = if orientation == 1 {
        (0, order - second_width)
    } else {
        (order - width, 0)
    };
    let mut tower = TowerDecomposition {
        level: n,
        order,
        step,
        width,
        orientation,
        lefts: Vec::with_capacity(height as usize),
        second_width,
        second_lefts: Vec::with_capacity(second_height as usize),
    };
    tower.lefts = (0..height).map(|i| tower.rotate(base, i)).collect();
    tower.second_lefts = (0..second_height).map(|i| tower.rotate(second_base, i)).collect();
    for &l in tower.lefts.iter() {
        if l + width > order {
            return Err(Error::Construction(format!("floor at {l} wraps")));
        }
    }
    tower.verify_partition()?;
    tower.verify_return_shift(second_height)?;
    tower.verify_adjacency(second_height as usize, cf.a(n) as usize)?;
    Ok(tower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure;

    #[test]
    fn golden_level_three() {
        let cf = ContinuedFraction::new(vec![1; 5]).unwrap();
        let t = build_towers(&cf, 3).unwrap();
        assert_eq!(t.height(), 3);
        assert_eq!(t.order, 8);
        assert_eq!(t.tower_mass() + t.second_mass(), measure::one());
    }

    #[test]
    fn both_parities() {
        let cf = ContinuedFraction::new(vec![2, 3, 5, 4, 3, 2]).unwrap();
        for n in 1..cf.depth() {
            let t = build_towers(&cf, n).unwrap();
            assert_eq!(t.orientation, if n % 2 == 1 { 1 } else { -1 });
            let (lo, hi) = t.interval(0);
            assert_eq!(hi - lo, cf.norm(n - 1));
        }
        assert!(build_towers(&cf, 6).is_err());
        assert!(build_towers(&cf, 0).is_err());
    }

    #[test]
    fn locate_floors() {
        let cf = ContinuedFraction::new(vec![2, 7, 3, 2]).unwrap();
        let t = build_towers(&cf, 2).unwrap();
        for (i, &l) in t.lefts.iter().enumerate() {
            assert_eq!(t.locate(l as f64 + 0.5), Some((i, 0.5)));
        }
        assert_eq!(t.locate(t.second_lefts[0] as f64 + 0.5), None);
    }
}
