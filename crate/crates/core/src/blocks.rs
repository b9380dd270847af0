//! Canonical and balanced difference blocks.
//!
//! A canonical block of order `m` assigns to every bit-vector
//! `eps in {0,1}^m` (read as the index `sum eps_k 2^(k-1)`) the value
//! `sum eps_k gamma_k`. Shifting the index by `2^(j-1)` flips bit `j` on
//! exactly half of all indices, so the difference `gamma_j` is realized on
//! at least half of the block. The balanced block is the canonical block of
//! `(gamma, -gamma)`; its entries are centred, which keeps the mass of large
//! entries small.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for difference matching when the gamma entries are not exactly
/// representable sums.
pub const DEFAULT_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVector(Vec<f64>);

impl GammaVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyGamma);
        }
        if entries.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gamma vector"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Canonical,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceBlock {
    values: Vec<f64>,
    kind: BlockKind,
    gamma: GammaVector,
}

impl DifferenceBlock {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    /// Block order `m` (the length of the generating gamma vector).
    pub fn order(&self) -> usize {
        self.gamma.order()
    }

    pub fn gamma(&self) -> &GammaVector {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `index,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["index", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([i.to_string(), format!("{v:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn subset_sums(gamma: &[f64]) -> Vec<f64> {
    let mut values = Vec::with_capacity(1 << gamma.len());
    values.push(0.0);
    for &g in gamma {
        let half = values.len();
        for i in 0..half {
            values.push(values[i] + g);
        }
    }
    values
}

/// Canonical difference block of length `2^m`.
pub fn canonical_block(gamma: &GammaVector) -> DifferenceBlock {
    DifferenceBlock {
        values: subset_sums(gamma.entries()),
        kind: BlockKind::Canonical,
        gamma: gamma.clone(),
    }
}

/// Balanced difference block of length `4^m`.
pub fn balanced_block(gamma: &GammaVector) -> DifferenceBlock {
    let mut doubled = gamma.entries().to_vec();
    doubled.extend(gamma.entries().iter().map(|g| -g));
    DifferenceBlock {
        values: subset_sums(&doubled),
        kind: BlockKind::Balanced,
        gamma: gamma.clone(),
    }
}

/// Number of `nu` with `nu + shift < L` and `|b(nu+shift) - b(nu) - target| <= tol`.
pub fn shift_match_count(block: &DifferenceBlock, shift: usize, target: f64, tol: f64) -> Result<usize> {
    let len = block.len();
    if shift == 0 || shift >= len {
        return Err(Error::ShiftOutOfRange { shift, len });
    }
    let b = block.values();
    Ok((0..len - shift)
        .filter(|&nu| (b[nu + shift] - b[nu] - target).abs() <= tol)
        .count())
}

/// Like [`shift_match_count`] but gives up once `needed` matches are out of reach.
fn reaches_count(b: &[f64], shift: usize, target: f64, tol: f64, needed: usize) -> bool {
    let candidates = b.len() - shift;
    if candidates < needed {
        return false;
    }
    let allowed_misses = candidates - needed;
    let (mut hits, mut misses) = (0usize, 0usize);
    for nu in 0..candidates {
        if (b[nu + shift] - b[nu] - target).abs() <= tol {
            hits += 1;
            if hits >= needed {
                return true;
            }
        } else {
            misses += 1;
            if misses > allowed_misses {
                return false;
            }
        }
    }
    hits >= needed
}

/// Smallest shift whose match count reaches half the block length.
pub fn find_witness_shift(block: &DifferenceBlock, target: f64, tol: f64) -> Option<usize> {
    let len = block.len();
    let needed = len.div_ceil(2);
    (1..len).find(|&n| reaches_count(block.values(), n, target, tol, needed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMass {
    pub threshold: f64,
    pub count: usize,
    pub bound: f64,
    pub pass: bool,
}

/// Counts entries with `|b| >= threshold` (default `m^(3/4)`) and compares
/// with `max |gamma_j|^2 4^m / sqrt(m)`.
pub fn tail_mass_check(block: &DifferenceBlock, threshold: Option<f64>) -> Result<TailMass> {
    if block.kind() != BlockKind::Balanced {
        return Err(Error::NotBalanced);
    }
    let m = block.order() as f64;
    let threshold = threshold.unwrap_or_else(|| m.powf(0.75));
    let count = block.values().iter().filter(|b| b.abs() >= threshold).count();
    let max_gamma = block.gamma().max_abs();
    let bound = max_gamma * max_gamma * block.len() as f64 / m.sqrt();
    Ok(TailMass {
        threshold,
        count,
        bound,
        pass: count as f64 <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma(v: &[f64]) -> GammaVector {
        GammaVector::new(v.to_vec()).unwrap()
    }

    /// Direct evaluation of `sum eps_k gamma_k` from the bits of `index`.
    fn brute_value(gamma: &[f64], index: usize) -> f64 {
        gamma
            .iter()
            .enumerate()
            .filter(|(k, _)| index >> k & 1 == 1)
            .map(|(_, g)| g)
            .sum()
    }

    #[test]
    fn canonical_small_cases() {
        assert_eq!(canonical_block(&gamma(&[0.5])).values(), &[0.0, 0.5]);
        assert_eq!(canonical_block(&gamma(&[1.0, 2.0])).values(), &[0.0, 1.0, 2.0, 3.0]);
        let b = canonical_block(&gamma(&[1.0, 2.0, 4.0]));
        assert_eq!(b.values()[7], 7.0);
        assert_eq!(b.values()[5], 5.0);
        for i in 0..8 {
            assert_eq!(b.values()[i], brute_value(&[1.0, 2.0, 4.0], i));
        }
    }

    #[test]
    fn balanced_small_cases() {
        let b = balanced_block(&gamma(&[1.0]));
        assert_eq!(b.values(), &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(b.values(), canonical_block(&gamma(&[1.0, -1.0])).values());
        let b = balanced_block(&gamma(&[1.0, 2.0]));
        assert_eq!(b.len(), 16);
        assert_eq!(b.values()[3], 3.0);
        assert_eq!(b.values()[12], -3.0);
        assert_eq!(b.values()[15], 0.0);
        for i in 0..16 {
            assert_eq!(b.values()[i], brute_value(&[1.0, 2.0, -1.0, -2.0], i));
        }
    }

    #[test]
    fn empty_and_non_finite_gamma_rejected() {
        assert_eq!(GammaVector::new(vec![]), Err(Error::EmptyGamma));
        assert!(GammaVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn shift_counts() {
        let bal = balanced_block(&gamma(&[1.0]));
        assert_eq!(shift_match_count(&bal, 1, 1.0, 0.0).unwrap(), 2);
        // (0,1), (1,2) and (2,3) all differ by 1.
        let can = canonical_block(&gamma(&[1.0, 2.0]));
        assert_eq!(shift_match_count(&can, 1, 1.0, 0.0).unwrap(), 3);
        assert!(matches!(
            shift_match_count(&bal, 0, 0.0, 0.0),
            Err(Error::ShiftOutOfRange { .. })
        ));
        assert!(shift_match_count(&bal, 4, 0.0, 0.0).is_err());
    }

    #[test]
    fn witness_shifts() {
        let bal = balanced_block(&gamma(&[1.0]));
        assert_eq!(find_witness_shift(&bal, 1.0, 0.0), Some(1));
        let zeros = balanced_block(&gamma(&[0.0, 0.0]));
        assert_eq!(find_witness_shift(&zeros, 5.0, 0.0), None);
        let bal = balanced_block(&gamma(&[0.3, 1.7, -0.9]));
        for (j, &g) in [0.3, 1.7, -0.9].iter().enumerate() {
            assert_eq!(find_witness_shift(&bal, g, DEFAULT_MATCH_TOL), Some(1 << j));
        }
    }

    #[test]
    fn tail_mass_examples() {
        let t = tail_mass_check(&balanced_block(&gamma(&[1.0])), None).unwrap();
        assert_eq!((t.count, t.bound, t.pass), (2, 4.0, true));
        let t = tail_mass_check(&balanced_block(&gamma(&[0.0, 0.0, 0.0])), None).unwrap();
        assert_eq!(t.count, 0);
        assert!(t.pass);
        let t = tail_mass_check(&balanced_block(&gamma(&[1.0; 4])), None).unwrap();
        // Chebyshev: count <= 4^m * (m/2) / m^(3/2) = 128.
        assert!(t.count <= 128 && t.pass, "{t:?}");
        assert_eq!(
            tail_mass_check(&canonical_block(&gamma(&[1.0])), None),
            Err(Error::NotBalanced)
        );
    }

    #[test]
    fn csv_rows() {
        let mut out = Vec::new();
        canonical_block(&gamma(&[1.0, 2.0])).write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("index,value\n0,0e0\n"));
    }
}
