//! Continued fractions with exact convergents.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// `alpha = [0; a_1, ..., a_N]`, represented exactly by its last convergent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuedFraction {
    quotients: Vec<u64>,
    #[serde(serialize_with = "big_strings")]
    p: Vec<BigInt>,
    #[serde(serialize_with = "big_strings")]
    q: Vec<BigInt>,
}

fn big_strings<S: serde::Serializer>(v: &[BigInt], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|b| b.to_string()))
}

/// Partial quotients of a rational in `(0, 1)` by the Euclidean algorithm.
pub fn expand_rational(num: u64, den: u64) -> Result<Vec<u64>> {
    if den == 0 || num == 0 || num >= den {
        return Err(Error::ContinuedFraction(format!("{num}/{den} is not in (0, 1)")));
    }
    let (mut a, mut b) = (den, num);
    let mut out = Vec::new();
    while b != 0 {
        let (quot, rem) = a.div_rem(&b);
        out.push(quot);
        a = b;
        b = rem;
    }
    Ok(out)
}

impl ContinuedFraction {
    pub fn new(quotients: Vec<u64>) -> Result<Self> {
        if quotients.len() < 2 {
            return Err(Error::ContinuedFraction(format!(
                "depth {} is below 2",
                quotients.len()
            )));
        }
        if quotients.contains(&0) {
            return Err(Error::ContinuedFraction("partial quotients must be positive".into()));
        }
        let mut p = vec![BigInt::zero(), BigInt::one()];
        let mut q = vec![BigInt::one(), BigInt::from(quotients[0])];
        for (i, &a) in quotients.iter().enumerate().skip(1) {
            let a = BigInt::from(a);
            p.push(&a * &p[i] + &p[i - 1]);
            q.push(&a * &q[i] + &q[i - 1]);
        }
        Ok(Self { quotients, p, q })
    }

    pub fn from_rational(num: u64, den: u64) -> Result<Self> {
        Self::new(expand_rational(num, den)?)
    }

    pub fn depth(&self) -> usize {
        self.quotients.len()
    }

    pub fn quotients(&self) -> &[u64] {
        &self.quotients
    }

    /// `a_n` for `1 <= n <= N`.
    pub fn a(&self, n: usize) -> u64 {
        self.quotients[n - 1]
    }

    pub fn p(&self, n: usize) -> &BigInt {
        &self.p[n]
    }

    pub fn q(&self, n: usize) -> &BigInt {
        &self.q[n]
    }

    pub fn alpha(&self) -> BigRational {
        BigRational::new(self.p[self.depth()].clone(), self.q[self.depth()].clone())
    }

    /// `|q_n p_N - p_n q_N|`, the distance `||q_n alpha||` in units of `1/q_N`.
    pub fn lattice_norm(&self, n: usize) -> BigInt {
        let big = self.depth();
        (&self.q[n] * &self.p[big] - &self.p[n] * &self.q[big]).abs()
    }

    pub fn norm(&self, n: usize) -> BigRational {
        BigRational::new(self.lattice_norm(n), self.q[self.depth()].clone())
    }

    /// `(Q, P)` with `alpha = P/Q`, when both fit the lattice limit.
    pub fn lattice(&self, limit: i64) -> Result<(i64, i64)> {
        let big = self.depth();
        let order = self.q[big].to_i64().filter(|&v| v <= limit);
        let step = self.p[big].to_i64();
        match (order, step) {
            (Some(o), Some(s)) => Ok((o, s)),
            _ => Err(Error::Overflow(format!("q_N = {} exceeds lattice limit {limit}", self.q[big]))),
        }
    }

    pub fn q_u64(&self, n: usize) -> Result<u64> {
        self.q[n]
            .to_u64()
            .ok_or_else(|| Error::Overflow(format!("q_{n} = {}", self.q[n])))
    }

    /// `ln q_n` without overflow.
    pub fn ln_q(&self, n: usize) -> f64 {
        big_ln(&self.q[n])
    }
}

pub fn big_ln(value: &BigInt) -> f64 {
    let bits = value.bits();
    if bits < 1000 {
        return value.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (value >> shift).to_f64().unwrap_or(f64::NAN);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}
