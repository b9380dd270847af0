//! Exact rational measures.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact measure of a set, or any exact rational quantity.
pub type Measure = BigRational;

/// `count / total` as an exact rational.
pub fn ratio(count: u64, total: u64) -> Measure {
    BigRational::new(BigInt::from(count), BigInt::from(total))
}

pub fn from_u128(count: u128, total: u128) -> Measure {
    BigRational::new(BigInt::from(count), BigInt::from(total))
}

pub fn zero() -> Measure {
    BigRational::zero()
}

pub fn one() -> Measure {
    BigRational::one()
}

/// Exact binary value of a finite double.
pub fn from_f64(value: f64) -> Measure {
    BigRational::from_float(value).expect("finite float")
}

/// Renders as `"num/den"` (always with a denominator).
pub fn fraction_string(value: &Measure) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Parses `"num/den"` or a plain integer.
pub fn parse_fraction(text: &str) -> Option<Measure> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n, d))
        }
        None => text.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

pub fn to_f64(value: &Measure) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn abs(value: &Measure) -> Measure {
    value.abs()
}

/// Serde adapter storing a [`Measure`] as a `"num/den"` string.
pub mod fraction {
    use super::{fraction_string, parse_fraction, Measure};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Measure, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&fraction_string(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Measure, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_fraction(&text).ok_or_else(|| D::Error::custom(format!("bad fraction {text:?}")))
    }
}
