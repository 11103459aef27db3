//! Unbounded non-negative multiplicities.
//!
//! Degeneracy counts are small for almost every table key, so the common case
//! stays in a `u128` and only promotes to a [`BigUint`] on overflow. The
//! representation is canonical: a value is stored big only when it does not
//! fit in 128 bits, which keeps derived equality and hashing sound.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Count(Repr);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Repr {
    Small(u128),
    Big(BigUint),
}

impl Count {
    pub const ZERO: Count = Count(Repr::Small(0));
    pub const ONE: Count = Count(Repr::Small(1));

    fn from_big(b: BigUint) -> Count {
        match b.to_u128() {
            Some(v) => Count(Repr::Small(v)),
            None => Count(Repr::Big(b)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0))
    }

    pub fn to_u128(&self) -> Option<u128> {
        match &self.0 {
            Repr::Small(v) => Some(*v),
            Repr::Big(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(v) => *v as f64,
            Repr::Big(b) => b.to_f64().unwrap_or(f64::INFINITY),
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        match &self.0 {
            Repr::Small(v) => BigUint::from(*v),
            Repr::Big(b) => b.clone(),
        }
    }

    /// Little-endian magnitude bytes, empty for zero.
    pub fn to_bytes_le(&self) -> Vec<u8> {
        match &self.0 {
            Repr::Small(0) => Vec::new(),
            Repr::Small(v) => {
                let bytes = v.to_le_bytes();
                let len = 16 - (v.leading_zeros() as usize / 8);
                bytes[..len].to_vec()
            }
            Repr::Big(b) => b.to_bytes_le(),
        }
    }

    pub fn from_bytes_le(bytes: &[u8]) -> Count {
        if bytes.len() <= 16 {
            let mut buf = [0u8; 16];
            buf[..bytes.len()].copy_from_slice(bytes);
            Count(Repr::Small(u128::from_le_bytes(buf)))
        } else {
            Count::from_big(BigUint::from_bytes_le(bytes))
        }
    }
}

impl Default for Count {
    fn default() -> Self {
        Count::ZERO
    }
}

impl From<u64> for Count {
    fn from(v: u64) -> Self {
        Count(Repr::Small(v as u128))
    }
}

impl From<u128> for Count {
    fn from(v: u128) -> Self {
        Count(Repr::Small(v))
    }
}

impl From<BigUint> for Count {
    fn from(b: BigUint) -> Self {
        Count::from_big(b)
    }
}

impl AddAssign<&Count> for Count {
    fn add_assign(&mut self, rhs: &Count) {
        if let (Repr::Small(a), Repr::Small(b)) = (&mut self.0, &rhs.0) {
            if let Some(s) = a.checked_add(*b) {
                *a = s;
                return;
            }
        }
        let sum = self.to_biguint() + rhs.to_biguint();
        *self = Count::from_big(sum);
    }
}

impl AddAssign for Count {
    fn add_assign(&mut self, rhs: Count) {
        *self += &rhs;
    }
}

impl Add for Count {
    type Output = Count;
    fn add(mut self, rhs: Count) -> Count {
        self += &rhs;
        self
    }
}

impl Mul for &Count {
    type Output = Count;
    fn mul(self, rhs: &Count) -> Count {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(p) = a.checked_mul(*b) {
                return Count(Repr::Small(p));
            }
        }
        Count::from_big(self.to_biguint() * rhs.to_biguint())
    }
}

impl<'a> Sum<&'a Count> for Count {
    fn sum<I: Iterator<Item = &'a Count>>(iter: I) -> Count {
        let mut acc = Count::ZERO;
        for c in iter {
            acc += c;
        }
        acc
    }
}

impl Sum for Count {
    fn sum<I: Iterator<Item = Count>>(iter: I) -> Count {
        let mut acc = Count::ZERO;
        for c in iter {
            acc += &c;
        }
        acc
    }
}

impl Ord for Count {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            (Repr::Small(_), Repr::Big(_)) => Ordering::Less,
            (Repr::Big(_), Repr::Small(_)) => Ordering::Greater,
            (Repr::Big(a), Repr::Big(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Count {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(v) => write!(f, "{v}"),
            Repr::Big(b) => write!(f, "{b}"),
        }
    }
}

impl Zero for Count {
    fn zero() -> Self {
        Count::ZERO
    }
    fn is_zero(&self) -> bool {
        Count::is_zero(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn promotes_on_overflow() {
        let mut c = Count::from(u128::MAX);
        c += &Count::ONE;
        assert!(c.to_u128().is_none());
        assert_eq!(c.to_biguint(), BigUint::from(u128::MAX) + 1u32);
        let sq = &c * &c;
        assert_eq!(sq.to_biguint(), c.to_biguint() * c.to_biguint());
        assert!(sq > c);
    }

    #[test]
    fn canonical_after_demotion() {
        let big = Count::from(BigUint::from(7u32));
        assert_eq!(big, Count::from(7u64));
    }

    proptest! {
        #[test]
        fn byte_roundtrip(hi in any::<u128>(), lo in any::<u64>()) {
            let c = Count::from(BigUint::from(hi) * BigUint::from(lo) + 3u32);
            prop_assert_eq!(Count::from_bytes_le(&c.to_bytes_le()), c);
        }
    }
}
