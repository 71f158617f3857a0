//! Scalar abstraction: exact rational arithmetic or 64-bit floats.
//!
//! Exact rationals are used for representability, synthesis and the canonical
//! slope identities, where zero-tests must be decisive. Floats are used for
//! dynamics. Every algorithm in this crate is generic over [`Scalar`].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// True when equality tests are exact (no tolerances anywhere).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;

    /// Equality up to `tol` in float mode; exact equality in rational mode.
    fn eq_within(&self, other: &Self, tol: f64) -> bool;

    /// Square root when representable: always for nonnegative floats, only
    /// for perfect squares in rational mode.
    fn sqrt_if_representable(&self) -> Option<Self>;

    fn half(&self) -> Self {
        self.clone() / Self::from_int(2)
    }

    /// Total order; panics on NaN, which no valid value in this crate produces.
    fn cmp_total(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).expect("non-finite scalar")
    }

    fn min_val(self, other: Self) -> Self {
        if self.cmp_total(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    fn max_val(self, other: Self) -> Self {
        if self.cmp_total(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    /// Sign as an integer in {-1, 0, 1}.
    fn signum_int(&self) -> i32 {
        if self.is_zero() {
            0
        } else if *self > Self::zero() {
            1
        } else {
            -1
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(n: i64) -> Self {
        n as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn eq_within(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol
    }
    fn sqrt_if_representable(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(self.sqrt())
        }
    }
}

/// Arbitrary-precision rational scalar, serialized as a `"p/q"` string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rat(pub BigRational);

impl Rat {
    pub fn new(num: i64, den: i64) -> Self {
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Exact conversion from a finite float (every f64 is a dyadic rational).
    pub fn from_f64_exact(v: f64) -> Option<Rat> {
        BigRational::from_float(v).map(Rat)
    }

    /// Exact square root when the value is a perfect square of a rational.
    pub fn sqrt_exact(&self) -> Option<Rat> {
        if self.0.is_negative() {
            return None;
        }
        let ns = self.0.numer().sqrt();
        let ds = self.0.denom().sqrt();
        if &ns * &ns == *self.0.numer() && &ds * &ds == *self.0.denom() {
            Some(Rat(BigRational::new(ns, ds)))
        } else {
            None
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Rat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((n, d)) = s.split_once('/') {
            let num = BigInt::from_str(n.trim()).map_err(|e| e.to_string())?;
            let den = BigInt::from_str(d.trim()).map_err(|e| e.to_string())?;
            if den.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(Rat(BigRational::new(num, den)))
        } else {
            let num = BigInt::from_str(s.trim()).map_err(|e| e.to_string())?;
            Ok(Rat(BigRational::from_integer(num)))
        }
    }
}

macro_rules! rat_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat(self.0.$method(rhs.0))
            }
        }
    };
}

rat_binop!(Add, add);
rat_binop!(Sub, sub);
rat_binop!(Mul, mul);
rat_binop!(Div, div);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl AddAssign for Rat {
    fn add_assign(&mut self, rhs: Rat) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Rat {
    fn sub_assign(&mut self, rhs: Rat) {
        self.0 -= rhs.0;
    }
}

impl MulAssign for Rat {
    fn mul_assign(&mut self, rhs: Rat) {
        self.0 *= rhs.0;
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;

    fn zero() -> Self {
        Rat(BigRational::zero())
    }
    fn one() -> Self {
        Rat(BigRational::from_integer(BigInt::from(1)))
    }
    fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rat::new(num, den)
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Rat(self.0.abs())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn eq_within(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }
    fn sqrt_if_representable(&self) -> Option<Self> {
        self.sqrt_exact()
    }
}

impl serde::Serialize for Rat {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

impl<'de> serde::Deserialize<'de> for Rat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Rat::from_str(&s).map_err(serde::de::Error::custom)
    }
}
