//! Arbitrary-precision rational scalars.
//!
//! [`Scalar`] wraps [`num_rational::BigRational`], which already maintains the
//! invariants we need: values are kept in lowest terms and the denominator is
//! strictly positive. Arithmetic is exact and closed; there is no rounding
//! anywhere in this crate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use core::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact rational number.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Scalar(BigRational);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num / den`. Panics if `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Scalar(BigRational::new(num, den))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        Scalar(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Scalar(self.0.recip())
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    /// Remainder of `self` modulo a positive `modulus`, in `[0, modulus)`.
    pub fn rem_euclid(&self, modulus: &Scalar) -> Self {
        assert!(modulus.is_positive());
        let q = Scalar((self.0.clone() / modulus.0.clone()).floor());
        self.clone() - q * modulus.clone()
    }

    /// Lossy conversion for the fitting/reporting layer.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| {
            // Fall back for extreme exponents: numer/denom separately.
            let n = self.0.numer().to_f64().unwrap_or(f64::MAX);
            let d = self.0.denom().to_f64().unwrap_or(f64::MAX);
            n / d
        })
    }

    /// Canonical `"num/den"` rendering (plain integer when den == 1).
    pub fn to_fraction_string(&self) -> String {
        if self.0.denom().is_one() {
            self.0.numer().to_string()
        } else {
            let mut s = self.0.numer().to_string();
            s.push('/');
            s.push_str(&self.0.denom().to_string());
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseScalarError(pub String);

impl fmt::Display for ParseScalarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid rational literal `{}`", self.0)
    }
}

impl core::error::Error for ParseScalarError {}

impl FromStr for Scalar {
    type Err = ParseScalarError;

    /// Parses `"num"` or `"num/den"` with optional sign.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let bad = || ParseScalarError(s.to_string());
        match parts.as_slice() {
            [n] => {
                let n: BigInt = n.trim().parse().map_err(|_| bad())?;
                Ok(Scalar(BigRational::from_integer(n)))
            }
            [n, d] => {
                let n: BigInt = n.trim().parse().map_err(|_| bad())?;
                let d: BigInt = d.trim().parse().map_err(|_| bad())?;
                if d.is_zero() || d.sign() == Sign::Minus {
                    return Err(bad());
                }
                Ok(Scalar(BigRational::new(n, d)))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fraction_string())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fraction_string())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar(self.0.$method(rhs.0))
            }
        }
        impl $trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar(self.0.$method(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Div for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        assert!(!rhs.is_zero(), "division by zero");
        Scalar(self.0 / rhs.0)
    }
}

impl Div<&Scalar> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        assert!(!rhs.is_zero(), "division by zero");
        Scalar(self.0 / &rhs.0)
    }
}

impl Div for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        assert!(!rhs.is_zero(), "division by zero");
        Scalar(&self.0 / &rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Scalar {
    fn sub_assign(&mut self, rhs: Scalar) {
        self.0 -= rhs.0;
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

impl PartialEq<i64> for Scalar {
    fn eq(&self, other: &i64) -> bool {
        self.0 == BigRational::from_integer(BigInt::from(*other))
    }
}

impl PartialOrd<i64> for Scalar {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0
            .partial_cmp(&BigRational::from_integer(BigInt::from(*other)))
    }
}

/// Shorthand used throughout the tests: `sc!(1, 2)` is `1/2`, `sc!(3)` is `3`.
#[macro_export]
macro_rules! sc {
    ($n:expr) => {
        $crate::Scalar::from_int($n)
    };
    ($n:expr, $d:expr) => {
        $crate::Scalar::ratio($n, $d)
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_terms_and_sign() {
        let s = Scalar::ratio(6, -4);
        assert_eq!(s.numer(), &BigInt::from(-3));
        assert_eq!(s.denom(), &BigInt::from(2));
    }

    #[test]
    fn fraction_string_round_trip() {
        for s in [
            Scalar::ratio(1, 2),
            Scalar::from_int(-7),
            Scalar::ratio(22, 7),
            Scalar::zero(),
        ] {
            let back: Scalar = s.to_fraction_string().parse().unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn rejects_bad_literals() {
        assert!("1/0".parse::<Scalar>().is_err());
        assert!("1/-2".parse::<Scalar>().is_err());
        assert!("a/2".parse::<Scalar>().is_err());
        assert!("1/2/3".parse::<Scalar>().is_err());
    }

    #[test]
    fn rem_euclid_wraps_negatives() {
        let m = Scalar::from_int(2);
        assert_eq!(Scalar::ratio(-1, 2).rem_euclid(&m), Scalar::ratio(3, 2));
        assert_eq!(Scalar::ratio(9, 2).rem_euclid(&m), Scalar::ratio(1, 2));
    }
}
