//! Exact arithmetic in the field generated by square roots of rationals.
//!
//! A [`RadScalar`] is a finite formal sum `Σ rᵢ·√mᵢ` with rational
//! coefficients and distinct square-free positive integer radicands
//! (`m = 1` carries the rational part). Square roots of distinct square-free
//! integers are linearly independent over the rationals, so the canonical
//! form is unique and a nonzero element is never numerically zero. Addition
//! and multiplication are closed: products of square-free radicands reduce
//! with a gcd, no factorization needed.
//!
//! Sign determination uses exact rational interval enclosures from integer
//! square roots, refined with doubling precision up to the global budget in
//! [`crate::precision`]; an undecided sign is an error, never a rounding.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::{BigInt, BigUint};
use num_integer::{Integer, Roots};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::precision;
use crate::rational::Rational;
use crate::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct RadScalar {
    /// radicand -> coefficient; radicands square-free, coefficients nonzero.
    terms: BTreeMap<BigUint, Rational>,
}

/// Decompose `n = s² · m` with `m` square-free.
///
/// Trial division up to the cube root removes all small primes; what remains
/// has at most two prime factors, so it is square-free unless it is a perfect
/// square. Radicands here come from normalization constants of splitting
/// trees and stay small; the guard keeps huge composites honest.
fn split_square(n: &BigUint) -> Result<(BigUint, BigUint)> {
    if n.is_zero() {
        return Ok((BigUint::zero(), BigUint::zero()));
    }
    if let Some(v) = n.to_u128() {
        let (s, m) = split_square_u128(v);
        return Ok((BigUint::from(s), BigUint::from(m)));
    }
    // Big path: divisors up to min(cbrt, 2^21).
    let cbrt = n.cbrt();
    let bound = BigUint::from(1u32 << 21);
    let exact = cbrt <= bound;
    let limit = if exact { cbrt } else { bound };
    let mut rem = n.clone();
    let mut s = BigUint::one();
    let mut m = BigUint::one();
    let mut d = BigUint::from(2u8);
    while &d <= &limit {
        if (&rem % &d).is_zero() {
            let mut e = 0u32;
            while (&rem % &d).is_zero() {
                rem /= &d;
                e += 1;
            }
            s *= d.pow(e / 2);
            if e % 2 == 1 {
                m *= &d;
            }
        }
        d += 1u8;
    }
    if !rem.is_one() {
        let r = rem.sqrt();
        if &r * &r == rem {
            s *= r;
        } else if exact || rem < &limit * &limit {
            m *= rem;
        } else {
            return Err(Error::validation(
                "radicand too large to certify a square-free decomposition",
            ));
        }
    }
    Ok((s, m))
}

fn split_square_u128(n: u128) -> (u128, u128) {
    let mut rem = n;
    let mut s: u128 = 1;
    let mut m: u128 = 1;
    let mut d: u128 = 2;
    while d * d * d <= rem {
        if rem % d == 0 {
            let mut e = 0u32;
            while rem % d == 0 {
                rem /= d;
                e += 1;
            }
            s *= d.pow(e / 2);
            if e % 2 == 1 {
                m *= d;
            }
        }
        d += 1;
    }
    if rem > 1 {
        let r = rem.sqrt();
        if r * r == rem {
            s *= r;
        } else {
            m *= rem;
        }
    }
    (s, m)
}

impl RadScalar {
    pub fn zero() -> Self {
        RadScalar::default()
    }

    pub fn one() -> Self {
        RadScalar::from_rational(Rational::one())
    }

    pub fn from_rational(r: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(BigUint::one(), r);
        }
        RadScalar { terms }
    }

    pub fn from_int(n: i64) -> Self {
        RadScalar::from_rational(Rational::from_int(n))
    }

    /// `r·√m` with the radicand canonicalized to square-free form.
    pub fn radical(r: Rational, radicand: &BigUint) -> Result<Self> {
        if radicand.is_zero() {
            return Ok(RadScalar::zero());
        }
        let (s, m) = split_square(radicand)?;
        let coeff = r * Rational::from_bigint(BigInt::from(s));
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(m, coeff);
        }
        Ok(RadScalar { terms })
    }

    /// Exact square root of a nonnegative rational: `√(a/b) = √(ab)/b`.
    pub fn sqrt_rational(q: &Rational) -> Result<Self> {
        match q.signum() {
            -1 => Err(Error::domain("square root of a negative rational")),
            0 => Ok(RadScalar::zero()),
            _ => {
                let num = q.numer().magnitude().clone();
                let den = q.denom().magnitude().clone();
                let rad = &num * &den;
                let inv_den = Rational::from_big(BigInt::one(), BigInt::from(den))
                    .expect("nonzero denominator");
                RadScalar::radical(inv_den, &rad)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_rational(&self) -> bool {
        self.terms.len() <= 1 && self.terms.keys().all(|k| k.is_one())
    }

    /// The rational value, if this element lies in the rationals.
    pub fn as_rational(&self) -> Option<Rational> {
        if self.terms.is_empty() {
            return Some(Rational::zero());
        }
        if self.terms.len() == 1 {
            let (k, v) = self.terms.iter().next().unwrap();
            if k.is_one() {
                return Some(v.clone());
            }
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BigUint, &Rational)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn scale(&self, r: &Rational) -> Self {
        if r.is_zero() {
            return RadScalar::zero();
        }
        RadScalar {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v * r))
                .collect(),
        }
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Exact sign: −1, 0, +1.
    pub fn sign(&self) -> Result<i8> {
        if self.terms.is_empty() {
            return Ok(0);
        }
        // All coefficients of one sign: √m > 0 settles it.
        let mut pos = 0usize;
        let mut neg = 0usize;
        for v in self.terms.values() {
            if v.is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if neg == 0 {
            return Ok(1);
        }
        if pos == 0 {
            return Ok(-1);
        }
        // Two terms of opposite sign: compare squared magnitudes exactly.
        if self.terms.len() == 2 {
            let mut it = self.terms.iter();
            let (m1, r1) = it.next().unwrap();
            let (m2, r2) = it.next().unwrap();
            let a = r1.square() * Rational::from_bigint(BigInt::from(m1.clone()));
            let b = r2.square() * Rational::from_bigint(BigInt::from(m2.clone()));
            return Ok(match a.cmp(&b) {
                Ordering::Greater => r1.signum(),
                Ordering::Less => r2.signum(),
                Ordering::Equal => 0, // impossible for distinct square-free radicands
            });
        }
        let budget = precision::budget_bits();
        let mut bits = 64u32;
        loop {
            let (lo, hi) = self.enclosure(bits);
            if lo.is_positive() {
                return Ok(1);
            }
            if hi.is_negative() {
                return Ok(-1);
            }
            if bits >= budget {
                return Err(Error::Precision {
                    bits,
                    context: format!("sign of {}", self),
                });
            }
            bits = (bits * 2).min(budget);
        }
    }

    pub fn try_cmp(&self, other: &RadScalar) -> Result<Ordering> {
        let s = (self - other).sign()?;
        Ok(match s {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        })
    }

    pub fn abs(&self) -> Result<RadScalar> {
        if self.sign()? < 0 {
            Ok(-self)
        } else {
            Ok(self.clone())
        }
    }

    pub fn max(&self, other: &RadScalar) -> Result<RadScalar> {
        Ok(match self.try_cmp(other)? {
            Ordering::Less => other.clone(),
            _ => self.clone(),
        })
    }

    pub fn min(&self, other: &RadScalar) -> Result<RadScalar> {
        Ok(match self.try_cmp(other)? {
            Ordering::Greater => other.clone(),
            _ => self.clone(),
        })
    }

    /// Exact rational enclosure `[lo, hi]` at `bits` fractional bits.
    fn enclosure(&self, bits: u32) -> (Rational, Rational) {
        let mut lo = Rational::zero();
        let mut hi = Rational::zero();
        let scale = BigUint::one() << bits;
        let scale_sq = &scale * &scale;
        for (m, r) in &self.terms {
            if m.is_one() {
                lo += r;
                hi += r;
                continue;
            }
            // t/2^bits ≤ √m < (t+1)/2^bits
            let t = (m * &scale_sq).sqrt();
            let slo = Rational::from_big(BigInt::from(t.clone()), BigInt::from(scale.clone()))
                .expect("nonzero");
            let shi = Rational::from_big(BigInt::from(t + 1u8), BigInt::from(scale.clone()))
                .expect("nonzero");
            if r.is_positive() {
                lo += &(r * &slo);
                hi += &(r * &shi);
            } else {
                lo += &(r * &shi);
                hi += &(r * &slo);
            }
        }
        (lo, hi)
    }

    /// Float approximation with an absolute error bound.
    pub fn approx_with_error(&self) -> (f64, f64) {
        if self.terms.is_empty() {
            return (0.0, 0.0);
        }
        let (lo, hi) = self.enclosure(160);
        let mid = (&lo + &hi) * Rational::new(1, 2);
        let half_width = ((&hi - &lo) * Rational::new(1, 2)).to_f64();
        // f64 conversion of the midpoint adds at most one ulp of slack.
        (mid.to_f64(), half_width + mid.to_f64().abs() * f64::EPSILON)
    }

    pub fn approx(&self) -> f64 {
        self.approx_with_error().0
    }

    /// Float square root of a nonnegative element (used for norms).
    pub fn approx_sqrt(&self) -> f64 {
        self.approx().max(0.0).sqrt()
    }
}

impl From<Rational> for RadScalar {
    fn from(r: Rational) -> Self {
        RadScalar::from_rational(r)
    }
}

impl From<i64> for RadScalar {
    fn from(n: i64) -> Self {
        RadScalar::from_int(n)
    }
}

impl Add for &RadScalar {
    type Output = RadScalar;
    fn add(self, rhs: &RadScalar) -> RadScalar {
        let mut terms = self.terms.clone();
        for (k, v) in &rhs.terms {
            match terms.get_mut(k) {
                Some(c) => {
                    *c += v;
                    if c.is_zero() {
                        terms.remove(k);
                    }
                }
                None => {
                    terms.insert(k.clone(), v.clone());
                }
            }
        }
        RadScalar { terms }
    }
}

impl Sub for &RadScalar {
    type Output = RadScalar;
    fn sub(self, rhs: &RadScalar) -> RadScalar {
        self + &(-rhs)
    }
}

impl Neg for &RadScalar {
    type Output = RadScalar;
    fn neg(self) -> RadScalar {
        RadScalar {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }
}

impl Mul for &RadScalar {
    type Output = RadScalar;
    fn mul(self, rhs: &RadScalar) -> RadScalar {
        let mut out: BTreeMap<BigUint, Rational> = BTreeMap::new();
        for (m1, r1) in &self.terms {
            for (m2, r2) in &rhs.terms {
                // √m1·√m2 = g·√((m1/g)(m2/g)) with g = gcd(m1, m2);
                // the cofactors are coprime square-free, so their product is too.
                let g = m1.gcd(m2);
                let rad = (m1 / &g) * (m2 / &g);
                let coeff = (r1 * r2) * Rational::from_bigint(BigInt::from(g));
                match out.get_mut(&rad) {
                    Some(c) => {
                        *c += &coeff;
                        if c.is_zero() {
                            out.remove(&rad);
                        }
                    }
                    None => {
                        if !coeff.is_zero() {
                            out.insert(rad, coeff);
                        }
                    }
                }
            }
        }
        RadScalar { terms: out }
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait for RadScalar {
            type Output = RadScalar;
            fn $method(self, rhs: RadScalar) -> RadScalar {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&RadScalar> for RadScalar {
            type Output = RadScalar;
            fn $method(self, rhs: &RadScalar) -> RadScalar {
                (&self).$method(rhs)
            }
        }
        impl $trait<RadScalar> for &RadScalar {
            type Output = RadScalar;
            fn $method(self, rhs: RadScalar) -> RadScalar {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for RadScalar {
    type Output = RadScalar;
    fn neg(self) -> RadScalar {
        -&self
    }
}

impl AddAssign<&RadScalar> for RadScalar {
    fn add_assign(&mut self, rhs: &RadScalar) {
        *self = &*self + rhs;
    }
}

impl SubAssign<&RadScalar> for RadScalar {
    fn sub_assign(&mut self, rhs: &RadScalar) {
        *self = &*self - rhs;
    }
}

impl fmt::Display for RadScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, r) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if m.is_one() {
                write!(f, "{}", r)?;
            } else {
                write!(f, "{}*sqrt({})", r, m)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for RadScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Wire format: a list of `[coefficient, radicand]` pairs, both as exact
/// rational strings, sorted by radicand.
impl Serialize for RadScalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[String; 2]> = self
            .terms
            .iter()
            .map(|(m, r)| [r.to_string(), format!("{}/1", m)])
            .collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RadScalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let pairs = Vec::<[String; 2]>::deserialize(deserializer)?;
        let mut out = RadScalar::zero();
        for [r, q] in pairs {
            let coeff: Rational = r.parse().map_err(DeError::custom)?;
            let rad: Rational = q.parse().map_err(DeError::custom)?;
            if rad.signum() <= 0 {
                return Err(DeError::custom("radicand must be positive"));
            }
            let sq = RadScalar::sqrt_rational(&rad).map_err(DeError::custom)?;
            out += &sq.scale(&coeff);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_int(n: u64) -> RadScalar {
        RadScalar::sqrt_rational(&Rational::from_int(n as i64)).unwrap()
    }

    #[test]
    fn canonicalizes_square_factors() {
        // √8 = 2√2, √9 = 3, √(4/9) = 2/3
        let r = sqrt_int(8);
        assert_eq!(r, sqrt_int(2).scale(&Rational::from_int(2)));
        assert_eq!(sqrt_int(9).as_rational(), Some(Rational::from_int(3)));
        let q = RadScalar::sqrt_rational(&Rational::new(4, 9)).unwrap();
        assert_eq!(q.as_rational(), Some(Rational::new(2, 3)));
    }

    #[test]
    fn multiplication_reduces_with_gcd() {
        // √6·√10 = 2√15
        let p = &sqrt_int(6) * &sqrt_int(10);
        assert_eq!(p, sqrt_int(15).scale(&Rational::from_int(2)));
        // (√2)² = 2
        assert_eq!(sqrt_int(2).square().as_rational(), Some(Rational::from_int(2)));
    }

    #[test]
    fn sign_exact() {
        // √2 + √3 − √10 < 0 (3.146... − 3.162...)
        let x = &(&sqrt_int(2) + &sqrt_int(3)) - &sqrt_int(10);
        assert_eq!(x.sign().unwrap(), -1);
        // √2 + √3 − √9 > 0
        let y = &(&sqrt_int(2) + &sqrt_int(3)) - &sqrt_int(9);
        assert_eq!(y.sign().unwrap(), 1);
        assert_eq!(RadScalar::zero().sign().unwrap(), 0);
    }

    #[test]
    fn sign_of_negation_flips() {
        let x = &sqrt_int(2) - &RadScalar::from_rational(Rational::new(3, 2));
        let s = x.sign().unwrap();
        let t = (-&x).sign().unwrap();
        assert_eq!(s * t, -1);
    }

    #[test]
    fn approx_close() {
        let x = &sqrt_int(2) + &sqrt_int(3);
        let (v, err) = x.approx_with_error();
        assert!((v - (2f64.sqrt() + 3f64.sqrt())).abs() < 1e-12);
        assert!(err < 1e-14);
    }

    #[test]
    fn serde_round_trip() {
        let x = &sqrt_int(12).scale(&Rational::new(-3, 7)) + &RadScalar::from_rational(Rational::new(1, 3));
        let js = serde_json::to_string(&x).unwrap();
        let back: RadScalar = serde_json::from_str(&js).unwrap();
        assert_eq!(x, back);
    }
}
