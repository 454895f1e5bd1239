//! Half-open intervals, simple sets, and piecewise-constant functions on `[0,1)`.
//!
//! All endpoints are exact rationals; all set operations, integrals, norms
//! and level-set measures are exact. The half-open convention `[lo, hi)` is
//! used throughout: a point on a breakpoint belongs to the piece on its right.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::radical::RadScalar;
use crate::rational::Rational;
use crate::{Error, Result};

/// Half-open interval `[lo, hi)` inside `[0,1]`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(Rational, Rational)", into = "(Rational, Rational)")]
pub struct Interval {
    lo: Rational,
    hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self> {
        if lo >= hi {
            return Err(Error::validation(format!("empty interval [{lo}, {hi})")));
        }
        if lo.is_negative() || hi > Rational::one() {
            return Err(Error::validation(format!(
                "interval [{lo}, {hi}) outside [0,1]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn unit() -> Self {
        Interval {
            lo: Rational::zero(),
            hi: Rational::one(),
        }
    }

    /// `[a/2^k, (a+1)/2^k)`.
    pub fn dyadic(k: u32, a: u64) -> Self {
        let w = Rational::dyadic(k);
        let lo = &w * &Rational::from_int(a as i64);
        let hi = &lo + &w;
        Interval { lo, hi }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn length(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rational) -> bool {
        *x >= self.lo && *x < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = if self.lo >= other.lo { &self.lo } else { &other.lo };
        let hi = if self.hi <= other.hi { &self.hi } else { &other.hi };
        if lo < hi {
            Some(Interval {
                lo: lo.clone(),
                hi: hi.clone(),
            })
        } else {
            None
        }
    }
}

impl TryFrom<(Rational, Rational)> for Interval {
    type Error = Error;
    fn try_from(v: (Rational, Rational)) -> Result<Self> {
        Interval::new(v.0, v.1)
    }
}

impl From<Interval> for (Rational, Rational) {
    fn from(iv: Interval) -> Self {
        (iv.lo, iv.hi)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

/// Finite union of half-open intervals in canonical form: sorted, pairwise
/// disjoint, adjacent components merged.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SimpleSet {
    intervals: Vec<Interval>,
}

impl SimpleSet {
    /// Canonicalize an arbitrary collection of intervals (overlaps allowed).
    pub fn new(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| a.lo.cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match out.last_mut() {
                Some(last) if iv.lo <= last.hi => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => out.push(iv),
            }
        }
        SimpleSet { intervals: out }
    }

    pub fn empty() -> Self {
        SimpleSet::default()
    }

    pub fn unit() -> Self {
        SimpleSet {
            intervals: vec![Interval::unit()],
        }
    }

    pub fn from_interval(iv: Interval) -> Self {
        SimpleSet {
            intervals: vec![iv],
        }
    }

    pub fn components(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Exact Lebesgue measure.
    pub fn measure(&self) -> Rational {
        let mut m = Rational::zero();
        for iv in &self.intervals {
            m += &iv.length();
        }
        m
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.intervals.iter().any(|iv| iv.contains(x))
    }

    pub fn union(&self, other: &SimpleSet) -> SimpleSet {
        let mut all = self.intervals.clone();
        all.extend(other.intervals.iter().cloned());
        SimpleSet::new(all)
    }

    pub fn intersect(&self, other: &SimpleSet) -> SimpleSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            if let Some(iv) = self.intervals[i].intersect(&other.intervals[j]) {
                out.push(iv);
            }
            if self.intervals[i].hi <= other.intervals[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        SimpleSet { intervals: out }
    }

    /// Complement within `[0,1)`.
    pub fn complement(&self) -> SimpleSet {
        let mut out = Vec::new();
        let mut cursor = Rational::zero();
        for iv in &self.intervals {
            if iv.lo > cursor {
                out.push(Interval {
                    lo: cursor,
                    hi: iv.lo.clone(),
                });
            }
            cursor = iv.hi.clone();
        }
        if cursor < Rational::one() {
            out.push(Interval {
                lo: cursor,
                hi: Rational::one(),
            });
        }
        SimpleSet { intervals: out }
    }

    pub fn is_disjoint_from(&self, other: &SimpleSet) -> bool {
        self.intersect(other).is_empty()
    }
}

impl fmt::Debug for SimpleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.intervals)
    }
}

/// Piecewise-constant function on `[0,1)` in canonical form.
///
/// `breakpoints[0] = 0`, strictly increasing, last breakpoint `< 1`; piece `i`
/// covers `[breakpoints[i], breakpoints[i+1])` (the final piece runs to `1`).
/// Adjacent pieces with equal values are merged, so equality of canonical
/// forms is equality of functions.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PcfRepr", into = "PcfRepr")]
pub struct Pcf {
    breakpoints: Vec<Rational>,
    values: Vec<RadScalar>,
}

#[derive(Serialize, Deserialize)]
struct PcfRepr {
    breakpoints: Vec<Rational>,
    values: Vec<RadScalar>,
}

impl TryFrom<PcfRepr> for Pcf {
    type Error = Error;
    fn try_from(r: PcfRepr) -> Result<Self> {
        Pcf::new(r.breakpoints, r.values)
    }
}

impl From<Pcf> for PcfRepr {
    fn from(p: Pcf) -> Self {
        PcfRepr {
            breakpoints: p.breakpoints,
            values: p.values,
        }
    }
}

impl Pcf {
    pub fn new(breakpoints: Vec<Rational>, values: Vec<RadScalar>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::validation(
                "breakpoints and values must be nonempty and of equal length",
            ));
        }
        if !breakpoints[0].is_zero() {
            return Err(Error::validation("first breakpoint must be 0"));
        }
        for w in breakpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::validation("breakpoints must be strictly increasing"));
            }
        }
        if *breakpoints.last().unwrap() >= Rational::one() {
            return Err(Error::validation("last breakpoint must be < 1"));
        }
        Ok(Pcf {
            breakpoints,
            values,
        }
        .canonicalized())
    }

    fn canonicalized(self) -> Pcf {
        let mut bs = Vec::with_capacity(self.breakpoints.len());
        let mut vs: Vec<RadScalar> = Vec::with_capacity(self.values.len());
        for (b, v) in self.breakpoints.into_iter().zip(self.values) {
            match vs.last() {
                Some(last) if *last == v => {}
                _ => {
                    bs.push(b);
                    vs.push(v);
                }
            }
        }
        Pcf {
            breakpoints: bs,
            values: vs,
        }
    }

    pub fn constant(v: RadScalar) -> Self {
        Pcf {
            breakpoints: vec![Rational::zero()],
            values: vec![v],
        }
    }

    pub fn zero() -> Self {
        Pcf::constant(RadScalar::zero())
    }

    /// Indicator function of a simple set.
    pub fn indicator(set: &SimpleSet) -> Self {
        let mut bs = vec![Rational::zero()];
        let mut vs = vec![RadScalar::zero()];
        for iv in set.components() {
            if iv.lo().is_zero() {
                vs[0] = RadScalar::one();
            } else {
                bs.push(iv.lo().clone());
                vs.push(RadScalar::one());
            }
            if *iv.hi() < Rational::one() {
                bs.push(iv.hi().clone());
                vs.push(RadScalar::zero());
            }
        }
        Pcf {
            breakpoints: bs,
            values: vs,
        }
        .canonicalized()
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[RadScalar] {
        &self.values
    }

    pub fn piece_count(&self) -> usize {
        self.values.len()
    }

    /// Pieces as `(lo, hi, value)` with the final piece closed off at 1.
    pub fn segments(&self) -> impl Iterator<Item = (&Rational, Rational, &RadScalar)> + '_ {
        let n = self.breakpoints.len();
        (0..n).map(move |i| {
            let hi = if i + 1 < n {
                self.breakpoints[i + 1].clone()
            } else {
                Rational::one()
            };
            (&self.breakpoints[i], hi, &self.values[i])
        })
    }

    /// Index of the piece containing `x ∈ [0,1)`.
    fn piece_index(&self, x: &Rational) -> usize {
        debug_assert!(!x.is_negative() && *x < Rational::one());
        self.breakpoints.partition_point(|b| b <= x) - 1
    }

    pub fn value_at(&self, x: &Rational) -> &RadScalar {
        &self.values[self.piece_index(x)]
    }

    /// Pointwise combination on the common refinement of breakpoints.
    pub fn zip_with<F>(&self, other: &Pcf, mut op: F) -> Pcf
    where
        F: FnMut(&RadScalar, &RadScalar) -> RadScalar,
    {
        let mut bs = Vec::with_capacity(self.breakpoints.len() + other.breakpoints.len());
        let mut vs = Vec::with_capacity(bs.capacity());
        let (mut i, mut j) = (0usize, 0usize);
        let mut cursor = Rational::zero();
        loop {
            vs.push(op(&self.values[i], &other.values[j]));
            bs.push(cursor.clone());
            let next_a = self.breakpoints.get(i + 1);
            let next_b = other.breakpoints.get(j + 1);
            match (next_a, next_b) {
                (None, None) => break,
                (Some(a), None) => {
                    cursor = a.clone();
                    i += 1;
                }
                (None, Some(b)) => {
                    cursor = b.clone();
                    j += 1;
                }
                (Some(a), Some(b)) => {
                    if a < b {
                        cursor = a.clone();
                        i += 1;
                    } else if b < a {
                        cursor = b.clone();
                        j += 1;
                    } else {
                        cursor = a.clone();
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        Pcf {
            breakpoints: bs,
            values: vs,
        }
        .canonicalized()
    }

    pub fn try_zip_with<F>(&self, other: &Pcf, mut op: F) -> Result<Pcf>
    where
        F: FnMut(&RadScalar, &RadScalar) -> Result<RadScalar>,
    {
        let mut err = None;
        let out = self.zip_with(other, |a, b| match op(a, b) {
            Ok(v) => v,
            Err(e) => {
                if err.is_none() {
                    err = Some(e);
                }
                RadScalar::zero()
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn add(&self, other: &Pcf) -> Pcf {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Pcf) -> Pcf {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Pcf) -> Pcf {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: &RadScalar) -> Pcf {
        Pcf {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
        .canonicalized()
    }

    pub fn neg(&self) -> Pcf {
        Pcf {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn abs(&self) -> Result<Pcf> {
        let values: Vec<RadScalar> = self
            .values
            .iter()
            .map(|v| v.abs())
            .collect::<Result<_>>()?;
        Ok(Pcf {
            breakpoints: self.breakpoints.clone(),
            values,
        }
        .canonicalized())
    }

    pub fn max(&self, other: &Pcf) -> Result<Pcf> {
        self.try_zip_with(other, |a, b| a.max(b))
    }

    pub fn min(&self, other: &Pcf) -> Result<Pcf> {
        self.try_zip_with(other, |a, b| a.min(b))
    }

    /// Exact integral over `[0,1)`.
    pub fn integral(&self) -> RadScalar {
        let mut acc = RadScalar::zero();
        for (lo, hi, v) in self.segments() {
            acc += &v.scale(&(&hi - lo));
        }
        acc
    }

    /// Exact integral over a simple set.
    pub fn integral_over(&self, set: &SimpleSet) -> RadScalar {
        let mut acc = RadScalar::zero();
        for iv in set.components() {
            for (lo, hi, v) in self.segments() {
                let olo = if lo >= iv.lo() { lo.clone() } else { iv.lo().clone() };
                let ohi = if hi <= *iv.hi() { hi.clone() } else { iv.hi().clone() };
                if olo < ohi {
                    acc += &v.scale(&(&ohi - &olo));
                }
            }
        }
        acc
    }

    /// Exact inner product `∫ f·g`.
    pub fn inner(&self, other: &Pcf) -> RadScalar {
        self.mul(other).integral()
    }

    /// Exact `‖f‖₂²`.
    pub fn l2_norm_sq(&self) -> RadScalar {
        let mut acc = RadScalar::zero();
        for (lo, hi, v) in self.segments() {
            acc += &v.square().scale(&(&hi - lo));
        }
        acc
    }

    /// `‖f‖₂` as a float derived from the exact square.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().approx_sqrt()
    }

    /// Exact essential supremum of `|f|`.
    pub fn sup_norm(&self) -> Result<RadScalar> {
        let mut best = RadScalar::zero();
        for v in &self.values {
            let a = v.abs()?;
            best = best.max(&a)?;
        }
        Ok(best)
    }

    /// `‖f‖_p` for finite positive `p`, from high-precision value approximations.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p.is_finite(), "p must be positive and finite");
        let mut acc = 0.0f64;
        for (lo, hi, v) in self.segments() {
            let len = (&hi - lo).to_f64();
            acc += v.approx().abs().powf(p) * len;
        }
        acc.powf(1.0 / p)
    }

    /// Exact measure of `{f > λ}` (strict) or `{f ≥ λ}`.
    pub fn super_level_measure(&self, lambda: &RadScalar, strict: bool) -> Result<Rational> {
        let mut m = Rational::zero();
        for (lo, hi, v) in self.segments() {
            let s = (v - lambda).sign()?;
            if s > 0 || (!strict && s == 0) {
                m += &(&hi - lo);
            }
        }
        Ok(m)
    }

    /// Exact super-level set `{f > λ}` (strict) or `{f ≥ λ}`.
    pub fn super_level_set(&self, lambda: &RadScalar, strict: bool) -> Result<SimpleSet> {
        let mut parts = Vec::new();
        for (lo, hi, v) in self.segments() {
            let s = (v - lambda).sign()?;
            if s > 0 || (!strict && s == 0) {
                parts.push(Interval::new(lo.clone(), hi)?);
            }
        }
        Ok(SimpleSet::new(parts))
    }
}

impl fmt::Debug for Pcf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pcf{{")?;
        for (lo, hi, v) in self.segments() {
            write!(f, " [{},{})↦{}", lo, hi, v)?;
        }
        write!(f, " }}")
    }
}

/// Exact measure of the joint super-level set `{fₖ > λₖ for all k}`.
pub fn joint_super_level_measure(pairs: &[(&Pcf, &RadScalar)], strict: bool) -> Result<Rational> {
    if pairs.is_empty() {
        return Ok(Rational::one());
    }
    let mut set = SimpleSet::unit();
    for (f, lambda) in pairs {
        set = set.intersect(&f.super_level_set(lambda, strict)?);
        if set.is_empty() {
            break;
        }
    }
    Ok(set.measure())
}

/// Union of the breakpoints of several functions (sorted, deduplicated).
pub fn breakpoint_union(fs: &[&Pcf]) -> Vec<Rational> {
    let mut all: Vec<Rational> = Vec::new();
    for f in fs {
        all.extend(f.breakpoints().iter().cloned());
    }
    all.sort();
    all.dedup();
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn iv(a: (i64, i64), b: (i64, i64)) -> Interval {
        Interval::new(q(a.0, a.1), q(b.0, b.1)).unwrap()
    }

    #[test]
    fn simple_set_merges_adjacent() {
        let s = SimpleSet::new(vec![iv((0, 1), (1, 2)), iv((1, 2), (3, 4))]);
        assert_eq!(s.components(), &[iv((0, 1), (3, 4))]);
    }

    #[test]
    fn simple_set_sorts() {
        let s = SimpleSet::new(vec![iv((1, 2), (1, 1)), iv((0, 1), (1, 4))]);
        assert_eq!(s.components(), &[iv((0, 1), (1, 4)), iv((1, 2), (1, 1))]);
    }

    #[test]
    fn simple_set_overlap_union() {
        let s = SimpleSet::new(vec![iv((0, 1), (1, 3)), iv((1, 4), (1, 2))]);
        assert_eq!(s.components(), &[iv((0, 1), (1, 2))]);
    }

    #[test]
    fn measure_examples() {
        let s = SimpleSet::new(vec![iv((0, 1), (1, 4)), iv((1, 2), (3, 4))]);
        assert_eq!(s.measure(), q(1, 2));
        assert_eq!(SimpleSet::empty().measure(), Rational::zero());
        assert_eq!(SimpleSet::unit().measure(), Rational::one());
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(q(1, 2), q(1, 2)).is_err());
        assert!(Interval::new(q(3, 4), q(1, 2)).is_err());
        assert!(Interval::new(q(1, 2), q(5, 4)).is_err());
    }

    #[test]
    fn indicator_and_eval() {
        let s = SimpleSet::new(vec![iv((1, 4), (1, 2))]);
        let f = Pcf::indicator(&s);
        assert_eq!(*f.value_at(&q(1, 4)), RadScalar::one());
        assert_eq!(*f.value_at(&q(1, 8)), RadScalar::zero());
        assert_eq!(*f.value_at(&q(1, 2)), RadScalar::zero());
        assert_eq!(f.integral(), RadScalar::from_rational(q(1, 4)));
    }

    #[test]
    fn canonical_merges_equal_values() {
        let f = Pcf::new(
            vec![q(0, 1), q(1, 2)],
            vec![RadScalar::one(), RadScalar::one()],
        )
        .unwrap();
        assert_eq!(f.piece_count(), 1);
    }

    #[test]
    fn zip_refines_and_remerges() {
        let s1 = SimpleSet::new(vec![iv((0, 1), (1, 2))]);
        let s2 = SimpleSet::new(vec![iv((1, 2), (1, 1))]);
        let sum = Pcf::indicator(&s1).add(&Pcf::indicator(&s2));
        assert_eq!(sum, Pcf::constant(RadScalar::one()));
    }

    #[test]
    fn super_level_strictness() {
        let s = SimpleSet::new(vec![iv((0, 1), (1, 2))]);
        let f = Pcf::indicator(&s);
        let one = RadScalar::one();
        assert_eq!(f.super_level_measure(&one, true).unwrap(), q(0, 1));
        assert_eq!(f.super_level_measure(&one, false).unwrap(), q(1, 2));
    }
}
