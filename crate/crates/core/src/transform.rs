//! Piecewise-affine maps of `[0,1)` and the measure-preserving constructions
//! built from them.
//!
//! A [`PwAffineMap`] is a finite list of affine pieces `x ↦ slope·x + offset`
//! with positive slopes over pairwise disjoint half-open sources. Maps may be
//! partial (the stretch map of a simple set is defined on the set only); the
//! measure-preserving constructions are total. Everything is exact: preimages
//! of simple sets are simple sets with rational endpoints, and pullbacks of
//! piecewise-constant functions are piecewise constant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Interval, Pcf, SimpleSet};
use crate::rational::Rational;
use crate::{Error, Result};

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub source: Interval,
    pub slope: Rational,
    pub offset: Rational,
}

impl AffinePiece {
    fn apply(&self, x: &Rational) -> Rational {
        &(&self.slope * x) + &self.offset
    }

    /// Image of the source under the (increasing) affine map.
    fn image(&self) -> Interval {
        let lo = self.apply(self.source.lo());
        let hi = self.apply(self.source.hi());
        Interval::new(lo, hi).expect("positive slope preserves orientation")
    }

    /// Preimage of `[j.lo, j.hi)` within this piece's source.
    fn preimage_of(&self, j: &Interval) -> Option<Interval> {
        let img = self.image();
        let overlap = img.intersect(j)?;
        let inv_slope = self.slope.recip();
        let lo = &(overlap.lo() - &self.offset) * &inv_slope;
        let hi = &(overlap.hi() - &self.offset) * &inv_slope;
        Some(Interval::new(lo, hi).expect("nonempty overlap"))
    }
}

impl fmt::Debug for AffinePiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} ↦ {}·x + {}",
            self.source, self.slope, self.offset
        )
    }
}

/// Piecewise-affine map with positive slopes and disjoint sources.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AffinePiece>", into = "Vec<AffinePiece>")]
pub struct PwAffineMap {
    pieces: Vec<AffinePiece>,
}

impl TryFrom<Vec<AffinePiece>> for PwAffineMap {
    type Error = Error;
    fn try_from(pieces: Vec<AffinePiece>) -> Result<Self> {
        PwAffineMap::new(pieces)
    }
}

impl From<PwAffineMap> for Vec<AffinePiece> {
    fn from(m: PwAffineMap) -> Self {
        m.pieces
    }
}

impl PwAffineMap {
    pub fn new(mut pieces: Vec<AffinePiece>) -> Result<Self> {
        pieces.sort_by(|a, b| a.source.lo().cmp(b.source.lo()));
        for p in &pieces {
            if !p.slope.is_positive() {
                return Err(Error::validation("slopes must be positive"));
            }
            let img = p.image();
            if img.lo().is_negative() || *img.hi() > Rational::one() {
                return Err(Error::validation(format!(
                    "piece image {:?} escapes [0,1]",
                    img
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[0].source.hi() > w[1].source.lo() {
                return Err(Error::validation("piece sources overlap"));
            }
        }
        // Canonical form: merge contiguous pieces carrying the same affine map.
        let mut merged: Vec<AffinePiece> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged.last_mut() {
                Some(last)
                    if last.slope == p.slope
                        && last.offset == p.offset
                        && *last.source.hi() == *p.source.lo() =>
                {
                    last.source =
                        Interval::new(last.source.lo().clone(), p.source.hi().clone())?;
                }
                _ => merged.push(p),
            }
        }
        Ok(PwAffineMap { pieces: merged })
    }

    pub fn identity() -> Self {
        PwAffineMap {
            pieces: vec![AffinePiece {
                source: Interval::unit(),
                slope: Rational::one(),
                offset: Rational::zero(),
            }],
        }
    }

    /// `x ↦ {n·x}`: `n` pieces of slope `n`, exactly `n`-to-one for `n > 1`.
    pub fn eta(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("eta requires n ≥ 1"));
        }
        let slope = Rational::from_int(n as i64);
        let mut pieces = Vec::with_capacity(n as usize);
        for k in 0..n {
            let lo = Rational::new(k as i64, n as i64);
            let hi = Rational::new(k as i64 + 1, n as i64);
            pieces.push(AffinePiece {
                source: Interval::new(lo, hi)?,
                slope: slope.clone(),
                offset: Rational::from_int(-(k as i64)),
            });
        }
        PwAffineMap::new(pieces)
    }

    /// Stretch map of a simple set `a`: sends `x ∈ a` to the normalized
    /// measure of `[0,x) ∩ a`. Partial map with domain `a`, onto `[0,1)`;
    /// scales measure by `1/|a|`.
    pub fn xi(a: &SimpleSet) -> Result<Self> {
        let total = a.measure();
        if total.is_zero() {
            return Err(Error::domain("stretch map of a null set"));
        }
        let slope = total.recip();
        let mut pieces = Vec::new();
        let mut before = Rational::zero();
        for iv in a.components() {
            // x ↦ (before + (x − lo)) / |a|
            let offset = &(&before - iv.lo()) * &slope;
            pieces.push(AffinePiece {
                source: iv.clone(),
                slope: slope.clone(),
                offset,
            });
            before += &iv.length();
        }
        PwAffineMap::new(pieces)
    }

    /// Inverse of the stretch map: total on `[0,1)`, onto `a`.
    pub fn xi_inverse(a: &SimpleSet) -> Result<Self> {
        let xi = PwAffineMap::xi(a)?;
        xi.inverse()
    }

    /// Inverse of an injective map whose piece images are pairwise disjoint.
    pub fn inverse(&self) -> Result<Self> {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let inv_slope = p.slope.recip();
            pieces.push(AffinePiece {
                source: p.image(),
                slope: inv_slope.clone(),
                offset: -&(&p.offset * &inv_slope),
            });
        }
        PwAffineMap::new(pieces)
    }

    /// Block periodization on a single simple set: conjugate `x ↦ {nx}` by
    /// the stretch map on `a`, identity off `a`. Total and measure-preserving.
    pub fn u_map(a: &SimpleSet, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("u_map requires n ≥ 1"));
        }
        let on_block = PwAffineMap::compose(
            &PwAffineMap::xi_inverse(a)?,
            &PwAffineMap::compose(&PwAffineMap::eta(n)?, &PwAffineMap::xi(a)?)?,
        )?;
        let complement = a.complement();
        let mut pieces = on_block.pieces;
        for iv in complement.components() {
            pieces.push(AffinePiece {
                source: iv.clone(),
                slope: Rational::one(),
                offset: Rational::zero(),
            });
        }
        PwAffineMap::new(pieces)
    }

    /// Blockwise periodization over a partition: each block is mapped onto
    /// itself by its own block map.
    pub fn u_partition(partition: &Partition, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("u_partition requires n ≥ 1"));
        }
        let mut pieces = Vec::new();
        for block in partition.blocks() {
            let xi = PwAffineMap::xi(block)?;
            let on_block = PwAffineMap::compose(
                &xi.inverse()?,
                &PwAffineMap::compose(&PwAffineMap::eta(n)?, &xi)?,
            )?;
            pieces.extend(on_block.pieces);
        }
        PwAffineMap::new(pieces)
    }

    /// `outer ∘ inner` (apply `inner` first). Every piece image of `inner`
    /// must be covered by the domain of `outer`.
    pub fn compose(outer: &PwAffineMap, inner: &PwAffineMap) -> Result<Self> {
        let mut pieces = Vec::new();
        for ip in &inner.pieces {
            let img = ip.image();
            let mut covered = Rational::zero();
            for op in &outer.pieces {
                if let Some(overlap) = op.source.intersect(&img) {
                    covered += &overlap.length();
                    let src = ip
                        .preimage_of(&overlap)
                        .expect("overlap lies inside the piece image");
                    pieces.push(AffinePiece {
                        source: src,
                        slope: &op.slope * &ip.slope,
                        offset: &(&op.slope * &ip.offset) + &op.offset,
                    });
                }
            }
            if covered != img.length() {
                return Err(Error::domain(
                    "composition undefined: inner image not covered by outer domain",
                ));
            }
        }
        PwAffineMap::new(pieces)
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn domain(&self) -> SimpleSet {
        SimpleSet::new(self.pieces.iter().map(|p| p.source.clone()).collect())
    }

    pub fn is_total(&self) -> bool {
        self.domain() == SimpleSet::unit()
    }

    pub fn apply(&self, x: &Rational) -> Result<Rational> {
        for p in &self.pieces {
            if p.source.contains(x) {
                let y = p.apply(x);
                // images live in [0,1]; the right endpoint folds to the piece limit
                return Ok(y);
            }
        }
        Err(Error::domain(format!("{x} outside the map domain")))
    }

    /// Exact preimage of an interval.
    pub fn preimage_interval(&self, j: &Interval) -> SimpleSet {
        let mut parts = Vec::new();
        for p in &self.pieces {
            if let Some(iv) = p.preimage_of(j) {
                parts.push(iv);
            }
        }
        SimpleSet::new(parts)
    }

    /// Exact preimage of a simple set.
    pub fn preimage(&self, s: &SimpleSet) -> SimpleSet {
        let mut acc = SimpleSet::empty();
        for iv in s.components() {
            acc = acc.union(&self.preimage_interval(iv));
        }
        acc
    }

    /// Exact pullback `f ∘ τ` of a piecewise-constant function; requires a
    /// total map. Level sets pull back to preimages, so distribution is
    /// preserved whenever the map is measure-preserving.
    pub fn pullback(&self, f: &Pcf) -> Result<Pcf> {
        if !self.is_total() {
            return Err(Error::domain("pullback requires a total map"));
        }
        let mut pieces: Vec<(Rational, Rational, crate::RadScalar)> = Vec::new();
        for p in &self.pieces {
            for (lo, hi, v) in f.segments() {
                let seg = match Interval::new(lo.clone(), hi.clone()) {
                    Ok(iv) => iv,
                    Err(_) => continue,
                };
                if let Some(src) = p.preimage_of(&seg) {
                    pieces.push((src.lo().clone(), src.hi().clone(), v.clone()));
                }
            }
        }
        pieces.sort_by(|a, b| a.0.cmp(&b.0));
        let mut bs = Vec::with_capacity(pieces.len());
        let mut vs = Vec::with_capacity(pieces.len());
        let mut cursor = Rational::zero();
        for (lo, hi, v) in pieces {
            if lo != cursor {
                return Err(Error::validation(
                    "pullback pieces do not tile [0,1); map is not total",
                ));
            }
            bs.push(lo);
            vs.push(v);
            cursor = hi;
        }
        if cursor != Rational::one() {
            return Err(Error::validation("pullback pieces do not reach 1"));
        }
        Pcf::new(bs, vs)
    }

    /// Exact measure-preservation check against a family of probe sets.
    pub fn check_measure_preserving(&self, probes: &[SimpleSet]) -> MpReport {
        let total = self.is_total();
        let mut violations = Vec::new();
        for probe in probes {
            let expected = probe.measure();
            let actual = self.preimage(probe).measure();
            if expected != actual {
                violations.push(MpViolation {
                    probe: probe.clone(),
                    expected,
                    actual,
                });
            }
        }
        MpReport {
            total,
            checked: probes.len(),
            violations,
        }
    }
}

impl fmt::Debug for PwAffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.pieces).finish()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpViolation {
    pub probe: SimpleSet,
    pub expected: Rational,
    pub actual: Rational,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpReport {
    pub total: bool,
    pub checked: usize,
    pub violations: Vec<MpViolation>,
}

impl MpReport {
    pub fn passed(&self) -> bool {
        self.total && self.violations.is_empty()
    }
}

/// All dyadic intervals `[k/2^r, (k+1)/2^r)` at resolution `2^-r`.
pub fn dyadic_probes(resolution_log2: u32) -> Vec<SimpleSet> {
    let n = 1u64 << resolution_log2;
    (0..n)
        .map(|k| SimpleSet::from_interval(Interval::dyadic(resolution_log2, k)))
        .collect()
}

/// Partition of `[0,1)` into finitely many simple sets of positive measure.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<SimpleSet>", into = "Vec<SimpleSet>")]
pub struct Partition {
    blocks: Vec<SimpleSet>,
}

impl TryFrom<Vec<SimpleSet>> for Partition {
    type Error = Error;
    fn try_from(blocks: Vec<SimpleSet>) -> Result<Self> {
        Partition::new(blocks)
    }
}

impl From<Partition> for Vec<SimpleSet> {
    fn from(p: Partition) -> Self {
        p.blocks
    }
}

impl Partition {
    pub fn new(blocks: Vec<SimpleSet>) -> Result<Self> {
        let mut union = SimpleSet::empty();
        let mut measure = Rational::zero();
        for b in &blocks {
            if b.measure().is_zero() {
                return Err(Error::validation("partition blocks must have positive measure"));
            }
            measure += &b.measure();
            union = union.union(b);
        }
        if union != SimpleSet::unit() || measure != Rational::one() {
            return Err(Error::validation(
                "blocks must be pairwise disjoint and cover [0,1)",
            ));
        }
        Ok(Partition { blocks })
    }

    pub fn trivial() -> Self {
        Partition {
            blocks: vec![SimpleSet::unit()],
        }
    }

    pub fn blocks(&self) -> &[SimpleSet] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Every block is a single interval.
    pub fn is_interval_partition(&self) -> bool {
        self.blocks.iter().all(|b| b.components().len() == 1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub n: u64,
    pub integral: crate::RadScalar,
    pub target: crate::RadScalar,
    pub gap: crate::RadScalar,
}

/// For each `n`, the exact correlation `∫ f(u_{A,n}(x)) g(x) dx` next to its
/// block-product target `Σ_j (1/|a_j|)·∫_{a_j} f · ∫_{a_j} g`. For step data
/// on a grid the two agree exactly once `n` refines past the grid.
pub fn correlation_table(
    f: &Pcf,
    g: &Pcf,
    partition: &Partition,
    ns: &[u64],
) -> Result<Vec<CorrelationRow>> {
    let mut target = crate::RadScalar::zero();
    for block in partition.blocks() {
        let fa = f.integral_over(block);
        let ga = g.integral_over(block);
        let inv = block.measure().recip();
        target += &(&fa * &ga).scale(&inv);
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let u = PwAffineMap::u_partition(partition, n)?;
        let integral = u.pullback(f)?.mul(g).integral();
        let gap = &integral - &target;
        rows.push(CorrelationRow {
            n,
            integral,
            target: target.clone(),
            gap,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radical::RadScalar;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn set(ivs: &[((i64, i64), (i64, i64))]) -> SimpleSet {
        SimpleSet::new(
            ivs.iter()
                .map(|(a, b)| Interval::new(q(a.0, a.1), q(b.0, b.1)).unwrap())
                .collect(),
        )
    }

    #[test]
    fn eta_examples() {
        let e2 = PwAffineMap::eta(2).unwrap();
        assert_eq!(e2.apply(&q(3, 4)).unwrap(), q(1, 2));
        let e3 = PwAffineMap::eta(3).unwrap();
        assert_eq!(e3.apply(&q(2, 3)).unwrap(), q(0, 1));
        assert_eq!(PwAffineMap::eta(1).unwrap(), PwAffineMap::identity());
        assert!(PwAffineMap::eta(0).is_err());
    }

    #[test]
    fn xi_examples() {
        let a = set(&[((0, 1), (1, 4)), ((1, 2), (3, 4))]);
        let xi = PwAffineMap::xi(&a).unwrap();
        assert_eq!(xi.apply(&q(1, 8)).unwrap(), q(1, 4));
        assert_eq!(xi.apply(&q(5, 8)).unwrap(), q(3, 4));
        assert!(xi.apply(&q(3, 8)).is_err());
        assert_eq!(PwAffineMap::xi(&SimpleSet::unit()).unwrap(), PwAffineMap::identity());
        assert!(PwAffineMap::xi(&SimpleSet::empty()).is_err());
    }

    #[test]
    fn u_map_examples() {
        let a = set(&[((1, 2), (1, 1))]);
        let u = PwAffineMap::u_map(&a, 2).unwrap();
        // stretch to 1/4, double to 1/2, pull back to 3/4
        assert_eq!(u.apply(&q(5, 8)).unwrap(), q(3, 4));
        // identity off the block
        assert_eq!(u.apply(&q(1, 4)).unwrap(), q(1, 4));
        let u1 = PwAffineMap::u_map(&a, 1).unwrap();
        assert_eq!(u1, PwAffineMap::identity());
    }

    #[test]
    fn u_partition_examples() {
        let trivial = Partition::trivial();
        assert_eq!(
            PwAffineMap::u_partition(&trivial, 2).unwrap(),
            PwAffineMap::eta(2).unwrap()
        );
        let halves = Partition::new(vec![
            set(&[((0, 1), (1, 2))]),
            set(&[((1, 2), (1, 1))]),
        ])
        .unwrap();
        assert_eq!(
            PwAffineMap::u_partition(&halves, 1).unwrap(),
            PwAffineMap::identity()
        );
        // block invariance: image and preimage of each block is the block
        let u = PwAffineMap::u_partition(&halves, 2).unwrap();
        for block in halves.blocks() {
            assert_eq!(u.preimage(block), *block);
        }
    }

    #[test]
    fn compose_eta_doubles() {
        let e2 = PwAffineMap::eta(2).unwrap();
        let c = PwAffineMap::compose(&e2, &e2).unwrap();
        assert_eq!(c, PwAffineMap::eta(4).unwrap());
        let id = PwAffineMap::identity();
        assert_eq!(PwAffineMap::compose(&id, &e2).unwrap(), e2);
        let u3 = PwAffineMap::u_map(&SimpleSet::unit(), 3).unwrap();
        assert_eq!(
            PwAffineMap::compose(&e2, &u3).unwrap(),
            PwAffineMap::eta(6).unwrap()
        );
    }

    #[test]
    fn measure_preserving_checks() {
        let e3 = PwAffineMap::eta(3).unwrap();
        let probe = set(&[((0, 1), (1, 2))]);
        assert_eq!(e3.preimage(&probe).measure(), q(1, 2));
        let report = e3.check_measure_preserving(&dyadic_probes(6));
        assert!(report.passed());

        // negative control: second half folded onto the first
        let bad = PwAffineMap::new(vec![
            AffinePiece {
                source: Interval::new(q(0, 1), q(1, 2)).unwrap(),
                slope: q(1, 1),
                offset: q(0, 1),
            },
            AffinePiece {
                source: Interval::new(q(1, 2), q(1, 1)).unwrap(),
                slope: q(1, 1),
                offset: q(-1, 2),
            },
        ])
        .unwrap();
        let report = bad.check_measure_preserving(&dyadic_probes(6));
        assert!(!report.passed());
        assert!(!report.violations.is_empty());
    }

    #[test]
    fn pullback_preserves_distribution() {
        // indicator of [0,1/2) through eta_2 becomes indicator of a 2-periodic set
        let f = Pcf::indicator(&set(&[((0, 1), (1, 2))]));
        let e2 = PwAffineMap::eta(2).unwrap();
        let g = e2.pullback(&f).unwrap();
        assert_eq!(
            g,
            Pcf::indicator(&set(&[((0, 1), (1, 4)), ((1, 2), (3, 4))]))
        );
        let lambda = RadScalar::from_rational(q(1, 2));
        assert_eq!(
            f.super_level_measure(&lambda, true).unwrap(),
            g.super_level_measure(&lambda, true).unwrap()
        );
        // identity pullback
        assert_eq!(PwAffineMap::identity().pullback(&f).unwrap(), f);
    }

    #[test]
    fn correlation_fixture() {
        let f = Pcf::indicator(&set(&[((0, 1), (1, 4))]));
        let g = Pcf::indicator(&set(&[((0, 1), (1, 8))]));
        let halves = Partition::new(vec![
            set(&[((0, 1), (1, 2))]),
            set(&[((1, 2), (1, 1))]),
        ])
        .unwrap();
        let rows = correlation_table(&f, &g, &halves, &[4]).unwrap();
        let sixteenth = RadScalar::from_rational(q(1, 16));
        assert_eq!(rows[0].integral, sixteenth);
        assert_eq!(rows[0].target, sixteenth);
        assert!(rows[0].gap.is_zero());
    }
}
