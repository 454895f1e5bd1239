//! Filtrations, split trees, and orthonormal function systems.
//!
//! The martingale-difference convention used everywhere: a system `f_1, f_2,…`
//! is adapted to a filtration of partitions when `f_n` is constant on each
//! level-`n` block and integrates to zero over each level-`(n−1)` block. The
//! classical and generalized Haar systems realize this with one interior
//! split per index: level `n+1` refines exactly one block of level `n`, and
//! `f_{n+1}` is the two-valued normalized function on the split block.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::geometry::{Interval, Pcf, SimpleSet};
use crate::radical::RadScalar;
use crate::rational::Rational;
use crate::transform::{Partition, PwAffineMap};
use crate::{Error, Result};

/// Nested sequence of partitions; every block is the exact union of its
/// children at the next level.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Partition>", into = "Vec<Partition>")]
pub struct Filtration {
    levels: Vec<Partition>,
}

impl TryFrom<Vec<Partition>> for Filtration {
    type Error = Error;
    fn try_from(levels: Vec<Partition>) -> Result<Self> {
        Filtration::new(levels)
    }
}

impl From<Filtration> for Vec<Partition> {
    fn from(f: Filtration) -> Self {
        f.levels
    }
}

impl Filtration {
    pub fn new(levels: Vec<Partition>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("filtration needs at least one level"));
        }
        for (i, w) in levels.windows(2).enumerate() {
            let (coarse, fine) = (&w[0], &w[1]);
            for block in coarse.blocks() {
                let mut union = SimpleSet::empty();
                for child in fine.blocks() {
                    if child.intersect(block) == *child {
                        union = union.union(child);
                    } else if !child.is_disjoint_from(block) {
                        return Err(Error::validation(format!(
                            "level {} block straddles a level-{} block",
                            i + 2,
                            i + 1
                        )));
                    }
                }
                if union != *block {
                    return Err(Error::validation(format!(
                        "level-{} block is not the union of its children",
                        i + 1
                    )));
                }
            }
        }
        Ok(Filtration { levels })
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Children of a block: indices of next-level blocks contained in it.
    pub fn children_of(&self, level: usize, block: usize) -> Vec<usize> {
        let parent = &self.levels[level].blocks()[block];
        self.levels
            .get(level + 1)
            .map(|fine| {
                fine.blocks()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.intersect(parent) == **c)
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// All blocks consist of single intervals.
    pub fn is_interval_filtration(&self) -> bool {
        self.levels.iter().all(|p| p.is_interval_partition())
    }
}

/// Binary splitting tree over `[0,1)` with rational split points strictly
/// inside each node. Leaves may sit at different depths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTree {
    Leaf(Interval),
    Split {
        interval: Interval,
        at: Rational,
        left: Box<SplitTree>,
        right: Box<SplitTree>,
    },
}

impl SplitTree {
    /// Full binary tree of the given depth; every node splits at
    /// `lo + ratio·(hi − lo)`.
    pub fn uniform(depth: u32, ratio: &Rational) -> Result<Self> {
        if !ratio.is_positive() || *ratio >= Rational::one() {
            return Err(Error::validation("split ratio must lie strictly in (0,1)"));
        }
        fn build(iv: Interval, depth: u32, ratio: &Rational) -> SplitTree {
            if depth == 0 {
                return SplitTree::Leaf(iv);
            }
            let at = iv.lo() + &(ratio * &iv.length());
            let left = Interval::new(iv.lo().clone(), at.clone()).unwrap();
            let right = Interval::new(at.clone(), iv.hi().clone()).unwrap();
            SplitTree::Split {
                interval: iv,
                at,
                left: Box::new(build(left, depth - 1, ratio)),
                right: Box::new(build(right, depth - 1, ratio)),
            }
        }
        Ok(build(Interval::unit(), depth, ratio))
    }

    /// Midpoint splits: the filtration of the classical Haar system.
    pub fn midpoint(depth: u32) -> Self {
        SplitTree::uniform(depth, &Rational::new(1, 2)).expect("1/2 is interior")
    }

    /// Full tree of the given depth with split ratios taken from the
    /// BFS-ordered list (cycled if shorter than the node count).
    pub fn from_ratios(depth: u32, ratios: &[Rational]) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::validation("need at least one ratio"));
        }
        for r in ratios {
            if !r.is_positive() || *r >= Rational::one() {
                return Err(Error::validation("split ratio must lie strictly in (0,1)"));
            }
        }
        struct Builder<'a> {
            ratios: &'a [Rational],
            counter: usize,
        }
        impl Builder<'_> {
            fn build(&mut self, iv: Interval, depth: u32) -> SplitTree {
                if depth == 0 {
                    return SplitTree::Leaf(iv);
                }
                let r = &self.ratios[self.counter % self.ratios.len()];
                self.counter += 1;
                let at = iv.lo() + &(r * &iv.length());
                let left = Interval::new(iv.lo().clone(), at.clone()).unwrap();
                let right = Interval::new(at.clone(), iv.hi().clone()).unwrap();
                SplitTree::Split {
                    interval: iv,
                    at,
                    left: Box::new(self.build(left, depth - 1)),
                    right: Box::new(self.build(right, depth - 1)),
                }
            }
        }
        // Note: recursion is depth-first but the ratio assignment only needs
        // to be deterministic, not breadth-first.
        let mut b = Builder { ratios, counter: 0 };
        Ok(b.build(Interval::unit(), depth))
    }

    /// Unbalanced tree refining the uniform dyadic grid `2^-grid_log2`: each
    /// node of width `k` cells splits at the grid point nearest to the ratio
    /// position, so the leaves are exactly the grid cells and every dyadic
    /// step function at that resolution has a finite expansion.
    pub fn unbalanced_dyadic(grid_log2: u32, ratio: &Rational) -> Result<Self> {
        if !ratio.is_positive() || *ratio >= Rational::one() {
            return Err(Error::validation("split ratio must lie strictly in (0,1)"));
        }
        let cells = 1u64 << grid_log2;
        fn build(lo_cell: u64, hi_cell: u64, grid_log2: u32, ratio: &Rational) -> SplitTree {
            let width = Rational::dyadic(grid_log2);
            let lo = &width * &Rational::from_int(lo_cell as i64);
            let hi = &width * &Rational::from_int(hi_cell as i64);
            let iv = Interval::new(lo, hi).unwrap();
            let k = hi_cell - lo_cell;
            if k == 1 {
                return SplitTree::Leaf(iv);
            }
            // nearest interior grid point to the ratio position
            let pos = ratio * &Rational::from_int(k as i64);
            let mut cut = (&pos + &Rational::new(1, 2)).floor();
            if cut < BigInt::from(1) {
                cut = BigInt::from(1);
            }
            if cut > BigInt::from(k - 1) {
                cut = BigInt::from(k - 1);
            }
            let cut = u64::try_from(cut).unwrap();
            let at = &width * &Rational::from_int((lo_cell + cut) as i64);
            SplitTree::Split {
                interval: iv,
                at,
                left: Box::new(build(lo_cell, lo_cell + cut, grid_log2, ratio)),
                right: Box::new(build(lo_cell + cut, hi_cell, grid_log2, ratio)),
            }
        }
        Ok(build(0, cells, grid_log2, ratio))
    }

    pub fn interval(&self) -> &Interval {
        match self {
            SplitTree::Leaf(iv) => iv,
            SplitTree::Split { interval, .. } => interval,
        }
    }

    /// Interior nodes in breadth-first order as `(interval, split point)`.
    pub fn splits_bfs(&self) -> Vec<(Interval, Rational)> {
        let mut out = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(self);
        while let Some(node) = queue.pop_front() {
            if let SplitTree::Split {
                interval,
                at,
                left,
                right,
            } = node
            {
                out.push((interval.clone(), at.clone()));
                queue.push_back(left);
                queue.push_back(right);
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<Interval> {
        match self {
            SplitTree::Leaf(iv) => vec![iv.clone()],
            SplitTree::Split { left, right, .. } => {
                let mut out = left.leaves();
                out.extend(right.leaves());
                out
            }
        }
    }

    /// Largest node length at each depth (diagnostic; shrinking maximal
    /// block length is recorded, not enforced).
    pub fn max_length_by_depth(&self) -> Vec<Rational> {
        fn walk(node: &SplitTree, depth: usize, acc: &mut Vec<Rational>) {
            let len = node.interval().length();
            if acc.len() <= depth {
                acc.push(len.clone());
            } else if acc[depth] < len {
                acc[depth] = len.clone();
            }
            if let SplitTree::Split { left, right, .. } = node {
                walk(left, depth + 1, acc);
                walk(right, depth + 1, acc);
            }
        }
        let mut acc = Vec::new();
        walk(self, 0, &mut acc);
        acc
    }

    fn validate(&self) -> Result<()> {
        match self {
            SplitTree::Leaf(_) => Ok(()),
            SplitTree::Split {
                interval,
                at,
                left,
                right,
            } => {
                if !(at > interval.lo() && at < interval.hi()) {
                    return Err(Error::validation("split point not strictly inside node"));
                }
                if left.interval() != &Interval::new(interval.lo().clone(), at.clone())?
                    || right.interval() != &Interval::new(at.clone(), interval.hi().clone())?
                {
                    return Err(Error::validation("children do not partition their parent"));
                }
                left.validate()?;
                right.validate()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    ClassicalHaar,
    GeneralizedHaar,
    Rademacher,
    MartingaleDifference,
    Transformed,
    Custom,
}

/// Indexed family of piecewise-constant functions, optionally carrying the
/// filtration it is adapted to and the split tree it was built from.
#[derive(Clone, Serialize, Deserialize)]
pub struct OrthoSystem {
    kind: SystemKind,
    functions: Vec<Pcf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filtration: Option<Filtration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<SplitTree>,
}

impl fmt::Debug for OrthoSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "OrthoSystem({:?}, {} functions)",
            self.kind,
            self.functions.len()
        )
    }
}

/// Normalized two-valued function on a split node: `c₁` on the left child,
/// `−c₂` on the right, zero outside; mean zero and unit norm exactly.
fn haar_node_function(interval: &Interval, at: &Rational, flip: bool) -> Result<Pcf> {
    let alpha = at - interval.lo();
    let beta = interval.hi() - at;
    // c₁ = √(β/(α(α+β))), c₂ = √(α/(β(α+β)))
    let total = &alpha + &beta;
    let c1 = RadScalar::sqrt_rational(&(&beta / &(&alpha * &total)))?;
    let c2 = RadScalar::sqrt_rational(&(&alpha / &(&beta * &total)))?;
    let (left, right) = if flip { (-&c1, c2) } else { (c1, -&c2) };

    let mut bs = vec![Rational::zero()];
    let mut vs = vec![RadScalar::zero()];
    if interval.lo().is_zero() {
        vs[0] = left;
    } else {
        bs.push(interval.lo().clone());
        vs.push(left);
    }
    bs.push(at.clone());
    vs.push(right);
    if *interval.hi() < Rational::one() {
        bs.push(interval.hi().clone());
        vs.push(RadScalar::zero());
    }
    Pcf::new(bs, vs)
}

impl OrthoSystem {
    /// First `n` functions of the L²-normalized classical Haar system:
    /// the constant, then for each dyadic interval in breadth-first order
    /// the `±2^{j/2}` function on its halves.
    pub fn classical_haar(n: usize) -> Self {
        let mut functions = Vec::with_capacity(n);
        if n > 0 {
            functions.push(Pcf::constant(RadScalar::one()));
        }
        let mut level = 0u32;
        'outer: while functions.len() < n {
            for i in 0..(1u64 << level) {
                if functions.len() >= n {
                    break 'outer;
                }
                let iv = Interval::dyadic(level, i);
                let at = iv.lo() + &Rational::dyadic(level + 1);
                functions.push(haar_node_function(&iv, &at, false).expect("valid node"));
            }
            level += 1;
        }
        OrthoSystem {
            kind: SystemKind::ClassicalHaar,
            functions,
            filtration: None,
            tree: None,
        }
    }

    /// Classical Haar prefix together with its one-split-per-index filtration.
    pub fn classical_haar_with_filtration(n: usize) -> Result<Self> {
        let mut sys = OrthoSystem::classical_haar(n);
        let mut levels = vec![Partition::trivial()];
        let mut current: Vec<Interval> = vec![Interval::unit()];
        let mut level = 0u32;
        'outer: loop {
            for i in 0..(1u64 << level) {
                if levels.len() >= n {
                    break 'outer;
                }
                let iv = Interval::dyadic(level, i);
                let at = iv.lo() + &Rational::dyadic(level + 1);
                let pos = current.iter().position(|c| *c == iv).expect("bfs order");
                let left = Interval::new(iv.lo().clone(), at.clone())?;
                let right = Interval::new(at, iv.hi().clone())?;
                current.splice(pos..=pos, [left, right]);
                levels.push(Partition::new(
                    current
                        .iter()
                        .cloned()
                        .map(SimpleSet::from_interval)
                        .collect(),
                )?);
            }
            level += 1;
        }
        sys.filtration = Some(Filtration::new(levels)?);
        Ok(sys)
    }

    /// Generalized Haar system of a split tree: the constant plus one
    /// normalized node function per interior node in breadth-first order.
    /// `signs[k]` flips the sign of the k-th node function.
    pub fn generalized_haar(tree: &SplitTree, signs: Option<&[bool]>) -> Result<Self> {
        tree.validate()?;
        if tree.interval() != &Interval::unit() {
            return Err(Error::validation("tree must cover [0,1)"));
        }
        let splits = tree.splits_bfs();
        let mut functions = Vec::with_capacity(splits.len() + 1);
        functions.push(Pcf::constant(RadScalar::one()));
        let mut levels = vec![Partition::trivial()];
        let mut current: Vec<Interval> = vec![Interval::unit()];
        for (idx, (iv, at)) in splits.iter().enumerate() {
            let flip = signs
                .map(|s| s.get(idx).copied().unwrap_or(false))
                .unwrap_or(false);
            functions.push(haar_node_function(iv, at, flip)?);
            let pos = current
                .iter()
                .position(|c| c == iv)
                .ok_or_else(|| Error::validation("splits not in breadth-first order"))?;
            let left = Interval::new(iv.lo().clone(), at.clone())?;
            let right = Interval::new(at.clone(), iv.hi().clone())?;
            current.splice(pos..=pos, [left, right]);
            levels.push(Partition::new(
                current
                    .iter()
                    .cloned()
                    .map(SimpleSet::from_interval)
                    .collect(),
            )?);
        }
        Ok(OrthoSystem {
            kind: SystemKind::GeneralizedHaar,
            functions,
            filtration: Some(Filtration::new(levels)?),
            tree: Some(tree.clone()),
        })
    }

    /// First `n` Rademacher functions: `r_k = ±1` alternating on dyadic
    /// blocks of length `2^-k`.
    pub fn rademacher(n: usize) -> Self {
        let mut functions = Vec::with_capacity(n);
        let mut levels = Vec::with_capacity(n);
        for k in 1..=n {
            let cells = 1u64 << k;
            let mut bs = Vec::with_capacity(cells as usize);
            let mut vs = Vec::with_capacity(cells as usize);
            for c in 0..cells {
                bs.push(&Rational::dyadic(k as u32) * &Rational::from_int(c as i64));
                vs.push(if c % 2 == 0 {
                    RadScalar::one()
                } else {
                    RadScalar::from_int(-1)
                });
            }
            functions.push(Pcf::new(bs, vs).expect("valid dyadic grid"));
            levels.push(
                Partition::new(
                    (0..cells)
                        .map(|c| SimpleSet::from_interval(Interval::dyadic(k as u32, c)))
                        .collect(),
                )
                .expect("dyadic partition"),
            );
        }
        OrthoSystem {
            kind: SystemKind::Rademacher,
            functions,
            filtration: Filtration::new(levels).ok(),
            tree: None,
        }
    }

    pub fn custom(
        kind: SystemKind,
        functions: Vec<Pcf>,
        filtration: Option<Filtration>,
    ) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::validation("system needs at least one function"));
        }
        if let Some(f) = &filtration {
            if f.len() < functions.len() {
                return Err(Error::validation(
                    "filtration must have one level per function",
                ));
            }
        }
        Ok(OrthoSystem {
            kind,
            functions,
            filtration,
            tree: None,
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[Pcf] {
        &self.functions
    }

    pub fn function(&self, i: usize) -> &Pcf {
        &self.functions[i]
    }

    pub fn filtration(&self) -> Option<&Filtration> {
        self.filtration.as_ref()
    }

    pub fn tree(&self) -> Option<&SplitTree> {
        self.tree.as_ref()
    }

    #[cfg(test)]
    pub(crate) fn replace_function(&mut self, i: usize, f: Pcf) {
        self.functions[i] = f;
    }

    /// Exact Gram matrix `⟨f_i, f_j⟩`.
    pub fn gram_matrix(&self) -> Vec<Vec<RadScalar>> {
        let n = self.functions.len();
        let mut g = vec![vec![RadScalar::zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.functions[i].inner(&self.functions[j]);
                g[i][j] = v.clone();
                g[j][i] = v;
            }
        }
        g
    }

    /// Gram matrix equals the identity, exactly.
    pub fn is_orthonormal(&self) -> bool {
        let g = self.gram_matrix();
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j {
                    RadScalar::one()
                } else {
                    RadScalar::zero()
                };
                if *v != expect {
                    return false;
                }
            }
        }
        true
    }

    /// Pull every function back through a total map.
    pub fn pullback_system(&self, tau: &PwAffineMap) -> Result<OrthoSystem> {
        let functions = self
            .functions
            .iter()
            .map(|f| tau.pullback(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(OrthoSystem {
            kind: SystemKind::Transformed,
            functions,
            filtration: None,
            tree: None,
        })
    }

    /// Exact expansion coefficients `⟨f, φ_i⟩` for `i < upto`, with the exact
    /// residual `‖f‖² − Σ c_i²` (valid against orthonormal systems).
    pub fn expand(&self, f: &Pcf, upto: usize) -> Expansion {
        let coefficients = expansion_coefficients(self, f, upto.min(self.len()));
        let mut captured = RadScalar::zero();
        for c in &coefficients {
            captured += &c.square();
        }
        let residual_sq = &f.l2_norm_sq() - &captured;
        Expansion {
            coefficients,
            residual_sq,
        }
    }

    /// Verify the martingale-difference conditions, orthonormality, and (for
    /// Haar kinds) constructive completeness at the working depth.
    pub fn verify_md(&self) -> Result<MdReport> {
        let filtration = self
            .filtration
            .as_ref()
            .ok_or_else(|| Error::domain("system carries no filtration"))?;
        let mut constant_failures = Vec::new();
        let mut mean_failures = Vec::new();
        for (i, f) in self.functions.iter().enumerate() {
            let level = &filtration.levels()[i];
            for (b, block) in level.blocks().iter().enumerate() {
                if !is_constant_on(f, block) {
                    constant_failures.push(MdWitness { index: i, block: b });
                }
            }
            if i >= 1 {
                let coarse = &filtration.levels()[i - 1];
                for (b, block) in coarse.blocks().iter().enumerate() {
                    if !f.integral_over(block).is_zero() {
                        mean_failures.push(MdWitness { index: i, block: b });
                    }
                }
            }
        }
        let gram_identity = self.is_orthonormal();
        let completeness = match self.kind {
            SystemKind::ClassicalHaar | SystemKind::GeneralizedHaar => {
                let last = filtration.levels().last().unwrap();
                let mut exact = true;
                let mut max_support = 0usize;
                for block in last.blocks() {
                    let ind = Pcf::indicator(block);
                    let exp = self.expand(&ind, self.functions.len());
                    if !exp.residual_sq.is_zero() {
                        exact = false;
                        break;
                    }
                    let nonzero = exp.coefficients.iter().filter(|c| !c.is_zero()).count();
                    max_support = max_support.max(nonzero);
                }
                Some(CompletenessReport {
                    exact,
                    max_coefficients: max_support,
                })
            }
            _ => None,
        };
        Ok(MdReport {
            constant_failures,
            mean_failures,
            gram_identity,
            completeness,
        })
    }
}

fn is_constant_on(f: &Pcf, set: &SimpleSet) -> bool {
    let mut value: Option<&RadScalar> = None;
    for iv in set.components() {
        for (lo, hi, v) in f.segments() {
            let olo = if lo >= iv.lo() { lo } else { iv.lo() };
            let ohi = if hi <= *iv.hi() {
                hi.clone()
            } else {
                iv.hi().clone()
            };
            if *olo < ohi {
                match value {
                    None => value = Some(v),
                    Some(prev) if prev == v => {}
                    _ => return false,
                }
            }
        }
    }
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdWitness {
    pub index: usize,
    pub block: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub exact: bool,
    pub max_coefficients: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdReport {
    pub constant_failures: Vec<MdWitness>,
    pub mean_failures: Vec<MdWitness>,
    pub gram_identity: bool,
    pub completeness: Option<CompletenessReport>,
}

impl MdReport {
    pub fn passed(&self) -> bool {
        self.constant_failures.is_empty()
            && self.mean_failures.is_empty()
            && self.gram_identity
            && self.completeness.as_ref().map(|c| c.exact).unwrap_or(true)
    }
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub coefficients: Vec<RadScalar>,
    pub residual_sq: RadScalar,
}

impl Expansion {
    pub fn reconstruct(&self, system: &OrthoSystem) -> Pcf {
        let mut acc = Pcf::zero();
        for (c, phi) in self.coefficients.iter().zip(system.functions()) {
            if !c.is_zero() {
                acc = acc.add(&phi.scale(c));
            }
        }
        acc
    }

    pub fn captured_sq(&self) -> RadScalar {
        let mut s = RadScalar::zero();
        for c in &self.coefficients {
            s += &c.square();
        }
        s
    }
}

/// All expansion coefficients `⟨f, φ_i⟩` for `i < upto`.
///
/// Haar-type systems use a pyramid of exact block integrals (one integral
/// per node, summed bottom-up), linear in the system size; other systems
/// fall back to direct inner products.
pub fn expansion_coefficients(system: &OrthoSystem, f: &Pcf, upto: usize) -> Vec<RadScalar> {
    let upto = upto.min(system.len());
    match system.kind {
        SystemKind::ClassicalHaar => {
            let depth = if system.len() <= 1 {
                1
            } else {
                (system.len() - 1).next_power_of_two().trailing_zeros().max(1)
            };
            let mut coeffs = classical_haar_pyramid(f, depth);
            coeffs.truncate(upto);
            coeffs
        }
        SystemKind::GeneralizedHaar if system.tree.is_some() => {
            let mut coeffs = tree_pyramid(f, system.tree.as_ref().unwrap());
            coeffs.truncate(upto);
            coeffs
        }
        _ => (0..upto).map(|i| f.inner(system.function(i))).collect(),
    }
}

/// Coefficients of `f` against the classical Haar prefix of the given depth
/// (`2^depth` functions), from exact dyadic block integrals.
pub fn classical_haar_pyramid(f: &Pcf, depth: u32) -> Vec<RadScalar> {
    let mut level_integrals = dyadic_cell_integrals(f, depth);
    let mut stack = vec![level_integrals.clone()];
    for _ in 0..depth {
        level_integrals = level_integrals
            .chunks(2)
            .map(|pair| &pair[0] + &pair[1])
            .collect();
        stack.push(level_integrals.clone());
    }
    stack.reverse(); // stack[j] holds the level-j integrals
    let mut coeffs = Vec::with_capacity(1 << depth);
    coeffs.push(stack[0][0].clone()); // total integral
    for j in 0..depth {
        let scale = RadScalar::sqrt_rational(&Rational::from_int(1i64 << j)).expect("2^j ≥ 0");
        for i in 0..(1usize << j) {
            let left = &stack[(j + 1) as usize][2 * i];
            let right = &stack[(j + 1) as usize][2 * i + 1];
            coeffs.push(&(left - right) * &scale);
        }
    }
    coeffs
}

/// Exact integrals of `f` over the dyadic cells at the given depth, in one
/// sweep over the function's segments.
fn dyadic_cell_integrals(f: &Pcf, depth: u32) -> Vec<RadScalar> {
    let cells = 1u64 << depth;
    let width = Rational::dyadic(depth);
    let mut out = vec![RadScalar::zero(); cells as usize];
    for (lo, hi, v) in f.segments() {
        if v.is_zero() {
            continue;
        }
        let mut k = u64::try_from((lo / &width).floor()).unwrap_or(0);
        while k < cells {
            let cell_lo = &width * &Rational::from_int(k as i64);
            if cell_lo >= hi {
                break;
            }
            let cell_hi = &cell_lo + &width;
            let olo = if *lo >= cell_lo { lo.clone() } else { cell_lo };
            let ohi = if hi <= cell_hi { hi.clone() } else { cell_hi };
            if olo < ohi {
                out[k as usize] += &v.scale(&(&ohi - &olo));
            }
            k += 1;
        }
    }
    out
}

/// Coefficients of `f` against a generalized Haar system, pyramid style:
/// exact integrals over every tree node, then per-node two-sided contrasts.
fn tree_pyramid(f: &Pcf, tree: &SplitTree) -> Vec<RadScalar> {
    fn walk(
        f: &Pcf,
        node: &SplitTree,
        out: &mut Vec<(usize, RadScalar)>,
        order: &std::collections::HashMap<(Rational, Rational), usize>,
    ) -> RadScalar {
        match node {
            SplitTree::Leaf(iv) => f.integral_over(&SimpleSet::from_interval(iv.clone())),
            SplitTree::Split {
                interval,
                at,
                left,
                right,
            } => {
                let il = walk(f, left, out, order);
                let ir = walk(f, right, out, order);
                let alpha = at - interval.lo();
                let beta = interval.hi() - at;
                let total_len = &alpha + &beta;
                let c1 = RadScalar::sqrt_rational(&(&beta / &(&alpha * &total_len)))
                    .expect("positive lengths");
                let c2 = RadScalar::sqrt_rational(&(&alpha / &(&beta * &total_len)))
                    .expect("positive lengths");
                let key = (interval.lo().clone(), interval.hi().clone());
                let idx = *order.get(&key).expect("node indexed");
                out.push((idx, &(&c1 * &il) - &(&c2 * &ir)));
                &il + &ir
            }
        }
    }

    let splits = tree.splits_bfs();
    let mut order = std::collections::HashMap::new();
    for (i, (iv, _)) in splits.iter().enumerate() {
        order.insert((iv.lo().clone(), iv.hi().clone()), i + 1);
    }
    let mut contributions = Vec::with_capacity(splits.len());
    let total = walk(f, tree, &mut contributions, &order);
    let mut coeffs = vec![RadScalar::zero(); splits.len() + 1];
    coeffs[0] = total;
    for (idx, c) in contributions {
        coeffs[idx] = c;
    }
    coeffs
}

/// Polynomials over pairwise disjoint index sets of a base system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonOverlapFamily {
    index_sets: Vec<BTreeSet<usize>>,
    coefficients: Vec<(usize, RadScalar)>,
}

impl NonOverlapFamily {
    pub fn new(
        index_sets: Vec<BTreeSet<usize>>,
        coefficients: Vec<(usize, RadScalar)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &index_sets {
            for &i in s {
                if !seen.insert(i) {
                    return Err(Error::validation(format!(
                        "index {i} appears in two polynomial windows"
                    )));
                }
            }
        }
        for (i, _) in &coefficients {
            if !seen.contains(i) {
                return Err(Error::validation(format!(
                    "coefficient for index {i} outside every window"
                )));
            }
        }
        Ok(NonOverlapFamily {
            index_sets,
            coefficients,
        })
    }

    /// One singleton polynomial per base function: `p_j = f_j`.
    pub fn singletons(n: usize) -> Self {
        NonOverlapFamily {
            index_sets: (0..n).map(|i| BTreeSet::from([i])).collect(),
            coefficients: (0..n).map(|i| (i, RadScalar::one())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.index_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_sets.is_empty()
    }

    pub fn index_sets(&self) -> &[BTreeSet<usize>] {
        &self.index_sets
    }

    pub fn coefficients(&self) -> &[(usize, RadScalar)] {
        &self.coefficients
    }

    pub fn coefficient(&self, index: usize) -> RadScalar {
        self.coefficients
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(RadScalar::zero)
    }

    pub fn polynomial(&self, k: usize, system: &OrthoSystem) -> Pcf {
        let mut acc = Pcf::zero();
        for &i in &self.index_sets[k] {
            let c = self.coefficient(i);
            if !c.is_zero() {
                acc = acc.add(&system.function(i).scale(&c));
            }
        }
        acc
    }

    /// Exact squared norm of `p_k` over an orthonormal base.
    pub fn polynomial_norm_sq(&self, k: usize) -> RadScalar {
        let mut s = RadScalar::zero();
        for &i in &self.index_sets[k] {
            s += &self.coefficient(i).square();
        }
        s
    }
}

/// Exact `∫ p₁p₂p₃p₄`.
pub fn quadruple_integral(polys: [&Pcf; 4]) -> RadScalar {
    polys[0]
        .mul(polys[1])
        .mul(&polys[2].mul(polys[3]))
        .integral()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadrupleReport {
    pub trials: usize,
    pub nonzero: Vec<([usize; 4], RadScalar)>,
}

impl QuadrupleReport {
    pub fn passed(&self) -> bool {
        self.nonzero.is_empty()
    }
}

/// Exact product integrals over random quadruples of distinct polynomials.
/// Non-overlapping windows over a martingale difference make every such
/// integral vanish; any nonzero value is reported with its witness.
pub fn quadruple_check(
    family: &NonOverlapFamily,
    system: &OrthoSystem,
    trials: usize,
    seed: u64,
) -> Result<QuadrupleReport> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if family.len() < 4 {
        return Err(Error::domain("need at least four polynomials"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let polys: Vec<Pcf> = (0..family.len())
        .map(|k| family.polynomial(k, system))
        .collect();
    let mut nonzero = Vec::new();
    let indices: Vec<usize> = (0..family.len()).collect();
    for _ in 0..trials {
        let pick: Vec<usize> = indices.choose_multiple(&mut rng, 4).copied().collect();
        let val = quadruple_integral([
            &polys[pick[0]],
            &polys[pick[1]],
            &polys[pick[2]],
            &polys[pick[3]],
        ]);
        if !val.is_zero() {
            nonzero.push(([pick[0], pick[1], pick[2], pick[3]], val));
        }
    }
    Ok(QuadrupleReport { trials, nonzero })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn sqrt2() -> RadScalar {
        RadScalar::sqrt_rational(&q(2, 1)).unwrap()
    }

    #[test]
    fn classical_haar_first_functions() {
        let sys = OrthoSystem::classical_haar(8);
        // second function: +1 on [0,1/2), −1 on [1/2,1)
        let h2 = sys.function(1);
        assert_eq!(*h2.value_at(&q(1, 4)), RadScalar::one());
        assert_eq!(*h2.value_at(&q(3, 4)), RadScalar::from_int(-1));
        // third: ±√2 on the quarters of [0,1/2)
        let h3 = sys.function(2);
        assert_eq!(*h3.value_at(&q(0, 1)), sqrt2());
        assert_eq!(*h3.value_at(&q(3, 8)), -&sqrt2());
        assert!(h3.value_at(&q(3, 4)).is_zero());
        // disjoint supports at the same level
        assert!(sys.function(4).inner(sys.function(5)).is_zero());
        for f in sys.functions() {
            assert_eq!(f.l2_norm_sq(), RadScalar::one());
        }
    }

    #[test]
    fn generalized_haar_unbalanced_root() {
        let tree = SplitTree::uniform(1, &q(1, 3)).unwrap();
        let sys = OrthoSystem::generalized_haar(&tree, None).unwrap();
        let f = sys.function(1);
        // +√2 on [0,1/3), −1/√2 on [1/3,1)
        assert_eq!(*f.value_at(&q(0, 1)), sqrt2());
        assert_eq!(*f.value_at(&q(1, 2)), sqrt2().scale(&q(-1, 2)));
        assert!(f.integral().is_zero());
        assert_eq!(f.l2_norm_sq(), RadScalar::one());
    }

    #[test]
    fn generalized_haar_midpoint_matches_classical() {
        let tree = SplitTree::midpoint(3);
        let gen = OrthoSystem::generalized_haar(&tree, None).unwrap();
        let classical = OrthoSystem::classical_haar(8);
        assert_eq!(gen.len(), classical.len());
        for (a, b) in gen.functions().iter().zip(classical.functions()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn signed_generalized_haar_stays_orthonormal() {
        let tree = SplitTree::uniform(2, &q(2, 5)).unwrap();
        let signs = vec![true, false, true];
        let sys = OrthoSystem::generalized_haar(&tree, Some(&signs)).unwrap();
        assert!(sys.is_orthonormal());
        assert!(sys.verify_md().unwrap().passed());
    }

    #[test]
    fn rademacher_basics() {
        let sys = OrthoSystem::rademacher(4);
        let r1 = sys.function(0);
        assert_eq!(*r1.value_at(&q(1, 4)), RadScalar::one());
        assert_eq!(*r1.value_at(&q(3, 4)), RadScalar::from_int(-1));
        assert!(sys.function(0).inner(sys.function(1)).is_zero());
        for f in sys.functions() {
            assert_eq!(f.l2_norm_sq(), RadScalar::one());
        }
        assert!(sys.verify_md().unwrap().passed());
    }

    #[test]
    fn rademacher_is_pullback_of_sign_function() {
        let sys = OrthoSystem::rademacher(3);
        let h2 = OrthoSystem::classical_haar(2).function(1).clone();
        for k in 1..=3usize {
            let tau = PwAffineMap::eta(1 << (k - 1)).unwrap();
            assert_eq!(tau.pullback(&h2).unwrap(), *sys.function(k - 1));
        }
    }

    #[test]
    fn verify_md_classical() {
        let sys = OrthoSystem::classical_haar_with_filtration(16).unwrap();
        let report = sys.verify_md().unwrap();
        assert!(report.passed());
        let completeness = report.completeness.unwrap();
        assert!(completeness.exact);
        assert!(completeness.max_coefficients <= 5);
    }

    #[test]
    fn verify_md_negative_control() {
        let mut sys = OrthoSystem::classical_haar_with_filtration(4).unwrap();
        // constant 1 in place of the ±1 function: level-1 mean breaks
        sys.replace_function(1, Pcf::constant(RadScalar::one()));
        let report = sys.verify_md().unwrap();
        assert!(!report.passed());
        assert!(report.mean_failures.iter().any(|w| w.index == 1));
    }

    #[test]
    fn expand_reconstructs() {
        let sys = OrthoSystem::classical_haar(8);
        let exp = sys.expand(sys.function(2), 8);
        for (i, c) in exp.coefficients.iter().enumerate() {
            if i == 2 {
                assert_eq!(*c, RadScalar::one());
            } else {
                assert!(c.is_zero());
            }
        }
        assert!(exp.residual_sq.is_zero());

        let ind = Pcf::indicator(&SimpleSet::from_interval(
            Interval::new(q(0, 1), q(1, 2)).unwrap(),
        ));
        let sys2 = OrthoSystem::classical_haar(2);
        let exp2 = sys2.expand(&ind, 2);
        assert_eq!(exp2.coefficients[0].as_rational(), Some(q(1, 2)));
        assert_eq!(exp2.coefficients[1].as_rational(), Some(q(1, 2)));
        assert_eq!(exp2.reconstruct(&sys2), ind);
        assert!(exp2.residual_sq.is_zero());
    }

    #[test]
    fn pyramid_matches_direct_inner_products() {
        let tree = SplitTree::uniform(3, &q(1, 3)).unwrap();
        let sys = OrthoSystem::generalized_haar(&tree, None).unwrap();
        let f = Pcf::indicator(&SimpleSet::from_interval(
            Interval::new(q(1, 5), q(3, 5)).unwrap(),
        ));
        let fast = expansion_coefficients(&sys, &f, sys.len());
        for (i, c) in fast.iter().enumerate() {
            assert_eq!(*c, f.inner(sys.function(i)), "coefficient {i}");
        }

        let haar = OrthoSystem::classical_haar(16);
        let fast = expansion_coefficients(&haar, &f, 16);
        for (i, c) in fast.iter().enumerate() {
            assert_eq!(*c, f.inner(haar.function(i)), "coefficient {i}");
        }
    }

    #[test]
    fn quadruple_orthogonality() {
        let sys = OrthoSystem::classical_haar(16);
        let family = NonOverlapFamily::singletons(16);
        let report = quadruple_check(&family, &sys, 50, 7).unwrap();
        assert!(report.passed());

        // overlapping negative control: ∫ h₂·h₂·h₁·h₁ = 1 ≠ 0
        let h1 = sys.function(0);
        let h2 = sys.function(1);
        let val = quadruple_integral([h2, h2, h1, h1]);
        assert_eq!(val, RadScalar::one());
    }

    #[test]
    fn unbalanced_dyadic_tree_leaves_are_grid_cells() {
        let tree = SplitTree::unbalanced_dyadic(4, &q(1, 3)).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 16);
        for (k, leaf) in leaves.iter().enumerate() {
            assert_eq!(*leaf, Interval::dyadic(4, k as u64));
        }
        let (_, at) = tree.splits_bfs()[0].clone();
        assert_eq!(at, q(5, 16));
        let sys = OrthoSystem::generalized_haar(&tree, None).unwrap();
        assert!(sys.is_orthonormal());
    }
}
