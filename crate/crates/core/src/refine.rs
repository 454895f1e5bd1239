//! Common-refinement atom grids for families of piecewise-constant functions.
//!
//! Polynomial families are evaluated on the exact common refinement of the
//! breakpoints of every involved function, so there is no sampling error
//! anywhere; per-atom function values are stored sparsely (most Haar-type
//! functions vanish on most of `[0,1)`).

use std::collections::BTreeSet;

use crate::geometry::Pcf;
use crate::radical::RadScalar;
use crate::rational::Rational;
use crate::system::OrthoSystem;

/// Sorted cell boundaries `0 = b_0 < … < b_T = 1` with exact cell lengths.
#[derive(Clone, Debug)]
pub struct AtomGrid {
    pub boundaries: Vec<Rational>,
    pub lengths: Vec<Rational>,
}

impl AtomGrid {
    pub fn cells(&self) -> usize {
        self.lengths.len()
    }
}

/// One nonzero function value on one atom.
#[derive(Clone, Debug)]
pub struct AtomEntry {
    /// position of the function in the index list handed to [`sparse_atoms`]
    pub slot: usize,
    pub value: RadScalar,
}

/// Common refinement of the selected system functions with per-atom sparse
/// value lists.
#[derive(Clone, Debug)]
pub struct SparseAtoms {
    pub grid: AtomGrid,
    /// per atom: entries sorted by slot
    pub entries: Vec<Vec<AtomEntry>>,
}

pub fn atom_grid(functions: &[&Pcf]) -> AtomGrid {
    let mut boundaries = crate::geometry::breakpoint_union(functions);
    if boundaries.is_empty() || !boundaries[0].is_zero() {
        boundaries.insert(0, Rational::zero());
    }
    boundaries.push(Rational::one());
    let lengths = boundaries
        .windows(2)
        .map(|w| &w[1] - &w[0])
        .collect();
    AtomGrid {
        boundaries,
        lengths,
    }
}

/// Build the sparse atom table for `indices` into the system; `slot` in each
/// entry is the position within `indices`.
pub fn sparse_atoms(system: &OrthoSystem, indices: &BTreeSet<usize>) -> SparseAtoms {
    let funcs: Vec<&Pcf> = indices.iter().map(|&i| system.function(i)).collect();
    let grid = atom_grid(&funcs);
    let mut entries: Vec<Vec<AtomEntry>> = vec![Vec::new(); grid.cells()];
    for (slot, f) in funcs.iter().enumerate() {
        for (lo, hi, v) in f.segments() {
            if v.is_zero() {
                continue;
            }
            // atoms covered by [lo, hi): boundaries are a superset of f's
            let start = grid.boundaries.partition_point(|b| b < lo);
            let mut t = start;
            while t < grid.cells() && grid.boundaries[t] < hi {
                entries[t].push(AtomEntry {
                    slot,
                    value: v.clone(),
                });
                t += 1;
            }
        }
    }
    SparseAtoms { grid, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::OrthoSystem;

    #[test]
    fn atoms_of_haar_prefix_are_leaves() {
        let sys = OrthoSystem::classical_haar(8);
        let indices: BTreeSet<usize> = (0..8).collect();
        let atoms = sparse_atoms(&sys, &indices);
        assert_eq!(atoms.grid.cells(), 8);
        // every atom sees the constant, the sign function, and its path: 4 entries
        for cell in &atoms.entries {
            assert_eq!(cell.len(), 4);
        }
    }

    #[test]
    fn entries_match_pointwise_values() {
        let sys = OrthoSystem::classical_haar(8);
        let indices: BTreeSet<usize> = [1usize, 5].into_iter().collect();
        let atoms = sparse_atoms(&sys, &indices);
        let idx: Vec<usize> = indices.iter().copied().collect();
        for (t, cell) in atoms.entries.iter().enumerate() {
            let mid = &(&atoms.grid.boundaries[t] + &atoms.grid.boundaries[t + 1])
                * &Rational::new(1, 2);
            for e in cell {
                assert_eq!(*sys.function(idx[e.slot]).value_at(&mid), e.value);
            }
        }
    }
}
