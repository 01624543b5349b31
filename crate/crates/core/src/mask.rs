//! Fiber hold-out masks and the train/heldout split.
//!
//! A fiber fixes every coordinate except the one in `free_mode`. Its *stem*
//! is the (M-1)-tuple of fixed coordinates, listed in mode order with the free
//! mode skipped.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{substream, Block};
use crate::tensor::{check_cell, MultiIndex, SparseCountTensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiberMask {
    shape: Vec<usize>,
    free_mode: usize,
    /// Sorted, unique, 0-based.
    stems: Vec<Vec<usize>>,
}

impl FiberMask {
    pub fn new(shape: Vec<usize>, free_mode: usize, stems: Vec<Vec<usize>>) -> Result<Self> {
        if free_mode >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "free mode {} out of range for a {}-mode tensor",
                free_mode + 1,
                shape.len()
            )));
        }
        let stem_shape = stem_shape(&shape, free_mode);
        let mut stems = stems;
        for stem in &stems {
            check_cell(&stem_shape, stem)?;
        }
        stems.sort_unstable();
        let before = stems.len();
        stems.dedup();
        if stems.len() != before {
            return Err(Error::InvalidArgument("duplicate stems in fiber mask".into()));
        }
        Ok(Self {
            shape,
            free_mode,
            stems,
        })
    }

    pub fn empty(shape: Vec<usize>, free_mode: usize) -> Result<Self> {
        Self::new(shape, free_mode, Vec::new())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn free_mode(&self) -> usize {
        self.free_mode
    }

    pub fn stems(&self) -> &[Vec<usize>] {
        &self.stems
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    /// Number of masked cells.
    pub fn n_cells(&self) -> usize {
        self.stems.len() * self.shape[self.free_mode]
    }

    pub fn stem_of(&self, cell: &[usize]) -> Vec<usize> {
        cell.iter()
            .enumerate()
            .filter(|&(m, _)| m != self.free_mode)
            .map(|(_, &c)| c)
            .collect()
    }

    pub fn is_masked(&self, cell: &[usize]) -> bool {
        if self.stems.is_empty() {
            return false;
        }
        let stem = self.stem_of(cell);
        self.stems.binary_search(&stem).is_ok()
    }

    /// Full cell for a stem and a free-mode coordinate.
    pub fn cell(&self, stem: &[usize], free_coord: usize) -> MultiIndex {
        let mut cell = Vec::with_capacity(self.shape.len());
        let mut it = stem.iter();
        for m in 0..self.shape.len() {
            if m == self.free_mode {
                cell.push(free_coord);
            } else {
                cell.push(*it.next().expect("stem length is M-1"));
            }
        }
        cell
    }
}

fn stem_shape(shape: &[usize], free_mode: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != free_mode)
        .map(|(_, &d)| d)
        .collect()
}

/// Sample `floor(fraction * #stems)` stems uniformly without replacement.
pub fn make_fiber_mask(shape: &[usize], free_mode: usize, fraction: f64, seed: u64) -> Result<FiberMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mask fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    if free_mode >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "free mode {} out of range for a {}-mode tensor",
            free_mode + 1,
            shape.len()
        )));
    }
    let dims = stem_shape(shape, free_mode);
    let candidates: usize = dims.iter().product();
    let n_select = (fraction * candidates as f64).floor() as usize;
    if n_select == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {candidates} fibers selects none"
        )));
    }
    let mut rng = substream(seed, 0, Block::Mask, free_mode as u64);
    let stems = index::sample(&mut rng, candidates, n_select)
        .into_iter()
        .map(|lin| unravel(lin, &dims))
        .collect();
    FiberMask::new(shape.to_vec(), free_mode, stems)
}

fn unravel(mut lin: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for m in (0..dims.len()).rev() {
        out[m] = lin % dims[m];
        lin /= dims[m];
    }
    out
}

/// Every cell of every masked fiber together with its observed count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HeldoutSet {
    pub cells: Vec<(MultiIndex, u64)>,
}

impl HeldoutSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.1).sum()
    }

    /// The positive-count subset.
    pub fn positive(&self) -> HeldoutSet {
        HeldoutSet {
            cells: self.cells.iter().filter(|c| c.1 > 0).cloned().collect(),
        }
    }
}

/// Partition `tensor` into unmasked training entries and the heldout fibers.
pub fn split(tensor: &SparseCountTensor, mask: &FiberMask) -> Result<(SparseCountTensor, HeldoutSet)> {
    if tensor.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "mask shape {:?} does not match tensor shape {:?}",
            mask.shape(),
            tensor.shape()
        )));
    }
    let train = tensor.filter(|cell| !mask.is_masked(cell));
    let d_free = mask.shape()[mask.free_mode()];
    let mut cells = Vec::with_capacity(mask.n_cells());
    for stem in mask.stems() {
        for t in 0..d_free {
            let cell = mask.cell(stem, t);
            let y = tensor.get(&cell);
            cells.push((cell, y));
        }
    }
    Ok((train, HeldoutSet { cells }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_count_follows_floor_rule() {
        let mask = make_fiber_mask(&[2, 2], 1, 0.5, 9).unwrap();
        assert_eq!(mask.stems().len(), 1);
        let mask = make_fiber_mask(&[10, 7, 3], 2, 0.1, 1).unwrap();
        assert_eq!(mask.stems().len(), 7);
    }

    #[test]
    fn fraction_bounds() {
        assert!(make_fiber_mask(&[4, 4], 1, 0.0, 1).is_err());
        assert!(make_fiber_mask(&[4, 4], 1, 1.0, 1).is_err());
        assert!(make_fiber_mask(&[4, 4], 1, -0.2, 1).is_err());
        // 0.1 * 4 floors to zero stems
        assert!(make_fiber_mask(&[4, 4], 1, 0.1, 1).is_err());
    }

    #[test]
    fn same_seed_same_mask() {
        let a = make_fiber_mask(&[20, 20, 6], 2, 0.05, 42).unwrap();
        let b = make_fiber_mask(&[20, 20, 6], 2, 0.05, 42).unwrap();
        let c = make_fiber_mask(&[20, 20, 6], 2, 0.05, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn worked_split() {
        // 1-based {(1,1):3, (2,2):5}, stem (1) with free mode 2
        let t = SparseCountTensor::from_entries(vec![2, 2], vec![([0, 0], 3), ([1, 1], 5)]).unwrap();
        let mask = FiberMask::new(vec![2, 2], 1, vec![vec![0]]).unwrap();
        let (train, held) = split(&t, &mask).unwrap();
        assert_eq!(train.nnz(), 1);
        assert_eq!(train.get(&[1, 1]), 5);
        assert_eq!(held.cells, vec![(vec![0, 0], 3), (vec![0, 1], 0)]);
    }

    #[test]
    fn empty_mask_is_identity() {
        let t = SparseCountTensor::from_entries(vec![3, 2], vec![([0, 0], 3), ([2, 1], 5)]).unwrap();
        let mask = FiberMask::empty(vec![3, 2], 0).unwrap();
        let (train, held) = split(&t, &mask).unwrap();
        assert_eq!(train, t);
        assert!(held.is_empty());
    }

    #[test]
    fn single_nonzero_inside_mask() {
        let t = SparseCountTensor::from_entries(vec![3, 4], vec![([1, 2], 7)]).unwrap();
        let mask = FiberMask::new(vec![3, 4], 1, vec![vec![1]]).unwrap();
        let (train, held) = split(&t, &mask).unwrap();
        assert_eq!(train.nnz(), 0);
        assert_eq!(held.len(), 4);
        assert!(held.cells.contains(&(vec![1, 2], 7)));
    }

    #[test]
    fn rejects_bad_masks() {
        assert!(FiberMask::new(vec![2, 2], 2, vec![]).is_err());
        assert!(FiberMask::new(vec![2, 2], 1, vec![vec![2]]).is_err());
        assert!(FiberMask::new(vec![2, 2], 1, vec![vec![1], vec![1]]).is_err());
        let t = SparseCountTensor::empty(vec![3, 3]).unwrap();
        let mask = FiberMask::empty(vec![2, 3], 1).unwrap();
        assert!(split(&t, &mask).is_err());
    }
}
