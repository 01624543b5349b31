//! Sparse count tensors in coordinate form.
//!
//! Coordinates are 0-based and contiguous in memory; the text formats in
//! [`crate::io`] translate to and from 1-based coordinates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One coordinate per mode, 0-based.
pub type MultiIndex = Vec<usize>;

/// An M-mode tensor of non-negative integer counts with implicit zeros.
///
/// Entries are kept sorted lexicographically by coordinate and never store a
/// zero count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCountTensor {
    shape: Vec<usize>,
    coords: Vec<usize>,
    counts: Vec<u64>,
}

impl SparseCountTensor {
    pub fn empty(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        Ok(Self {
            shape,
            coords: Vec::new(),
            counts: Vec::new(),
        })
    }

    /// Build a tensor from (cell, count) pairs. Duplicate cells are summed and
    /// zero totals dropped.
    pub fn from_entries<I, C>(shape: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, u64)>,
        C: AsRef<[usize]>,
    {
        check_shape(&shape)?;
        let mut agg: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for (cell, count) in entries {
            let cell = cell.as_ref();
            check_cell(&shape, cell)?;
            if count > 0 {
                *agg.entry(cell.to_vec()).or_insert(0) += count;
            }
        }
        let mut coords = Vec::with_capacity(agg.len() * shape.len());
        let mut counts = Vec::with_capacity(agg.len());
        for (cell, count) in agg {
            coords.extend_from_slice(&cell);
            counts.push(count);
        }
        Ok(Self { shape, coords, counts })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_modes(&self) -> usize {
        self.shape.len()
    }

    /// Number of stored (positive) entries.
    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    /// Total number of cells, zeros included.
    pub fn n_cells(&self) -> u128 {
        self.shape.iter().map(|&d| d as u128).product()
    }

    /// Fraction of cells holding a positive count.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / self.n_cells() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn coords(&self, i: usize) -> &[usize] {
        let m = self.n_modes();
        &self.coords[i * m..(i + 1) * m]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], u64)> + '_ {
        let m = self.n_modes().max(1);
        self.coords.chunks(m).zip(self.counts.iter().copied())
    }

    /// Count at an arbitrary cell (zero when not stored).
    pub fn get(&self, cell: &[usize]) -> u64 {
        let m = self.n_modes();
        let n = self.nnz();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.coords[mid * m..(mid + 1) * m].cmp(cell) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.counts[mid],
            }
        }
        0
    }

    /// Keep only entries satisfying `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&[usize]) -> bool) -> Self {
        let mut coords = Vec::new();
        let mut counts = Vec::new();
        for (cell, y) in self.iter() {
            if keep(cell) {
                coords.extend_from_slice(cell);
                counts.push(y);
            }
        }
        Self {
            shape: self.shape.clone(),
            coords,
            counts,
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "tensor shape must have at least one mode and positive dimensions, got {shape:?}"
        )));
    }
    Ok(())
}

pub(crate) fn check_cell(shape: &[usize], cell: &[usize]) -> Result<()> {
    if cell.len() != shape.len() {
        return Err(Error::Shape(format!(
            "cell {cell:?} has {} coordinates, tensor has {} modes",
            cell.len(),
            shape.len()
        )));
    }
    if let Some(m) = (0..shape.len()).find(|&m| cell[m] >= shape[m]) {
        return Err(Error::OutOfRange(format!(
            "coordinate {} in mode {} exceeds dimension {}",
            cell[m] + 1,
            m + 1,
            shape[m]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_aggregate_and_zeros_drop() {
        let t = SparseCountTensor::from_entries(
            vec![2, 2, 2, 2],
            vec![
                ([0, 0, 0, 0], 1),
                ([0, 0, 0, 0], 1),
                ([0, 0, 0, 0], 1),
                ([1, 0, 1, 0], 0),
            ],
        )
        .unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(&[0, 0, 0, 0]), 3);
        assert_eq!(t.get(&[1, 0, 1, 0]), 0);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = SparseCountTensor::from_entries(vec![2, 3], vec![([0, 3], 1)]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange(_)));
        assert!(SparseCountTensor::from_entries(vec![2, 3], vec![([0usize], 1)]).is_err());
        assert!(SparseCountTensor::empty(vec![2, 0]).is_err());
    }

    #[test]
    fn lookup_and_density() {
        let t = SparseCountTensor::from_entries(vec![3, 3], vec![([2, 1], 4), ([0, 2], 1)]).unwrap();
        assert_eq!(t.get(&[2, 1]), 4);
        assert_eq!(t.get(&[0, 2]), 1);
        assert_eq!(t.get(&[1, 1]), 0);
        assert_eq!(t.total(), 5);
        assert!((t.density() - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(t.coords(0), &[0, 2]);
    }
}
