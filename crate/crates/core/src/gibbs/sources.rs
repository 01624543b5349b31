//! The thinning step: split every observed count across the `Q` classes.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::rng::{multinomial, substream, Block};
use crate::tensor::SparseCountTensor;

/// Latent per-class counts for every training non-zero, stored sparsely as
/// `(q, count)` pairs, with the aggregates the conditionals need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentSources {
    budget: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, u64)>,
    /// `y_q`
    class_totals: Vec<u64>,
    /// Per mode, a `D_m x Q` table of `y_{d_m., q}`.
    marginals: Vec<Array2<u64>>,
}

impl LatentSources {
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_cells(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Non-zero `(q, y_{d,q})` pairs of training cell `i`.
    pub fn cell(&self, i: usize) -> &[(u32, u64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Dense `y_{d,q}` row for training cell `i`.
    pub fn cell_dense(&self, i: usize) -> Vec<u64> {
        let mut row = vec![0; self.budget];
        for &(q, y) in self.cell(i) {
            row[q as usize] = y;
        }
        row
    }

    pub fn class_total(&self, q: usize) -> u64 {
        self.class_totals[q]
    }

    pub fn class_totals(&self) -> &[u64] {
        &self.class_totals
    }

    /// `y_{d_m., q}` as a `D_m x Q` table.
    pub fn marginals(&self, m: usize) -> &Array2<u64> {
        &self.marginals[m]
    }

    /// `y^(m)_{d,k}`: marginal counts grouped by each class's mode-`m` factor.
    pub fn factor_totals(&self, state: &ModelState, m: usize) -> Array2<u64> {
        let mut out = Array2::zeros((state.shape[m], state.dims[m]));
        let marg = &self.marginals[m];
        for q in 0..self.budget {
            let k = state.core.location(q)[m];
            for d in 0..state.shape[m] {
                out[[d, k]] += marg[[d, q]];
            }
        }
        out
    }

    fn from_cells(train: &SparseCountTensor, budget: usize, offsets: Vec<usize>, entries: Vec<(u32, u64)>) -> Self {
        let mut class_totals = vec![0; budget];
        let mut marginals: Vec<Array2<u64>> = train.shape().iter().map(|&d| Array2::zeros((d, budget))).collect();
        for i in 0..train.nnz() {
            let cell = train.coords(i);
            for &(q, y) in &entries[offsets[i]..offsets[i + 1]] {
                let q = q as usize;
                class_totals[q] += y;
                for (m, marg) in marginals.iter_mut().enumerate() {
                    marg[[cell[m], q]] += y;
                }
            }
        }
        Self {
            budget,
            offsets,
            entries,
            class_totals,
            marginals,
        }
    }

    /// Recompute every aggregate from the per-cell table and compare.
    pub fn aggregates_consistent(&self, train: &SparseCountTensor) -> bool {
        let fresh = Self::from_cells(train, self.budget, self.offsets.clone(), self.entries.clone());
        fresh.class_totals == self.class_totals && fresh.marginals == self.marginals
    }

    /// `sum_q y_{d,q} == y_d` at every training cell.
    pub fn conserves(&self, train: &SparseCountTensor) -> bool {
        (0..train.nnz()).all(|i| self.cell(i).iter().map(|e| e.1).sum::<u64>() == train.count(i))
    }
}

/// Draw the latent sources for every training non-zero given the current
/// parameters. Uses the state's chain position for its random substreams.
pub fn thin_counts(state: &ModelState, train: &SparseCountTensor) -> Result<LatentSources> {
    if train.shape() != state.shape.as_slice() {
        return Err(Error::Shape(format!(
            "training tensor {:?} does not match model shape {:?}",
            train.shape(),
            state.shape
        )));
    }
    let budget = state.budget();
    let nnz = train.nnz();
    let seed = state.rng.seed;
    let iteration = state.rng.iteration;

    let thin_range = |range: std::ops::Range<usize>| -> Result<(Vec<usize>, Vec<(u32, u64)>)> {
        let mut rates = vec![0.0; budget];
        let mut split = vec![0u64; budget];
        let mut lens = Vec::with_capacity(range.len());
        let mut entries = Vec::new();
        for i in range {
            let cell = train.coords(i);
            state.class_rates(cell, &mut rates);
            let total: f64 = rates.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Numerical(format!(
                    "class rates at cell {:?} sum to {total}",
                    cell.iter().map(|c| c + 1).collect::<Vec<_>>()
                )));
            }
            let mut rng = substream(seed, iteration, Block::Thinning, i as u64);
            multinomial(&mut rng, train.count(i), &rates, &mut split);
            let before = entries.len();
            entries.extend(
                split
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y > 0)
                    .map(|(q, &y)| (q as u32, y)),
            );
            lens.push(entries.len() - before);
        }
        Ok((lens, entries))
    };

    const CHUNK: usize = 512;
    let ranges: Vec<std::ops::Range<usize>> = (0..nnz).step_by(CHUNK).map(|s| s..(s + CHUNK).min(nnz)).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<_>> = {
        use rayon::prelude::*;
        ranges.into_par_iter().map(thin_range).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<_>> = ranges.into_iter().map(thin_range).collect();

    let mut offsets = Vec::with_capacity(nnz + 1);
    offsets.push(0);
    let mut entries = Vec::new();
    for part in parts {
        let (lens, part_entries) = part?;
        for len in lens {
            offsets.push(offsets.last().copied().unwrap_or(0) + len);
        }
        entries.extend(part_entries);
    }
    Ok(LatentSources::from_cells(train, budget, offsets, entries))
}
