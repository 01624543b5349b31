//! Posterior predictive evaluation, training likelihood and class ranking.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gibbs::{lambda_rate_sums, ColumnSums};
use crate::mask::{FiberMask, HeldoutSet};
use crate::model::ModelState;
use crate::tensor::{check_cell, SparseCountTensor};

/// Entities whose normalized weight falls below this are left out of class
/// exports.
pub const DEFAULT_DISPLAY_THRESHOLD: f64 = 0.02;

/// `log Pois(y; rate)`, with `Pois(0; 0) = 1`.
pub fn log_poisson(y: u64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let yf = y as f64;
    yf * rate.ln() - rate - libm::lgamma(yf + 1.0)
}

/// `log( (1/S) sum_s Pois(y; rates[s]) )` via log-sum-exp.
pub fn log_mixture_density(y: u64, rates: &[f64]) -> f64 {
    let logs: Vec<f64> = rates.iter().map(|&r| log_poisson(y, r)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    max + sum.ln() - (rates.len() as f64).ln()
}

/// Geometric mean of per-cell mixture densities. Each item is a count and
/// its rate under every sample.
pub fn ppd_from_rates<'a, I>(cells: I) -> Result<f64>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for (y, rates) in cells {
        if rates.is_empty() {
            return Err(Error::InvalidArgument("no posterior samples".into()));
        }
        total += log_mixture_density(y, rates);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("heldout set is empty".into()));
    }
    Ok((total / n as f64).exp())
}

fn check_samples(samples: &[ModelState], heldout: &HeldoutSet) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no posterior samples".into()))?;
    if samples.iter().any(|s| s.shape != first.shape) {
        return Err(Error::Shape("posterior samples disagree on tensor shape".into()));
    }
    for (cell, _) in &heldout.cells {
        check_cell(&first.shape, cell)?;
    }
    Ok(())
}

fn per_cell_log_density(samples: &[ModelState], heldout: &HeldoutSet) -> Vec<f64> {
    let eval = |(cell, y): &(Vec<usize>, u64)| {
        let rates: Vec<f64> = samples.iter().map(|s| s.rate_at(cell)).collect();
        log_mixture_density(*y, &rates)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        heldout.cells.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        heldout.cells.iter().map(eval).collect()
    }
}

/// Pointwise predictive density of `heldout` under the posterior samples.
pub fn ppd(samples: &[ModelState], heldout: &HeldoutSet) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::InvalidArgument("heldout set is empty".into()));
    }
    check_samples(samples, heldout)?;
    let logs = per_cell_log_density(samples, heldout);
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// PPD restricted to the positive heldout cells.
pub fn ppd_positive(samples: &[ModelState], heldout: &HeldoutSet) -> Result<f64> {
    let positive = heldout.positive();
    if positive.is_empty() {
        return Err(Error::InvalidArgument("heldout set has no positive cells".into()));
    }
    ppd(samples, &positive)
}

/// Rate of the single-rate null model: training total over observed cells.
pub fn constant_rate(train: &SparseCountTensor, heldout: &HeldoutSet) -> f64 {
    let observed = train.n_cells().saturating_sub(heldout.len() as u128);
    if observed == 0 {
        return 0.0;
    }
    train.total() as f64 / observed as f64
}

/// PPD of the single-rate null model.
pub fn ppd_constant_baseline(train: &SparseCountTensor, heldout: &HeldoutSet) -> Result<f64> {
    let rate = [constant_rate(train, heldout)];
    ppd_from_rates(heldout.cells.iter().map(|(_, y)| (*y, &rate[..])))
}

/// Training log-likelihood `sum_d y_d log yhat_d - sum_d yhat_d` over observed
/// cells. With `exact`, the `-log y_d!` constant is included. Returns
/// negative infinity when a positive cell has zero rate.
pub fn train_loglik(state: &ModelState, train: &SparseCountTensor, mask: Option<&FiberMask>, exact: bool) -> f64 {
    let mut data = 0.0;
    for (cell, y) in train.iter() {
        let rate = state.rate_at(cell);
        if rate <= 0.0 {
            log::warn!("zero rate at positive cell {cell:?}");
            return f64::NEG_INFINITY;
        }
        let yf = y as f64;
        data += yf * rate.ln();
        if exact {
            data -= libm::lgamma(yf + 1.0);
        }
    }
    let sums = ColumnSums::of(state);
    let exposure: f64 = lambda_rate_sums(state, &sums, mask)
        .iter()
        .zip(&state.core.values)
        .map(|(e, l)| e * l)
        .sum();
    data - exposure
}

/// One column of a class, for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassColumn {
    /// `(entity, normalized weight)` sorted by weight, above the threshold.
    pub top: Vec<(usize, f64)>,
    /// The full unnormalized factor column.
    pub raw: Vec<f64>,
}

/// A distinct occupied core location with its total value.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub location: Vec<usize>,
    pub value: f64,
    pub columns: Vec<ClassColumn>,
}

/// Values of the distinct occupied core locations, largest first.
pub fn occupied_values(state: &ModelState) -> Vec<(Vec<usize>, f64)> {
    let mut by_loc: BTreeMap<&[usize], f64> = BTreeMap::new();
    for q in 0..state.budget() {
        *by_loc.entry(state.core.location(q)).or_insert(0.0) += state.core.values[q];
    }
    let mut out: Vec<(Vec<usize>, f64)> = by_loc.into_iter().map(|(l, v)| (l.to_vec(), v)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// The `n` largest classes with their normalized factor columns.
pub fn top_classes(state: &ModelState, n: usize, display_threshold: f64) -> Vec<ClassSummary> {
    occupied_values(state)
        .into_iter()
        .take(n)
        .map(|(location, value)| {
            let columns = location
                .iter()
                .enumerate()
                .map(|(m, &k)| {
                    let raw: Vec<f64> = state.factors[m].column(k).to_vec();
                    let total: f64 = raw.iter().sum();
                    let mut top: Vec<(usize, f64)> = raw
                        .iter()
                        .enumerate()
                        .map(|(d, &x)| (d, x / total))
                        .filter(|&(_, w)| w >= display_threshold)
                        .collect();
                    top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    ClassColumn { top, raw }
                })
                .collect();
            ClassSummary {
                location,
                value,
                columns,
            }
        })
        .collect()
}

/// Cumulative share of the total core mass held by the top 1, 2, ... classes.
pub fn mass_concentration(state: &ModelState) -> Vec<f64> {
    let values = occupied_values(state);
    let total: f64 = values.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    values
        .iter()
        .map(|(_, v)| {
            acc += v;
            acc / total
        })
        .collect()
}

/// Smallest number of top classes holding at least `share` of the mass.
pub fn classes_for_share(state: &ModelState, share: f64) -> usize {
    let cum = mass_concentration(state);
    cum.iter().position(|&c| c >= share).map_or(cum.len(), |i| i + 1)
}
