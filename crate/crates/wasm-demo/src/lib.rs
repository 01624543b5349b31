//! WebAssembly bindings for the demo page in `www/`. Every export returns JSON.

use allocore::eval::{ppd, ppd_constant_baseline, ppd_positive};
use allocore::gibbs::{run_chain, ChainConfig, PosteriorSamples};
use allocore::synth::{generate, SyntheticConfig};
use allocore::{make_fiber_mask, split, Hyperparameters, ModelState, SparseCountTensor};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Slice {
    shape: Vec<usize>,
    slice: usize,
    nnz: usize,
    total: u64,
    true_q: usize,
    true_k: Vec<usize>,
    counts: Vec<Vec<u64>>,
}

#[derive(Serialize)]
struct TracePoint {
    iteration: u64,
    loglik: f64,
    q_eff: usize,
    k_eff: Vec<usize>,
}

#[derive(Serialize)]
struct Score {
    q: usize,
    ppd: f64,
    ppd_positive: Option<f64>,
    baseline: f64,
    q_eff: usize,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| error_json(&e.to_string()))
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn dataset(seed: u64) -> allocore::Result<(SparseCountTensor, allocore::synth::GroundTruth)> {
    generate(&SyntheticConfig::default(), seed)
}

fn fit(
    train: &SparseCountTensor,
    mask: Option<&allocore::FiberMask>,
    q: usize,
    iterations: u64,
    seed: u64,
) -> allocore::Result<PosteriorSamples> {
    let init = ModelState::init_canonical(train.shape(), q, Hyperparameters::default(), seed)?;
    let burn_in = iterations / 2;
    let config = ChainConfig {
        burn_in,
        total: iterations - burn_in,
        thin: 1,
        seed,
        log_every: 1,
        ..ChainConfig::default()
    };
    let mut samples = PosteriorSamples::default();
    run_chain(train, mask, init, &config, &mut samples)?;
    Ok(samples)
}

/// Counts of one slice along the last mode of a synthetic tensor.
#[wasm_bindgen]
pub fn synthetic_slice(seed: u32, slice: u32) -> String {
    let (tensor, truth) = match dataset(seed.into()) {
        Ok(v) => v,
        Err(e) => return error_json(&e.to_string()),
    };
    let shape = tensor.shape().to_vec();
    let slice = (slice as usize).min(shape[2] - 1);
    let mut counts = vec![vec![0u64; shape[1]]; shape[0]];
    for (cell, y) in tensor.iter() {
        if cell[2] == slice {
            counts[cell[0]][cell[1]] = y;
        }
    }
    to_json(&Slice {
        nnz: tensor.nnz(),
        total: tensor.total(),
        true_q: truth.dims.q_eff,
        true_k: truth.dims.k_eff,
        shape,
        slice,
        counts,
    })
}

/// Fit the synthetic tensor with budget `q` and report every iteration.
#[wasm_bindgen]
pub fn fit_trace(seed: u32, q: u32, iterations: u32) -> String {
    let run = || -> allocore::Result<Vec<TracePoint>> {
        let (tensor, _) = dataset(seed.into())?;
        let samples = fit(&tensor, None, q.max(1) as usize, iterations.max(2).into(), seed.into())?;
        Ok(samples
            .records
            .into_iter()
            .map(|r| TracePoint {
                iteration: r.iteration,
                loglik: r.loglik,
                q_eff: r.dims.q_eff,
                k_eff: r.dims.k_eff,
            })
            .collect())
    };
    match run() {
        Ok(points) => to_json(&points),
        Err(e) => error_json(&e.to_string()),
    }
}

/// Heldout scores for each budget in a comma-separated list.
#[wasm_bindgen]
pub fn heldout_scores(seed: u32, budgets: &str, iterations: u32, mask_fraction: f64) -> String {
    let run = || -> allocore::Result<Vec<Score>> {
        let (tensor, _) = dataset(seed.into())?;
        let mask = make_fiber_mask(tensor.shape(), 2, mask_fraction, seed.into())?;
        let (train, heldout) = split(&tensor, &mask)?;
        let baseline = ppd_constant_baseline(&train, &heldout)?;
        let mut scores = Vec::new();
        for q in budgets
            .split(',')
            .filter_map(|s| s.trim().parse::<usize>().ok())
            .filter(|&q| q > 0)
        {
            let samples = fit(&train, Some(&mask), q, iterations.max(2).into(), seed.into())?;
            scores.push(Score {
                q,
                ppd: ppd(&samples.samples, &heldout)?,
                ppd_positive: ppd_positive(&samples.samples, &heldout).ok(),
                baseline,
                q_eff: samples.samples.last().map_or(0, |s| s.effective_dims().q_eff),
            });
        }
        Ok(scores)
    };
    match run() {
        Ok(scores) => to_json(&scores),
        Err(e) => error_json(&e.to_string()),
    }
}
