//! Chain driver: sweeps, burn-in, thinning and sample delivery.

use super::sources::{thin_counts, LatentSources};
use super::updates::{sample_lambda, sample_locations, sample_phi, sample_pi};
use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::eval::train_loglik;
use crate::mask::FiberMask;
use crate::model::{EffectiveDims, ModelState};
use crate::tensor::SparseCountTensor;

/// Order of the blocks within one iteration.
pub const SWEEP_ORDER: &str = "thinning,locations,lambda,phi,pi";

/// Which blocks are resampled. Location updates are skipped regardless in
/// pinned core modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateFlags {
    pub locations: bool,
    pub lambda: bool,
    pub phi: bool,
    pub pi: bool,
}

impl Default for UpdateFlags {
    fn default() -> Self {
        Self {
            locations: true,
            lambda: true,
            phi: true,
            pi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub burn_in: u64,
    /// Iterations after burn-in.
    pub total: u64,
    pub thin: u64,
    pub seed: u64,
    pub flags: UpdateFlags,
    /// Chain-log interval; zero means every `thin` iterations.
    pub log_every: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            total: 4000,
            thin: 20,
            seed: 0,
            flags: UpdateFlags::default(),
            log_every: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.total % self.thin != 0 {
            return Err(Error::InvalidArgument(format!(
                "thin ({}) must be positive and divide the post-burn-in iterations ({})",
                self.thin, self.total
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> u64 {
        self.total / self.thin.max(1)
    }

    pub fn last_iteration(&self) -> u64 {
        self.burn_in + self.total
    }

    pub fn is_saved(&self, iteration: u64) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }
}

/// One chain-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub iteration: u64,
    pub loglik: f64,
    pub dims: EffectiveDims,
    pub wall_seconds: f64,
}

/// Receives saved samples and log rows as the chain runs.
pub trait SampleSink {
    fn on_sample(&mut self, iteration: u64, state: &ModelState) -> Result<()>;

    /// Called at every log interval with the state reached at that point.
    fn on_record(&mut self, _record: &ChainRecord, _state: &ModelState) -> Result<()> {
        Ok(())
    }
}

/// In-memory collection of saved samples.
#[derive(Debug, Clone, Default)]
pub struct PosteriorSamples {
    pub samples: Vec<ModelState>,
    pub iterations: Vec<u64>,
    pub records: Vec<ChainRecord>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn from_states(samples: Vec<ModelState>) -> Self {
        let iterations = samples.iter().map(|s| s.rng.iteration).collect();
        Self {
            samples,
            iterations,
            records: Vec::new(),
        }
    }
}

impl SampleSink for PosteriorSamples {
    fn on_sample(&mut self, iteration: u64, state: &ModelState) -> Result<()> {
        self.samples.push(state.clone());
        self.iterations.push(iteration);
        Ok(())
    }

    fn on_record(&mut self, record: &ChainRecord, _state: &ModelState) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Advance the chain by one full iteration and return the sources drawn in
/// its thinning step.
pub fn gibbs_sweep(
    state: &mut ModelState,
    train: &SparseCountTensor,
    mask: Option<&FiberMask>,
    flags: UpdateFlags,
) -> Result<LatentSources> {
    state.rng.iteration += 1;
    let sources = thin_counts(state, train)?;
    if flags.locations {
        sample_locations(state, &sources, mask)?;
    }
    if flags.lambda {
        sample_lambda(state, &sources, mask)?;
    }
    if flags.phi {
        sample_phi(state, &sources, mask)?;
    }
    if flags.pi {
        sample_pi(state);
    }
    Ok(sources)
}

/// Run (or resume) a chain until `burn_in + total` iterations have been done.
///
/// The chain position lives in `init.rng.iteration`, so a state saved at any
/// iteration resumes to bit-identical samples. Returns the final state.
pub fn run_chain(
    train: &SparseCountTensor,
    mask: Option<&FiberMask>,
    init: ModelState,
    config: &ChainConfig,
    sink: &mut dyn SampleSink,
) -> Result<ModelState> {
    config.validate()?;
    if train.shape() != init.shape.as_slice() {
        return Err(Error::Shape(format!(
            "training tensor {:?} does not match model shape {:?}",
            train.shape(),
            init.shape
        )));
    }
    if let Some(mk) = mask {
        if mk.shape() != train.shape() {
            return Err(Error::Shape("mask does not match the training tensor".into()));
        }
    }
    let mut state = init;
    if state.rng.iteration > 0 && state.rng.seed != config.seed {
        return Err(Error::InvalidArgument(format!(
            "resuming a chain seeded with {} using seed {}",
            state.rng.seed, config.seed
        )));
    }
    state.rng.seed = config.seed;
    let end = config.last_iteration();
    if state.rng.iteration > end {
        return Err(Error::InvalidArgument(format!(
            "state is at iteration {} beyond the configured {end}",
            state.rng.iteration
        )));
    }
    let log_every = if config.log_every == 0 {
        config.thin
    } else {
        config.log_every
    };
    let watch = Stopwatch::start();
    while state.rng.iteration < end {
        gibbs_sweep(&mut state, train, mask, config.flags)?;
        let it = state.rng.iteration;
        if config.is_saved(it) {
            sink.on_sample(it, &state)?;
        }
        if it % log_every == 0 || it == end {
            let record = ChainRecord {
                iteration: it,
                loglik: train_loglik(&state, train, mask, false),
                dims: state.effective_dims(),
                wall_seconds: watch.elapsed_seconds(),
            };
            log::debug!(
                "iteration {it}: loglik {:.4} Q_eff {}",
                record.loglik,
                record.dims.q_eff
            );
            sink.on_record(&record, &state)?;
        }
    }
    Ok(state)
}
