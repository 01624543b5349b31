//! Gibbs sampling for Bayesian Poisson AL·L0·CORE.
//!
//! One iteration runs, in order: multinomial thinning of the training counts
//! into per-class sources, categorical resampling of every core sub-index,
//! then the conjugate gamma draws for core values and factors and the
//! Dirichlet draws for the location priors. Held-out fibers are treated as
//! missing: they contribute neither counts nor exposure.

mod chain;
mod rates;
mod sources;
mod updates;

pub use chain::{
    gibbs_sweep, run_chain, ChainConfig, ChainRecord, PosteriorSamples, SampleSink, UpdateFlags, SWEEP_ORDER,
};
pub use rates::{
    class_exposure, lambda_rate_sums, other_mode_mass, phi_rate_sums, ColumnSums, MaskCorrections, OtherMass,
};
pub use sources::{thin_counts, LatentSources};
pub use updates::{location_log_weights, sample_lambda, sample_locations, sample_phi, sample_pi, LocationContext};
