//! Complete-conditional updates for locations, core values, factors and the
//! prior simplexes. Each update reads the chain position from `state.rng` and
//! draws from its own substream, keyed by class, mode or entity.

use ndarray::Array2;

use super::rates::{lambda_rate_sums, other_mode_mass, phi_rate_sums, ColumnSums, OtherMass};
use super::sources::LatentSources;
use crate::error::{Error, Result};
use crate::mask::FiberMask;
use crate::model::ModelState;
use crate::rng::{categorical_from_log, dirichlet, gamma, substream, Block};

/// Redraw every factor entry from its gamma conditional, one mode at a time.
pub fn sample_phi(state: &mut ModelState, sources: &LatentSources, mask: Option<&FiberMask>) -> Result<()> {
    let (seed, iteration) = (state.rng.seed, state.rng.iteration);
    let (e0, f0) = (state.hyper.e0, state.hyper.f0);
    let mut sums = ColumnSums::of(state);
    for m in 0..state.n_modes() {
        let c = phi_rate_sums(state, &sums, mask, m);
        let y = sources.factor_totals(state, m);
        let (rows, cols) = (state.shape[m], state.dims[m]);

        let c = c.as_standard_layout();
        let y = y.as_standard_layout();
        let (c, y) = (
            c.as_slice().expect("standard layout"),
            y.as_slice().expect("standard layout"),
        );
        if let Some(pos) = c.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "phi^({})[{}, {}] has non-finite rate {}",
                m + 1,
                pos / cols + 1,
                pos % cols + 1,
                f0 + c[pos]
            )));
        }
        let draw_row = |(d, row): (usize, &mut [f64])| {
            let mut rng = substream(seed, iteration, Block::Phi, ((m as u64) << 32) | d as u64);
            let (c_row, y_row) = (&c[d * cols..(d + 1) * cols], &y[d * cols..(d + 1) * cols]);
            for ((x, &ck), &yk) in row.iter_mut().zip(c_row).zip(y_row) {
                *x = gamma(&mut rng, e0 + yk as f64, f0 + ck);
            }
        };
        let factor = &mut state.factors[m];
        if !factor.is_standard_layout() {
            *factor = factor.as_standard_layout().into_owned();
        }
        let flat = factor.as_slice_mut().expect("standard layout");
        debug_assert_eq!(flat.len(), rows * cols);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            flat.par_chunks_mut(cols).enumerate().for_each(draw_row);
        }
        #[cfg(not(feature = "parallel"))]
        flat.chunks_mut(cols).enumerate().for_each(draw_row);
        sums.0[m] = state.column_sums(m);
    }
    Ok(())
}

/// Redraw every core value from its gamma conditional.
pub fn sample_lambda(state: &mut ModelState, sources: &LatentSources, mask: Option<&FiberMask>) -> Result<()> {
    let (seed, iteration) = (state.rng.seed, state.rng.iteration);
    let (a0, b0) = (state.hyper.a0, state.hyper.b0);
    let sums = ColumnSums::of(state);
    let exposure = lambda_rate_sums(state, &sums, mask);
    for q in 0..state.budget() {
        let rate = b0 + exposure[q];
        if !rate.is_finite() {
            return Err(Error::Numerical(format!("lambda_{} has non-finite rate {rate}", q + 1)));
        }
        let mut rng = substream(seed, iteration, Block::Lambda, q as u64);
        state.core.values[q] = gamma(&mut rng, a0 + sources.class_total(q) as f64, rate);
    }
    Ok(())
}

/// Per-sweep quantities shared by every location conditional.
pub struct LocationContext {
    pub sums: ColumnSums,
    /// `ln phi^(m)` in standard layout.
    pub log_phi: Vec<Array2<f64>>,
    pub log_pi: Vec<Vec<f64>>,
}

impl LocationContext {
    pub fn new(state: &ModelState) -> Self {
        Self {
            sums: ColumnSums::of(state),
            log_phi: state
                .factors
                .iter()
                .map(|f| f.as_standard_layout().mapv(f64::ln))
                .collect(),
            log_pi: state
                .priors
                .iter()
                .map(|p| p.iter().map(|x| x.ln()).collect())
                .collect(),
        }
    }
}

/// Unnormalized log-probabilities of `k_{q,m} = k` for every `k`.
pub fn location_log_weights(
    state: &ModelState,
    sources: &LatentSources,
    mask: Option<&FiberMask>,
    ctx: &LocationContext,
    q: usize,
    m: usize,
) -> Vec<f64> {
    let k_m = state.dims[m];
    let lambda = state.core.values[q];
    let mut lw = ctx.log_pi[m].clone();

    let log_phi = ctx.log_phi[m].as_slice().expect("standard layout");
    let marg = sources.marginals(m);
    for d in 0..state.shape[m] {
        let y = marg[[d, q]];
        if y > 0 {
            let y = y as f64;
            for (w, lp) in lw.iter_mut().zip(&log_phi[d * k_m..(d + 1) * k_m]) {
                *w += y * lp;
            }
        }
    }

    let loc = state.core.location(q);
    match other_mode_mass(state, &ctx.sums, mask, loc, m) {
        OtherMass::Uniform(o) => {
            let scale = lambda * o;
            for (w, s) in lw.iter_mut().zip(ctx.sums.mode(m)) {
                *w -= scale * s;
            }
        }
        OtherMass::PerEntity(v) => {
            let phi = state.factors[m].as_standard_layout();
            let flat = phi.as_slice().expect("standard layout");
            let mut exposure = vec![0.0; k_m];
            for (d, &o) in v.iter().enumerate() {
                if o != 0.0 {
                    for (e, &p) in exposure.iter_mut().zip(&flat[d * k_m..(d + 1) * k_m]) {
                        *e += p * o;
                    }
                }
            }
            for (w, e) in lw.iter_mut().zip(exposure) {
                *w -= lambda * e;
            }
        }
    }
    lw
}

/// Resample every sub-index `k_{q,m}` from its categorical conditional.
/// Does nothing for modes whose locations are pinned.
pub fn sample_locations(state: &mut ModelState, sources: &LatentSources, mask: Option<&FiberMask>) -> Result<()> {
    if !state.core.mode.resamples_locations() {
        return Ok(());
    }
    let (seed, iteration) = (state.rng.seed, state.rng.iteration);
    let n_modes = state.n_modes();
    let ctx = LocationContext::new(state);
    for q in 0..state.budget() {
        for m in 0..n_modes {
            if state.dims[m] == 1 {
                continue;
            }
            let mut lw = location_log_weights(state, sources, mask, &ctx, q, m);
            let mut rng = substream(seed, iteration, Block::Locations, (q * n_modes + m) as u64);
            let k = categorical_from_log(&mut rng, &mut lw).ok_or_else(|| {
                Error::Numerical(format!(
                    "every candidate for k_{{{},{}}} has zero probability",
                    q + 1,
                    m + 1
                ))
            })?;
            state.core.location_mut(q)[m] = k;
        }
    }
    Ok(())
}

/// Redraw each `pi^(m)` from its Dirichlet conditional.
pub fn sample_pi(state: &mut ModelState) {
    let (seed, iteration) = (state.rng.seed, state.rng.iteration);
    for m in 0..state.n_modes() {
        let k_m = state.dims[m];
        let mut alpha = vec![state.hyper.concentration(m, k_m); k_m];
        for q in 0..state.budget() {
            alpha[state.core.location(q)[m]] += 1.0;
        }
        let mut rng = substream(seed, iteration, Block::Pi, m as u64);
        state.priors[m] = dirichlet(&mut rng, &alpha);
    }
}
