//! Parameters of Bayesian Poisson AL·L0·CORE.
//!
//! The core tensor is never stored densely: it is `Q` (value, location)
//! pairs, and several `q` may allocate to the same location.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{self, substream, Block};

/// Default refusal threshold for dense Tucker cores.
pub const DEFAULT_CORE_CELL_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoreMode {
    /// Locations are latent and resampled.
    Allocore,
    /// Locations pinned to the super-diagonal; reproduces CP.
    CpLocked,
    /// One entry per core cell, pinned; reproduces full Tucker.
    TuckerDense,
}

impl CoreMode {
    pub fn resamples_locations(self) -> bool {
        self == CoreMode::Allocore
    }
}

impl fmt::Display for CoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoreMode::Allocore => "allocore",
            CoreMode::CpLocked => "cp",
            CoreMode::TuckerDense => "tucker",
        })
    }
}

impl FromStr for CoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allocore" => Ok(CoreMode::Allocore),
            "cp" | "cp_locked" => Ok(CoreMode::CpLocked),
            "tucker" | "tucker_dense" => Ok(CoreMode::TuckerDense),
            other => Err(Error::InvalidArgument(format!(
                "unknown core mode {other:?} (expected allocore, cp or tucker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Gamma shape and rate for the core values.
    pub a0: f64,
    pub b0: f64,
    /// Gamma shape and rate for factor entries.
    pub e0: f64,
    pub f0: f64,
    /// Dirichlet concentration per component of each `pi^(m)`. A single value
    /// applies to every mode.
    pub alpha0: Vec<f64>,
    /// Divide the concentration by `K_m`.
    pub alpha0_over_k: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a0: 1.0,
            b0: 1.0,
            e0: 1.0,
            f0: 10.0,
            alpha0: vec![0.1],
            alpha0_over_k: false,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let scalars = [("a0", self.a0), ("b0", self.b0), ("e0", self.e0), ("f0", self.f0)];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.alpha0.len() == 1 || self.alpha0.len() == n_modes) {
            return Err(Error::InvalidArgument(format!(
                "alpha0 needs 1 or {n_modes} values, got {}",
                self.alpha0.len()
            )));
        }
        if self.alpha0.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("alpha0 must be positive and finite".into()));
        }
        Ok(())
    }

    /// Per-component Dirichlet concentration for mode `m` with `k` components.
    pub fn concentration(&self, m: usize, k: usize) -> f64 {
        let a = if self.alpha0.len() == 1 {
            self.alpha0[0]
        } else {
            self.alpha0[m]
        };
        if self.alpha0_over_k {
            a / k as f64
        } else {
            a
        }
    }
}

/// The `Q` allocated core entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreEntries {
    pub mode: CoreMode,
    pub values: Vec<f64>,
    /// Row-major `Q x M`, 0-based.
    pub locations: Vec<usize>,
    n_modes: usize,
}

impl CoreEntries {
    pub fn new(mode: CoreMode, values: Vec<f64>, locations: Vec<usize>, n_modes: usize) -> Result<Self> {
        if values.is_empty() || locations.len() != values.len() * n_modes {
            return Err(Error::Shape(format!(
                "{} core values need {} location coordinates, got {}",
                values.len(),
                values.len() * n_modes,
                locations.len()
            )));
        }
        Ok(Self {
            mode,
            values,
            locations,
            n_modes,
        })
    }

    pub fn budget(&self) -> usize {
        self.values.len()
    }

    pub fn location(&self, q: usize) -> &[usize] {
        &self.locations[q * self.n_modes..(q + 1) * self.n_modes]
    }

    pub fn location_mut(&mut self, q: usize) -> &mut [usize] {
        &mut self.locations[q * self.n_modes..(q + 1) * self.n_modes]
    }
}

/// Serializable generator position: every draw is keyed by the seed and the
/// current iteration, so this pair is the entire RNG state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainRng {
    pub seed: u64,
    pub iteration: u64,
}

/// Everything needed to build an initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub shape: Vec<usize>,
    pub dims: Vec<usize>,
    /// Ignored in `TuckerDense` mode, where it becomes the core size.
    pub budget: usize,
    pub mode: CoreMode,
    pub hyper: Hyperparameters,
    pub core_cell_limit: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub shape: Vec<usize>,
    /// Latent dimensionality `K_m` per mode.
    pub dims: Vec<usize>,
    pub hyper: Hyperparameters,
    /// One `D_m x K_m` matrix per mode.
    pub factors: Vec<Array2<f64>>,
    pub core: CoreEntries,
    /// Prior simplex `pi^(m)` per mode.
    pub priors: Vec<Vec<f64>>,
    pub rng: ChainRng,
}

/// Effective dimensionality of the occupied core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveDims {
    /// Distinct occupied core locations, i.e. `||Lambda||_0`.
    pub q_eff: usize,
    /// Distinct factor indices used per mode.
    pub k_eff: Vec<usize>,
}

impl ModelState {
    /// Canonical initialization: `K_m = Q` for every mode and a
    /// super-diagonal core.
    pub fn init_canonical(shape: &[usize], budget: usize, hyper: Hyperparameters, seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidArgument("budget Q must be at least 1".into()));
        }
        let dims = vec![budget; shape.len()];
        let mut state = Self::draw_parameters(shape, &dims, budget, CoreMode::Allocore, hyper, seed)?;
        let m = shape.len();
        for q in 0..budget {
            state.core.location_mut(q).iter_mut().for_each(|k| *k = q);
        }
        debug_assert_eq!(state.core.locations.len(), budget * m);
        Ok(state)
    }

    pub fn init_explicit(
        shape: &[usize],
        dims: &[usize],
        budget: usize,
        mode: CoreMode,
        hyper: Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        Self::init(
            &ModelConfig {
                shape: shape.to_vec(),
                dims: dims.to_vec(),
                budget,
                mode,
                hyper,
                core_cell_limit: DEFAULT_CORE_CELL_LIMIT,
            },
            seed,
        )
    }

    /// Draw every parameter from its prior; locations follow `mode`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let ModelConfig {
            shape,
            dims,
            budget,
            mode,
            ..
        } = config;
        if dims.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} latent dimensions given for a {}-mode tensor",
                dims.len(),
                shape.len()
            )));
        }
        if dims.iter().any(|&k| k == 0) {
            return Err(Error::InvalidArgument("every K_m must be at least 1".into()));
        }
        let m = shape.len();
        match mode {
            CoreMode::TuckerDense => {
                let cells: u128 = dims.iter().map(|&k| k as u128).product();
                if cells > config.core_cell_limit {
                    return Err(Error::CoreTooLarge {
                        cells,
                        limit: config.core_cell_limit,
                    });
                }
                let q = cells as usize;
                let mut state = Self::draw_parameters(shape, dims, q, *mode, config.hyper.clone(), seed)?;
                for q in 0..q {
                    let mut lin = q;
                    let loc = state.core.location_mut(q);
                    for mm in (0..m).rev() {
                        loc[mm] = lin % dims[mm];
                        lin /= dims[mm];
                    }
                }
                Ok(state)
            }
            CoreMode::CpLocked => {
                if dims.iter().any(|&k| k != dims[0]) {
                    return Err(Error::InvalidArgument(format!(
                        "CP requires equal latent dimensions, got {dims:?}"
                    )));
                }
                if *budget != dims[0] {
                    return Err(Error::InvalidArgument(format!(
                        "CP requires Q = K, got Q={budget} and K={}",
                        dims[0]
                    )));
                }
                let mut state = Self::draw_parameters(shape, dims, *budget, *mode, config.hyper.clone(), seed)?;
                for q in 0..*budget {
                    state.core.location_mut(q).iter_mut().for_each(|k| *k = q);
                }
                Ok(state)
            }
            CoreMode::Allocore => {
                if *budget == 0 {
                    return Err(Error::InvalidArgument("budget Q must be at least 1".into()));
                }
                let mut state = Self::draw_parameters(shape, dims, *budget, *mode, config.hyper.clone(), seed)?;
                let mut rng = substream(seed, 0, Block::Init, 3);
                for q in 0..*budget {
                    for mm in 0..m {
                        let k = rng::categorical(&mut rng, &state.priors[mm]);
                        state.core.location_mut(q)[mm] = k;
                    }
                }
                Ok(state)
            }
        }
    }

    /// Prior draws for pi, phi and lambda; locations left at zero.
    fn draw_parameters(
        shape: &[usize],
        dims: &[usize],
        budget: usize,
        mode: CoreMode,
        hyper: Hyperparameters,
        seed: u64,
    ) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid tensor shape {shape:?}")));
        }
        hyper.validate(shape.len())?;
        let m = shape.len();

        let mut rng = substream(seed, 0, Block::Init, 0);
        let priors: Vec<Vec<f64>> = (0..m)
            .map(|mm| {
                let alpha = vec![hyper.concentration(mm, dims[mm]); dims[mm]];
                rng::dirichlet(&mut rng, &alpha)
            })
            .collect();

        let mut rng = substream(seed, 0, Block::Init, 1);
        let factors = (0..m)
            .map(|mm| Array2::from_shape_simple_fn((shape[mm], dims[mm]), || rng::gamma(&mut rng, hyper.e0, hyper.f0)))
            .collect();

        let mut rng = substream(seed, 0, Block::Init, 2);
        let values = (0..budget).map(|_| rng::gamma(&mut rng, hyper.a0, hyper.b0)).collect();

        Ok(Self {
            shape: shape.to_vec(),
            dims: dims.to_vec(),
            hyper,
            factors,
            core: CoreEntries::new(mode, values, vec![0; budget * m], m)?,
            priors,
            rng: ChainRng { seed, iteration: 0 },
        })
    }

    pub fn n_modes(&self) -> usize {
        self.shape.len()
    }

    pub fn budget(&self) -> usize {
        self.core.budget()
    }

    /// Value of the implied dense core at `kappa`: the sum of every `lambda_q`
    /// allocated there.
    pub fn core_value_at(&self, kappa: &[usize]) -> Result<f64> {
        if kappa.len() != self.n_modes() || kappa.iter().zip(&self.dims).any(|(k, d)| k >= d) {
            return Err(Error::OutOfRange(format!(
                "core index {kappa:?} outside core shape {:?}",
                self.dims
            )));
        }
        Ok((0..self.budget())
            .filter(|&q| self.core.location(q) == kappa)
            .map(|q| self.core.values[q])
            .sum())
    }

    /// Per-class rates `lambda_q * prod_m phi^(m)[d_m, k_qm]` at one cell.
    pub fn class_rates(&self, cell: &[usize], out: &mut [f64]) {
        for (q, r) in out.iter_mut().enumerate() {
            let loc = self.core.location(q);
            let mut v = self.core.values[q];
            for (m, f) in self.factors.iter().enumerate() {
                v *= f[[cell[m], loc[m]]];
            }
            *r = v;
        }
    }

    /// Reconstructed Poisson rate at one cell. `cell` must be in range.
    pub fn rate_at(&self, cell: &[usize]) -> f64 {
        let mut total = 0.0;
        for q in 0..self.budget() {
            let loc = self.core.location(q);
            let mut v = self.core.values[q];
            for (m, f) in self.factors.iter().enumerate() {
                v *= f[[cell[m], loc[m]]];
            }
            total += v;
        }
        total
    }

    pub fn reconstruct_at(&self, cell: &[usize]) -> Result<f64> {
        crate::tensor::check_cell(&self.shape, cell)?;
        Ok(self.rate_at(cell))
    }

    pub fn effective_dims(&self) -> EffectiveDims {
        let m = self.n_modes();
        let occupied: HashSet<&[usize]> = (0..self.budget()).map(|q| self.core.location(q)).collect();
        let k_eff = (0..m)
            .map(|mm| {
                (0..self.budget())
                    .map(|q| self.core.location(q)[mm])
                    .collect::<HashSet<_>>()
                    .len()
            })
            .collect();
        EffectiveDims {
            q_eff: occupied.len(),
            k_eff,
        }
    }

    /// Column sums of `Phi^(m)`, accumulated in row order.
    pub fn column_sums(&self, m: usize) -> Vec<f64> {
        let f = &self.factors[m];
        let mut sums = vec![0.0; f.ncols()];
        for row in f.rows() {
            for (s, &x) in sums.iter_mut().zip(row.iter()) {
                *s += x;
            }
        }
        sums
    }

    /// Check every structural invariant; used after loading and in tests.
    pub fn validate(&self) -> Result<()> {
        let m = self.n_modes();
        self.hyper.validate(m)?;
        if self.dims.len() != m || self.factors.len() != m || self.priors.len() != m {
            return Err(Error::Shape(
                "per-mode components disagree on the number of modes".into(),
            ));
        }
        for mm in 0..m {
            if self.factors[mm].dim() != (self.shape[mm], self.dims[mm]) {
                return Err(Error::Shape(format!(
                    "factor {} is {:?}, expected ({}, {})",
                    mm + 1,
                    self.factors[mm].dim(),
                    self.shape[mm],
                    self.dims[mm]
                )));
            }
            if self.factors[mm].iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Numerical(format!("factor {} has a non-positive entry", mm + 1)));
            }
            let pi = &self.priors[mm];
            if pi.len() != self.dims[mm] || pi.iter().any(|&p| p < 0.0) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Numerical(format!("pi^({}) is not a simplex vector", mm + 1)));
            }
        }
        if self.core.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Numerical("core values must be positive".into()));
        }
        for q in 0..self.budget() {
            let loc = self.core.location(q);
            if loc.iter().zip(&self.dims).any(|(k, d)| k >= d) {
                return Err(Error::OutOfRange(format!("location of q={} outside the core", q + 1)));
            }
            if self.core.mode == CoreMode::CpLocked && loc.iter().any(|&k| k != q) {
                return Err(Error::InvalidArgument("CP locations must be super-diagonal".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_state(shape: &[usize], dims: &[usize], q: usize) -> ModelState {
        ModelState::init_explicit(shape, dims, q, CoreMode::Allocore, Hyperparameters::default(), 5).unwrap()
    }

    #[test]
    fn canonical_init_is_diagonal() {
        let s = ModelState::init_canonical(&[6, 5, 4, 3], 5, Hyperparameters::default(), 1).unwrap();
        assert_eq!(s.dims, vec![5; 4]);
        for q in 0..5 {
            assert_eq!(s.core.location(q), &[q; 4]);
        }
        assert_eq!(
            s.effective_dims(),
            EffectiveDims {
                q_eff: 5,
                k_eff: vec![5; 4]
            }
        );
        s.validate().unwrap();
        assert!(ModelState::init_canonical(&[3, 3], 0, Hyperparameters::default(), 1).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelState::init_canonical(&[6, 5, 4], 3, Hyperparameters::default(), 11).unwrap();
        let b = ModelState::init_canonical(&[6, 5, 4], 3, Hyperparameters::default(), 11).unwrap();
        let c = ModelState::init_canonical(&[6, 5, 4], 3, Hyperparameters::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn cp_mode_matches_canonical_layout() {
        let cp = ModelState::init_explicit(
            &[6, 5, 4],
            &[4, 4, 4],
            4,
            CoreMode::CpLocked,
            Hyperparameters::default(),
            3,
        )
        .unwrap();
        let canon = ModelState::init_canonical(&[6, 5, 4], 4, Hyperparameters::default(), 3).unwrap();
        assert_eq!(cp.core.locations, canon.core.locations);
        assert!(!cp.core.mode.resamples_locations());
        assert!(
            ModelState::init_explicit(&[6, 5], &[4, 3], 4, CoreMode::CpLocked, Hyperparameters::default(), 3).is_err()
        );
    }

    #[test]
    fn tucker_dense_enumerates_every_cell() {
        let s = ModelState::init_explicit(
            &[30, 30, 8, 5],
            &[20, 20, 6, 3],
            1,
            CoreMode::TuckerDense,
            Hyperparameters::default(),
            3,
        )
        .unwrap();
        assert_eq!(s.budget(), 7_200);
        assert_eq!(s.effective_dims().q_eff, 7_200);
        let err = ModelState::init_explicit(
            &[4, 4, 4, 4],
            &[50, 50, 50, 50],
            1,
            CoreMode::TuckerDense,
            Hyperparameters::default(),
            3,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::CoreTooLarge {
                cells: 6_250_000,
                limit: 1_000_000
            }
        ));
    }

    #[test]
    fn allocore_core_density() {
        let s = tiny_state(&[60, 60, 8, 12], &[50, 50, 6, 10], 400);
        let cells: usize = s.dims.iter().product();
        assert_eq!(cells, 150_000);
        assert!((400.0 / cells as f64 - 0.0027).abs() < 1e-4);
        assert_eq!(s.core.locations.len(), 400 * 4);
        let one = tiny_state(&[3, 3], &[2, 2], 1);
        assert_eq!(one.effective_dims().q_eff, 1);
    }

    #[test]
    fn core_value_sums_allocations() {
        let mut s = tiny_state(&[3, 3], &[2, 2], 2);
        s.core.values = vec![0.3, 0.7];
        s.core.locations = vec![0, 0, 0, 0];
        assert!((s.core_value_at(&[0, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s.core_value_at(&[1, 0]).unwrap(), 0.0);
        assert!(s.core_value_at(&[2, 0]).is_err());

        let mut s = tiny_state(&[3, 3], &[2, 2], 3);
        s.core.values = vec![1.0, 2.0, 4.0];
        s.core.locations = vec![0, 1, 1, 0, 0, 1];
        assert_eq!(s.core_value_at(&[0, 1]).unwrap(), 5.0);
        assert_eq!(s.core_value_at(&[1, 0]).unwrap(), 2.0);
    }

    #[test]
    fn reconstruct_single_class() {
        let mut s = tiny_state(&[1, 1], &[1, 1], 1);
        s.core.values = vec![2.0];
        s.factors = vec![array![[1.0]], array![[1.0]]];
        assert_eq!(s.reconstruct_at(&[0, 0]).unwrap(), 2.0);
        s.factors = vec![array![[0.5]], array![[0.25]]];
        assert_eq!(s.reconstruct_at(&[0, 0]).unwrap(), 0.25);
        assert!(s.reconstruct_at(&[1, 0]).is_err());
    }

    #[test]
    fn effective_dims_counts_distinct() {
        let mut s = tiny_state(&[3, 3], &[2, 2], 3);
        s.core.locations = vec![0, 0, 0, 1, 0, 0];
        assert_eq!(
            s.effective_dims(),
            EffectiveDims {
                q_eff: 2,
                k_eff: vec![1, 2]
            }
        );
        s.core.locations = vec![1, 1, 1, 1, 1, 1];
        assert_eq!(
            s.effective_dims(),
            EffectiveDims {
                q_eff: 1,
                k_eff: vec![1, 1]
            }
        );
    }

    #[test]
    fn priors_are_simplexes() {
        let s = tiny_state(&[5, 4, 3], &[4, 3, 2], 6);
        for pi in &s.priors {
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let bad = Hyperparameters {
            f0: 0.0,
            ..Default::default()
        };
        assert!(ModelState::init_canonical(&[3, 3], 2, bad, 1).is_err());
    }
}
