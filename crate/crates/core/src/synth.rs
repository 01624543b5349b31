//! Synthetic tensors drawn from the generative model, with ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ChainRng, CoreEntries, CoreMode, EffectiveDims, Hyperparameters, ModelState};
use crate::rng::{dirichlet, gamma, poisson, substream, Block};
use crate::tensor::SparseCountTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub shape: Vec<usize>,
    pub true_dims: Vec<usize>,
    pub true_budget: usize,
    /// Every factor column is scaled to sum to this.
    pub column_scale: f64,
    /// Symmetric Dirichlet concentration of random factor columns.
    pub column_concentration: f64,
    /// Optional fixed columns per mode, one inner vector per column. They are
    /// used as given, without rescaling.
    pub fixed_columns: Vec<Option<Vec<Vec<f64>>>>,
    /// Gamma shape and rate for the core values.
    pub lambda_shape: f64,
    pub lambda_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            shape: vec![40, 40, 5],
            true_dims: vec![4, 4, 2],
            true_budget: 6,
            column_scale: 5.0,
            column_concentration: 0.01,
            fixed_columns: vec![
                None,
                None,
                Some(vec![vec![2.5, 0.5, 1.0, 0.5, 0.5], vec![0.5, 2.5, 1.0, 0.5, 0.5]]),
            ],
            lambda_shape: 2.0,
            lambda_rate: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.shape.len();
        if m == 0 || self.shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid shape {:?}", self.shape)));
        }
        if self.true_dims.len() != m || self.true_dims.iter().any(|&k| k == 0) {
            return Err(Error::InvalidArgument(format!(
                "true dims {:?} do not fit a {m}-mode tensor",
                self.true_dims
            )));
        }
        if self.true_budget == 0 {
            return Err(Error::InvalidArgument("true budget must be at least 1".into()));
        }
        for (name, v) in [
            ("column scale", self.column_scale),
            ("column concentration", self.column_concentration),
            ("lambda shape", self.lambda_shape),
            ("lambda rate", self.lambda_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.fixed_columns.is_empty() || self.fixed_columns.len() == m) {
            return Err(Error::InvalidArgument(
                "fixed columns must be given for every mode or none".into(),
            ));
        }
        for (mm, fixed) in self.fixed_columns.iter().enumerate() {
            if let Some(cols) = fixed {
                if cols.len() != self.true_dims[mm] {
                    return Err(Error::InvalidArgument(format!(
                        "mode {} has {} fixed columns but K*={}",
                        mm + 1,
                        cols.len(),
                        self.true_dims[mm]
                    )));
                }
                if cols
                    .iter()
                    .any(|c| c.len() != self.shape[mm] || c.iter().any(|&x| !(x > 0.0 && x.is_finite())))
                {
                    return Err(Error::InvalidArgument(format!(
                        "fixed columns of mode {} must have {} positive entries",
                        mm + 1,
                        self.shape[mm]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `key=value` lines describing every setting.
    pub fn echo(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "shape={}", join(&self.shape));
        let _ = writeln!(s, "true_dims={}", join(&self.true_dims));
        let _ = writeln!(s, "true_budget={}", self.true_budget);
        let _ = writeln!(s, "column_scale={}", self.column_scale);
        let _ = writeln!(s, "column_concentration={}", self.column_concentration);
        let _ = writeln!(s, "lambda_shape={}", self.lambda_shape);
        let _ = writeln!(s, "lambda_rate={}", self.lambda_rate);
        for (m, fixed) in self.fixed_columns.iter().enumerate() {
            if let Some(cols) = fixed {
                let cols: Vec<String> = cols
                    .iter()
                    .map(|c| c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                let _ = writeln!(s, "fixed_columns_{}={}", m + 1, cols.join(";"));
            }
        }
        s
    }
}

/// The generating parameters and their effective dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub state: ModelState,
    pub dims: EffectiveDims,
}

/// Inverse-CDF sampler over a fixed weight vector.
struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        Self(
            weights
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        )
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.0.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

/// Draw a ground-truth state and a count tensor from it.
///
/// Each class contributes `Pois(lambda_q * prod_m S_m[k_qm])` events placed
/// independently per mode in proportion to its factor columns, which has the
/// same law as independent cell-wise Poisson draws.
pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<(SparseCountTensor, GroundTruth)> {
    config.validate()?;
    let m = config.shape.len();

    let mut rng = substream(seed, 0, Block::Synthetic, 0);
    let mut factors = Vec::with_capacity(m);
    for mm in 0..m {
        let (d, k) = (config.shape[mm], config.true_dims[mm]);
        let fixed = config.fixed_columns.get(mm).and_then(|f| f.as_ref());
        let mut f = Array2::zeros((d, k));
        for kk in 0..k {
            let col: Vec<f64> = match fixed {
                Some(cols) => cols[kk].clone(),
                None => dirichlet(&mut rng, &vec![config.column_concentration; d])
                    .into_iter()
                    .map(|x| (x * config.column_scale).max(f64::MIN_POSITIVE))
                    .collect(),
            };
            for (dd, x) in col.into_iter().enumerate() {
                f[[dd, kk]] = x;
            }
        }
        factors.push(f);
    }

    let mut rng = substream(seed, 0, Block::Synthetic, 1);
    let values: Vec<f64> = (0..config.true_budget)
        .map(|_| gamma(&mut rng, config.lambda_shape, config.lambda_rate))
        .collect();

    let mut rng = substream(seed, 0, Block::Synthetic, 2);
    let priors: Vec<Vec<f64>> = config.true_dims.iter().map(|&k| vec![1.0 / k as f64; k]).collect();
    let locations: Vec<usize> = (0..config.true_budget)
        .flat_map(|_| config.true_dims.iter().map(|&k| k).collect::<Vec<_>>())
        .map(|k| rng.random_range(0..k))
        .collect();

    let state = ModelState {
        shape: config.shape.clone(),
        dims: config.true_dims.clone(),
        hyper: Hyperparameters {
            a0: config.lambda_shape,
            b0: config.lambda_rate,
            ..Hyperparameters::default()
        },
        factors,
        core: CoreEntries::new(CoreMode::Allocore, values, locations, m)?,
        priors,
        rng: ChainRng { seed, iteration: 0 },
    };

    let samplers: Vec<Vec<Cumulative>> = state
        .factors
        .iter()
        .map(|f| {
            f.columns()
                .into_iter()
                .map(|c| Cumulative::new(c.iter().copied()))
                .collect()
        })
        .collect();
    let sums: Vec<Vec<f64>> = (0..m).map(|mm| state.column_sums(mm)).collect();

    let mut rng = substream(seed, 0, Block::Synthetic, 3);
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for q in 0..state.budget() {
        let loc = state.core.location(q);
        let mut mass = state.core.values[q];
        for mm in 0..m {
            mass *= sums[mm][loc[mm]];
        }
        let n = poisson(&mut rng, mass);
        for _ in 0..n {
            let cell: Vec<usize> = (0..m).map(|mm| samplers[mm][loc[mm]].draw(&mut rng)).collect();
            *counts.entry(cell).or_insert(0) += 1;
        }
    }
    let tensor = SparseCountTensor::from_entries(config.shape.clone(), counts)?;
    let dims = state.effective_dims();
    Ok((tensor, GroundTruth { state, dims }))
}

/// Effective dimensions of each saved sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryTrace {
    pub iterations: Vec<u64>,
    pub dims: Vec<EffectiveDims>,
}

fn median(mut v: Vec<usize>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn histogram(v: impl Iterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut h: BTreeMap<usize, usize> = BTreeMap::new();
    for x in v {
        *h.entry(x).or_insert(0) += 1;
    }
    h.into_iter().collect()
}

impl RecoveryTrace {
    pub fn q_values(&self) -> impl Iterator<Item = usize> + '_ {
        self.dims.iter().map(|d| d.q_eff)
    }

    pub fn k_values(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.dims.iter().map(move |d| d.k_eff[m])
    }

    pub fn median_q(&self) -> f64 {
        median(self.q_values().collect())
    }

    pub fn median_k(&self, m: usize) -> f64 {
        median(self.k_values(m).collect())
    }

    /// `(value, frequency)` pairs of `Q_eff`.
    pub fn histogram_q(&self) -> Vec<(usize, usize)> {
        histogram(self.q_values())
    }

    pub fn histogram_k(&self, m: usize) -> Vec<(usize, usize)> {
        histogram(self.k_values(m))
    }

    /// Tab-separated trace: iteration, `Q_eff`, then `K_eff` per mode.
    pub fn trace_table(&self) -> String {
        let n_modes = self.dims.first().map_or(0, |d| d.k_eff.len());
        let mut s = String::from("iteration\tq_eff");
        for m in 0..n_modes {
            let _ = write!(s, "\tk_eff_{}", m + 1);
        }
        s.push('\n');
        for (it, d) in self.iterations.iter().zip(&self.dims) {
            let _ = write!(s, "{it}\t{}", d.q_eff);
            for k in &d.k_eff {
                let _ = write!(s, "\t{k}");
            }
            s.push('\n');
        }
        s
    }

    /// Tab-separated histograms: quantity, value, count.
    pub fn histogram_table(&self) -> String {
        let n_modes = self.dims.first().map_or(0, |d| d.k_eff.len());
        let mut s = String::from("quantity\tvalue\tcount\n");
        for (v, c) in self.histogram_q() {
            let _ = writeln!(s, "q_eff\t{v}\t{c}");
        }
        for m in 0..n_modes {
            for (v, c) in self.histogram_k(m) {
                let _ = writeln!(s, "k_eff_{}\t{v}\t{c}", m + 1);
            }
        }
        s
    }
}

pub fn recovery_trace(samples: &[ModelState]) -> RecoveryTrace {
    RecoveryTrace {
        iterations: samples.iter().map(|s| s.rng.iteration).collect(),
        dims: samples.iter().map(|s| s.effective_dims()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_columns_sum_to_scale() {
        let c = SyntheticConfig::default();
        for col in c.fixed_columns[2].as_ref().unwrap() {
            assert!((col.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let c = SyntheticConfig::default();
        let (a, ta) = generate(&c, 11).unwrap();
        let (b, tb) = generate(&c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (d, _) = generate(&c, 12).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn random_columns_are_scaled() {
        let (_, truth) = generate(&SyntheticConfig::default(), 3).unwrap();
        for m in 0..2 {
            for s in truth.state.column_sums(m) {
                assert!((s - 5.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_class_total() {
        let c = SyntheticConfig {
            shape: vec![6, 5, 4],
            true_dims: vec![1, 1, 1],
            true_budget: 1,
            fixed_columns: vec![],
            ..SyntheticConfig::default()
        };
        let n = 400;
        let mut mean_ratio = 0.0;
        for seed in 0..n {
            let (t, truth) = generate(&c, seed).unwrap();
            mean_ratio += t.total() as f64 / (125.0 * truth.state.core.values[0]);
        }
        mean_ratio /= n as f64;
        assert!((mean_ratio - 1.0).abs() < 0.02, "{mean_ratio}");
    }

    #[test]
    fn default_is_sparse() {
        let c = SyntheticConfig::default();
        let sparse = (0..40).filter(|&s| generate(&c, s).unwrap().0.density() < 0.1).count();
        assert!(sparse >= 38);
    }

    #[test]
    fn constant_trace() {
        let (_, truth) = generate(&SyntheticConfig::default(), 5).unwrap();
        let trace = recovery_trace(&vec![truth.state.clone(); 4]);
        assert_eq!(trace.histogram_q(), vec![(truth.dims.q_eff, 4)]);
        assert_eq!(trace.median_q(), truth.dims.q_eff as f64);
    }

    #[test]
    fn canonical_trace() {
        let s = ModelState::init_canonical(&[5, 4, 3], 3, Hyperparameters::default(), 0).unwrap();
        let trace = recovery_trace(&[s]);
        assert_eq!(trace.dims[0].k_eff, vec![3, 3, 3]);
        assert!(trace.trace_table().starts_with("iteration\tq_eff\tk_eff_1"));
    }

    #[test]
    fn echo_lists_settings() {
        let e = SyntheticConfig::default().echo();
        for key in [
            "shape=40,40,5",
            "true_dims=4,4,2",
            "true_budget=6",
            "column_scale=5",
            "lambda_shape=2",
            "fixed_columns_3=",
        ] {
            assert!(e.contains(key), "{key}");
        }
    }
}
