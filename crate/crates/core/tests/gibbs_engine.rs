use std::time::Instant;

use allocore::eval::{ppd, top_classes, train_loglik};
use allocore::gibbs::{
    gibbs_sweep, run_chain, sample_lambda, sample_locations, sample_phi, sample_pi, thin_counts, ChainConfig,
    PosteriorSamples, UpdateFlags,
};
use allocore::{
    CoreEntries, CoreMode, Error, FiberMask, HeldoutSet, Hyperparameters, ModelConfig, ModelState, SparseCountTensor,
};
use ndarray::Array2;

fn tiny(shape: &[usize], lambda: f64, factors: &[&[f64]]) -> ModelState {
    let m = shape.len();
    let mut s =
        ModelState::init_explicit(shape, &vec![1; m], 1, CoreMode::Allocore, Hyperparameters::default(), 0).unwrap();
    s.core.values[0] = lambda;
    for (mm, f) in factors.iter().enumerate() {
        s.factors[mm] = Array2::from_shape_vec((shape[mm], 1), f.to_vec()).unwrap();
    }
    s
}

fn mean_within(draws: &[f64], mean: f64, var: f64) -> bool {
    let n = draws.len() as f64;
    let got = draws.iter().sum::<f64>() / n;
    ((got - mean) / (var / n).sqrt()).abs() < 3.0
}

fn redraws(
    base: &ModelState,
    y: &SparseCountTensor,
    n: usize,
    mut f: impl FnMut(&mut ModelState, &allocore::gibbs::LatentSources) -> f64,
) -> Vec<f64> {
    let sources = thin_counts(base, y).unwrap();
    (0..n)
        .map(|t| {
            let mut s = base.clone();
            s.rng.iteration = t as u64 + 1;
            f(&mut s, &sources)
        })
        .collect()
}

#[test]
fn phi_conditional_with_data() {
    let base = tiny(&[1, 1], 3.0, &[&[1.0], &[1.0]]);
    let y = SparseCountTensor::from_entries(vec![1, 1], [(vec![0, 0], 7u64)]).unwrap();
    let draws = redraws(&base, &y, 50_000, |s, src| {
        sample_phi(s, src, None).unwrap();
        s.factors[0][[0, 0]]
    });
    assert!(mean_within(&draws, 8.0 / 13.0, 8.0 / 169.0));
}

#[test]
fn phi_conditional_without_data() {
    let base = tiny(&[1, 1], 1.0, &[&[1.0], &[1.0]]);
    let y = SparseCountTensor::empty(vec![1, 1]).unwrap();
    let draws = redraws(&base, &y, 50_000, |s, src| {
        sample_phi(s, src, None).unwrap();
        s.factors[0][[0, 0]]
    });
    assert!(mean_within(&draws, 1.0 / 11.0, 1.0 / 121.0));
}

#[test]
fn lambda_conditionals() {
    let base = tiny(&[1, 1], 1.0, &[&[2.0], &[3.0]]);
    let y = SparseCountTensor::from_entries(vec![1, 1], [(vec![0, 0], 10u64)]).unwrap();
    let draws = redraws(&base, &y, 50_000, |s, src| {
        sample_lambda(s, src, None).unwrap();
        s.core.values[0]
    });
    assert!(mean_within(&draws, 11.0 / 7.0, 11.0 / 49.0));

    let base = tiny(&[1, 1], 1.0, &[&[1.0], &[1.0]]);
    let y = SparseCountTensor::empty(vec![1, 1]).unwrap();
    let draws = redraws(&base, &y, 50_000, |s, src| {
        sample_lambda(s, src, None).unwrap();
        s.core.values[0]
    });
    assert!(mean_within(&draws, 0.5, 0.25));
}

#[test]
fn pi_conditional() {
    let mut s =
        ModelState::init_explicit(&[3, 3], &[2, 1], 3, CoreMode::Allocore, Hyperparameters::default(), 4).unwrap();
    for q in 0..3 {
        s.core.location_mut(q).copy_from_slice(&[1, 0]);
    }
    let mut draws = Vec::new();
    for t in 0..50_000 {
        s.rng.iteration = t;
        sample_pi(&mut s);
        draws.push(s.priors[0][0]);
        assert_eq!(s.priors[1], vec![1.0]);
    }
    let (a, total) = (0.1, 3.2);
    assert!(mean_within(
        &draws,
        a / total,
        a * (total - a) / (total * total * (total + 1.0))
    ));
}

#[test]
fn single_candidate_location_never_moves() {
    let mut s =
        ModelState::init_explicit(&[3, 2], &[1, 4], 2, CoreMode::Allocore, Hyperparameters::default(), 2).unwrap();
    let y = SparseCountTensor::from_entries(vec![3, 2], [(vec![0, 1], 2u64)]).unwrap();
    for _ in 0..50 {
        gibbs_sweep(&mut s, &y, None, UpdateFlags::default()).unwrap();
        assert_eq!(s.core.location(0)[0], 0);
        assert_eq!(s.core.location(1)[0], 0);
    }
}

#[test]
fn symmetric_state_gives_uniform_locations() {
    let k = 4;
    let mut s =
        ModelState::init_explicit(&[3, 3], &[k, 1], 1, CoreMode::Allocore, Hyperparameters::default(), 3).unwrap();
    s.factors[0] = Array2::from_elem((3, k), 0.7);
    s.priors[0] = vec![1.0 / k as f64; k];
    let y = SparseCountTensor::empty(vec![3, 3]).unwrap();
    let sources = thin_counts(&s, &y).unwrap();
    let n = 50_000;
    let mut hits = vec![0usize; k];
    for t in 0..n {
        s.rng.iteration = t as u64 + 1;
        sample_locations(&mut s, &sources, None).unwrap();
        hits[s.core.location(0)[0]] += 1;
    }
    let p = 1.0 / k as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for h in hits {
        assert!(((h as f64 / n as f64) - p).abs() < 3.0 * se, "{h}");
    }
}

#[test]
fn pinned_modes_never_move_locations() {
    let y = SparseCountTensor::from_entries(vec![4, 3], [(vec![0, 0], 3u64), (vec![3, 2], 1)]).unwrap();
    let mut cp =
        ModelState::init_explicit(&[4, 3], &[2, 2], 2, CoreMode::CpLocked, Hyperparameters::default(), 1).unwrap();
    let mut tucker = ModelState::init_explicit(
        &[4, 3],
        &[2, 3],
        0,
        CoreMode::TuckerDense,
        Hyperparameters::default(),
        1,
    )
    .unwrap();
    let (cp0, tk0) = (cp.core.locations.clone(), tucker.core.locations.clone());
    for _ in 0..20 {
        gibbs_sweep(&mut cp, &y, None, UpdateFlags::default()).unwrap();
        gibbs_sweep(&mut tucker, &y, None, UpdateFlags::default()).unwrap();
    }
    assert_eq!(cp.core.locations, cp0);
    assert_eq!(tucker.core.locations, tk0);
    assert_eq!(tucker.budget(), 6);
}

fn small_problem() -> (SparseCountTensor, ModelState) {
    let entries: Vec<(Vec<usize>, u64)> = (0..40)
        .map(|i| (vec![i % 5, (i * 3) % 4, (i * 7) % 3], (i % 4) as u64 + 1))
        .collect();
    let y = SparseCountTensor::from_entries(vec![5, 4, 3], entries).unwrap();
    let s = ModelState::init_canonical(&[5, 4, 3], 4, Hyperparameters::default(), 12).unwrap();
    (y, s)
}

#[test]
fn chain_counts_saved_samples() {
    let (y, s) = small_problem();
    let config = ChainConfig {
        burn_in: 0,
        total: 40,
        thin: 20,
        seed: 1,
        ..ChainConfig::default()
    };
    let mut sink = PosteriorSamples::default();
    run_chain(&y, None, s, &config, &mut sink).unwrap();
    assert_eq!(sink.iterations, vec![20, 40]);
    assert_eq!(ChainConfig::default().n_samples(), 200);
}

#[test]
fn thin_must_divide_total() {
    let (y, s) = small_problem();
    let config = ChainConfig {
        burn_in: 0,
        total: 30,
        thin: 20,
        ..ChainConfig::default()
    };
    let err = run_chain(&y, None, s, &config, &mut PosteriorSamples::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn chains_are_deterministic_and_resumable() {
    let (y, s) = small_problem();
    let config = ChainConfig {
        burn_in: 10,
        total: 30,
        thin: 5,
        seed: 77,
        ..ChainConfig::default()
    };
    let mut a = PosteriorSamples::default();
    let end_a = run_chain(&y, None, s.clone(), &config, &mut a).unwrap();
    let mut b = PosteriorSamples::default();
    run_chain(&y, None, s.clone(), &config, &mut b).unwrap();
    assert_eq!(a.samples, b.samples);

    // interrupt at iteration 17, then resume from the state reached there
    let partial = ChainConfig {
        burn_in: 10,
        total: 10,
        thin: 5,
        ..config.clone()
    };
    let mut first = PosteriorSamples::default();
    let mut mid = run_chain(&y, None, s, &partial, &mut first).unwrap();
    assert_eq!(mid.rng.iteration, 20);
    mid.rng.iteration = 20;
    let mut rest = PosteriorSamples::default();
    let end_c = run_chain(&y, None, mid, &config, &mut rest).unwrap();
    let mut joined = first.samples.clone();
    joined.extend(rest.samples);
    assert_eq!(joined, a.samples);
    assert_eq!(end_a, end_c);
}

#[test]
fn resuming_with_another_seed_is_refused() {
    let (y, mut s) = small_problem();
    s.rng.iteration = 5;
    s.rng.seed = 1;
    let config = ChainConfig {
        burn_in: 0,
        total: 10,
        thin: 5,
        seed: 2,
        ..ChainConfig::default()
    };
    assert!(run_chain(&y, None, s, &config, &mut PosteriorSamples::default()).is_err());
}

#[test]
fn empty_mask_sweeps_match_unmasked() {
    let (y, s) = small_problem();
    let empty = FiberMask::empty(vec![5, 4, 3], 1).unwrap();
    let (mut a, mut b) = (s.clone(), s);
    for _ in 0..10 {
        gibbs_sweep(&mut a, &y, None, UpdateFlags::default()).unwrap();
        gibbs_sweep(&mut b, &y, Some(&empty), UpdateFlags::default()).unwrap();
    }
    assert_eq!(a, b);
}

#[test]
fn aggregates_stay_consistent() {
    let (y, mut s) = small_problem();
    for _ in 0..25 {
        let src = gibbs_sweep(&mut s, &y, None, UpdateFlags::default()).unwrap();
        assert!(src.conserves(&y));
        assert!(src.aggregates_consistent(&y));
        for m in 0..3 {
            assert_eq!(src.factor_totals(&s, m).sum(), y.total());
        }
    }
}

#[test]
fn frozen_blocks_stay_put() {
    let (y, mut s) = small_problem();
    let before = s.clone();
    let flags = UpdateFlags {
        locations: false,
        lambda: false,
        phi: true,
        pi: false,
    };
    gibbs_sweep(&mut s, &y, None, flags).unwrap();
    assert_eq!(s.core, before.core);
    assert_eq!(s.priors, before.priors);
    assert_ne!(s.factors, before.factors);
}

#[test]
fn large_sparse_core_is_cheap() {
    let shape = [30usize, 30, 6, 10];
    let entries: Vec<(Vec<usize>, u64)> = (0..100)
        .map(|i| (vec![i % 30, (i * 7) % 30, i % 6, (i * 3) % 10], 1 + (i % 3) as u64))
        .collect();
    let y = SparseCountTensor::from_entries(shape.to_vec(), entries).unwrap();
    let mut s =
        ModelState::init_explicit(&shape, &[50; 4], 20, CoreMode::Allocore, Hyperparameters::default(), 9).unwrap();
    assert_eq!(s.core.locations.len(), 20 * 4);
    let start = Instant::now();
    gibbs_sweep(&mut s, &y, None, UpdateFlags::default()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);

    let config = ModelConfig {
        shape: shape.to_vec(),
        dims: vec![50; 4],
        budget: 0,
        mode: CoreMode::TuckerDense,
        hyper: Hyperparameters::default(),
        core_cell_limit: 1_000_000,
    };
    match ModelState::init(&config, 1) {
        Err(Error::CoreTooLarge { cells, limit }) => {
            assert_eq!(cells, 6_250_000);
            assert_eq!(limit, 1_000_000);
        }
        other => panic!("expected refusal, got {other:?}"),
    }
}

fn all_cells(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in shape {
        out = out
            .into_iter()
            .flat_map(|c: Vec<usize>| {
                (0..d).map(move |x| {
                    let mut c = c.clone();
                    c.push(x);
                    c
                })
            })
            .collect();
    }
    out
}

#[test]
fn sparse_loglik_matches_dense() {
    let (y, s) = small_problem();
    let mask = FiberMask::new(vec![5, 4, 3], 0, vec![vec![0, 0], vec![2, 1], vec![3, 2]]).unwrap();
    let train = y.filter(|c| !mask.is_masked(c));
    for (m, data, exact) in [
        (None, &y, false),
        (Some(&mask), &train, false),
        (Some(&mask), &train, true),
    ] {
        let mut dense = 0.0;
        for cell in all_cells(&[5, 4, 3]) {
            if m.is_some_and(|mk| mk.is_masked(&cell)) {
                continue;
            }
            let rate = s.rate_at(&cell);
            let count = data.get(&cell);
            dense += count as f64 * rate.ln() - rate;
            if exact {
                dense -= (1..=count).map(|i| (i as f64).ln()).sum::<f64>();
            }
        }
        let sparse = train_loglik(&s, data, m, exact);
        assert!(
            (sparse - dense).abs() < 1e-10 * dense.abs().max(1.0),
            "{sparse} vs {dense}"
        );
    }
}

#[test]
fn zero_rate_at_positive_cell_is_minus_infinity() {
    let mut s = tiny(&[2, 1], 1.0, &[&[1.0, 1.0], &[1.0]]);
    s.factors[0][[1, 0]] = 0.0;
    let y = SparseCountTensor::from_entries(vec![2, 1], [(vec![1, 0], 1u64)]).unwrap();
    assert_eq!(train_loglik(&s, &y, None, false), f64::NEG_INFINITY);
}

#[test]
fn ppd_is_permutation_invariant() {
    let (_, s) = small_problem();
    let mut samples = vec![s.clone()];
    let mut t = s;
    t.core.values.iter_mut().for_each(|v| *v *= 1.7);
    samples.push(t);
    let heldout = HeldoutSet {
        cells: vec![(vec![0, 0, 0], 0), (vec![1, 2, 0], 3), (vec![4, 3, 2], 1)],
    };
    let a = ppd(&samples, &heldout).unwrap();
    let mut rev = heldout.clone();
    rev.cells.reverse();
    samples.reverse();
    let b = ppd(&samples, &rev).unwrap();
    assert!((a - b).abs() < 1e-14);
    assert!(a > 0.0 && a <= 1.0);
}

#[test]
fn class_values_sum_to_total_mass() {
    let (y, mut s) = small_problem();
    for _ in 0..5 {
        gibbs_sweep(&mut s, &y, None, UpdateFlags::default()).unwrap();
    }
    let classes = top_classes(&s, usize::MAX, 0.02);
    let total: f64 = s.core.values.iter().sum();
    let listed: f64 = classes.iter().map(|c| c.value).sum();
    assert!((total - listed).abs() < 1e-12 * total);
    assert_eq!(classes.len(), s.effective_dims().q_eff);
    assert!(top_classes(&s, 1, 0.02).len() == 1);
}

#[test]
fn single_location_holds_all_mass() {
    let mut s =
        ModelState::init_explicit(&[3, 3], &[2, 2], 3, CoreMode::Allocore, Hyperparameters::default(), 5).unwrap();
    s.core = CoreEntries::new(CoreMode::Allocore, vec![1.0, 2.0, 0.5], vec![1, 0, 1, 0, 1, 0], 2).unwrap();
    let classes = top_classes(&s, 100, 0.02);
    assert_eq!(classes.len(), 1);
    assert_eq!(classes[0].value, 3.5);
}
