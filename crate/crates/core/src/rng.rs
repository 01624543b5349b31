//! Counter-based random substreams and the handful of samplers the Gibbs
//! sweeps need.
//!
//! Every random draw in a chain comes from a generator keyed by
//! `(seed, iteration, block, index)`, so results do not depend on how work is
//! partitioned across threads.

use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Which part of the model a substream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Block {
    Init = 1,
    Thinning = 2,
    Locations = 3,
    Lambda = 4,
    Phi = 5,
    Pi = 6,
    Mask = 7,
    Synthetic = 8,
    Data = 9,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the generator for one `(iteration, block, index)` cell of a chain.
pub fn substream(seed: u64, iteration: u64, block: Block, index: u64) -> StreamRng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ iteration);
    h = splitmix(h ^ (block as u64));
    h = splitmix(h ^ index);
    StreamRng::seed_from_u64(h)
}

/// Gamma draw parameterized by shape and *rate*. Never returns zero.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    let x: f64 = if shape == 1.0 {
        rng.sample::<f64, _>(Exp1) / rate
    } else {
        Gamma::new(shape, 1.0 / rate)
            .expect("gamma parameters checked by caller")
            .sample(rng)
    };
    x.max(f64::MIN_POSITIVE)
}

/// Dirichlet draw via normalized unit-rate gammas.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let x: f64 = Gamma::new(a, 1.0).expect("positive concentration").sample(rng);
            x
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // every component underflowed: fall back to the largest concentration
        let best = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws.iter_mut().for_each(|x| *x = 0.0);
        draws[best] = 1.0;
    }
    draws
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(rate).expect("finite positive rate").sample(rng);
    x as u64
}

/// Split `n` across categories with probabilities proportional to `weights`.
///
/// `out` is overwritten. Small `n` uses inverse-CDF draws; large `n` uses a
/// chain of conditional binomials. `weights` must contain a positive entry
/// whenever `n > 0`.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, weights: &[f64], out: &mut [u64]) {
    debug_assert_eq!(weights.len(), out.len());
    out.iter_mut().for_each(|x| *x = 0);
    let k = weights.len();
    if n == 0 || k == 0 {
        return;
    }
    if k == 1 {
        out[0] = n;
        return;
    }
    if n <= 2 * k as u64 {
        let mut cum = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cum.push(acc);
        }
        let last = last_positive(weights);
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let idx = cum.partition_point(|&c| c <= u).min(last);
            out[idx] += 1;
        }
    } else {
        let mut suffix = vec![0.0; k + 1];
        for q in (0..k).rev() {
            suffix[q] = suffix[q + 1] + weights[q];
        }
        let last = last_positive(weights);
        let mut remaining = n;
        for q in 0..last {
            if remaining == 0 {
                break;
            }
            let p = (weights[q] / suffix[q]).clamp(0.0, 1.0);
            let x = if p <= 0.0 {
                0
            } else if p >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, p).expect("valid binomial").sample(rng)
            };
            out[q] = x;
            remaining -= x;
        }
        out[last] += remaining;
    }
}

fn last_positive(weights: &[f64]) -> usize {
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Draw an index from unnormalized log-weights. `logw` is overwritten with
/// unnormalized probabilities. Returns `None` when every entry is `-inf` or NaN.
pub fn categorical_from_log<R: Rng + ?Sized>(rng: &mut R, logw: &mut [f64]) -> Option<usize> {
    let max = logw
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for w in logw.iter_mut() {
        let shifted = *w - max;
        *w = if shifted > -745.0 { shifted.exp() } else { 0.0 };
        total += *w;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in logw.iter().enumerate() {
        if p > 0.0 {
            chosen = Some(i);
            acc += p;
            if u < acc {
                break;
            }
        }
    }
    chosen
}

/// Draw an index proportional to non-negative `weights`.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            chosen = i;
            acc += w;
            if u < acc {
                break;
            }
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, 3, Block::Phi, 11).random();
        let b: u64 = substream(7, 3, Block::Phi, 11).random();
        let c: u64 = substream(7, 3, Block::Phi, 12).random();
        let d: u64 = substream(7, 4, Block::Phi, 11).random();
        let e: u64 = substream(7, 3, Block::Lambda, 11).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && a != e);
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = substream(1, 0, Block::Data, 0);
        let weights = [0.5, 0.0, 2.0, 1.0, 1e-9];
        let mut out = [0u64; 5];
        for n in [0u64, 1, 3, 9, 10, 11, 500, 100_000] {
            multinomial(&mut rng, n, &weights, &mut out);
            assert_eq!(out.iter().sum::<u64>(), n);
            assert_eq!(out[1], 0, "zero-weight category drew mass");
        }
    }

    #[test]
    fn multinomial_means_match_both_paths() {
        let mut rng = substream(2, 0, Block::Data, 0);
        let weights = [1.0, 3.0];
        let mut out = [0u64; 2];
        for n in [4u64, 40] {
            let draws = 50_000;
            let mut acc = 0u64;
            for _ in 0..draws {
                multinomial(&mut rng, n, &weights, &mut out);
                acc += out[0];
            }
            let mean = acc as f64 / draws as f64;
            let expect = n as f64 * 0.25;
            let se = (n as f64 * 0.25 * 0.75 / draws as f64).sqrt();
            assert!((mean - expect).abs() < 4.0 * se, "n={n} mean={mean}");
        }
    }

    #[test]
    fn categorical_from_log_handles_underflow() {
        let mut rng = substream(3, 0, Block::Data, 0);
        let mut logw = [-1e6, -1e6 + 1.0, f64::NEG_INFINITY];
        let idx = categorical_from_log(&mut rng, &mut logw).unwrap();
        assert!(idx < 2);
        assert_eq!(logw[1], 1.0);
        assert!((logw[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(logw[2], 0.0);
        let mut dead = [f64::NEG_INFINITY; 3];
        assert!(categorical_from_log(&mut rng, &mut dead).is_none());
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = substream(4, 0, Block::Data, 0);
        for _ in 0..100 {
            let p = dirichlet(&mut rng, &[0.1, 0.1, 0.1, 5.0]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
