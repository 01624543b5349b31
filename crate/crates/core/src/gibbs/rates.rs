//! Observed-cell rate sums that enter the gamma and categorical conditionals.
//!
//! Without a mask, the sum over all cells of a product of factor entries
//! factorizes into column sums. Held-out fibers are subtracted back out: a
//! fiber's contribution is the product of its stem's factor entries times the
//! full column sum of the free mode.

use ndarray::Array2;

use crate::mask::FiberMask;
use crate::model::ModelState;

/// Column sums of every factor matrix, refreshed as factors change.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSums(pub Vec<Vec<f64>>);

impl ColumnSums {
    pub fn of(state: &ModelState) -> Self {
        Self((0..state.n_modes()).map(|m| state.column_sums(m)).collect())
    }

    pub fn mode(&self, m: usize) -> &[f64] {
        &self.0[m]
    }
}

/// Observed mass of the other modes for one class and one mode:
/// `sum over observed d' with d'_m = d of prod_{m' != m} phi^(m')[d'_m', k_m']`.
#[derive(Debug, Clone, PartialEq)]
pub enum OtherMass {
    /// Same value for every entity `d` of the mode.
    Uniform(f64),
    /// One value per entity.
    PerEntity(Vec<f64>),
}

impl OtherMass {
    pub fn at(&self, d: usize) -> f64 {
        match self {
            OtherMass::Uniform(v) => *v,
            OtherMass::PerEntity(v) => v[d],
        }
    }
}

fn active(mask: Option<&FiberMask>) -> Option<&FiberMask> {
    mask.filter(|m| !m.is_empty())
}

/// Mode index for position `p` of a stem.
#[inline]
fn stem_mode(p: usize, free: usize) -> usize {
    if p < free {
        p
    } else {
        p + 1
    }
}

/// `sum over masked stems of prod_{m' not in skip, m' != free} phi^(m')[s_m', loc_m']`
/// accumulated per coordinate of mode `by` (or into a single total when `by` is `None`).
fn stem_products(
    state: &ModelState,
    mask: &FiberMask,
    loc: &[usize],
    skip: Option<usize>,
    by: Option<usize>,
) -> Vec<f64> {
    let free = mask.free_mode();
    let len = by.map(|m| state.shape[m]).unwrap_or(1);
    let mut out = vec![0.0; len];
    for stem in mask.stems() {
        let mut prod = 1.0;
        let mut slot = 0;
        for (p, &c) in stem.iter().enumerate() {
            let mm = stem_mode(p, free);
            if Some(mm) == by {
                slot = c;
            }
            if Some(mm) == skip {
                continue;
            }
            prod *= state.factors[mm][[c, loc[mm]]];
        }
        out[slot] += prod;
    }
    out
}

/// Observed mass of the modes other than `m` for a class at `loc`.
pub fn other_mode_mass(
    state: &ModelState,
    sums: &ColumnSums,
    mask: Option<&FiberMask>,
    loc: &[usize],
    m: usize,
) -> OtherMass {
    let mut base = 1.0;
    for mm in 0..state.n_modes() {
        if mm != m {
            base *= sums.mode(mm)[loc[mm]];
        }
    }
    let Some(mask) = active(mask) else {
        return OtherMass::Uniform(base);
    };
    let free = mask.free_mode();
    if m == free {
        let w = stem_products(state, mask, loc, None, None)[0];
        OtherMass::Uniform((base - w).max(0.0))
    } else {
        let free_sum = sums.mode(free)[loc[free]];
        let v = stem_products(state, mask, loc, Some(m), Some(m));
        OtherMass::PerEntity(v.into_iter().map(|x| (base - free_sum * x).max(0.0)).collect())
    }
}

/// `sum over observed cells of prod_m phi^(m)[d_m, loc_m]`: the exposure of a
/// class, excluding its core value.
pub fn class_exposure(state: &ModelState, sums: &ColumnSums, mask: Option<&FiberMask>, loc: &[usize]) -> f64 {
    let mut full = 1.0;
    for mm in 0..state.n_modes() {
        full *= sums.mode(mm)[loc[mm]];
    }
    match active(mask) {
        None => full,
        Some(mask) => {
            let free = mask.free_mode();
            let masked = stem_products(state, mask, loc, None, None)[0] * sums.mode(free)[loc[free]];
            (full - masked).max(0.0)
        }
    }
}

/// Rate sums `c^(m)[d, k] = sum_{q: k_qm = k} lambda_q * other_mode_mass(q, m)[d]`
/// for the gamma conditional of `phi^(m)`.
pub fn phi_rate_sums(state: &ModelState, sums: &ColumnSums, mask: Option<&FiberMask>, m: usize) -> Array2<f64> {
    let mut c = Array2::zeros((state.shape[m], state.dims[m]));
    for q in 0..state.budget() {
        let loc = state.core.location(q);
        let k = loc[m];
        let lambda = state.core.values[q];
        match other_mode_mass(state, sums, mask, loc, m) {
            OtherMass::Uniform(o) => {
                let add = lambda * o;
                c.column_mut(k).iter_mut().for_each(|x| *x += add);
            }
            OtherMass::PerEntity(v) => {
                for (x, o) in c.column_mut(k).iter_mut().zip(v) {
                    *x += lambda * o;
                }
            }
        }
    }
    c
}

/// Exposure of every class; the gamma rate of `lambda_q` is `b0` plus this.
pub fn lambda_rate_sums(state: &ModelState, sums: &ColumnSums, mask: Option<&FiberMask>) -> Vec<f64> {
    (0..state.budget())
        .map(|q| class_exposure(state, sums, mask, state.core.location(q)))
        .collect()
}

/// Snapshot of the held-out corrections for the current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCorrections {
    /// Per class: `sum over masked cells of prod_m phi^(m)[d_m, k_qm]`.
    pub class_masked: Vec<f64>,
    /// Per mode: the masked part of `c^(m)[d, k]`.
    pub factor_masked: Vec<Array2<f64>>,
}

impl MaskCorrections {
    pub fn compute(state: &ModelState, mask: Option<&FiberMask>) -> Self {
        let sums = ColumnSums::of(state);
        let lam_full = lambda_rate_sums(state, &sums, None);
        let lam_obs = lambda_rate_sums(state, &sums, mask);
        let class_masked = lam_full.iter().zip(&lam_obs).map(|(f, o)| f - o).collect();
        let factor_masked = (0..state.n_modes())
            .map(|m| phi_rate_sums(state, &sums, None, m) - phi_rate_sums(state, &sums, mask, m))
            .collect();
        Self {
            class_masked,
            factor_masked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoreMode, Hyperparameters};

    fn state() -> ModelState {
        ModelState::init_explicit(
            &[3, 3, 2],
            &[2, 3, 2],
            4,
            CoreMode::Allocore,
            Hyperparameters::default(),
            8,
        )
        .unwrap()
    }

    /// Every cell of the tensor, row-major.
    fn cells(shape: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &d in shape {
            out = out
                .into_iter()
                .flat_map(|c| (0..d).map(move |x| [c.clone(), vec![x]].concat()))
                .collect();
        }
        out
    }

    fn brute_phi(state: &ModelState, mask: Option<&FiberMask>, m: usize) -> Array2<f64> {
        let mut c = Array2::zeros((state.shape[m], state.dims[m]));
        for q in 0..state.budget() {
            let loc = state.core.location(q);
            for cell in cells(&state.shape) {
                if mask.is_some_and(|mk| mk.is_masked(&cell)) {
                    continue;
                }
                let mut prod = state.core.values[q];
                for mm in 0..state.n_modes() {
                    if mm != m {
                        prod *= state.factors[mm][[cell[mm], loc[mm]]];
                    }
                }
                c[[cell[m], loc[m]]] += prod;
            }
        }
        c
    }

    fn brute_lambda(state: &ModelState, mask: Option<&FiberMask>) -> Vec<f64> {
        (0..state.budget())
            .map(|q| {
                let loc = state.core.location(q);
                cells(&state.shape)
                    .iter()
                    .filter(|cell| !mask.is_some_and(|mk| mk.is_masked(cell)))
                    .map(|cell| {
                        (0..state.n_modes())
                            .map(|mm| state.factors[mm][[cell[mm], loc[mm]]])
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn empty_mask_matches_unmasked_exactly() {
        let s = state();
        let sums = ColumnSums::of(&s);
        for free in 0..3 {
            let mask = FiberMask::empty(s.shape.clone(), free).unwrap();
            for m in 0..3 {
                assert_eq!(
                    phi_rate_sums(&s, &sums, Some(&mask), m),
                    phi_rate_sums(&s, &sums, None, m)
                );
            }
            assert_eq!(
                lambda_rate_sums(&s, &sums, Some(&mask)),
                lambda_rate_sums(&s, &sums, None)
            );
        }
    }

    #[test]
    fn unmasked_sums_match_brute_force() {
        let s = state();
        let sums = ColumnSums::of(&s);
        for m in 0..3 {
            let fast = phi_rate_sums(&s, &sums, None, m);
            let slow = brute_phi(&s, None, m);
            assert!(fast.iter().zip(slow.iter()).all(|(a, b)| close(*a, *b)));
        }
        for (a, b) in lambda_rate_sums(&s, &sums, None).iter().zip(brute_lambda(&s, None)) {
            assert!(close(*a, b));
        }
    }

    #[test]
    fn all_but_one_fiber_masked_matches_brute_force() {
        let s = state();
        let sums = ColumnSums::of(&s);
        for free in 0..3 {
            let stem_dims: Vec<usize> = (0..3).filter(|&m| m != free).map(|m| s.shape[m]).collect();
            let mut stems = cells(&stem_dims);
            stems.remove(stems.len() / 2);
            let mask = FiberMask::new(s.shape.clone(), free, stems).unwrap();
            for m in 0..3 {
                let fast = phi_rate_sums(&s, &sums, Some(&mask), m);
                let slow = brute_phi(&s, Some(&mask), m);
                for (a, b) in fast.iter().zip(slow.iter()) {
                    assert!(
                        (a - b).abs() < 1e-12 * b.abs().max(1.0),
                        "free={free} m={m}: {a} vs {b}"
                    );
                }
            }
            for (a, b) in lambda_rate_sums(&s, &sums, Some(&mask))
                .iter()
                .zip(brute_lambda(&s, Some(&mask)))
            {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
            let corr = MaskCorrections::compute(&s, Some(&mask));
            assert!(corr.class_masked.iter().all(|&x| x >= 0.0));
        }
    }
}
