//! Least-squares reduction of element operators and static condensation.
//!
//! Given the element form matrix `B`, load `l` and test Gram blocks `G`,
//! the discrete minimum-residual problem reduces to the normal equations
//! with `K = B^T G^{-1} B` and `f = B^T G^{-1} l`. This module computes the
//! reduced triple `(K, f, |l|^2_{G^{-1}})` by applying inverse Cholesky
//! factors blockwise, and eliminates element-interior unknowns so only
//! skeleton-coupled columns enter the global solve.

use crate::dense;
use crate::forms::{ElementOperators, ScalarGram, TestKind, TestLayout};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpgError {
    #[error("test Gram block '{block}' is not positive definite (pivot {pivot})")]
    GramNotSpd { block: &'static str, pivot: usize },
    #[error("condensed interior block is not positive definite (pivot {pivot})")]
    InteriorNotSpd { pivot: usize },
    #[error("missing Gram block '{block}' for this formulation")]
    MissingGram { block: &'static str },
}

/// Cholesky factors of the distinct Gram blocks of one element.
pub struct GramFactors {
    /// Scale factor for the diagonal fast path, or a dense lower factor.
    l2: Option<L2Factor>,
    h1: Option<DMatrix<f64>>,
    hdiv: Option<DMatrix<f64>>,
}

enum L2Factor {
    /// Gram is `value * I`; the inverse factor is `1/sqrt(value)`.
    Uniform { inv_sqrt: f64 },
    Dense(DMatrix<f64>),
}

impl GramFactors {
    pub fn factor(ops: &ElementOperators) -> Result<GramFactors, DpgError> {
        let l2 = match &ops.gram.l2 {
            None => None,
            Some(ScalarGram::Uniform { value, .. }) => Some(L2Factor::Uniform {
                inv_sqrt: 1.0 / value.sqrt(),
            }),
            Some(ScalarGram::Dense(g)) => {
                let mut l = g.clone();
                dense::cholesky_lower_in_place(&mut l).map_err(|e| DpgError::GramNotSpd {
                    block: "l2",
                    pivot: e.pivot,
                })?;
                Some(L2Factor::Dense(l))
            }
        };
        let h1 = match &ops.gram.h1 {
            None => None,
            Some(g) => {
                let mut l = g.clone();
                dense::cholesky_lower_in_place(&mut l).map_err(|e| DpgError::GramNotSpd {
                    block: "h1",
                    pivot: e.pivot,
                })?;
                Some(l)
            }
        };
        let hdiv = match &ops.gram.hdiv {
            None => None,
            Some(g) => {
                let mut l = g.clone();
                dense::cholesky_lower_in_place(&mut l).map_err(|e| DpgError::GramNotSpd {
                    block: "hdiv",
                    pivot: e.pivot,
                })?;
                Some(l)
            }
        };
        Ok(GramFactors { l2, h1, hdiv })
    }
}

/// Element normal equations `K u = f` plus the constant completing the
/// squared residual `u^T K u - 2 f^T u + ell_norm_sq`.
#[derive(Debug, Clone)]
pub struct ElementSystem {
    pub k: DMatrix<f64>,
    pub f: DVector<f64>,
    pub ell_norm_sq: f64,
}

/// Applies the inverse Cholesky factors of the weighted test norm to the
/// rows of `B` and `l`, then forms `K = Bt^T Bt`, `f = Bt^T lt`.
pub fn reduce(ops: &ElementOperators, test: &TestLayout) -> Result<ElementSystem, DpgError> {
    let factors = GramFactors::factor(ops)?;
    let n_trial = ops.b.ncols();
    let mut bt = ops.b.clone();
    let mut lt = ops.ell.clone();

    for block in &test.blocks {
        let inv_sqrt_w = 1.0 / block.weight.sqrt();
        match block.kind {
            TestKind::L2 => match factors.l2.as_ref().ok_or(DpgError::MissingGram {
                block: "l2",
            })? {
                L2Factor::Uniform { inv_sqrt } => {
                    let s = inv_sqrt * inv_sqrt_w;
                    for j in 0..n_trial {
                        for i in 0..block.dim {
                            bt[(block.offset + i, j)] *= s;
                        }
                    }
                    for i in 0..block.dim {
                        lt[block.offset + i] *= s;
                    }
                }
                L2Factor::Dense(l) => {
                    apply_block_solve(l, inv_sqrt_w, &mut bt, &mut lt, block.offset, block.dim);
                }
            },
            TestKind::H1 => {
                let l = factors.h1.as_ref().ok_or(DpgError::MissingGram { block: "h1" })?;
                apply_block_solve(l, inv_sqrt_w, &mut bt, &mut lt, block.offset, block.dim);
            }
            TestKind::Hdiv => {
                let l = factors
                    .hdiv
                    .as_ref()
                    .ok_or(DpgError::MissingGram { block: "hdiv" })?;
                apply_block_solve(l, inv_sqrt_w, &mut bt, &mut lt, block.offset, block.dim);
            }
        }
    }

    let mut k = DMatrix::zeros(n_trial, n_trial);
    dense::syrk_upper_at_a(&bt, &mut k);
    dense::symmetrize_from_upper(&mut k);
    let mut f = DVector::zeros(n_trial);
    for j in 0..n_trial {
        let mut s = 0.0;
        for i in 0..bt.nrows() {
            s += bt[(i, j)] * lt[i];
        }
        f[j] = s;
    }
    let ell_norm_sq = lt.dot(&lt);
    Ok(ElementSystem { k, f, ell_norm_sq })
}

/// Solves `L^{-1}` on the row block `[offset, offset+dim)` of `bt` and `lt`,
/// including the `1/sqrt(w)` norm-weight scale.
fn apply_block_solve(
    l: &DMatrix<f64>,
    inv_sqrt_w: f64,
    bt: &mut DMatrix<f64>,
    lt: &mut DVector<f64>,
    offset: usize,
    dim: usize,
) {
    let n_trial = bt.ncols();
    let mut rows = DMatrix::zeros(dim, n_trial + 1);
    for j in 0..n_trial {
        for i in 0..dim {
            rows[(i, j)] = bt[(offset + i, j)];
        }
    }
    for i in 0..dim {
        rows[(i, n_trial)] = lt[offset + i];
    }
    dense::solve_lower_in_place(l, &mut rows);
    for j in 0..n_trial {
        for i in 0..dim {
            bt[(offset + i, j)] = rows[(i, j)] * inv_sqrt_w;
        }
    }
    for i in 0..dim {
        lt[offset + i] = rows[(i, n_trial)] * inv_sqrt_w;
    }
}

/// Skeleton-coupled system of one element after interior elimination,
/// together with the data needed to recover interior unknowns later.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub n_local: usize,
    /// Schur complement on the skeleton columns.
    pub k_tilde: DMatrix<f64>,
    pub f_tilde: DVector<f64>,
    /// Element constant of the condensed quadratic:
    /// `ell_norm_sq - |L_ll^{-1} f_l|^2`.
    pub c_elem: f64,
    /// Packed Cholesky factor of the interior block.
    pub l_ll: Vec<f64>,
    /// Interior-to-skeleton coupling, `n_local` by `n_skeleton`.
    pub k_ls: DMatrix<f64>,
    pub f_l: DVector<f64>,
}

/// Eliminates the `local` columns of the element system. `local` and
/// `skeleton` must partition `0..k.nrows()`.
pub fn condense(
    sys: &ElementSystem,
    local: &[usize],
    skeleton: &[usize],
) -> Result<CondensedElement, DpgError> {
    let nl = local.len();
    let ns = skeleton.len();
    debug_assert_eq!(nl + ns, sys.k.nrows());

    let mut k_ll = DMatrix::zeros(nl, nl);
    for (bi, &gi) in local.iter().enumerate() {
        for (bj, &gj) in local.iter().enumerate() {
            k_ll[(bi, bj)] = sys.k[(gi, gj)];
        }
    }
    let mut k_ls = DMatrix::zeros(nl, ns);
    for (bi, &gi) in local.iter().enumerate() {
        for (bj, &gj) in skeleton.iter().enumerate() {
            k_ls[(bi, bj)] = sys.k[(gi, gj)];
        }
    }
    let mut k_ss = DMatrix::zeros(ns, ns);
    for (bi, &gi) in skeleton.iter().enumerate() {
        for (bj, &gj) in skeleton.iter().enumerate() {
            k_ss[(bi, bj)] = sys.k[(gi, gj)];
        }
    }
    let f_l = DVector::from_iterator(nl, local.iter().map(|&g| sys.f[g]));
    let f_s = DVector::from_iterator(ns, skeleton.iter().map(|&g| sys.f[g]));

    dense::cholesky_lower_in_place(&mut k_ll)
        .map_err(|e| DpgError::InteriorNotSpd { pivot: e.pivot })?;

    // x = L^{-1} [K_ls | f_l]; Schur pieces follow from x alone.
    let mut x = DMatrix::zeros(nl, ns + 1);
    x.view_mut((0, 0), (nl, ns)).copy_from(&k_ls);
    x.view_mut((0, ns), (nl, 1)).copy_from(&f_l);
    dense::solve_lower_in_place(&k_ll, &mut x);

    let xk = x.view((0, 0), (nl, ns)).into_owned();
    let xf = x.view((0, ns), (nl, 1)).into_owned();

    // K_ss - (L^{-1}K_ls)^T (L^{-1}K_ls), symmetric by construction.
    let mut schur = k_ss;
    dense::gemm_at_b(-1.0, &xk, &xk, 1.0, &mut schur);
    let mut f_tilde = f_s;
    for j in 0..ns {
        let mut s = 0.0;
        for i in 0..nl {
            s += xk[(i, j)] * xf[(i, 0)];
        }
        f_tilde[j] -= s;
    }
    let c_shift: f64 = (0..nl).map(|i| xf[(i, 0)] * xf[(i, 0)]).sum();

    Ok(CondensedElement {
        n_local: nl,
        k_tilde: schur,
        f_tilde,
        c_elem: sys.ell_norm_sq - c_shift,
        l_ll: dense::pack_lower(&k_ll),
        k_ls,
        f_l,
    })
}

/// Recovers the interior unknowns `u_l = K_ll^{-1}(f_l - K_ls u_s)` from the
/// stashed factor, coupling block and interior load.
pub fn recover_local(
    n_local: usize,
    l_ll_packed: &[f64],
    k_ls: &DMatrix<f64>,
    f_l: &DVector<f64>,
    u_s: &DVector<f64>,
) -> DVector<f64> {
    let mut rhs: Vec<f64> = (0..n_local).map(|i| f_l[i]).collect();
    for j in 0..k_ls.ncols() {
        let us = u_s[j];
        if us != 0.0 {
            for i in 0..n_local {
                rhs[i] -= k_ls[(i, j)] * us;
            }
        }
    }
    dense::solve_cholesky_packed(n_local, l_ll_packed, &mut rhs);
    DVector::from_vec(rhs)
}

/// Squared residual contribution of one condensed element for skeleton
/// values `u_s`: assumes the interior unknowns take their optimal value.
pub fn condensed_residual_sq(cond: &CondensedElement, u_s: &DVector<f64>) -> f64 {
    let ku = &cond.k_tilde * u_s;
    u_s.dot(&ku) - 2.0 * cond.f_tilde.dot(u_s) + cond.c_elem
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{GramSet, TestBlockRef, TestRole};
    use crate::forms::{Formulation, ScalarGram, TestKind, TestLayout};
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen::<f64>() - 0.5)
    }

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = random_matrix(rng, n + 3, n);
        let mut g = a.transpose() * &a;
        for i in 0..n {
            g[(i, i)] += 0.7;
        }
        g
    }

    /// Fabricates operators with two test blocks sharing one dense L2 Gram
    /// plus an H1 block, and checks `reduce` against an explicit inverse.
    #[test]
    fn reduce_matches_explicit_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (d_l2, d_h1, n_trial) = (4usize, 5usize, 6usize);
        let n_test = 2 * d_l2 + d_h1;
        let b = random_matrix(&mut rng, n_test, n_trial);
        let ell = DVector::from_fn(n_test, |_, _| rng.gen::<f64>() - 0.5);
        let g_l2 = random_spd(&mut rng, d_l2);
        let g_h1 = random_spd(&mut rng, d_h1);
        let ops = ElementOperators {
            b: b.clone(),
            ell: ell.clone(),
            gram: GramSet {
                l2: Some(ScalarGram::Dense(g_l2.clone())),
                h1: Some(g_h1.clone()),
                hdiv: None,
            },
        };
        let test = TestLayout {
            formulation: Formulation::Strong,
            r: 2,
            n_test,
            blocks: vec![
                TestBlockRef {
                    kind: TestKind::L2,
                    role: TestRole::Tau,
                    weight: 1.0,
                    offset: 0,
                    dim: d_l2,
                },
                TestBlockRef {
                    kind: TestKind::L2,
                    role: TestRole::Tau,
                    weight: 2.0,
                    offset: d_l2,
                    dim: d_l2,
                },
                TestBlockRef {
                    kind: TestKind::H1,
                    role: TestRole::V,
                    weight: 1.0,
                    offset: 2 * d_l2,
                    dim: d_h1,
                },
            ],
        };
        let sys = reduce(&ops, &test).unwrap();

        // Assemble the block-diagonal Gram explicitly and invert.
        let mut g = DMatrix::zeros(n_test, n_test);
        g.view_mut((0, 0), (d_l2, d_l2)).copy_from(&g_l2);
        g.view_mut((d_l2, d_l2), (d_l2, d_l2)).copy_from(&(2.0 * &g_l2));
        g.view_mut((2 * d_l2, 2 * d_l2), (d_h1, d_h1)).copy_from(&g_h1);
        let g_inv = g.try_inverse().unwrap();
        let k_ref = b.transpose() * &g_inv * &b;
        let f_ref = b.transpose() * &g_inv * &ell;
        let c_ref = (ell.transpose() * &g_inv * &ell)[(0, 0)];
        assert!((&sys.k - &k_ref).abs().max() < 1e-11);
        assert!((&sys.f - &f_ref).abs().max() < 1e-11);
        assert!((sys.ell_norm_sq - c_ref).abs() < 1e-11);
    }

    #[test]
    fn uniform_l2_fast_path_matches_dense_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (d, n_trial) = (5usize, 4usize);
        let b = random_matrix(&mut rng, d, n_trial);
        let ell = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
        let value = 0.37;
        let make = |gram| ElementOperators {
            b: b.clone(),
            ell: ell.clone(),
            gram: GramSet {
                l2: Some(gram),
                h1: None,
                hdiv: None,
            },
        };
        let test = TestLayout {
            formulation: Formulation::Strong,
            r: 2,
            n_test: d,
            blocks: vec![TestBlockRef {
                kind: TestKind::L2,
                role: TestRole::Tau,
                weight: 2.0,
                offset: 0,
                dim: d,
            }],
        };
        let fast = reduce(&make(ScalarGram::Uniform { value, dim: d }), &test).unwrap();
        let dense_gram = DMatrix::identity(d, d) * value;
        let slow = reduce(&make(ScalarGram::Dense(dense_gram)), &test).unwrap();
        assert!((&fast.k - &slow.k).abs().max() < 1e-13);
        assert!((&fast.f - &slow.f).abs().max() < 1e-13);
        assert!((fast.ell_norm_sq - slow.ell_norm_sq).abs() < 1e-13);
    }

    #[test]
    fn condensation_reproduces_full_solve_and_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 12;
        let k = random_spd(&mut rng, n);
        let f = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        let sys = ElementSystem {
            k: k.clone(),
            f: f.clone(),
            ell_norm_sq: 3.25,
        };
        // Interleave local and skeleton indices to exercise the gathers.
        let local: Vec<usize> = vec![0, 3, 4, 7, 10];
        let skeleton: Vec<usize> = vec![1, 2, 5, 6, 8, 9, 11];
        let cond = condense(&sys, &local, &skeleton).unwrap();

        let full = k.clone().cholesky().unwrap().solve(&f);
        let u_s_full = DVector::from_iterator(skeleton.len(), skeleton.iter().map(|&g| full[g]));
        let u_s = cond
            .k_tilde
            .clone()
            .cholesky()
            .unwrap()
            .solve(&cond.f_tilde);
        assert!((&u_s - &u_s_full).abs().max() < 1e-10);

        let u_l = recover_local(cond.n_local, &cond.l_ll, &cond.k_ls, &cond.f_l, &u_s);
        for (bi, &gi) in local.iter().enumerate() {
            assert!((u_l[bi] - full[gi]).abs() < 1e-10);
        }

        // For arbitrary skeleton values, the condensed quadratic equals the
        // full quadratic minimized over the interior unknowns.
        let u_s_arb = DVector::from_fn(skeleton.len(), |_, _| rng.gen::<f64>() - 0.5);
        let u_l_arb = recover_local(cond.n_local, &cond.l_ll, &cond.k_ls, &cond.f_l, &u_s_arb);
        let mut u_full = DVector::zeros(n);
        for (bi, &gi) in skeleton.iter().enumerate() {
            u_full[gi] = u_s_arb[bi];
        }
        for (bi, &gi) in local.iter().enumerate() {
            u_full[gi] = u_l_arb[bi];
        }
        let full_quad = (u_full.transpose() * &k * &u_full)[(0, 0)] - 2.0 * f.dot(&u_full)
            + sys.ell_norm_sq;
        let cond_quad = condensed_residual_sq(&cond, &u_s_arb);
        assert!((full_quad - cond_quad).abs() < 1e-10);
    }
}
