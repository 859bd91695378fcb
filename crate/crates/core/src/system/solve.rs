//! Storage and solvers for the global condensed system.
//!
//! The matrix is symmetric positive definite on the free unknowns; only its
//! upper triangle is stored, by compressed rows. Constrained unknowns stay
//! in the numbering and are handled by lifting: the solve minimizes over the
//! free entries with the constrained entries held at their values.

use super::SystemError;
use crate::system::bc::BcTable;
use faer::prelude::*;
use faer::sparse::Triplet;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Upper triangle of a symmetric sparse matrix in compressed row storage.
/// Column indices in each row are ascending and start at the diagonal.
#[derive(Debug, Clone)]
pub struct CsrUpper {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl CsrUpper {
    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    /// `y = A x` using the symmetric completion of the stored triangle.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[idx] as usize;
                let v = self.val[idx];
                acc += v * x[j];
                if j != i {
                    y[j] += v * xi;
                }
            }
            y[i] += acc;
        }
    }

    /// Storage index of entry `(i, j)`; requires `i <= j`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        debug_assert!(i <= j);
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col[lo..hi]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| lo + k)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            if let Some(idx) = self.position(i, i) {
                d[i] = self.val[idx];
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Direct factorization up to [`AUTO_DIRECT_LIMIT`] free unknowns,
    /// conjugate gradients beyond.
    #[default]
    Auto,
    Direct,
    Cg,
}

/// Free-unknown count above which `Auto` switches away from the sparse
/// direct factorization to keep memory bounded.
pub const AUTO_DIRECT_LIMIT: usize = 160_000;

/// Convergence tolerance of conjugate gradients, relative to the right-hand
/// side norm.
pub const CG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub method: &'static str,
    pub n_free: usize,
    /// Zero for the direct path.
    pub iterations: usize,
}

/// Minimizes the quadratic over the free entries of `u` with the constrained
/// entries held at their prescribed values; returns the full vector.
pub fn solve_spd(
    k: &CsrUpper,
    f: &DVector<f64>,
    bc: &BcTable,
    kind: SolverKind,
) -> Result<(DVector<f64>, SolveReport), SystemError> {
    let n = k.n;
    assert_eq!(f.len(), n);
    assert_eq!(bc.fixed.len(), n);
    let free: Vec<usize> = (0..n).filter(|&i| bc.is_free(i)).collect();
    let n_free = free.len();

    let mut u = DVector::zeros(n);
    bc.apply_values(&mut u);
    // Lift the prescribed values into the right-hand side.
    let mut ku0 = vec![0.0; n];
    k.spmv(u.as_slice(), &mut ku0);
    let rhs: Vec<f64> = free.iter().map(|&i| f[i] - ku0[i]).collect();

    let use_direct = match kind {
        SolverKind::Direct => true,
        SolverKind::Cg => false,
        SolverKind::Auto => n_free <= AUTO_DIRECT_LIMIT,
    };
    let (x, report) = if use_direct {
        let x = solve_direct(k, &free, &rhs)?;
        (
            x,
            SolveReport {
                method: "direct",
                n_free,
                iterations: 0,
            },
        )
    } else {
        let (x, iterations) = solve_cg(k, &free, &rhs)?;
        (
            x,
            SolveReport {
                method: "cg",
                n_free,
                iterations,
            },
        )
    };
    for (r, &i) in free.iter().enumerate() {
        u[i] = x[r];
    }
    Ok((u, report))
}

fn solve_direct(k: &CsrUpper, free: &[usize], rhs: &[f64]) -> Result<Vec<f64>, SystemError> {
    let n_free = free.len();
    let mut reduced = vec![usize::MAX; k.n];
    for (r, &i) in free.iter().enumerate() {
        reduced[i] = r;
    }
    // The factorization reads the lower triangle; a stored upper entry
    // (i, j) with i <= j lands at reduced position (rj, ri) with rj >= ri.
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
    for i in 0..k.n {
        let ri = reduced[i];
        if ri == usize::MAX {
            continue;
        }
        for idx in k.row_ptr[i]..k.row_ptr[i + 1] {
            let rj = reduced[k.col[idx] as usize];
            if rj == usize::MAX {
                continue;
            }
            triplets.push(Triplet::new(rj, ri, k.val[idx]));
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n_free, n_free, &triplets)
        .map_err(|e| SystemError::Solver(format!("building sparse matrix: {e:?}")))?;
    drop(triplets);
    let llt = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| SystemError::Solver(format!("sparse factorization: {e:?}")))?;
    let mut b = Mat::<f64>::zeros(n_free, 1);
    for (r, &v) in rhs.iter().enumerate() {
        b[(r, 0)] = v;
    }
    let x = llt.solve(&b);
    Ok((0..n_free).map(|r| x[(r, 0)]).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients with a diagonal preconditioner, restricted to the
/// free unknowns. Deterministic: fixed iteration order, no data races.
fn solve_cg(k: &CsrUpper, free: &[usize], rhs: &[f64]) -> Result<(Vec<f64>, usize), SystemError> {
    let n = k.n;
    let n_free = free.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok((vec![0.0; n_free], 0));
    }
    let diag = k.diagonal();
    let inv_diag: Vec<f64> = free
        .iter()
        .map(|&i| if diag[i] > 0.0 { 1.0 / diag[i] } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n_free];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, m)| ri * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut full = vec![0.0; n];
    let mut ap_full = vec![0.0; n];
    let mut ap = vec![0.0; n_free];

    let max_iter = 1000 + 50 * (n_free as f64).sqrt() as usize;
    for it in 0..max_iter {
        full.fill(0.0);
        for (rix, &i) in free.iter().enumerate() {
            full[i] = p[rix];
        }
        k.spmv(&full, &mut ap_full);
        for (rix, &i) in free.iter().enumerate() {
            ap[rix] = ap_full[i];
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SystemError::Solver(format!(
                "matrix not positive definite in conjugate gradients (p'Ap = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n_free {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= CG_TOL * rhs_norm {
            return Ok((x, it + 1));
        }
        for i in 0..n_free {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n_free {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = dot(&r, &r).sqrt() / rhs_norm;
    Err(SystemError::CgNotConverged {
        rel,
        iterations: max_iter,
    })
}

/// Value of the quadratic `u' K u - 2 f' u + c`.
pub fn quadratic_value(k: &CsrUpper, f: &DVector<f64>, c: f64, u: &DVector<f64>) -> f64 {
    let mut ku = vec![0.0; k.n];
    k.spmv(u.as_slice(), &mut ku);
    let mut val = c;
    for i in 0..k.n {
        val += u[i] * (ku[i] - 2.0 * f[i]);
    }
    val
}

/// Largest gradient entry `|2 (K u - f)_i|` over the free unknowns.
pub fn gradient_max_free(k: &CsrUpper, f: &DVector<f64>, u: &DVector<f64>, bc: &BcTable) -> f64 {
    let mut ku = vec![0.0; k.n];
    k.spmv(u.as_slice(), &mut ku);
    (0..k.n)
        .filter(|&i| bc.is_free(i))
        .map(|i| (2.0 * (ku[i] - f[i])).abs())
        .fold(0.0, f64::max)
}
