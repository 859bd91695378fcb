//! Internal dense kernels tuned for the element-local least-squares algebra:
//! `alpha * A^T B + beta * C` products, upper `A^T A` accumulation, and a
//! blocked in-place Cholesky with forward/backward substitution on many
//! right-hand sides. All matrices are column-major [`DMatrix`] buffers.

use nalgebra::DMatrix;

/// Relative pivot threshold below which a Cholesky factorization is declared
/// numerically indefinite.
pub const SPD_PIVOT_RTOL: f64 = 1e-14;

const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    /// Index of the failing pivot.
    pub pivot: usize,
}

impl std::fmt::Display for NotPositiveDefinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "matrix is not positive definite (pivot {})", self.pivot)
    }
}

impl std::error::Error for NotPositiveDefinite {}

/// `c = alpha * a^T b + beta * c` where `a` is `k x m`, `b` is `k x n` and
/// `c` is `m x n`.
pub fn gemm_at_b(alpha: f64, a: &DMatrix<f64>, b: &DMatrix<f64>, beta: f64, c: &mut DMatrix<f64>) {
    let (k, m) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "inner dimensions must agree");
    assert_eq!(c.shape(), (m, n), "output shape must agree");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        } else if beta != 1.0 {
            *c *= beta;
        }
        return;
    }
    // a^T as the left operand: its row stride is a's column stride.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            a.nrows() as isize,
            1,
            b.as_ptr(),
            1,
            b.nrows() as isize,
            beta,
            c.as_mut_ptr(),
            1,
            c.nrows() as isize,
        );
    }
}

/// `c[row0.., col0..] += alpha * a^T b` written into a rectangular block of
/// `c`; `a` is `k x m`, `b` is `k x n`, and the block is `m x n`.
pub fn gemm_at_b_into_block(
    alpha: f64,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &mut DMatrix<f64>,
    row0: usize,
    col0: usize,
) {
    let (k, m) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "inner dimensions must agree");
    assert!(row0 + m <= c.nrows() && col0 + n <= c.ncols(), "block out of range");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let ldc = c.nrows();
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            a.nrows() as isize,
            1,
            b.as_ptr(),
            1,
            b.nrows() as isize,
            1.0,
            c.as_mut_ptr().add(row0 + col0 * ldc),
            1,
            ldc as isize,
        );
    }
}

/// Accumulates `c += a^T a` touching only the upper triangle of `c`
/// (panel-blocked so most work runs through the gemm kernel).
pub fn syrk_upper_at_a(a: &DMatrix<f64>, c: &mut DMatrix<f64>) {
    let (k, n) = a.shape();
    assert_eq!(c.shape(), (n, n));
    if n == 0 || k == 0 {
        return;
    }
    let mut j = 0;
    while j < n {
        let jb = BLOCK.min(n - j);
        let hi = j + jb;
        // c[0..hi, j..hi] += a[:, 0..hi]^T a[:, j..hi]
        unsafe {
            matrixmultiply::dgemm(
                hi,
                k,
                jb,
                1.0,
                a.as_ptr(),
                a.nrows() as isize,
                1,
                a.as_ptr().add(j * a.nrows()),
                1,
                a.nrows() as isize,
                1.0,
                c.as_mut_ptr().add(j * c.nrows()),
                1,
                c.nrows() as isize,
            );
        }
        j = hi;
    }
    // The panel product also touched a few entries below the diagonal inside
    // each diagonal block; rows below `hi` were never written.
}

/// Copies the upper triangle onto the lower one, making `c` symmetric.
pub fn symmetrize_from_upper(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            c[(i, j)] = c[(j, i)];
        }
    }
}

/// In-place blocked Cholesky `a = l l^T`, storing `l` in the lower triangle.
/// Only the lower triangle of the input is read. Fails when a pivot drops
/// below [`SPD_PIVOT_RTOL`] times the largest input diagonal entry.
pub fn cholesky_lower_in_place(a: &mut DMatrix<f64>) -> Result<(), NotPositiveDefinite> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Ok(());
    }
    let mut max_diag = 0.0f64;
    for i in 0..n {
        max_diag = max_diag.max(a[(i, i)].abs());
    }
    let floor = SPD_PIVOT_RTOL * max_diag;
    let mut k = 0;
    while k < n {
        let kb = BLOCK.min(n - k);
        // Trailing update of the block column from already-factored columns:
        // a[k.., k..k+kb] -= l[k.., 0..k] * l[k..k+kb, 0..k]^T
        if k > 0 {
            let rows = n - k;
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    k,
                    kb,
                    -1.0,
                    a.as_ptr().add(k),
                    1,
                    a.nrows() as isize,
                    a.as_ptr().add(k),
                    a.nrows() as isize,
                    1,
                    1.0,
                    a.as_mut_ptr().add(k + k * n),
                    1,
                    n as isize,
                );
            }
        }
        // Unblocked factorization of the diagonal block plus panel solve.
        for j in k..k + kb {
            for i in (k..j).rev() {
                let lij = a[(j, i)];
                if lij != 0.0 {
                    for r in j..n {
                        a[(r, j)] -= a[(r, i)] * lij;
                    }
                }
            }
            let d = a[(j, j)];
            if !(d > floor) || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: j });
            }
            let inv = 1.0 / d.sqrt();
            for r in j..n {
                a[(r, j)] *= inv;
            }
        }
        k += kb;
    }
    Ok(())
}

/// `b <- l^{-1} b` with `l` lower triangular (blocked forward substitution;
/// the off-diagonal updates run through the gemm kernel).
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    assert_eq!(l.ncols(), n);
    assert_eq!(b.nrows(), n);
    let nrhs = b.ncols();
    if n == 0 || nrhs == 0 {
        return;
    }
    let mut k = 0;
    while k < n {
        let kb = BLOCK.min(n - k);
        // Unblocked solve of the diagonal block rows.
        for j in k..k + kb {
            let inv = 1.0 / l[(j, j)];
            for c in 0..nrhs {
                let mut s = b[(j, c)];
                for i in k..j {
                    s -= l[(j, i)] * b[(i, c)];
                }
                b[(j, c)] = s * inv;
            }
        }
        let hi = k + kb;
        // Propagate to the remaining rows: b[hi.., :] -= l[hi.., k..hi] * b[k..hi, :]
        if hi < n {
            let rows = n - hi;
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    kb,
                    nrhs,
                    -1.0,
                    l.as_ptr().add(hi + k * n),
                    1,
                    n as isize,
                    b.as_ptr().add(k),
                    1,
                    b.nrows() as isize,
                    1.0,
                    b.as_mut_ptr().add(hi),
                    1,
                    b.nrows() as isize,
                );
            }
        }
        k = hi;
    }
}

/// Packs the lower triangle of `l` column by column (rows `j..n` of column
/// `j` stored contiguously), halving the storage of stashed factors.
pub fn pack_lower(l: &DMatrix<f64>) -> Vec<f64> {
    let n = l.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(l[(i, j)]);
        }
    }
    out
}

/// Column offset inside a packed lower triangle of size `n`.
#[inline]
fn packed_offset(n: usize, j: usize) -> usize {
    j * (2 * n + 1 - j) / 2
}

/// `b <- l^{-1} b` with a packed lower-triangular factor.
pub fn solve_lower_packed(n: usize, packed: &[f64], b: &mut [f64]) {
    debug_assert_eq!(packed.len(), n * (n + 1) / 2);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let off = packed_offset(n, j);
        let bj = b[j] / packed[off];
        b[j] = bj;
        for i in (j + 1)..n {
            b[i] -= packed[off + (i - j)] * bj;
        }
    }
}

/// `b <- l^{-T} b` with a packed lower-triangular factor.
pub fn solve_lower_transpose_packed(n: usize, packed: &[f64], b: &mut [f64]) {
    debug_assert_eq!(packed.len(), n * (n + 1) / 2);
    debug_assert_eq!(b.len(), n);
    for j in (0..n).rev() {
        let off = packed_offset(n, j);
        let mut s = b[j];
        for i in (j + 1)..n {
            s -= packed[off + (i - j)] * b[i];
        }
        b[j] = s / packed[off];
    }
}

/// Solves `a x = b` with a packed Cholesky factor.
pub fn solve_cholesky_packed(n: usize, packed: &[f64], b: &mut [f64]) {
    solve_lower_packed(n, packed, b);
    solve_lower_transpose_packed(n, packed, b);
}
