//! One-dimensional polynomial bases on `[0, 1]` used by the tensor-product
//! element spaces.
//!
//! * `h1_basis`: hierarchical continuous basis: the two hat functions
//!   `1 - t`, `t`, then integrated Legendre bubbles vanishing at both ends.
//! * `l2_basis`: shifted Legendre polynomials scaled to an orthonormal set.
//!
//! Both families satisfy `f_k(1 - t) = (-1)^k f_k(t)` for `k >= 2` (bubbles)
//! and for every Legendre index, which is what the face and edge orientation
//! logic relies on.

/// Values of `P_0 .. P_{n-1}` at `x` in `[-1, 1]`.
pub fn legendre_values(n: usize, x: f64, out: &mut [f64]) {
    assert!(out.len() >= n);
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    out[1] = x;
    for k in 1..(n - 1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Values and derivatives of the hierarchical H1 basis `l_0 .. l_p` at `t`.
///
/// `l_0 = 1 - t`, `l_1 = t`, and for `k >= 2`
/// `l_k(t) = (P_k(x) - P_{k-2}(x)) / (2k - 1)` with `x = 2t - 1`, so that
/// `l_k' (t) = 2 P_{k-1}(2t - 1)`.
pub fn h1_basis(p: usize, t: f64, values: &mut [f64], derivatives: &mut [f64]) {
    assert!(values.len() >= p + 1 && derivatives.len() >= p + 1);
    values[0] = 1.0 - t;
    derivatives[0] = -1.0;
    if p == 0 {
        return;
    }
    values[1] = t;
    derivatives[1] = 1.0;
    if p == 1 {
        return;
    }
    let x = 2.0 * t - 1.0;
    let mut leg = vec![0.0; p + 1];
    legendre_values(p + 1, x, &mut leg);
    for k in 2..=p {
        values[k] = (leg[k] - leg[k - 2]) / (2.0 * k as f64 - 1.0);
        derivatives[k] = 2.0 * leg[k - 1];
    }
}

/// Values of the orthonormal Legendre basis `q_0 .. q_{n-1}` at `t`:
/// `q_k(t) = sqrt(2k + 1) P_k(2t - 1)`.
pub fn l2_basis(n: usize, t: f64, values: &mut [f64]) {
    assert!(values.len() >= n);
    legendre_values(n, 2.0 * t - 1.0, values);
    for k in 0..n {
        values[k] *= (2.0 * k as f64 + 1.0).sqrt();
    }
}

/// Table of 1D basis data at a set of points, basis index fastest.
#[derive(Debug, Clone)]
pub struct Table1d {
    pub n_basis: usize,
    pub n_points: usize,
    /// `value[q * n_basis + k]`
    pub value: Vec<f64>,
    /// Empty when derivatives were not requested.
    pub derivative: Vec<f64>,
}

impl Table1d {
    pub fn value_at(&self, q: usize, k: usize) -> f64 {
        self.value[q * self.n_basis + k]
    }

    pub fn derivative_at(&self, q: usize, k: usize) -> f64 {
        self.derivative[q * self.n_basis + k]
    }
}

/// Tabulates the H1 basis of degree `p` (with derivatives) at `points`.
pub fn tabulate_h1(p: usize, points: &[f64]) -> Table1d {
    let n_basis = p + 1;
    let mut value = vec![0.0; n_basis * points.len()];
    let mut derivative = vec![0.0; n_basis * points.len()];
    for (q, &t) in points.iter().enumerate() {
        h1_basis(
            p,
            t,
            &mut value[q * n_basis..(q + 1) * n_basis],
            &mut derivative[q * n_basis..(q + 1) * n_basis],
        );
    }
    Table1d {
        n_basis,
        n_points: points.len(),
        value,
        derivative,
    }
}

/// Tabulates the orthonormal Legendre basis with `n` functions at `points`.
pub fn tabulate_l2(n: usize, points: &[f64]) -> Table1d {
    let mut value = vec![0.0; n * points.len()];
    for (q, &t) in points.iter().enumerate() {
        l2_basis(n, t, &mut value[q * n..(q + 1) * n]);
    }
    Table1d {
        n_basis: n,
        n_points: points.len(),
        value,
        derivative: Vec::new(),
    }
}
