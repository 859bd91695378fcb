//! Reference-element polynomial spaces on the unit cube.
//!
//! Three families, all tensor products of the bases in [`shape1d`]:
//!
//! * scalar continuous space of degree `p`: dimension `(p+1)^3`, with degrees
//!   of freedom classified as vertex, edge, face or interior;
//! * scalar discontinuous space with `n` Legendre functions per axis:
//!   dimension `n^3`, orthonormal on the reference cube;
//! * vector-valued normal-trace space of degree `r`: three blocks, block `d`
//!   carrying the `d`-th vector component with a degree-`r` continuous
//!   profile along axis `d` and `r` Legendre functions across, dimension
//!   `3 (r+1) r^2`. Functions with profile index 0 or 1 along axis `d` are
//!   the face functions of the two faces normal to `d`.
//!
//! Also provides the sign/permutation rules that connect element-local edge
//! and face indices to the mesh-wide canonical ones.

pub mod shape1d;

use crate::mesh::quadrature::{Rule2d, Rule3d};
use crate::mesh::{face_axis, face_side, face_tangents, FaceOrientation};
use nalgebra::DMatrix;
use shape1d::{tabulate_h1, tabulate_l2};

/// Continuous scalar space of degree `p` on the cube.
#[derive(Debug, Clone, Copy)]
pub struct H1Space3d {
    pub p: usize,
}

/// Classification of a continuous-space basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H1DofClass {
    Vertex(usize),
    Edge { edge: usize, k: usize },
    Face { face: usize, i: usize, j: usize },
    Interior,
}

impl H1Space3d {
    pub fn dim(&self) -> usize {
        (self.p + 1).pow(3)
    }

    pub fn n_interior(&self) -> usize {
        if self.p == 0 {
            0
        } else {
            (self.p - 1).pow(3)
        }
    }

    /// Tensor indices of basis function `a` (first axis fastest).
    pub fn index(&self, a: usize) -> [usize; 3] {
        let n = self.p + 1;
        [a % n, (a / n) % n, a / (n * n)]
    }

    pub fn classify(&self, idx: [usize; 3]) -> H1DofClass {
        let high: Vec<usize> = (0..3).filter(|&d| idx[d] >= 2).collect();
        match high.len() {
            0 => H1DofClass::Vertex(idx[0] + 2 * idx[1] + 4 * idx[2]),
            1 => {
                let d = high[0];
                let [t1, t2] = face_tangents(d);
                H1DofClass::Edge {
                    edge: 4 * d + idx[t1] + 2 * idx[t2],
                    k: idx[d],
                }
            }
            2 => {
                let d = (0..3).find(|&d| idx[d] < 2).unwrap();
                let [t1, t2] = face_tangents(d);
                H1DofClass::Face {
                    face: 2 * d + idx[d],
                    i: idx[t1],
                    j: idx[t2],
                }
            }
            _ => H1DofClass::Interior,
        }
    }
}

/// Discontinuous scalar space with `n` Legendre functions per axis.
#[derive(Debug, Clone, Copy)]
pub struct L2Space3d {
    pub n: usize,
}

impl L2Space3d {
    pub fn dim(&self) -> usize {
        self.n.pow(3)
    }

    pub fn index(&self, a: usize) -> [usize; 3] {
        [a % self.n, (a / self.n) % self.n, a / (self.n * self.n)]
    }
}

/// Vector-valued normal-trace space of degree `r`.
#[derive(Debug, Clone, Copy)]
pub struct HdivSpace3d {
    pub r: usize,
}

/// Basis index inside the normal-trace space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdivIndex {
    /// Vector component / block.
    pub block: usize,
    /// Continuous-profile index along the block axis.
    pub a: usize,
    /// Legendre indices along the two transverse axes, ascending order.
    pub alpha: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdivDofClass {
    Face { face: usize, alpha: usize, beta: usize },
    Interior,
}

impl HdivSpace3d {
    pub fn block_dim(&self) -> usize {
        (self.r + 1) * self.r * self.r
    }

    pub fn dim(&self) -> usize {
        3 * self.block_dim()
    }

    pub fn n_interior(&self) -> usize {
        // Per block, profiles 2..=r are interior.
        3 * (self.r - 1) * self.r * self.r
    }

    pub fn index(&self, g: usize) -> HdivIndex {
        let bd = self.block_dim();
        let block = g / bd;
        let rem = g % bd;
        let r = self.r;
        HdivIndex {
            block,
            a: rem / (r * r),
            alpha: rem % r,
            beta: (rem / r) % r,
        }
    }

    pub fn flat(&self, idx: HdivIndex) -> usize {
        idx.block * self.block_dim() + idx.a * self.r * self.r + idx.beta * self.r + idx.alpha
    }

    pub fn classify(&self, idx: HdivIndex) -> HdivDofClass {
        if idx.a <= 1 {
            HdivDofClass::Face {
                face: 2 * idx.block + idx.a,
                alpha: idx.alpha,
                beta: idx.beta,
            }
        } else {
            HdivDofClass::Interior
        }
    }
}

/// Sign of an element-local edge function of 1D index `k` relative to the
/// canonical edge direction.
pub fn edge_dof_sign(reversed: bool, k: usize) -> f64 {
    if reversed && k % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Maps element-local face tensor indices to canonical ones.
///
/// Returns `(i_canonical, j_canonical, sign)` such that the canonical basis
/// function with those indices equals `sign` times the local function with
/// indices `(i, j)`, composed with the orientation map. Valid for any tensor
/// family whose 1D functions satisfy `f_k(1-t) = (-1)^k f_k(t)` (Legendre,
/// and the bubble part of the continuous basis).
pub fn face_dof_map(orient: FaceOrientation, i: usize, j: usize) -> (usize, usize, f64) {
    let (ic, jc) = if orient.swap { (j, i) } else { (i, j) };
    let mut sign = 1.0;
    if orient.flip[0] && ic % 2 == 1 {
        sign = -sign;
    }
    if orient.flip[1] && jc % 2 == 1 {
        sign = -sign;
    }
    (ic, jc, sign)
}

/// Tabulated continuous space on a 3D point set: values and reference
/// gradients, shape `n_points x dim`.
#[derive(Debug, Clone)]
pub struct H1Tab3d {
    pub space: H1Space3d,
    pub value: DMatrix<f64>,
    pub grad: [DMatrix<f64>; 3],
}

pub fn tabulate_h1_3d(p: usize, rule: &Rule3d) -> H1Tab3d {
    let space = H1Space3d { p };
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let t1 = tabulate_h1(p, &pts);
    let dim = space.dim();
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, dim);
    let mut grad = [
        DMatrix::zeros(nq, dim),
        DMatrix::zeros(nq, dim),
        DMatrix::zeros(nq, dim),
    ];
    for q in 0..nq {
        let (qa, qb, qc) = (q % n, (q / n) % n, q / (n * n));
        for a in 0..dim {
            let [i, j, k] = space.index(a);
            let (vi, vj, vk) = (t1.value_at(qa, i), t1.value_at(qb, j), t1.value_at(qc, k));
            let (di, dj, dk) = (
                t1.derivative_at(qa, i),
                t1.derivative_at(qb, j),
                t1.derivative_at(qc, k),
            );
            value[(q, a)] = vi * vj * vk;
            grad[0][(q, a)] = di * vj * vk;
            grad[1][(q, a)] = vi * dj * vk;
            grad[2][(q, a)] = vi * vj * dk;
        }
    }
    H1Tab3d { space, value, grad }
}

/// Tabulated discontinuous space: values only.
#[derive(Debug, Clone)]
pub struct L2Tab3d {
    pub space: L2Space3d,
    pub value: DMatrix<f64>,
}

pub fn tabulate_l2_3d(n_per_axis: usize, rule: &Rule3d) -> L2Tab3d {
    let space = L2Space3d { n: n_per_axis };
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let t1 = tabulate_l2(n_per_axis, &pts);
    let dim = space.dim();
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, dim);
    for q in 0..nq {
        let (qa, qb, qc) = (q % n, (q / n) % n, q / (n * n));
        for a in 0..dim {
            let [i, j, k] = space.index(a);
            value[(q, a)] = t1.value_at(qa, i) * t1.value_at(qb, j) * t1.value_at(qc, k);
        }
    }
    L2Tab3d { space, value }
}

/// Tabulated normal-trace space: per block, the block-component value and the
/// divergence, shape `n_points x block_dim`.
#[derive(Debug, Clone)]
pub struct HdivTab3d {
    pub space: HdivSpace3d,
    pub value: [DMatrix<f64>; 3],
    pub div: [DMatrix<f64>; 3],
}

pub fn tabulate_hdiv_3d(r: usize, rule: &Rule3d) -> HdivTab3d {
    let space = HdivSpace3d { r };
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let h1 = tabulate_h1(r, &pts);
    let l2 = tabulate_l2(r, &pts);
    let nq = rule.points.len();
    let bd = space.block_dim();
    let mut value = [
        DMatrix::zeros(nq, bd),
        DMatrix::zeros(nq, bd),
        DMatrix::zeros(nq, bd),
    ];
    let mut div = [
        DMatrix::zeros(nq, bd),
        DMatrix::zeros(nq, bd),
        DMatrix::zeros(nq, bd),
    ];
    for block in 0..3 {
        let [t1, t2] = face_tangents(block);
        for q in 0..nq {
            let qi = [q % n, (q / n) % n, q / (n * n)];
            for a in 0..=r {
                for beta in 0..r {
                    for alpha in 0..r {
                        let col = a * r * r + beta * r + alpha;
                        let prof = h1.value_at(qi[block], a);
                        let dprof = h1.derivative_at(qi[block], a);
                        let cross = l2.value_at(qi[t1], alpha) * l2.value_at(qi[t2], beta);
                        value[block][(q, col)] = prof * cross;
                        div[block][(q, col)] = dprof * cross;
                    }
                }
            }
        }
    }
    HdivTab3d { space, value, div }
}

/// Values of the continuous 3D space restricted to a local face, at 2D points
/// in the local face parameters. Shape `n_points x dim`.
pub fn tabulate_h1_3d_on_face(p: usize, local_face: usize, rule: &Rule2d) -> DMatrix<f64> {
    let space = H1Space3d { p };
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let t1 = tabulate_h1(p, &pts);
    let d = face_axis(local_face);
    let side = face_side(local_face);
    let [u1, u2] = face_tangents(d);
    // 1D values at the fixed coordinate.
    let mut vfix = vec![0.0; p + 1];
    let mut dfix = vec![0.0; p + 1];
    shape1d::h1_basis(p, side as f64, &mut vfix, &mut dfix);
    let dim = space.dim();
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, dim);
    for q in 0..nq {
        let (qa, qb) = (q % n, q / n);
        for a in 0..dim {
            let idx = space.index(a);
            value[(q, a)] =
                t1.value_at(qa, idx[u1]) * t1.value_at(qb, idx[u2]) * vfix[idx[d]];
        }
    }
    value
}

/// Outward reference flux density of the normal-trace space on a local face:
/// only functions with profile index equal to the face side are nonzero.
/// Shape `n_points x block_dim` for the block matching the face axis.
pub fn tabulate_hdiv_flux_on_face(r: usize, local_face: usize, rule: &Rule2d) -> DMatrix<f64> {
    let space = HdivSpace3d { r };
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let l2 = tabulate_l2(r, &pts);
    let side = face_side(local_face);
    let out_sign = if side == 0 { -1.0 } else { 1.0 };
    let bd = space.block_dim();
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, bd);
    for q in 0..nq {
        let (qa, qb) = (q % n, q / n);
        for beta in 0..r {
            for alpha in 0..r {
                let col = side * r * r + beta * r + alpha;
                value[(q, col)] = out_sign * l2.value_at(qa, alpha) * l2.value_at(qb, beta);
            }
        }
    }
    value
}

/// Scalar Legendre products on a face, `alpha` fastest: `n^2` functions.
pub fn tabulate_face_legendre(n_funcs: usize, rule: &Rule2d) -> DMatrix<f64> {
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let l2 = tabulate_l2(n_funcs, &pts);
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, n_funcs * n_funcs);
    for q in 0..nq {
        let (qa, qb) = (q % n, q / n);
        for beta in 0..n_funcs {
            for alpha in 0..n_funcs {
                value[(q, beta * n_funcs + alpha)] = l2.value_at(qa, alpha) * l2.value_at(qb, beta);
            }
        }
    }
    value
}

/// Scalar continuous tensor basis on a face, `(p+1)^2` functions, first
/// parameter index fastest.
pub fn tabulate_face_h1(p: usize, rule: &Rule2d) -> DMatrix<f64> {
    let n = rule.n_per_axis;
    let pts: Vec<f64> = (0..n).map(|i| rule.points[i][0]).collect();
    let t1 = tabulate_h1(p, &pts);
    let nb = p + 1;
    let nq = rule.points.len();
    let mut value = DMatrix::zeros(nq, nb * nb);
    for q in 0..nq {
        let (qa, qb) = (q % n, q / n);
        for j in 0..nb {
            for i in 0..nb {
                value[(q, j * nb + i)] = t1.value_at(qa, i) * t1.value_at(qb, j);
            }
        }
    }
    value
}
