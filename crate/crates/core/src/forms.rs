//! The five broken variational formulations of linear elasticity and their
//! element-level operators.
//!
//! Each element carries one formulation. For a trial order `p` and test
//! enrichment `dp`, `element_operators` produces the rectangular form matrix
//! `B` (test by trial), the load vector, and the test-space Gram blocks from
//! which the local least-squares problem is built.
//!
//! Symmetric matrix fields are stored as six scalar components in the order
//! `(0,0) (1,1) (2,2) (0,1) (0,2) (1,2)`, where an off-diagonal component
//! `s_ab` is the coefficient of `E_ab + E_ba`. Antisymmetric fields use three
//! components ordered `(0,1) (0,2) (1,2)`, coefficients of `E_ab - E_ba`.
//! Interface displacement traces use the tensor continuous basis on the face;
//! interface tractions use orthonormal Legendre products, representing the
//! traction density with respect to the reference face measure and the
//! face-canonical normal direction.

use crate::dense;
use crate::material::{IsotropicMaterial, Mat3, MaterialError};
use crate::mesh::quadrature::{tensor_cube, tensor_square, Rule2d, Rule3d};
use crate::mesh::{face_axis, ElementId, Mesh, N_FACES};
use crate::spaces::{
    tabulate_face_h1, tabulate_face_legendre, tabulate_h1_3d, tabulate_h1_3d_on_face,
    tabulate_hdiv_3d, tabulate_hdiv_flux_on_face, tabulate_l2_3d, H1Tab3d, HdivTab3d, L2Tab3d,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symmetric component order: three diagonal entries then the off-diagonals.
pub const SYM6: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
/// Antisymmetric component order.
pub const ANT3: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// The five formulations that can be assigned per subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// First-order system tested with discontinuous fields; trial stress and
    /// displacement are globally conforming.
    Strong,
    /// All field variables discontinuous; displacement trace and traction
    /// unknowns on the skeleton.
    Ultraweak,
    /// Discontinuous stress, conforming displacement, traction unknowns.
    DualMixed,
    /// Conforming stress, discontinuous displacement and rotation,
    /// displacement trace unknowns.
    Mixed,
    /// Conforming displacement only, traction unknowns.
    Primal,
}

impl Formulation {
    pub const ALL: [Formulation; 5] = [
        Formulation::Strong,
        Formulation::Ultraweak,
        Formulation::DualMixed,
        Formulation::Mixed,
        Formulation::Primal,
    ];

    pub fn code(&self) -> char {
        match self {
            Formulation::Strong => 'S',
            Formulation::Ultraweak => 'U',
            Formulation::DualMixed => 'D',
            Formulation::Mixed => 'M',
            Formulation::Primal => 'P',
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Strong => "strong",
            Formulation::Ultraweak => "ultraweak",
            Formulation::DualMixed => "dual_mixed",
            Formulation::Mixed => "mixed",
            Formulation::Primal => "primal",
        }
    }

    /// Formulations that apply the stiffness tensor to gradients; these
    /// cannot be used with an exactly incompressible material.
    pub fn needs_compressible(&self) -> bool {
        matches!(
            self,
            Formulation::Strong | Formulation::DualMixed | Formulation::Primal
        )
    }
}

impl std::str::FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" | "S" => Ok(Formulation::Strong),
            "ultraweak" | "U" => Ok(Formulation::Ultraweak),
            "dual_mixed" | "D" => Ok(Formulation::DualMixed),
            "mixed" | "M" => Ok(Formulation::Mixed),
            "primal" | "P" => Ok(Formulation::Primal),
            other => Err(format!("unknown formulation '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("formulation {formulation:?} requires a compressible material: {source}")]
    IncompressibleMaterial {
        formulation: Formulation,
        source: MaterialError,
    },
}

/// One trial unknown of an element, in column order of the form matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialColumn {
    /// Conforming stress row `row`, basis function `flat` of the
    /// normal-trace space of degree `p`.
    HdivSigma { row: usize, flat: usize },
    /// Conforming displacement component, basis function of the continuous
    /// space of degree `p`.
    H1U { comp: usize, flat: usize },
    /// Discontinuous symmetric stress component (order as in [`SYM6`]).
    L2Sigma { comp6: usize, flat: usize },
    /// Discontinuous displacement component.
    L2U { comp: usize, flat: usize },
    /// Discontinuous rotation component (order as in [`ANT3`]).
    L2Omega { comp3: usize, flat: usize },
    /// Displacement trace on a local face: tensor indices `(i, j)` in the
    /// local face parameters.
    TraceU {
        face: usize,
        comp: usize,
        i: usize,
        j: usize,
    },
    /// Traction on a local face: Legendre indices `(alpha, beta)`.
    FluxT {
        face: usize,
        comp: usize,
        alpha: usize,
        beta: usize,
    },
}

/// Column offsets of the trial field groups; `usize::MAX` when absent.
#[derive(Debug, Clone, Copy)]
pub struct TrialOffsets {
    pub hdiv_sigma: usize,
    pub h1_u: usize,
    pub l2_sigma: usize,
    pub l2_u: usize,
    pub l2_omega: usize,
    pub trace_u: usize,
    pub flux_t: usize,
}

#[derive(Debug, Clone)]
pub struct TrialLayout {
    pub formulation: Formulation,
    pub p: usize,
    pub n_trial: usize,
    pub offsets: TrialOffsets,
    pub columns: Vec<TrialColumn>,
}

/// Dimension helpers for trial order `p`.
fn dim_h1(p: usize) -> usize {
    (p + 1).pow(3)
}

fn dim_l2(p: usize) -> usize {
    p.pow(3)
}

fn dim_hdiv(p: usize) -> usize {
    3 * (p + 1) * p * p
}

pub fn trial_layout(formulation: Formulation, p: usize) -> TrialLayout {
    const NONE: usize = usize::MAX;
    let mut offsets = TrialOffsets {
        hdiv_sigma: NONE,
        h1_u: NONE,
        l2_sigma: NONE,
        l2_u: NONE,
        l2_omega: NONE,
        trace_u: NONE,
        flux_t: NONE,
    };
    let mut columns = Vec::new();
    let mut cursor = 0usize;

    macro_rules! group {
        ($field:ident, $count:expr, $push:expr) => {{
            offsets.$field = cursor;
            let n_before = columns.len();
            $push(&mut columns);
            debug_assert_eq!(columns.len() - n_before, $count);
            cursor += $count;
        }};
    }

    let hdiv_sigma = |columns: &mut Vec<TrialColumn>| {
        for row in 0..3 {
            for flat in 0..dim_hdiv(p) {
                columns.push(TrialColumn::HdivSigma { row, flat });
            }
        }
    };
    let h1_u = |columns: &mut Vec<TrialColumn>| {
        for comp in 0..3 {
            for flat in 0..dim_h1(p) {
                columns.push(TrialColumn::H1U { comp, flat });
            }
        }
    };
    let l2_sigma = |columns: &mut Vec<TrialColumn>| {
        for comp6 in 0..6 {
            for flat in 0..dim_l2(p) {
                columns.push(TrialColumn::L2Sigma { comp6, flat });
            }
        }
    };
    let l2_u = |columns: &mut Vec<TrialColumn>| {
        for comp in 0..3 {
            for flat in 0..dim_l2(p) {
                columns.push(TrialColumn::L2U { comp, flat });
            }
        }
    };
    let l2_omega = |columns: &mut Vec<TrialColumn>| {
        for comp3 in 0..3 {
            for flat in 0..dim_l2(p) {
                columns.push(TrialColumn::L2Omega { comp3, flat });
            }
        }
    };
    let trace_u = |columns: &mut Vec<TrialColumn>| {
        for face in 0..N_FACES {
            for comp in 0..3 {
                for j in 0..=p {
                    for i in 0..=p {
                        columns.push(TrialColumn::TraceU { face, comp, i, j });
                    }
                }
            }
        }
    };
    let flux_t = |columns: &mut Vec<TrialColumn>| {
        for face in 0..N_FACES {
            for comp in 0..3 {
                for beta in 0..p {
                    for alpha in 0..p {
                        columns.push(TrialColumn::FluxT {
                            face,
                            comp,
                            alpha,
                            beta,
                        });
                    }
                }
            }
        }
    };

    match formulation {
        Formulation::Strong => {
            group!(hdiv_sigma, 3 * dim_hdiv(p), hdiv_sigma);
            group!(h1_u, 3 * dim_h1(p), h1_u);
        }
        Formulation::Ultraweak => {
            group!(l2_sigma, 6 * dim_l2(p), l2_sigma);
            group!(l2_u, 3 * dim_l2(p), l2_u);
            group!(l2_omega, 3 * dim_l2(p), l2_omega);
            group!(trace_u, N_FACES * 3 * (p + 1) * (p + 1), trace_u);
            group!(flux_t, N_FACES * 3 * p * p, flux_t);
        }
        Formulation::DualMixed => {
            group!(l2_sigma, 6 * dim_l2(p), l2_sigma);
            group!(h1_u, 3 * dim_h1(p), h1_u);
            group!(flux_t, N_FACES * 3 * p * p, flux_t);
        }
        Formulation::Mixed => {
            group!(hdiv_sigma, 3 * dim_hdiv(p), hdiv_sigma);
            group!(l2_u, 3 * dim_l2(p), l2_u);
            group!(l2_omega, 3 * dim_l2(p), l2_omega);
            group!(trace_u, N_FACES * 3 * (p + 1) * (p + 1), trace_u);
        }
        Formulation::Primal => {
            group!(h1_u, 3 * dim_h1(p), h1_u);
            group!(flux_t, N_FACES * 3 * p * p, flux_t);
        }
    }

    TrialLayout {
        formulation,
        p,
        n_trial: cursor,
        offsets,
        columns,
    }
}

/// Kind of one test-space block; blocks are uncoupled in every test norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    /// Scalar discontinuous block with the plain L2 norm.
    L2,
    /// Scalar continuous block with the full H1 norm.
    H1,
    /// One matrix row with the vector normal-trace norm.
    Hdiv,
}

/// Role of a block inside the formulation, used to place load terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestRole {
    Tau,
    V,
    W,
}

#[derive(Debug, Clone, Copy)]
pub struct TestBlockRef {
    pub kind: TestKind,
    pub role: TestRole,
    /// Norm weight of the block (2 for off-diagonal umbrella components).
    pub weight: f64,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct TestLayout {
    pub formulation: Formulation,
    /// Test family order `p + dp`.
    pub r: usize,
    pub n_test: usize,
    pub blocks: Vec<TestBlockRef>,
}

pub fn test_layout(formulation: Formulation, p: usize, dp: usize) -> TestLayout {
    let r = p + dp;
    let l2 = dim_l2(r);
    let h1 = dim_h1(r);
    let hdiv = dim_hdiv(r);
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    let mut push = |kind: TestKind, role: TestRole, weight: f64, dim: usize| {
        blocks.push(TestBlockRef {
            kind,
            role,
            weight,
            offset,
            dim,
        });
        offset += dim;
    };
    match formulation {
        Formulation::Strong => {
            for k in 0..6 {
                push(TestKind::L2, TestRole::Tau, if k < 3 { 1.0 } else { 2.0 }, l2);
            }
            for _ in 0..3 {
                push(TestKind::L2, TestRole::V, 1.0, l2);
            }
            for _ in 0..3 {
                push(TestKind::L2, TestRole::W, 2.0, l2);
            }
        }
        Formulation::Ultraweak => {
            for _ in 0..3 {
                push(TestKind::Hdiv, TestRole::Tau, 1.0, hdiv);
            }
            for _ in 0..3 {
                push(TestKind::H1, TestRole::V, 1.0, h1);
            }
        }
        Formulation::DualMixed => {
            for k in 0..6 {
                push(TestKind::L2, TestRole::Tau, if k < 3 { 1.0 } else { 2.0 }, l2);
            }
            for _ in 0..3 {
                push(TestKind::H1, TestRole::V, 1.0, h1);
            }
        }
        Formulation::Mixed => {
            for _ in 0..3 {
                push(TestKind::Hdiv, TestRole::Tau, 1.0, hdiv);
            }
            for _ in 0..3 {
                push(TestKind::L2, TestRole::V, 1.0, l2);
            }
            for _ in 0..3 {
                push(TestKind::L2, TestRole::W, 2.0, l2);
            }
        }
        Formulation::Primal => {
            for _ in 0..3 {
                push(TestKind::H1, TestRole::V, 1.0, h1);
            }
        }
    }
    TestLayout {
        formulation,
        r,
        n_test: offset,
        blocks,
    }
}

/// Reference-element tabulations shared by all elements of one
/// (formulation-set, order, rule) combination.
#[derive(Debug)]
pub struct Tabulations {
    pub p: usize,
    pub dp: usize,
    pub vol: Rule3d,
    pub face: Rule2d,
    pub h1_trial: H1Tab3d,
    pub hdiv_trial: HdivTab3d,
    pub l2_trial: L2Tab3d,
    pub h1_test: H1Tab3d,
    pub hdiv_test: HdivTab3d,
    pub l2_test: L2Tab3d,
    /// Continuous test space restricted to each local face.
    pub h1_test_face: Vec<DMatrix<f64>>,
    /// Outward reference flux of the test normal-trace space on each face.
    pub hdiv_test_flux_face: Vec<DMatrix<f64>>,
    /// Displacement-trace basis on the face parameters, `(p+1)^2` columns.
    pub trace_u_face: DMatrix<f64>,
    /// Traction basis on the face parameters, `p^2` columns.
    pub flux_t_face: DMatrix<f64>,
}

impl Tabulations {
    /// Tabulates everything needed for trial order `p`, enrichment `dp`, on
    /// `n_vol` and `n_face` Gauss points per axis.
    pub fn build(p: usize, dp: usize, n_vol: usize, n_face: usize) -> Tabulations {
        let r = p + dp;
        let vol = tensor_cube(n_vol);
        let face = tensor_square(n_face);
        let h1_test_face = (0..N_FACES)
            .map(|lf| tabulate_h1_3d_on_face(r, lf, &face))
            .collect();
        let hdiv_test_flux_face = (0..N_FACES)
            .map(|lf| tabulate_hdiv_flux_on_face(r, lf, &face))
            .collect();
        Tabulations {
            p,
            dp,
            h1_trial: tabulate_h1_3d(p, &vol),
            hdiv_trial: tabulate_hdiv_3d(p, &vol),
            l2_trial: tabulate_l2_3d(p, &vol),
            h1_test: tabulate_h1_3d(r, &vol),
            hdiv_test: tabulate_hdiv_3d(r, &vol),
            l2_test: tabulate_l2_3d(r, &vol),
            h1_test_face,
            hdiv_test_flux_face,
            trace_u_face: tabulate_face_h1(p, &face),
            flux_t_face: tabulate_face_legendre(p, &face),
            vol,
            face,
        }
    }
}

/// Test-norm Gram blocks of one element. Identical blocks are stored once:
/// all scalar L2 components share `l2` (up to the block weight), the three
/// continuous components share `h1`, the three matrix rows share `hdiv`.
#[derive(Debug, Clone)]
pub enum ScalarGram {
    /// Diagonal Gram `value * I`, valid on affine elements where the
    /// orthonormal reference basis stays orthogonal.
    Uniform { value: f64, dim: usize },
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, Default)]
pub struct GramSet {
    pub l2: Option<ScalarGram>,
    pub h1: Option<DMatrix<f64>>,
    pub hdiv: Option<DMatrix<f64>>,
}

/// Element form matrix, load vector and Gram blocks.
#[derive(Debug, Clone)]
pub struct ElementOperators {
    pub b: DMatrix<f64>,
    pub ell: DVector<f64>,
    pub gram: GramSet,
}

/// Pointwise geometry data over the volume rule.
pub(crate) struct Geo {
    pub(crate) wdet: Vec<f64>,
    pub(crate) j: Vec<Mat3>,
    pub(crate) invt: Vec<Mat3>,
    pub(crate) det: Vec<f64>,
    pub(crate) points: Vec<[f64; 3]>,
    pub(crate) affine: bool,
}

pub(crate) fn element_geometry(mesh: &Mesh, e: ElementId, rule: &Rule3d) -> Geo {
    let nq = rule.points.len();
    let mut geo = Geo {
        wdet: Vec::with_capacity(nq),
        j: Vec::with_capacity(nq),
        invt: Vec::with_capacity(nq),
        det: Vec::with_capacity(nq),
        points: Vec::with_capacity(nq),
        affine: mesh.is_affine(e),
    };
    for (q, &xi) in rule.points.iter().enumerate() {
        let g = mesh.geometry_sample(e, xi);
        geo.wdet.push(rule.weights[q] * g.det);
        geo.det.push(g.det);
        geo.j.push(g.jacobian);
        geo.invt.push(g.inv_t);
        geo.points.push(g.point);
    }
    geo
}

/// Row-scales a copy of `m` by `scale` (and `alpha`).
fn scaled_rows(m: &DMatrix<f64>, scale: &[f64], alpha: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let mut col = out.column_mut(j);
        for q in 0..col.len() {
            col[q] *= alpha * scale[q];
        }
    }
    out
}

/// Physical-space tables of a continuous space: values and gradients.
pub(crate) struct PhysH1<'a> {
    pub(crate) v: &'a DMatrix<f64>,
    pub(crate) g: [DMatrix<f64>; 3],
}

pub(crate) fn phys_h1<'a>(tab: &'a H1Tab3d, geo: &Geo) -> PhysH1<'a> {
    let (nq, nb) = tab.value.shape();
    let mut g = [
        DMatrix::zeros(nq, nb),
        DMatrix::zeros(nq, nb),
        DMatrix::zeros(nq, nb),
    ];
    for c in 0..3 {
        for j in 0..nb {
            for q in 0..nq {
                let it = &geo.invt[q];
                g[c][(q, j)] = it[(c, 0)] * tab.grad[0][(q, j)]
                    + it[(c, 1)] * tab.grad[1][(q, j)]
                    + it[(c, 2)] * tab.grad[2][(q, j)];
            }
        }
    }
    PhysH1 { v: &tab.value, g }
}

/// Physical-space tables of the normal-trace space under the contravariant
/// map: vector components and divergence, blocks concatenated.
pub(crate) struct PhysHdiv {
    pub(crate) p: [DMatrix<f64>; 3],
    pub(crate) d: DMatrix<f64>,
    pub(crate) dim: usize,
}

pub(crate) fn phys_hdiv(tab: &HdivTab3d, geo: &Geo) -> PhysHdiv {
    let bd = tab.space.block_dim();
    let dim = 3 * bd;
    let nq = tab.value[0].nrows();
    let mut p = [
        DMatrix::zeros(nq, dim),
        DMatrix::zeros(nq, dim),
        DMatrix::zeros(nq, dim),
    ];
    let mut d = DMatrix::zeros(nq, dim);
    for block in 0..3 {
        for k in 0..bd {
            let col = block * bd + k;
            for q in 0..nq {
                let vhat = tab.value[block][(q, k)];
                let inv_det = 1.0 / geo.det[q];
                for c in 0..3 {
                    p[c][(q, col)] = geo.j[q][(c, block)] * vhat * inv_det;
                }
                d[(q, col)] = tab.div[block][(q, k)] * inv_det;
            }
        }
    }
    PhysHdiv { p, d, dim }
}

/// Builds one scalar H1 Gram block (value plus gradient terms).
fn gram_h1(v: &DMatrix<f64>, g: &[DMatrix<f64>; 3], wdet: &[f64]) -> DMatrix<f64> {
    let n = v.ncols();
    let sqrt_w: Vec<f64> = wdet.iter().map(|&w| w.sqrt()).collect();
    let mut out = DMatrix::zeros(n, n);
    dense::syrk_upper_at_a(&scaled_rows(v, &sqrt_w, 1.0), &mut out);
    for gc in g {
        dense::syrk_upper_at_a(&scaled_rows(gc, &sqrt_w, 1.0), &mut out);
    }
    dense::symmetrize_from_upper(&mut out);
    out
}

/// Builds the Gram of one matrix row in the normal-trace norm.
fn gram_hdiv(ph: &PhysHdiv, wdet: &[f64]) -> DMatrix<f64> {
    let n = ph.dim;
    let sqrt_w: Vec<f64> = wdet.iter().map(|&w| w.sqrt()).collect();
    let mut out = DMatrix::zeros(n, n);
    for pc in &ph.p {
        dense::syrk_upper_at_a(&scaled_rows(pc, &sqrt_w, 1.0), &mut out);
    }
    dense::syrk_upper_at_a(&scaled_rows(&ph.d, &sqrt_w, 1.0), &mut out);
    dense::symmetrize_from_upper(&mut out);
    out
}

/// Builds the scalar L2 Gram block, diagonal on affine elements.
fn gram_l2(v: &DMatrix<f64>, geo: &Geo) -> ScalarGram {
    if geo.affine {
        ScalarGram::Uniform {
            value: geo.det[0],
            dim: v.ncols(),
        }
    } else {
        let n = v.ncols();
        let sqrt_w: Vec<f64> = geo.wdet.iter().map(|&w| w.sqrt()).collect();
        let mut out = DMatrix::zeros(n, n);
        dense::syrk_upper_at_a(&scaled_rows(v, &sqrt_w, 1.0), &mut out);
        dense::symmetrize_from_upper(&mut out);
        out.into()
    }
}

impl From<DMatrix<f64>> for ScalarGram {
    fn from(m: DMatrix<f64>) -> Self {
        ScalarGram::Dense(m)
    }
}

/// Adds `alpha * test^T trial_scaled` into `b` at the given offsets.
fn acc(
    b: &mut DMatrix<f64>,
    alpha: f64,
    test: &DMatrix<f64>,
    trial_scaled: &DMatrix<f64>,
    row0: usize,
    col0: usize,
) {
    dense::gemm_at_b_into_block(alpha, test, trial_scaled, b, row0, col0);
}

/// Adds `alpha * tab^T rhs` into `ell` starting at `row0`.
fn acc_vec(ell: &mut DVector<f64>, alpha: f64, tab: &DMatrix<f64>, rhs: &[f64], row0: usize) {
    let (nq, nb) = tab.shape();
    for jb in 0..nb {
        let mut s = 0.0;
        for q in 0..nq {
            s += tab[(q, jb)] * rhs[q];
        }
        ell[row0 + jb] += alpha * s;
    }
}

/// Assembles the form matrix, load vector and Gram blocks of one element.
pub fn element_operators(
    mesh: &Mesh,
    e: ElementId,
    material: &IsotropicMaterial,
    formulation: Formulation,
    tabs: &Tabulations,
    body_force: &dyn Fn([f64; 3]) -> [f64; 3],
) -> Result<ElementOperators, FormsError> {
    let p = tabs.p;
    let trial = trial_layout(formulation, p);
    let test = test_layout(formulation, p, tabs.dp);
    let geo = element_geometry(mesh, e, &tabs.vol);
    let nq = tabs.vol.points.len();

    let mut b = DMatrix::zeros(test.n_test, trial.n_trial);
    let mut ell = DVector::zeros(test.n_test);
    let mut gram = GramSet::default();

    // Face-rule weights used to prescale the trial-side face tables.
    let face_w = &tabs.face.weights;
    let (inv2mu, cs) = material.compliance_coefficients();
    let stiffness = material.stiffness_coefficients();

    // Body force at the physical quadrature points, scaled by w * det.
    let mut f_scaled = [vec![0.0; nq], vec![0.0; nq], vec![0.0; nq]];
    for q in 0..nq {
        let f = body_force(geo.points[q]);
        for c in 0..3 {
            f_scaled[c][q] = f[c] * geo.wdet[q];
        }
    }

    match formulation {
        Formulation::Strong => {
            let (lambda, mu) = stiffness.map_err(|source| FormsError::IncompressibleMaterial {
                formulation,
                source,
            })?;
            let tp = phys_hdiv(&tabs.hdiv_trial, &geo);
            let tu = phys_h1(&tabs.h1_trial, &geo);
            let vt = &tabs.l2_test.value;
            let nd = tp.dim;
            let nh = tu.v.ncols();
            let sp: Vec<DMatrix<f64>> =
                (0..3).map(|c| scaled_rows(&tp.p[c], &geo.wdet, 1.0)).collect();
            let sd = scaled_rows(&tp.d, &geo.wdet, 1.0);
            let sg: Vec<DMatrix<f64>> =
                (0..3).map(|c| scaled_rows(&tu.g[c], &geo.wdet, 1.0)).collect();
            let off_s = trial.offsets.hdiv_sigma;
            let off_u = trial.offsets.h1_u;
            for (k6, &(a, bb)) in SYM6.iter().enumerate() {
                let row0 = test.blocks[k6].offset;
                if a == bb {
                    // (sigma, tau) diagonal entry a a.
                    acc(&mut b, 1.0, vt, &sp[a], row0, off_s + a * nd);
                    // -(stiffness gradient, tau): lambda div u + 2 mu d_a u_a.
                    for c in 0..3 {
                        acc(&mut b, -lambda, vt, &sg[c], row0, off_u + c * nh);
                    }
                    acc(&mut b, -2.0 * mu, vt, &sg[a], row0, off_u + a * nh);
                } else {
                    // (sigma, tau) off-diagonal pair: sigma_ab + sigma_ba.
                    acc(&mut b, 1.0, vt, &sp[bb], row0, off_s + a * nd);
                    acc(&mut b, 1.0, vt, &sp[a], row0, off_s + bb * nd);
                    // -2 mu (d_a u_b + d_b u_a).
                    acc(&mut b, -2.0 * mu, vt, &sg[a], row0, off_u + bb * nh);
                    acc(&mut b, -2.0 * mu, vt, &sg[bb], row0, off_u + a * nh);
                }
            }
            for c in 0..3 {
                let row0 = test.blocks[6 + c].offset;
                // -(div sigma, v).
                acc(&mut b, -1.0, vt, &sd, row0, off_s + c * nd);
                acc_vec(&mut ell, 1.0, vt, &f_scaled[c], row0);
            }
            for (k3, &(a, bb)) in ANT3.iter().enumerate() {
                let row0 = test.blocks[9 + k3].offset;
                // (sigma, w): sigma_ab - sigma_ba.
                acc(&mut b, 1.0, vt, &sp[bb], row0, off_s + a * nd);
                acc(&mut b, -1.0, vt, &sp[a], row0, off_s + bb * nd);
            }
            gram.l2 = Some(gram_l2(vt, &geo));
        }
        Formulation::Ultraweak => {
            let ts = phys_hdiv(&tabs.hdiv_test, &geo);
            let tv = phys_h1(&tabs.h1_test, &geo);
            let vl = &tabs.l2_trial.value;
            let sv = scaled_rows(vl, &geo.wdet, 1.0);
            let nl = vl.ncols();
            let bd = tabs.hdiv_test.space.block_dim();
            let off_s = trial.offsets.l2_sigma;
            let off_u = trial.offsets.l2_u;
            let off_w = trial.offsets.l2_omega;
            let off_tr = trial.offsets.trace_u;
            let off_fx = trial.offsets.flux_t;
            for r in 0..3 {
                let row0 = test.blocks[r].offset;
                // (compliance sigma, tau).
                for (k6, &(a, bb)) in SYM6.iter().enumerate() {
                    let col0 = off_s + k6 * nl;
                    if a == bb {
                        if r == a {
                            acc(&mut b, inv2mu, &ts.p[a], &sv, row0, col0);
                        }
                        acc(&mut b, -cs, &ts.p[r], &sv, row0, col0);
                    } else {
                        if r == a {
                            acc(&mut b, inv2mu, &ts.p[bb], &sv, row0, col0);
                        }
                        if r == bb {
                            acc(&mut b, inv2mu, &ts.p[a], &sv, row0, col0);
                        }
                    }
                }
                // (omega, tau).
                for (k3, &(a, bb)) in ANT3.iter().enumerate() {
                    let col0 = off_w + k3 * nl;
                    if r == a {
                        acc(&mut b, 1.0, &ts.p[bb], &sv, row0, col0);
                    }
                    if r == bb {
                        acc(&mut b, -1.0, &ts.p[a], &sv, row0, col0);
                    }
                }
                // (u, div tau).
                acc(&mut b, 1.0, &ts.d, &sv, row0, off_u + r * nl);
            }
            for c in 0..3 {
                let row0 = test.blocks[3 + c].offset;
                // (sigma, grad v).
                for (k6, &(a, bb)) in SYM6.iter().enumerate() {
                    let col0 = off_s + k6 * nl;
                    if a == bb {
                        if c == a {
                            acc(&mut b, 1.0, &tv.g[a], &sv, row0, col0);
                        }
                    } else {
                        if c == a {
                            acc(&mut b, 1.0, &tv.g[bb], &sv, row0, col0);
                        }
                        if c == bb {
                            acc(&mut b, 1.0, &tv.g[a], &sv, row0, col0);
                        }
                    }
                }
                acc_vec(&mut ell, 1.0, tv.v, &f_scaled[c], row0);
            }
            // Face pairings.
            let n_tr = (p + 1) * (p + 1);
            let n_fx = p * p;
            let s_trace = scaled_rows(&tabs.trace_u_face, face_w, 1.0);
            let s_flux = scaled_rows(&tabs.flux_t_face, face_w, 1.0);
            for lf in 0..N_FACES {
                let d = face_axis(lf);
                for r in 0..3 {
                    // -<trace u, tau normal>: only block d of the test space.
                    let row0 = test.blocks[r].offset + d * bd;
                    let col0 = off_tr + (lf * 3 + r) * n_tr;
                    acc(
                        &mut b,
                        -1.0,
                        &tabs.hdiv_test_flux_face[lf],
                        &s_trace,
                        row0,
                        col0,
                    );
                }
                for c in 0..3 {
                    // -<traction, v>.
                    let row0 = test.blocks[3 + c].offset;
                    let col0 = off_fx + (lf * 3 + c) * n_fx;
                    acc(&mut b, -1.0, &tabs.h1_test_face[lf], &s_flux, row0, col0);
                }
            }
            gram.hdiv = Some(gram_hdiv(&ts, &geo.wdet));
            gram.h1 = Some(gram_h1(tv.v, &tv.g, &geo.wdet));
        }
        Formulation::DualMixed => {
            let (lambda, mu) = stiffness.map_err(|source| FormsError::IncompressibleMaterial {
                formulation,
                source,
            })?;
            let tu = phys_h1(&tabs.h1_trial, &geo);
            let tv = phys_h1(&tabs.h1_test, &geo);
            let vt = &tabs.l2_test.value;
            let vl = &tabs.l2_trial.value;
            let sv = scaled_rows(vl, &geo.wdet, 1.0);
            let sg: Vec<DMatrix<f64>> =
                (0..3).map(|c| scaled_rows(&tu.g[c], &geo.wdet, 1.0)).collect();
            let nl = vl.ncols();
            let nh = tu.v.ncols();
            let off_s = trial.offsets.l2_sigma;
            let off_u = trial.offsets.h1_u;
            let off_fx = trial.offsets.flux_t;
            for (k6, &(a, bb)) in SYM6.iter().enumerate() {
                let row0 = test.blocks[k6].offset;
                let col0 = off_s + k6 * nl;
                // (sigma, tau): diagonal in the component index.
                let factor = if a == bb { 1.0 } else { 2.0 };
                acc(&mut b, factor, vt, &sv, row0, col0);
                // -(stiffness gradient, tau), as in the first-order system.
                if a == bb {
                    for c in 0..3 {
                        acc(&mut b, -lambda, vt, &sg[c], row0, off_u + c * nh);
                    }
                    acc(&mut b, -2.0 * mu, vt, &sg[a], row0, off_u + a * nh);
                } else {
                    acc(&mut b, -2.0 * mu, vt, &sg[a], row0, off_u + bb * nh);
                    acc(&mut b, -2.0 * mu, vt, &sg[bb], row0, off_u + a * nh);
                }
            }
            for c in 0..3 {
                let row0 = test.blocks[6 + c].offset;
                // (sigma, grad v).
                for (k6, &(a, bb)) in SYM6.iter().enumerate() {
                    let col0 = off_s + k6 * nl;
                    if a == bb {
                        if c == a {
                            acc(&mut b, 1.0, &tv.g[a], &sv, row0, col0);
                        }
                    } else {
                        if c == a {
                            acc(&mut b, 1.0, &tv.g[bb], &sv, row0, col0);
                        }
                        if c == bb {
                            acc(&mut b, 1.0, &tv.g[a], &sv, row0, col0);
                        }
                    }
                }
                acc_vec(&mut ell, 1.0, tv.v, &f_scaled[c], row0);
            }
            let n_fx = p * p;
            let s_flux = scaled_rows(&tabs.flux_t_face, face_w, 1.0);
            for lf in 0..N_FACES {
                for c in 0..3 {
                    let row0 = test.blocks[6 + c].offset;
                    let col0 = off_fx + (lf * 3 + c) * n_fx;
                    acc(&mut b, -1.0, &tabs.h1_test_face[lf], &s_flux, row0, col0);
                }
            }
            gram.l2 = Some(gram_l2(vt, &geo));
            gram.h1 = Some(gram_h1(tv.v, &tv.g, &geo.wdet));
        }
        Formulation::Mixed => {
            let tp = phys_hdiv(&tabs.hdiv_trial, &geo);
            let ts = phys_hdiv(&tabs.hdiv_test, &geo);
            let vt = &tabs.l2_test.value;
            let vl = &tabs.l2_trial.value;
            let sv = scaled_rows(vl, &geo.wdet, 1.0);
            let sp: Vec<DMatrix<f64>> =
                (0..3).map(|c| scaled_rows(&tp.p[c], &geo.wdet, 1.0)).collect();
            let sd = scaled_rows(&tp.d, &geo.wdet, 1.0);
            let nd = tp.dim;
            let nl = vl.ncols();
            let bd = tabs.hdiv_test.space.block_dim();
            let off_s = trial.offsets.hdiv_sigma;
            let off_u = trial.offsets.l2_u;
            let off_w = trial.offsets.l2_omega;
            let off_tr = trial.offsets.trace_u;
            let quarter_mu = 0.5 * inv2mu;
            for r in 0..3 {
                let row0 = test.blocks[r].offset;
                for a in 0..3 {
                    let col0 = off_s + a * nd;
                    // (compliance sigma, tau) for row fields.
                    if a == r {
                        for c in 0..3 {
                            acc(&mut b, quarter_mu, &ts.p[c], &sp[c], row0, col0);
                        }
                    }
                    acc(&mut b, quarter_mu, &ts.p[a], &sp[r], row0, col0);
                    acc(&mut b, -cs, &ts.p[r], &sp[a], row0, col0);
                }
                // (omega, tau).
                for (k3, &(a, bb)) in ANT3.iter().enumerate() {
                    let col0 = off_w + k3 * nl;
                    if r == a {
                        acc(&mut b, 1.0, &ts.p[bb], &sv, row0, col0);
                    }
                    if r == bb {
                        acc(&mut b, -1.0, &ts.p[a], &sv, row0, col0);
                    }
                }
                // (u, div tau).
                acc(&mut b, 1.0, &ts.d, &sv, row0, off_u + r * nl);
            }
            for c in 0..3 {
                let row0 = test.blocks[3 + c].offset;
                // -(div sigma, v).
                acc(&mut b, -1.0, vt, &sd, row0, off_s + c * nd);
                acc_vec(&mut ell, 1.0, vt, &f_scaled[c], row0);
            }
            for (k3, &(a, bb)) in ANT3.iter().enumerate() {
                let row0 = test.blocks[6 + k3].offset;
                // (sigma, w).
                acc(&mut b, 1.0, vt, &sp[bb], row0, off_s + a * nd);
                acc(&mut b, -1.0, vt, &sp[a], row0, off_s + bb * nd);
            }
            let n_tr = (p + 1) * (p + 1);
            let s_trace = scaled_rows(&tabs.trace_u_face, face_w, 1.0);
            for lf in 0..N_FACES {
                let d = face_axis(lf);
                for r in 0..3 {
                    let row0 = test.blocks[r].offset + d * bd;
                    let col0 = off_tr + (lf * 3 + r) * n_tr;
                    acc(
                        &mut b,
                        -1.0,
                        &tabs.hdiv_test_flux_face[lf],
                        &s_trace,
                        row0,
                        col0,
                    );
                }
            }
            gram.hdiv = Some(gram_hdiv(&ts, &geo.wdet));
            gram.l2 = Some(gram_l2(vt, &geo));
        }
        Formulation::Primal => {
            let (lambda, mu) = stiffness.map_err(|source| FormsError::IncompressibleMaterial {
                formulation,
                source,
            })?;
            let tu = phys_h1(&tabs.h1_trial, &geo);
            let tv = phys_h1(&tabs.h1_test, &geo);
            let sg: Vec<DMatrix<f64>> =
                (0..3).map(|c| scaled_rows(&tu.g[c], &geo.wdet, 1.0)).collect();
            let nh = tu.v.ncols();
            let off_u = trial.offsets.h1_u;
            let off_fx = trial.offsets.flux_t;
            for e_c in 0..3 {
                let row0 = test.blocks[e_c].offset;
                for c in 0..3 {
                    let col0 = off_u + c * nh;
                    // (stiffness grad u, grad v) componentwise.
                    acc(&mut b, lambda, &tv.g[e_c], &sg[c], row0, col0);
                    acc(&mut b, mu, &tv.g[c], &sg[e_c], row0, col0);
                    if e_c == c {
                        for dd in 0..3 {
                            acc(&mut b, mu, &tv.g[dd], &sg[dd], row0, col0);
                        }
                    }
                }
                acc_vec(&mut ell, 1.0, tv.v, &f_scaled[e_c], row0);
            }
            let n_fx = p * p;
            let s_flux = scaled_rows(&tabs.flux_t_face, face_w, 1.0);
            for lf in 0..N_FACES {
                for c in 0..3 {
                    let row0 = test.blocks[c].offset;
                    let col0 = off_fx + (lf * 3 + c) * n_fx;
                    acc(&mut b, -1.0, &tabs.h1_test_face[lf], &s_flux, row0, col0);
                }
            }
            gram.h1 = Some(gram_h1(tv.v, &tv.g, &geo.wdet));
        }
    }

    Ok(ElementOperators { b, ell, gram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::IsotropicMaterial;
    use crate::mesh::generate::{box_mesh, BoxMeshSpec};
    use crate::mesh::quadrature::tensor_cube;
    use crate::spaces::{H1Space3d, HdivSpace3d};

    fn unit_cube() -> Mesh {
        box_mesh(
            &BoxMeshSpec {
                origin: [0.0, 0.0, 0.0],
                size: [1.0, 1.0, 1.0],
                cells: [1, 1, 1],
            },
            |_| 0,
        )
    }

    fn zero_force(_: [f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }

    #[test]
    fn layout_dimensions_match_closed_forms() {
        for p in 1..=3 {
            let nl = p * p * p;
            let nh = (p + 1) * (p + 1) * (p + 1);
            let nd = 3 * (p + 1) * p * p;
            let cases = [
                (Formulation::Strong, 3 * nd + 3 * nh),
                (
                    Formulation::Ultraweak,
                    12 * nl + 18 * (p + 1) * (p + 1) + 18 * p * p,
                ),
                (Formulation::DualMixed, 6 * nl + 3 * nh + 18 * p * p),
                (
                    Formulation::Mixed,
                    3 * nd + 6 * nl + 18 * (p + 1) * (p + 1),
                ),
                (Formulation::Primal, 3 * nh + 18 * p * p),
            ];
            for (form, expect) in cases {
                let layout = trial_layout(form, p);
                assert_eq!(layout.n_trial, expect, "{form:?} p={p}");
                assert_eq!(layout.columns.len(), expect);
            }
            let dp = 1;
            let r = p + dp;
            let tl = test_layout(Formulation::Ultraweak, p, dp);
            assert_eq!(tl.n_test, 9 * (r + 1) * r * r + 3 * (r + 1).pow(3));
        }
        // The single-element example: order 1, all-discontinuous element has
        // 12 field unknowns plus 72 trace and 18 traction columns.
        let layout = trial_layout(Formulation::Ultraweak, 1);
        assert_eq!(layout.n_trial, 102);
    }

    /// Evaluates `d^T B c` where `c`, `d` select simple polynomial fields.
    fn pairing(
        b: &DMatrix<f64>,
        c: &nalgebra::DVector<f64>,
        d: &nalgebra::DVector<f64>,
    ) -> f64 {
        (d.transpose() * b * c)[(0, 0)]
    }

    /// Coefficient vector of the continuous-space function `x_axis` (linear
    /// coordinate) for one displacement component.
    fn h1_linear_coeffs(p: usize, axis: usize, comp: usize, offset: usize, n: usize) -> DVector<f64> {
        let space = H1Space3d { p };
        let mut v = DVector::zeros(n);
        for flat in 0..space.dim() {
            let idx = space.index(flat);
            // Product of l_1 along `axis` and (l_0 + l_1) across: include all
            // vertex functions whose index along `axis` is 1.
            if idx[axis] == 1 && (0..3).all(|d| d == axis || idx[d] <= 1) {
                v[offset + comp * space.dim() + flat] = 1.0;
            }
        }
        v
    }

    #[test]
    fn primal_form_reproduces_stiffness_integrals() {
        let mesh = unit_cube();
        let mat = IsotropicMaterial::from_lame(2.0, 3.0).unwrap();
        let p = 1;
        let dp = 1;
        let tabs = Tabulations::build(p, dp, p + dp + 2, p + dp + 2);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Primal, &tabs, &zero_force)
            .unwrap();
        let trial = trial_layout(Formulation::Primal, p);
        let test = test_layout(Formulation::Primal, p, dp);
        // u = x e0, v = x e0: integral of (lambda + 2 mu).
        let c = h1_linear_coeffs(p, 0, 0, trial.offsets.h1_u, trial.n_trial);
        let mut d = DVector::zeros(test.n_test);
        let test_space = H1Space3d { p: p + dp };
        for flat in 0..test_space.dim() {
            let idx = test_space.index(flat);
            if idx[0] == 1 && idx[1] <= 1 && idx[2] <= 1 {
                d[test.blocks[0].offset + flat] = 1.0;
            }
        }
        assert!((pairing(&ops.b, &c, &d) - (2.0 + 2.0 * 3.0)).abs() < 1e-12);
        // u = x e0 against v = y e1: integral of lambda.
        let mut d2 = DVector::zeros(test.n_test);
        for flat in 0..test_space.dim() {
            let idx = test_space.index(flat);
            if idx[1] == 1 && idx[0] <= 1 && idx[2] <= 1 {
                d2[test.blocks[1].offset + flat] = 1.0;
            }
        }
        assert!((pairing(&ops.b, &c, &d2) - 2.0).abs() < 1e-12);
        // u = y e0 against v = x e1: integral of mu (shear coupling).
        let c3 = h1_linear_coeffs(p, 1, 0, trial.offsets.h1_u, trial.n_trial);
        let mut d3 = DVector::zeros(test.n_test);
        for flat in 0..test_space.dim() {
            let idx = test_space.index(flat);
            if idx[0] == 1 && idx[1] <= 1 && idx[2] <= 1 {
                d3[test.blocks[1].offset + flat] = 1.0;
            }
        }
        assert!((pairing(&ops.b, &c3, &d3) - 3.0).abs() < 1e-12);
        // u = y e0 against v = y e1 has no energy pairing at all.
        assert!(pairing(&ops.b, &c3, &d2).abs() < 1e-12);
    }

    #[test]
    fn ultraweak_volume_terms_match_hand_integrals() {
        let mesh = unit_cube();
        let mat = IsotropicMaterial::from_lame(2.0, 3.0).unwrap();
        let (p, dp) = (1, 1);
        let tabs = Tabulations::build(p, dp, p + dp + 2, p + dp + 2);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Ultraweak, &tabs, &zero_force)
            .unwrap();
        let trial = trial_layout(Formulation::Ultraweak, p);
        let test = test_layout(Formulation::Ultraweak, p, dp);
        let r = p + dp;
        let hdiv = HdivSpace3d { r };

        // u = e0 (constant), tau = row 0 = x e0: (u, div tau) = 1.
        let mut c = DVector::zeros(trial.n_trial);
        c[trial.offsets.l2_u] = 1.0; // first Legendre function is 1
        let mut d = DVector::zeros(test.n_test);
        // tau row 0, block 0 function with profile l_1 (a=1), constant cross.
        let flat = hdiv.flat(crate::spaces::HdivIndex {
            block: 0,
            a: 1,
            alpha: 0,
            beta: 0,
        });
        d[test.blocks[0].offset + flat] = 1.0;
        assert!((pairing(&ops.b, &c, &d) - 1.0).abs() < 1e-12);

        // sigma = identity matrix (diagonal components 1): compliance gives
        // (1/(2mu) - 3 c_s) tr part; against tau = x e0 row 0:
        // (S sigma)_00 * div-free pairing: integral of (S sigma) : tau.
        let mut c2 = DVector::zeros(trial.n_trial);
        for k in 0..3 {
            c2[trial.offsets.l2_sigma + k * dim_l2(p)] = 1.0;
        }
        // S sigma = ((1/2mu) - 3 cs) I; tau = x e0 has only component 00
        // nonzero with value x... (S sigma, tau) = ((1/2mu)-3cs) * 1/2.
        let (inv2mu, cs) = mat.compliance_coefficients();
        let expect = (inv2mu - 3.0 * cs) * 0.5;
        assert!((pairing(&ops.b, &c2, &d) - expect).abs() < 1e-12);

        // omega = E01 - E10, tau = x e0: (omega, tau) = integral omega_01
        // tau_01 = 0 since tau has only comp 00. Use tau row 0 = x e1 block 1
        // ... instead pick tau = y e0? Block 0 carries component 0 only, so
        // use tau row 0 with block 1: component 1 profile along axis 1.
        let mut d3 = DVector::zeros(test.n_test);
        let flat3 = hdiv.flat(crate::spaces::HdivIndex {
            block: 1,
            a: 1,
            alpha: 0,
            beta: 0,
        });
        d3[test.blocks[0].offset + flat3] = 1.0; // tau = y e1 in row 0
        let mut c3 = DVector::zeros(trial.n_trial);
        c3[trial.offsets.l2_omega] = 1.0; // omega_01 = 1
        // (omega, tau) with omega = E01 - E10: entry (0,1) pairs tau row 0
        // component 1 = y: integral = 1/2.
        assert!((pairing(&ops.b, &c3, &d3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn face_pairings_have_outward_signs() {
        let mesh = unit_cube();
        let mat = IsotropicMaterial::incompressible_from_shear(1.0).unwrap();
        let (p, dp) = (1, 1);
        let tabs = Tabulations::build(p, dp, p + dp + 2, p + dp + 2);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Ultraweak, &tabs, &zero_force)
            .unwrap();
        let trial = trial_layout(Formulation::Ultraweak, p);
        let test = test_layout(Formulation::Ultraweak, p, dp);
        let r = p + dp;
        let hdiv = HdivSpace3d { r };
        let test_h1 = H1Space3d { p: r };

        // Trace u = e0 on local face 0 (xi_0 = 0) against tau row 0 whose
        // outward flux on that face is -1: -<u, tau n> = +1.
        let mut c = DVector::zeros(trial.n_trial);
        let n_tr = (p + 1) * (p + 1);
        for k in 0..n_tr {
            c[trial.offsets.trace_u + 0 * n_tr * 3 + 0 * n_tr + k] = 1.0;
        }
        let mut d = DVector::zeros(test.n_test);
        let flat = hdiv.flat(crate::spaces::HdivIndex {
            block: 0,
            a: 0,
            alpha: 0,
            beta: 0,
        });
        d[test.blocks[0].offset + flat] = 1.0;
        assert!((pairing(&ops.b, &c, &d) - 1.0).abs() < 1e-12);

        // Same trace on local face 1 (xi_0 = 1) against the a=1 function
        // whose outward flux there is +1: -<u, tau n> = -1. The a=1 profile
        // also has interior divergence pairing with u, which is zero here
        // since the volume trace coefficients are zero.
        let mut c2 = DVector::zeros(trial.n_trial);
        for k in 0..n_tr {
            c2[trial.offsets.trace_u + 1 * n_tr * 3 + 0 * n_tr + k] = 1.0;
        }
        let mut d2 = DVector::zeros(test.n_test);
        let flat2 = hdiv.flat(crate::spaces::HdivIndex {
            block: 0,
            a: 1,
            alpha: 0,
            beta: 0,
        });
        d2[test.blocks[0].offset + flat2] = 1.0;
        assert!((pairing(&ops.b, &c2, &d2) + 1.0).abs() < 1e-12);

        // Traction t = e2 on local face 5 (xi_2 = 1) against v = e2 constant:
        // -<t, v> = -1.
        let mut c3 = DVector::zeros(trial.n_trial);
        c3[trial.offsets.flux_t + (5 * 3 + 2) * p * p] = 1.0;
        let mut d3 = DVector::zeros(test.n_test);
        for flat in 0..test_h1.dim() {
            let idx = test_h1.index(flat);
            if idx.iter().all(|&i| i <= 1) {
                d3[test.blocks[5].offset + flat] = 1.0;
            }
        }
        assert!((pairing(&ops.b, &c3, &d3) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_form_annihilates_exact_polynomial_pairs() {
        // With sigma = stiffness applied to grad u for a linear u, the first
        // equation rows of the form vanish for every test function.
        let mesh = unit_cube();
        let mat = IsotropicMaterial::from_lame(2.0, 3.0).unwrap();
        let (p, dp) = (1, 1);
        let tabs = Tabulations::build(p, dp, p + dp + 2, p + dp + 2);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Strong, &tabs, &zero_force)
            .unwrap();
        let trial = trial_layout(Formulation::Strong, p);
        // u = x e0: stress = lambda I + 2 mu E00 = diag(l+2m, l, l).
        let mut c = h1_linear_coeffs(p, 0, 0, trial.offsets.h1_u, trial.n_trial);
        let hdiv = HdivSpace3d { r: p };
        let sig = [2.0 + 2.0 * 3.0, 2.0, 2.0];
        for row in 0..3 {
            // Constant field e_row * sig[row]: block `row`, profile l_0+l_1.
            for a in 0..2 {
                let flat = hdiv.flat(crate::spaces::HdivIndex {
                    block: row,
                    a,
                    alpha: 0,
                    beta: 0,
                });
                c[trial.offsets.hdiv_sigma + row * hdiv.dim() + flat] = sig[row];
            }
        }
        let bc = &ops.b * &c;
        assert!(bc.amax() < 1e-11, "residual rows should vanish, got {}", bc.amax());
    }

    #[test]
    fn gram_blocks_match_brute_force() {
        // Use a skewed (non-affine) element so every geometric term matters.
        let mut mesh = unit_cube();
        mesh.vertices[7] = [1.3, 1.2, 1.4];
        let mat = IsotropicMaterial::from_lame(1.0, 1.0).unwrap();
        let (p, dp) = (1, 1);
        let tabs = Tabulations::build(p, dp, 4, 4);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Ultraweak, &tabs, &zero_force)
            .unwrap();
        let gram_h = ops.gram.h1.as_ref().unwrap();
        let gram_d = ops.gram.hdiv.as_ref().unwrap();

        let rule = tensor_cube(4);
        let r = p + dp;
        let h1tab = tabulate_h1_3d(r, &rule);
        let dvtab = tabulate_hdiv_3d(r, &rule);
        let nh = h1tab.space.dim();
        let bd = dvtab.space.block_dim();
        let mut brute_h = DMatrix::<f64>::zeros(nh, nh);
        let mut brute_d = DMatrix::<f64>::zeros(3 * bd, 3 * bd);
        for (q, &xi) in rule.points.iter().enumerate() {
            let g = mesh.geometry_sample(0, xi);
            let w = rule.weights[q] * g.det;
            for i in 0..nh {
                for j in 0..nh {
                    let mut dot = h1tab.value[(q, i)] * h1tab.value[(q, j)];
                    for c in 0..3 {
                        let gi: f64 = (0..3)
                            .map(|k| g.inv_t[(c, k)] * h1tab.grad[k][(q, i)])
                            .sum();
                        let gj: f64 = (0..3)
                            .map(|k| g.inv_t[(c, k)] * h1tab.grad[k][(q, j)])
                            .sum();
                        dot += gi * gj;
                    }
                    brute_h[(i, j)] += w * dot;
                }
            }
            for bi in 0..3 {
                for ki in 0..bd {
                    for bj in 0..3 {
                        for kj in 0..bd {
                            let vi = dvtab.value[bi][(q, ki)];
                            let vj = dvtab.value[bj][(q, kj)];
                            let mut dot = 0.0;
                            for c in 0..3 {
                                dot += (g.jacobian[(c, bi)] * vi / g.det)
                                    * (g.jacobian[(c, bj)] * vj / g.det);
                            }
                            dot += (dvtab.div[bi][(q, ki)] / g.det)
                                * (dvtab.div[bj][(q, kj)] / g.det);
                            brute_d[(bi * bd + ki, bj * bd + kj)] += w * dot;
                        }
                    }
                }
            }
        }
        assert!((gram_h - &brute_h).abs().max() < 1e-11);
        assert!((gram_d - &brute_d).abs().max() < 1e-11);
    }

    #[test]
    fn l2_gram_is_uniform_on_affine_elements_only() {
        let mesh = unit_cube();
        let mat = IsotropicMaterial::from_lame(1.0, 1.0).unwrap();
        let tabs = Tabulations::build(1, 1, 4, 4);
        let ops = element_operators(&mesh, 0, &mat, Formulation::Strong, &tabs, &zero_force)
            .unwrap();
        match ops.gram.l2.as_ref().unwrap() {
            ScalarGram::Uniform { value, dim } => {
                assert!((value - 1.0).abs() < 1e-14);
                assert_eq!(*dim, 8);
            }
            ScalarGram::Dense(_) => panic!("expected the diagonal fast path"),
        }

        let mut skew = unit_cube();
        skew.vertices[7] = [1.5, 1.5, 1.5];
        let ops2 = element_operators(&skew, 0, &mat, Formulation::Strong, &tabs, &zero_force)
            .unwrap();
        assert!(matches!(
            ops2.gram.l2.as_ref().unwrap(),
            ScalarGram::Dense(_)
        ));
    }

    #[test]
    fn incompressible_material_rejected_for_gradient_formulations() {
        let mesh = unit_cube();
        let mat = IsotropicMaterial::incompressible_from_shear(1.0).unwrap();
        let tabs = Tabulations::build(1, 1, 4, 4);
        for form in [Formulation::Strong, Formulation::DualMixed, Formulation::Primal] {
            let out = element_operators(&mesh, 0, &mat, form, &tabs, &zero_force);
            assert!(matches!(out, Err(FormsError::IncompressibleMaterial { .. })));
        }
        for form in [Formulation::Ultraweak, Formulation::Mixed] {
            assert!(element_operators(&mesh, 0, &mat, form, &tabs, &zero_force).is_ok());
        }
    }
}
