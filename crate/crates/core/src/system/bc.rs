//! Boundary constraints on the skeleton unknowns.
//!
//! Three kinds of boundary parts: prescribed displacement (fixes every
//! displacement unknown on the face closure), prescribed traction (fixes the
//! face's traction unknowns to Legendre moments of the traction density) and
//! a sliding clamp on an axis-aligned plane (fixes the normal displacement
//! component of the closure and the tangential traction components of the
//! face). Extra single-component vertex pins remove rigid-body modes.

use super::SystemError;
use crate::mesh::quadrature::{gauss_legendre, tensor_square};
use crate::mesh::{
    face_point_to_ref, local_edge_corners, local_face_edges, FaceTag, Mesh, PartId, VertexId,
};
use crate::spaces::shape1d;
use crate::system::dofmap::DofMap;
use nalgebra::DMatrix;
use std::collections::HashMap;

pub type DisplacementFn = Box<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;
pub type TractionFn = Box<dyn Fn([f64; 3], [f64; 3]) -> [f64; 3] + Send + Sync>;

/// Condition attached to one boundary part id.
pub enum PartBc {
    /// Displacement data as a function of the physical point.
    Displacement(DisplacementFn),
    /// Traction data as a function of the physical point and the unit
    /// outward normal.
    Traction(TractionFn),
    /// Zero normal displacement, zero tangential traction; the face normal
    /// must be axis aligned.
    NormalClamp,
}

#[derive(Default)]
pub struct BcSpec {
    pub parts: HashMap<PartId, PartBc>,
    /// `(vertex, component, value)` point constraints.
    pub pins: Vec<(VertexId, usize, f64)>,
}

/// Per-dof constraint table: `None` is free.
#[derive(Debug, Clone)]
pub struct BcTable {
    pub fixed: Vec<Option<f64>>,
}

impl BcTable {
    pub fn n_constrained(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_some()).count()
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.fixed[dof].is_none()
    }

    /// Writes the constrained values into `u` (free entries untouched).
    pub fn apply_values(&self, u: &mut nalgebra::DVector<f64>) {
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(v) = f {
                u[i] = *v;
            }
        }
    }
}

/// Builds the constraint table. `n_gauss` controls the quadrature used for
/// the traction moments and displacement projections.
pub fn build_bc_table(
    mesh: &Mesh,
    dm: &DofMap,
    spec: &BcSpec,
    n_gauss: usize,
) -> Result<BcTable, SystemError> {
    let mut fixed: Vec<Option<f64>> = vec![None; dm.n_global];

    for (fid, face) in mesh.faces.iter().enumerate() {
        let fid = fid as u32;
        let (part, kind_tag) = match face.tag {
            FaceTag::Interior | FaceTag::Interface => continue,
            FaceTag::DisplacementPart(part) => (part, "displacement"),
            FaceTag::TractionPart(part) => (part, "traction"),
            FaceTag::NormalClampPart(part) => (part, "normal_clamp"),
        };
        let bc = spec
            .parts
            .get(&part)
            .ok_or(SystemError::PartNotConfigured { part })?;
        match (bc, kind_tag) {
            (PartBc::Displacement(g), "displacement") => {
                constrain_displacement_closure(mesh, dm, fid, g, n_gauss, None, &mut fixed);
            }
            (PartBc::Traction(t), "traction") => {
                constrain_traction_face(mesh, dm, fid, t, n_gauss, None, &mut fixed);
            }
            (PartBc::NormalClamp, "normal_clamp") => {
                let sample = mesh.face_sample(fid, 0.5, 0.5);
                let axis = (0..3)
                    .find(|&d| sample.unit_normal[d].abs() > 1.0 - 1e-9)
                    .ok_or(SystemError::ClampNormalNotAxisAligned {
                        normal: sample.unit_normal,
                    })?;
                let zero_disp = |_: [f64; 3]| [0.0; 3];
                constrain_displacement_closure(
                    mesh,
                    dm,
                    fid,
                    &zero_disp,
                    n_gauss,
                    Some(axis),
                    &mut fixed,
                );
                let zero_trac = |_: [f64; 3], _: [f64; 3]| [0.0; 3];
                constrain_traction_face(
                    mesh,
                    dm,
                    fid,
                    &zero_trac,
                    n_gauss,
                    Some(axis),
                    &mut fixed,
                );
            }
            (got, _) => {
                let config = match got {
                    PartBc::Displacement(_) => "displacement",
                    PartBc::Traction(_) => "traction",
                    PartBc::NormalClamp => "normal_clamp",
                };
                return Err(SystemError::PartKindMismatch {
                    part,
                    tag: kind_tag,
                    config,
                });
            }
        }
    }

    for &(v, comp, value) in &spec.pins {
        fixed[dm.vertex_dof(v, comp)] = Some(value);
    }

    Ok(BcTable { fixed })
}

/// Fixes the displacement unknowns on the closure of boundary face `fid` to
/// the interpolant of `g`. With `only_comp`, restricts to that component
/// (sliding clamp); the closure values are vertex point values, edge bubble
/// projections and face bubble projections in reference measure.
fn constrain_displacement_closure(
    mesh: &Mesh,
    dm: &DofMap,
    fid: u32,
    g: &dyn Fn([f64; 3]) -> [f64; 3],
    n_gauss: usize,
    only_comp: Option<usize>,
    fixed: &mut [Option<f64>],
) {
    let p = dm.p;
    let face = &mesh.faces[fid as usize];
    let owner = face.owner;
    let lf = face.owner_local as usize;
    let comps: Vec<usize> = match only_comp {
        Some(c) => vec![c],
        None => vec![0, 1, 2],
    };

    // Vertices: point values.
    let corners = crate::mesh::local_face_corners(lf);
    let verts = mesh.elements[owner as usize].vertices;
    for &corner in &corners {
        let v = verts[corner];
        let val = g(mesh.vertices[v as usize]);
        for &c in &comps {
            fixed[dm.vertex_dof(v, c)] = Some(val[c]);
        }
    }
    if p == 1 {
        return;
    }

    let rule = gauss_legendre(n_gauss);
    let nb = p - 1;
    // 1D bubble values and the bubble Gram on the quadrature points.
    let mut bubble = DMatrix::zeros(rule.points.len(), nb);
    let mut lin = DMatrix::zeros(rule.points.len(), 2);
    {
        let mut v = vec![0.0; p + 1];
        let mut d = vec![0.0; p + 1];
        for (q, &t) in rule.points.iter().enumerate() {
            shape1d::h1_basis(p, t, &mut v, &mut d);
            lin[(q, 0)] = v[0];
            lin[(q, 1)] = v[1];
            for k in 0..nb {
                bubble[(q, k)] = v[k + 2];
            }
        }
    }
    let mut mass = DMatrix::zeros(nb, nb);
    for a in 0..nb {
        for b in 0..nb {
            let mut s = 0.0;
            for q in 0..rule.points.len() {
                s += rule.weights[q] * bubble[(q, a)] * bubble[(q, b)];
            }
            mass[(a, b)] = s;
        }
    }
    let mass_chol = mass.cholesky().expect("bubble mass is positive definite");

    // Edges: project the trace minus its endpoint-linear part onto bubbles,
    // in the canonical (low-to-high vertex id) parameter.
    for &le in &local_face_edges(lf) {
        let eu = mesh.elem_edges[owner as usize][le];
        let [c0, c1] = local_edge_corners(le);
        let (ref0, ref1) = (corner_ref(c0), corner_ref(c1));
        let v_lo = mesh.edges[eu.edge as usize].vertices[0];
        let v_hi = mesh.edges[eu.edge as usize].vertices[1];
        let g_lo = g(mesh.vertices[v_lo as usize]);
        let g_hi = g(mesh.vertices[v_hi as usize]);
        for &c in &comps {
            let mut rhs = nalgebra::DVector::zeros(nb);
            for (q, &t_can) in rule.points.iter().enumerate() {
                let t_loc = if eu.reversed { 1.0 - t_can } else { t_can };
                let xi = [
                    ref0[0] + t_loc * (ref1[0] - ref0[0]),
                    ref0[1] + t_loc * (ref1[1] - ref0[1]),
                    ref0[2] + t_loc * (ref1[2] - ref0[2]),
                ];
                let x = mesh.geometry_sample(owner, xi).point;
                let resid = g(x)[c] - lin[(q, 0)] * g_lo[c] - lin[(q, 1)] * g_hi[c];
                for k in 0..nb {
                    rhs[k] += rule.weights[q] * bubble[(q, k)] * resid;
                }
            }
            let coeff = mass_chol.solve(&rhs);
            for k in 0..nb {
                fixed[dm.edge_dof(eu.edge, c, k)] = Some(coeff[k]);
            }
        }
    }

    // Face interior: subtract the full edge-and-vertex part, project onto
    // the bubble tensor (canonical parameters are the owner's).
    let n_q = rule.points.len();
    let mut h1_s = DMatrix::zeros(n_q, p + 1);
    {
        let mut v = vec![0.0; p + 1];
        let mut d = vec![0.0; p + 1];
        for (q, &t) in rule.points.iter().enumerate() {
            shape1d::h1_basis(p, t, &mut v, &mut d);
            for k in 0..=p {
                h1_s[(q, k)] = v[k];
            }
        }
    }
    // Closure coefficients in the face tensor basis, from what's now fixed.
    for &c in &comps {
        // coeff[(i, j)] for i or j in {0, 1} from vertex and edge dofs.
        let mut closure = DMatrix::zeros(p + 1, p + 1);
        let set = |closure: &mut DMatrix<f64>, i: usize, j: usize, v: f64| {
            closure[(i, j)] = v;
        };
        for (k, &corner) in corners.iter().enumerate() {
            let (i, j) = (k & 1, k >> 1);
            let v = verts[corner];
            set(
                &mut closure,
                i,
                j,
                fixed[dm.vertex_dof(v, c)].unwrap_or(0.0),
            );
        }
        let fe = local_face_edges(lf);
        // Edges along the first parameter at t = 0, 1; the local face
        // parameter runs with the element axis, matching the scatter rule.
        for (slot, &le) in fe.iter().enumerate() {
            let eu = mesh.elem_edges[owner as usize][le];
            for k in 0..nb {
                let sign = crate::spaces::edge_dof_sign(eu.reversed, k + 2);
                let v = sign * fixed[dm.edge_dof(eu.edge, c, k)].unwrap_or(0.0);
                match slot {
                    0 => set(&mut closure, k + 2, 0, v),
                    1 => set(&mut closure, k + 2, 1, v),
                    2 => set(&mut closure, 0, k + 2, v),
                    _ => set(&mut closure, 1, k + 2, v),
                }
            }
        }
        let mut rhs = DMatrix::zeros(nb, nb);
        for (qs, &s) in rule.points.iter().enumerate() {
            for (qt, &t) in rule.points.iter().enumerate() {
                let xi = face_point_to_ref(lf, s, t);
                let x = mesh.geometry_sample(owner, xi).point;
                let mut closure_val = 0.0;
                for i in 0..=p {
                    for j in 0..=p {
                        if i >= 2 && j >= 2 {
                            continue;
                        }
                        closure_val += closure[(i, j)] * h1_s[(qs, i)] * h1_s[(qt, j)];
                    }
                }
                let resid = g(x)[c] - closure_val;
                let w = rule.weights[qs] * rule.weights[qt];
                for a in 0..nb {
                    for b in 0..nb {
                        rhs[(a, b)] += w * bubble[(qs, a)] * bubble[(qt, b)] * resid;
                    }
                }
            }
        }
        // Solve (M kron M) coeff = rhs as M^{-1} rhs M^{-T}.
        let tmp = mass_chol.solve(&rhs);
        let coeff = mass_chol.solve(&tmp.transpose()).transpose();
        for a in 0..nb {
            for b in 0..nb {
                fixed[dm.face_disp_dof(fid, c, a, b)] = Some(coeff[(a, b)]);
            }
        }
    }
}

/// Fixes the traction unknowns of face `fid` to the Legendre moments of the
/// prescribed traction density. With `skip_comp`, leaves that component
/// free (sliding clamp keeps the normal traction unknown).
fn constrain_traction_face(
    mesh: &Mesh,
    dm: &DofMap,
    fid: u32,
    t_fn: &dyn Fn([f64; 3], [f64; 3]) -> [f64; 3],
    n_gauss: usize,
    clamp_axis: Option<usize>,
    fixed: &mut [Option<f64>],
) {
    let p = dm.p;
    let rule = tensor_square(n_gauss);
    let mut vals = vec![[0.0; 3]; rule.points.len()];
    for (q, &[s, t]) in rule.points.iter().enumerate() {
        let fs = mesh.face_sample(fid, s, t);
        let tr = t_fn(fs.point, fs.unit_normal);
        for c in 0..3 {
            vals[q][c] = tr[c] * fs.area_scale;
        }
    }
    let mut pa = vec![0.0; p];
    let mut pb = vec![0.0; p];
    for c in 0..3 {
        match clamp_axis {
            Some(axis) if c == axis => continue,
            _ => {}
        }
        for a in 0..p {
            for b in 0..p {
                let mut moment = 0.0;
                for (q, &[s, t]) in rule.points.iter().enumerate() {
                    shape1d::l2_basis(p, s, &mut pa);
                    shape1d::l2_basis(p, t, &mut pb);
                    moment += rule.weights[q] * vals[q][c] * pa[a] * pb[b];
                }
                fixed[dm.face_trac_dof(fid, c, a, b)] = Some(moment);
            }
        }
    }
}

/// Reference coordinates of local corner `c`.
fn corner_ref(c: usize) -> [f64; 3] {
    [(c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{box_mesh, BoxMeshSpec};
    use crate::mesh::FaceTag;
    use crate::spaces::shape1d;

    fn tagged_cube(tag: FaceTag) -> Mesh {
        let mut mesh = box_mesh(
            &BoxMeshSpec {
                origin: [0.0; 3],
                size: [1.0; 3],
                cells: [1, 1, 1],
            },
            |_| 0,
        );
        mesh.retag_boundary_faces(|_, _| Some(tag));
        mesh
    }

    #[test]
    fn displacement_interpolation_reproduces_polynomial_traces() {
        let p = 3;
        let mesh = tagged_cube(FaceTag::DisplacementPart(0));
        let dm = DofMap::build(&mesh, p);
        // Trace of this cubic is in the trace space, so interpolation must
        // reproduce it exactly on every face.
        let g = |x: [f64; 3]| {
            [
                x[0] * x[0] * x[1] + 2.0 * x[2],
                x[1] * x[1] * x[1] - x[0],
                1.0 + x[0] * x[1] * x[2],
            ]
        };
        let mut parts = HashMap::new();
        parts.insert(0u16, PartBc::Displacement(Box::new(g)));
        let spec = BcSpec { parts, pins: vec![] };
        let table = build_bc_table(&mesh, &dm, &spec, p + 2).unwrap();

        // Reconstruct the trace on face 0 (x = 0 plane, params (y, z)) and
        // compare pointwise.
        let fid = mesh.elem_faces[0]
            .iter()
            .map(|fu| fu.face)
            .find(|&f| {
                let fs = mesh.face_sample(f, 0.5, 0.5);
                fs.point[0] < 1e-12
            })
            .unwrap();
        let face = &mesh.faces[fid as usize];
        assert_eq!(face.owner_local, 0);
        let mut v1 = vec![0.0; p + 1];
        let mut d1 = vec![0.0; p + 1];
        for c in 0..3 {
            for (s, t) in [(0.3, 0.7), (0.45, 0.1), (0.9, 0.85)] {
                // Closure coefficients: vertices, edges, face bubbles.
                let mut total = 0.0;
                shape1d::h1_basis(p, s, &mut v1, &mut d1);
                let vs = v1.clone();
                shape1d::h1_basis(p, t, &mut v1, &mut d1);
                let vt = v1.clone();
                let corners = crate::mesh::local_face_corners(0);
                let verts = mesh.elements[0].vertices;
                for (k, &corner) in corners.iter().enumerate() {
                    let val = table.fixed[dm.vertex_dof(verts[corner], c)].unwrap();
                    total += val * vs[k & 1] * vt[k >> 1];
                }
                for (slot, &le) in local_face_edges(0).iter().enumerate() {
                    let eu = mesh.elem_edges[0][le];
                    for k in 0..p - 1 {
                        let sign = crate::spaces::edge_dof_sign(eu.reversed, k + 2);
                        let val = sign * table.fixed[dm.edge_dof(eu.edge, c, k)].unwrap();
                        total += val
                            * match slot {
                                0 => vs[k + 2] * vt[0],
                                1 => vs[k + 2] * vt[1],
                                2 => vs[0] * vt[k + 2],
                                _ => vs[1] * vt[k + 2],
                            };
                    }
                }
                for a in 0..p - 1 {
                    for b in 0..p - 1 {
                        let val = table.fixed[dm.face_disp_dof(fid, c, a, b)].unwrap();
                        total += val * vs[a + 2] * vt[b + 2];
                    }
                }
                let x = mesh.face_sample(fid, s, t).point;
                assert!(
                    (total - g(x)[c]).abs() < 1e-12,
                    "comp {c} at ({s},{t}): {total} vs {}",
                    g(x)[c]
                );
            }
        }
    }

    #[test]
    fn traction_moments_match_analytic_values() {
        let p = 2;
        let mesh = tagged_cube(FaceTag::TractionPart(4));
        let dm = DofMap::build(&mesh, p);
        // Constant pressure: traction -q n on every face.
        let q = 2.5;
        let t = move |_x: [f64; 3], n: [f64; 3]| [-q * n[0], -q * n[1], -q * n[2]];
        let mut parts = HashMap::new();
        parts.insert(4u16, PartBc::Traction(Box::new(t)));
        let spec = BcSpec { parts, pins: vec![] };
        let table = build_bc_table(&mesh, &dm, &spec, p + 3).unwrap();
        // On the x = 1 face the outward normal is +x and the area scale is 1:
        // only the constant moment of component 0 is nonzero, value -q.
        let fid = mesh.elem_faces[0]
            .iter()
            .map(|fu| fu.face)
            .find(|&f| mesh.face_sample(f, 0.5, 0.5).point[0] > 1.0 - 1e-12)
            .unwrap();
        for c in 0..3 {
            for a in 0..p {
                for b in 0..p {
                    let got = table.fixed[dm.face_trac_dof(fid, c, a, b)].unwrap();
                    let expect = if c == 0 && a == 0 && b == 0 { -q } else { 0.0 };
                    assert!((got - expect).abs() < 1e-12, "c={c} a={a} b={b}: {got}");
                }
            }
        }
        // Displacement unknowns all stay free.
        let n_fixed = table.n_constrained();
        assert_eq!(n_fixed, 6 * 3 * p * p);
    }

    #[test]
    fn clamp_fixes_normal_displacement_and_tangential_traction() {
        let p = 2;
        let mut mesh = tagged_cube(FaceTag::DisplacementPart(0));
        // Tag only the z = 0 face as a clamp, rest displacement.
        mesh.retag_boundary_faces(|fs, tag| {
            if fs.unit_normal[2] < -0.5 {
                Some(FaceTag::NormalClampPart(7))
            } else {
                Some(tag)
            }
        });
        let dm = DofMap::build(&mesh, p);
        let zero = |_: [f64; 3]| [0.0; 3];
        let mut parts = HashMap::new();
        parts.insert(0u16, PartBc::Displacement(Box::new(zero)));
        parts.insert(7u16, PartBc::NormalClamp);
        let spec = BcSpec { parts, pins: vec![] };
        let table = build_bc_table(&mesh, &dm, &spec, p + 2).unwrap();
        let fid = mesh.elem_faces[0]
            .iter()
            .map(|fu| fu.face)
            .find(|&f| mesh.face_sample(f, 0.5, 0.5).unit_normal[2] < -0.5)
            .unwrap();
        // Tangential tractions fixed at zero, normal free.
        for a in 0..p {
            for b in 0..p {
                assert_eq!(table.fixed[dm.face_trac_dof(fid, 0, a, b)], Some(0.0));
                assert_eq!(table.fixed[dm.face_trac_dof(fid, 1, a, b)], Some(0.0));
                assert_eq!(table.fixed[dm.face_trac_dof(fid, 2, a, b)], None);
            }
        }
        // All vertex dofs are fixed here (clamp fixes component 2 and the
        // displacement faces fix everything else).
        for v in 0..mesh.vertices.len() {
            for c in 0..3 {
                assert!(table.fixed[dm.vertex_dof(v as u32, c)].is_some());
            }
        }
    }
}
