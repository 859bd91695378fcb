//! Global skeleton unknowns and the element-column scatter.
//!
//! The skeleton carries the same unknowns regardless of which formulation an
//! element uses: three displacement components per vertex, `3(p-1)` per edge
//! and `3(p-1)^2` per face for the displacement trace, plus `3p^2` per face
//! for the traction. Element trial columns either stay element-local or map
//! onto these global unknowns with a sign fixed by the face or edge
//! orientation; adjacent elements of different formulations couple because
//! they address the same global unknowns.
//!
//! Sign conventions: a local column with scatter pair `(dof, sign)` carries
//! the coefficient `sign * u[dof]`. Traction unknowns are canonical-face
//! Legendre coefficients of the traction density (owner-outward normal,
//! reference face measure); the neighbor sees them with a flipped sign.

use crate::forms::{TrialColumn, TrialLayout};
use crate::mesh::{
    face_side, local_face_corners, local_face_edges, ElementId, FaceOrientation, Mesh,
};
use crate::spaces::{edge_dof_sign, face_dof_map, H1DofClass, H1Space3d, HdivDofClass, HdivSpace3d};

/// Numbering of the global skeleton unknowns of a mesh at trial order `p`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub p: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_faces: usize,
    pub n_global: usize,
    edge_base: usize,
    face_disp_base: usize,
    face_trac_base: usize,
}

impl DofMap {
    pub fn build(mesh: &Mesh, p: usize) -> DofMap {
        let n_vertices = mesh.vertices.len();
        let n_edges = mesh.edges.len();
        let n_faces = mesh.faces.len();
        let edge_base = 3 * n_vertices;
        let face_disp_base = edge_base + 3 * (p - 1) * n_edges;
        let face_trac_base = face_disp_base + 3 * (p - 1) * (p - 1) * n_faces;
        let n_global = face_trac_base + 3 * p * p * n_faces;
        DofMap {
            p,
            n_vertices,
            n_edges,
            n_faces,
            n_global,
            edge_base,
            face_disp_base,
            face_trac_base,
        }
    }

    #[inline]
    pub fn vertex_dof(&self, v: u32, comp: usize) -> usize {
        v as usize * 3 + comp
    }

    /// Edge unknown for bubble index `k` in `0..p-1` (canonical direction
    /// low-to-high vertex id).
    #[inline]
    pub fn edge_dof(&self, e: u32, comp: usize, k: usize) -> usize {
        let per = 3 * (self.p - 1);
        self.edge_base + e as usize * per + comp * (self.p - 1) + k
    }

    /// Face displacement unknown for canonical bubble indices `(i, j)` in
    /// `0..p-1`.
    #[inline]
    pub fn face_disp_dof(&self, f: u32, comp: usize, i: usize, j: usize) -> usize {
        let m = self.p - 1;
        self.face_disp_base + f as usize * 3 * m * m + comp * m * m + j * m + i
    }

    /// Face traction unknown for canonical Legendre indices `(a, b)` in
    /// `0..p`.
    #[inline]
    pub fn face_trac_dof(&self, f: u32, comp: usize, a: usize, b: usize) -> usize {
        let q = self.p;
        self.face_trac_base + f as usize * 3 * q * q + comp * q * q + b * q + a
    }

    /// Entity category of a global unknown, for constraint handling.
    pub fn is_traction_dof(&self, dof: usize) -> bool {
        dof >= self.face_trac_base
    }
}

/// Destination of one trial column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scatter {
    Local,
    Global { dof: usize, sign: f64 },
}

/// Scatter data of one element, in trial-column order.
#[derive(Debug, Clone)]
pub struct ElementScatter {
    pub n_trial: usize,
    pub cols: Vec<Scatter>,
    /// Column indices that stay element-local, ascending.
    pub locals: Vec<usize>,
    /// Column indices that couple to the skeleton, ascending.
    pub skel_cols: Vec<usize>,
    /// `(global dof, sign)` for each entry of `skel_cols`.
    pub skel_dofs: Vec<(usize, f64)>,
    /// Distinct global unknowns of this element, ascending.
    pub dofs_sorted: Vec<usize>,
}

/// Orientation of the element's view of local face `lf` relative to the
/// canonical (owner) parameters.
fn face_orientation(mesh: &Mesh, e: ElementId, lf: usize) -> (u32, bool, FaceOrientation) {
    let fu = mesh.elem_faces[e as usize][lf];
    if fu.is_owner {
        (fu.face, true, FaceOrientation::IDENTITY)
    } else {
        let nb = mesh.faces[fu.face as usize]
            .neighbor
            .expect("non-owner element sharing an unshared face");
        (fu.face, false, nb.orientation)
    }
}

pub fn element_scatter(
    mesh: &Mesh,
    e: ElementId,
    layout: &TrialLayout,
    dm: &DofMap,
) -> ElementScatter {
    let p = layout.p;
    let h1 = H1Space3d { p };
    let hdiv = HdivSpace3d { r: p };
    let verts = mesh.elements[e as usize].vertices;
    let edges = &mesh.elem_edges[e as usize];

    let mut cols = Vec::with_capacity(layout.n_trial);
    for col in &layout.columns {
        let scatter = match *col {
            TrialColumn::L2Sigma { .. } | TrialColumn::L2U { .. } | TrialColumn::L2Omega { .. } => {
                Scatter::Local
            }
            TrialColumn::H1U { comp, flat } => match h1.classify(h1.index(flat)) {
                H1DofClass::Interior => Scatter::Local,
                H1DofClass::Vertex(corner) => Scatter::Global {
                    dof: dm.vertex_dof(verts[corner], comp),
                    sign: 1.0,
                },
                H1DofClass::Edge { edge, k } => {
                    let eu = edges[edge];
                    Scatter::Global {
                        dof: dm.edge_dof(eu.edge, comp, k - 2),
                        sign: edge_dof_sign(eu.reversed, k),
                    }
                }
                H1DofClass::Face { face, i, j } => {
                    let (fid, _, orient) = face_orientation(mesh, e, face);
                    let (ic, jc, sign) = face_dof_map(orient, i - 2, j - 2);
                    Scatter::Global {
                        dof: dm.face_disp_dof(fid, comp, ic, jc),
                        sign,
                    }
                }
            },
            TrialColumn::HdivSigma { row, flat } => match hdiv.classify(hdiv.index(flat)) {
                HdivDofClass::Interior => Scatter::Local,
                HdivDofClass::Face { face, alpha, beta } => {
                    let (fid, is_owner, orient) = face_orientation(mesh, e, face);
                    let (ac, bc, sp) = face_dof_map(orient, alpha, beta);
                    let out_sign = if face_side(face) == 1 { 1.0 } else { -1.0 };
                    let s_ef = if is_owner { 1.0 } else { -1.0 };
                    Scatter::Global {
                        dof: dm.face_trac_dof(fid, row, ac, bc),
                        sign: out_sign * s_ef * sp,
                    }
                }
            },
            TrialColumn::TraceU { face, comp, i, j } => {
                let fe = local_face_edges(face);
                if i <= 1 && j <= 1 {
                    let corner = local_face_corners(face)[i + 2 * j];
                    Scatter::Global {
                        dof: dm.vertex_dof(verts[corner], comp),
                        sign: 1.0,
                    }
                } else if i <= 1 {
                    // Bubble along the second face parameter, at s = i.
                    let eu = edges[fe[2 + i]];
                    Scatter::Global {
                        dof: dm.edge_dof(eu.edge, comp, j - 2),
                        sign: edge_dof_sign(eu.reversed, j),
                    }
                } else if j <= 1 {
                    // Bubble along the first face parameter, at t = j.
                    let eu = edges[fe[j]];
                    Scatter::Global {
                        dof: dm.edge_dof(eu.edge, comp, i - 2),
                        sign: edge_dof_sign(eu.reversed, i),
                    }
                } else {
                    let (fid, _, orient) = face_orientation(mesh, e, face);
                    let (ic, jc, sign) = face_dof_map(orient, i - 2, j - 2);
                    Scatter::Global {
                        dof: dm.face_disp_dof(fid, comp, ic, jc),
                        sign,
                    }
                }
            }
            TrialColumn::FluxT {
                face,
                comp,
                alpha,
                beta,
            } => {
                let (fid, is_owner, orient) = face_orientation(mesh, e, face);
                let (ac, bc, sp) = face_dof_map(orient, alpha, beta);
                let s_ef = if is_owner { 1.0 } else { -1.0 };
                Scatter::Global {
                    dof: dm.face_trac_dof(fid, comp, ac, bc),
                    sign: s_ef * sp,
                }
            }
        };
        cols.push(scatter);
    }

    let mut locals = Vec::new();
    let mut skel_cols = Vec::new();
    let mut skel_dofs = Vec::new();
    for (c, s) in cols.iter().enumerate() {
        match *s {
            Scatter::Local => locals.push(c),
            Scatter::Global { dof, sign } => {
                skel_cols.push(c);
                skel_dofs.push((dof, sign));
            }
        }
    }
    let mut dofs_sorted: Vec<usize> = skel_dofs.iter().map(|&(d, _)| d).collect();
    dofs_sorted.sort_unstable();
    dofs_sorted.dedup();

    ElementScatter {
        n_trial: layout.n_trial,
        cols,
        locals,
        skel_cols,
        skel_dofs,
        dofs_sorted,
    }
}
