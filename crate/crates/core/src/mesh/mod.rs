//! Hexahedral meshes with full face/edge connectivity.
//!
//! Reference element is the unit cube `[0, 1]^3`. Local numbering:
//!
//! * corners: `c = b0 + 2*b1 + 4*b2` where `b_i` is the reference coordinate
//!   of the corner along axis `i`;
//! * faces: `f = 2*axis + side` for the face at `xi_axis = side`, with face
//!   parameters running along the two remaining axes in ascending order;
//! * edges: `e = 4*axis + t1 + 2*t2` for the edge along `axis` with the two
//!   remaining axes (ascending) fixed at `t1`, `t2`.
//!
//! Shared faces store the owner element (the one with the lower id), the
//! canonical corner order (the owner's local order) and the orientation map
//! from the neighbor's face parameters onto the canonical ones. Shared edges
//! are oriented from the lower to the higher global vertex id.

pub mod generate;
pub mod quadrature;

use crate::material::Mat3;
use std::collections::HashMap;
use std::io::Write;
use thiserror::Error;

pub type VertexId = u32;
pub type ElementId = u32;
pub type FaceId = u32;
pub type EdgeId = u32;
pub type SubdomainId = u16;
pub type PartId = u16;

pub const N_CORNERS: usize = 8;
pub const N_FACES: usize = 6;
pub const N_EDGES: usize = 12;

/// Normal axis of local face `f`.
pub fn face_axis(f: usize) -> usize {
    f / 2
}

/// Side (0 or 1) of local face `f` along its normal axis.
pub fn face_side(f: usize) -> usize {
    f % 2
}

/// The two in-face axes of a face with the given normal axis, ascending.
pub fn face_tangents(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        2 => [0, 1],
        _ => panic!("axis out of range"),
    }
}

/// Local corner index from per-axis bits.
pub fn corner_index(bits: [usize; 3]) -> usize {
    bits[0] + 2 * bits[1] + 4 * bits[2]
}

/// Corners of local face `f` at parameters (0,0), (1,0), (0,1), (1,1).
pub fn local_face_corners(f: usize) -> [usize; 4] {
    let d = face_axis(f);
    let s = face_side(f);
    let [t1, t2] = face_tangents(d);
    let mut out = [0usize; 4];
    for (k, (a, b)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let mut bits = [0usize; 3];
        bits[d] = s;
        bits[t1] = a;
        bits[t2] = b;
        out[k] = corner_index(bits);
    }
    out
}

/// Axis of local edge `e`.
pub fn edge_axis(e: usize) -> usize {
    e / 4
}

/// The four local edges lying on local face `f`: first the two running along
/// the face's first parameter (at t = 0, 1), then the two along the second
/// parameter (at s = 0, 1).
pub fn local_face_edges(f: usize) -> [usize; 4] {
    let d = face_axis(f);
    let s = face_side(f);
    let [t1, t2] = face_tangents(d);
    let edge_of = |axis: usize, mut bits: [usize; 3]| -> usize {
        bits[axis] = 0;
        let [u1, u2] = face_tangents(axis);
        4 * axis + bits[u1] + 2 * bits[u2]
    };
    let mut base = [0usize; 3];
    base[d] = s;
    let mut out = [0usize; 4];
    for (k, v) in [0usize, 1].into_iter().enumerate() {
        let mut bits = base;
        bits[t2] = v;
        out[k] = edge_of(t1, bits);
    }
    for (k, v) in [0usize, 1].into_iter().enumerate() {
        let mut bits = base;
        bits[t1] = v;
        out[2 + k] = edge_of(t2, bits);
    }
    out
}

/// Endpoint corners of local edge `e`, ordered along its axis.
pub fn local_edge_corners(e: usize) -> [usize; 2] {
    let d = edge_axis(e);
    let r = e % 4;
    let [t1, t2] = face_tangents(d);
    let mut bits = [0usize; 3];
    bits[t1] = r & 1;
    bits[t2] = (r >> 1) & 1;
    let mut out = [0usize; 2];
    for (k, v) in [0usize, 1].into_iter().enumerate() {
        bits[d] = v;
        out[k] = corner_index(bits);
    }
    out
}

/// Reference coordinates of a point on local face `f` with parameters `(s, t)`.
pub fn face_point_to_ref(f: usize, s: f64, t: f64) -> [f64; 3] {
    let d = face_axis(f);
    let [t1, t2] = face_tangents(d);
    let mut xi = [0.0; 3];
    xi[d] = face_side(f) as f64;
    xi[t1] = s;
    xi[t2] = t;
    xi
}

/// Orientation of a neighbor's face parameters relative to the canonical
/// (owner) parameters: canonical (s, t) as a signed axis permutation of the
/// neighbor's (sn, tn).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceOrientation {
    /// Canonical s reads neighbor t (and vice versa) when set.
    pub swap: bool,
    /// Reverse the respective canonical parameter after the swap.
    pub flip: [bool; 2],
}

impl FaceOrientation {
    pub const IDENTITY: FaceOrientation = FaceOrientation {
        swap: false,
        flip: [false, false],
    };

    /// Maps neighbor face parameters to canonical face parameters.
    pub fn apply(&self, sn: f64, tn: f64) -> (f64, f64) {
        let (u, v) = if self.swap { (tn, sn) } else { (sn, tn) };
        let s = if self.flip[0] { 1.0 - u } else { u };
        let t = if self.flip[1] { 1.0 - v } else { v };
        (s, t)
    }

    /// Orientation from the canonical corner list and the neighbor's corner
    /// list (both at face parameters (0,0), (1,0), (0,1), (1,1)).
    fn from_corner_lists(
        canonical: [VertexId; 4],
        neighbor: [VertexId; 4],
    ) -> Option<FaceOrientation> {
        let pos = |v: VertexId| -> Option<(usize, usize)> {
            let k = canonical.iter().position(|&c| c == v)?;
            Some((k & 1, (k >> 1) & 1))
        };
        let p0 = pos(neighbor[0])?;
        let p1 = pos(neighbor[1])?;
        let p2 = pos(neighbor[2])?;
        let p3 = pos(neighbor[3])?;
        let d1 = (p1.0 != p0.0, p1.1 != p0.1);
        let d2 = (p2.0 != p0.0, p2.1 != p0.1);
        let swap = match (d1, d2) {
            ((true, false), (false, true)) => false,
            ((false, true), (true, false)) => true,
            _ => return None,
        };
        if p3 != (p0.0 ^ 1, p0.1 ^ 1) {
            return None;
        }
        Some(FaceOrientation {
            swap,
            flip: [p0.0 == 1, p0.1 == 1],
        })
    }
}

/// Boundary condition class attached to a mesh face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    /// Shared face inside one subdomain.
    Interior,
    /// Shared face between two subdomains.
    Interface,
    /// Prescribed displacement, data selected by the part id.
    DisplacementPart(PartId),
    /// Prescribed traction, data selected by the part id.
    TractionPart(PartId),
    /// Prescribed normal displacement plus tangential traction.
    NormalClampPart(PartId),
}

impl FaceTag {
    pub fn is_boundary(&self) -> bool {
        !matches!(self, FaceTag::Interior | FaceTag::Interface)
    }
}

/// Analytic cylindrical patch `(r, theta, z)` with each reference axis mapped
/// affinely onto its parameter range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderPatch {
    pub r: [f64; 2],
    pub theta: [f64; 2],
    pub z: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryKind {
    /// Trilinear interpolation of the eight corner positions.
    Trilinear,
    /// Exact cylindrical map; corner positions must match the patch.
    Cylinder(CylinderPatch),
}

#[derive(Debug, Clone)]
pub struct Element {
    pub vertices: [VertexId; 8],
    pub subdomain: SubdomainId,
    pub geometry: GeometryKind,
}

#[derive(Debug, Clone, Copy)]
pub struct FaceNeighbor {
    pub element: ElementId,
    pub local: u8,
    pub orientation: FaceOrientation,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Corners in the owner's local order; fixes the canonical parameters and
    /// the canonical normal (outward from the owner).
    pub vertices: [VertexId; 4],
    pub owner: ElementId,
    pub owner_local: u8,
    pub neighbor: Option<FaceNeighbor>,
    pub tag: FaceTag,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints ordered from lower to higher global vertex id.
    pub vertices: [VertexId; 2],
}

/// How an element sees one of its faces.
#[derive(Debug, Clone, Copy)]
pub struct FaceUse {
    pub face: FaceId,
    pub is_owner: bool,
}

/// How an element sees one of its edges.
#[derive(Debug, Clone, Copy)]
pub struct EdgeUse {
    pub edge: EdgeId,
    /// The element's local direction runs from higher to lower vertex id.
    pub reversed: bool,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("a face with corners {vertices:?} is shared by more than two elements")]
    FaceSharedByMoreThanTwo { vertices: [VertexId; 4] },
    #[error("elements {a} and {b} meet at a face with incompatible corner orderings")]
    IncompatibleFaceOrientation { a: ElementId, b: ElementId },
    #[error("element {element} references vertex {vertex} out of range")]
    VertexOutOfRange { element: ElementId, vertex: VertexId },
    #[error("element {element} repeats a vertex")]
    DegenerateElement { element: ElementId },
    #[error("tag override for element {element}, local face {local}, is not a boundary face")]
    TagOnSharedFace { element: ElementId, local: u8 },
    #[error("tag override must be a boundary condition tag, got {tag:?}")]
    NotABoundaryTag { tag: FaceTag },
    #[error("element {element} has nonpositive jacobian determinant {det:.3e}")]
    NonPositiveJacobian { element: ElementId, det: f64 },
    #[error("cylinder element {element} corner positions disagree with its parameter ranges")]
    CylinderCornerMismatch { element: ElementId },
}

/// Pointwise geometry data at one reference point of one element.
#[derive(Debug, Clone)]
pub struct GeometrySample {
    pub point: [f64; 3],
    /// Columns are the derivatives of the physical point along each
    /// reference axis.
    pub jacobian: Mat3,
    pub det: f64,
    /// Inverse transpose of the jacobian.
    pub inv_t: Mat3,
}

/// Pointwise data on a mesh face, seen from its owner element.
#[derive(Debug, Clone)]
pub struct FaceSample {
    pub point: [f64; 3],
    /// Unit outward normal of the owner element.
    pub unit_normal: [f64; 3],
    /// Surface measure per unit of canonical face parameter area.
    pub area_scale: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub elements: Vec<Element>,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
    pub elem_faces: Vec<[FaceUse; 6]>,
    pub elem_edges: Vec<[EdgeUse; 12]>,
}

impl Mesh {
    /// Builds connectivity from vertices and elements. Interior faces between
    /// different subdomains are tagged [`FaceTag::Interface`]; boundary faces
    /// default to `DisplacementPart(0)` unless overridden.
    pub fn from_parts(
        vertices: Vec<[f64; 3]>,
        elements: Vec<Element>,
        boundary_tags: &[(ElementId, u8, FaceTag)],
    ) -> Result<Mesh, MeshError> {
        let n_vertices = vertices.len() as u32;
        for (e, elem) in elements.iter().enumerate() {
            for &v in &elem.vertices {
                if v >= n_vertices {
                    return Err(MeshError::VertexOutOfRange {
                        element: e as ElementId,
                        vertex: v,
                    });
                }
            }
            for i in 0..8 {
                for j in (i + 1)..8 {
                    if elem.vertices[i] == elem.vertices[j] {
                        return Err(MeshError::DegenerateElement {
                            element: e as ElementId,
                        });
                    }
                }
            }
        }

        let mut faces: Vec<Face> = Vec::new();
        let mut elem_faces: Vec<[FaceUse; 6]> = vec![
            [FaceUse {
                face: 0,
                is_owner: false
            }; 6];
            elements.len()
        ];
        let mut face_lookup: HashMap<[VertexId; 4], FaceId> = HashMap::new();
        for (e, elem) in elements.iter().enumerate() {
            for lf in 0..N_FACES {
                let corners = local_face_corners(lf).map(|c| elem.vertices[c]);
                let mut key = corners;
                key.sort_unstable();
                match face_lookup.get(&key) {
                    None => {
                        let id = faces.len() as FaceId;
                        face_lookup.insert(key, id);
                        faces.push(Face {
                            vertices: corners,
                            owner: e as ElementId,
                            owner_local: lf as u8,
                            neighbor: None,
                            tag: FaceTag::Interior,
                        });
                        elem_faces[e][lf] = FaceUse {
                            face: id,
                            is_owner: true,
                        };
                    }
                    Some(&id) => {
                        let face = &mut faces[id as usize];
                        if face.neighbor.is_some() {
                            return Err(MeshError::FaceSharedByMoreThanTwo {
                                vertices: face.vertices,
                            });
                        }
                        let orientation =
                            FaceOrientation::from_corner_lists(face.vertices, corners).ok_or(
                                MeshError::IncompatibleFaceOrientation {
                                    a: face.owner,
                                    b: e as ElementId,
                                },
                            )?;
                        face.neighbor = Some(FaceNeighbor {
                            element: e as ElementId,
                            local: lf as u8,
                            orientation,
                        });
                        elem_faces[e][lf] = FaceUse {
                            face: id,
                            is_owner: false,
                        };
                    }
                }
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut elem_edges: Vec<[EdgeUse; 12]> = vec![
            [EdgeUse {
                edge: 0,
                reversed: false
            }; 12];
            elements.len()
        ];
        let mut edge_lookup: HashMap<[VertexId; 2], EdgeId> = HashMap::new();
        for (e, elem) in elements.iter().enumerate() {
            for le in 0..N_EDGES {
                let [c0, c1] = local_edge_corners(le);
                let g0 = elem.vertices[c0];
                let g1 = elem.vertices[c1];
                let key = [g0.min(g1), g0.max(g1)];
                let id = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: key });
                    (edges.len() - 1) as EdgeId
                });
                elem_edges[e][le] = EdgeUse {
                    edge: id,
                    reversed: g0 > g1,
                };
            }
        }

        let mut mesh = Mesh {
            vertices,
            elements,
            faces,
            edges,
            elem_faces,
            elem_edges,
        };

        for face in &mut mesh.faces {
            match face.neighbor {
                Some(nbr) => {
                    let sd_a = mesh.elements[face.owner as usize].subdomain;
                    let sd_b = mesh.elements[nbr.element as usize].subdomain;
                    face.tag = if sd_a == sd_b {
                        FaceTag::Interior
                    } else {
                        FaceTag::Interface
                    };
                }
                None => face.tag = FaceTag::DisplacementPart(0),
            }
        }
        for &(e, lf, tag) in boundary_tags {
            if !tag.is_boundary() {
                return Err(MeshError::NotABoundaryTag { tag });
            }
            let fu = mesh.elem_faces[e as usize][lf as usize];
            let face = &mut mesh.faces[fu.face as usize];
            if face.neighbor.is_some() {
                return Err(MeshError::TagOnSharedFace { element: e, local: lf });
            }
            face.tag = tag;
        }
        Ok(mesh)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.neighbor.is_none()).count()
    }

    pub fn corner_positions(&self, e: ElementId) -> [[f64; 3]; 8] {
        self.elements[e as usize]
            .vertices
            .map(|v| self.vertices[v as usize])
    }

    /// Point, jacobian and determinant of the element map at `xi`.
    pub fn geometry_sample(&self, e: ElementId, xi: [f64; 3]) -> GeometrySample {
        let elem = &self.elements[e as usize];
        let (point, jacobian) = match elem.geometry {
            GeometryKind::Trilinear => {
                let pos = self.corner_positions(e);
                trilinear_eval(&pos, xi)
            }
            GeometryKind::Cylinder(patch) => cylinder_eval(&patch, xi),
        };
        let det = jacobian.determinant();
        let inv_t = jacobian
            .try_inverse()
            .unwrap_or_else(|| panic!("singular jacobian on element {e}"))
            .transpose();
        GeometrySample {
            point,
            jacobian,
            det,
            inv_t,
        }
    }

    /// True when the element map is affine (constant jacobian).
    pub fn is_affine(&self, e: ElementId) -> bool {
        let elem = &self.elements[e as usize];
        match elem.geometry {
            GeometryKind::Cylinder(_) => false,
            GeometryKind::Trilinear => {
                let p = self.corner_positions(e);
                let mut scale: f64 = 0.0;
                for v in &p {
                    for d in 0..3 {
                        scale = scale.max((v[d] - p[0][d]).abs());
                    }
                }
                let tol = 1e-13 * scale.max(1e-300);
                // All mixed second differences of a trilinear map must vanish.
                let pairs = [
                    [0, 1, 2, 3],
                    [0, 1, 4, 5],
                    [0, 2, 4, 6],
                    [4, 5, 6, 7],
                    [2, 3, 6, 7],
                    [1, 3, 5, 7],
                ];
                for q in pairs {
                    for d in 0..3 {
                        let dd = p[q[3]][d] - p[q[2]][d] - p[q[1]][d] + p[q[0]][d];
                        if dd.abs() > tol {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    /// Point, outward unit normal and surface scale on a face at the
    /// canonical parameters `(s, t)`.
    pub fn face_sample(&self, f: FaceId, s: f64, t: f64) -> FaceSample {
        let face = &self.faces[f as usize];
        let lf = face.owner_local as usize;
        let xi = face_point_to_ref(lf, s, t);
        let g = self.geometry_sample(face.owner, xi);
        let d = face_axis(lf);
        let sign = if face_side(lf) == 0 { -1.0 } else { 1.0 };
        // Non-unit normal: det * J^{-T} applied to the reference face normal.
        let n = g.inv_t.column(d) * (g.det * sign);
        let len = n.norm();
        FaceSample {
            point: g.point,
            unit_normal: [n[0] / len, n[1] / len, n[2] / len],
            area_scale: len,
        }
    }

    /// Checks jacobian positivity on a sample grid and cylinder corner
    /// consistency.
    pub fn validate_geometry(&self, n_sample: usize) -> Result<(), MeshError> {
        let rule = quadrature::gauss_legendre(n_sample.max(2));
        for e in 0..self.elements.len() {
            for &a in &rule.points {
                for &b in &rule.points {
                    for &c in &rule.points {
                        let g = self.geometry_sample(e as ElementId, [a, b, c]);
                        if !(g.det > 0.0) {
                            return Err(MeshError::NonPositiveJacobian {
                                element: e as ElementId,
                                det: g.det,
                            });
                        }
                    }
                }
            }
            if let GeometryKind::Cylinder(patch) = self.elements[e].geometry {
                let pos = self.corner_positions(e as ElementId);
                for c in 0..8 {
                    let xi = [
                        (c & 1) as f64,
                        ((c >> 1) & 1) as f64,
                        ((c >> 2) & 1) as f64,
                    ];
                    let (p, _) = cylinder_eval(&patch, xi);
                    let dist2: f64 = (0..3).map(|d| (p[d] - pos[c][d]).powi(2)).sum();
                    let scale = patch.r[1].abs() + patch.z[1].abs() + 1.0;
                    if dist2.sqrt() > 1e-12 * scale {
                        return Err(MeshError::CylinderCornerMismatch {
                            element: e as ElementId,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Uniform 1:8 refinement. New vertices are created at edge midpoints,
    /// face centers and element centers, in that order, using the parent
    /// element maps; children keep the parent subdomain and boundary tags.
    pub fn refined_uniform(&self) -> Result<Mesh, MeshError> {
        let n_v = self.vertices.len();
        let n_e = self.edges.len();
        let n_f = self.faces.len();
        let mut vertices = self.vertices.clone();
        vertices.resize(n_v + n_e + n_f + self.elements.len(), [f64::NAN; 3]);

        let mut edge_done = vec![false; n_e];
        let mut face_done = vec![false; n_f];
        for e in 0..self.elements.len() {
            let eid = e as ElementId;
            for le in 0..N_EDGES {
                let eu = self.elem_edges[e][le];
                if !edge_done[eu.edge as usize] {
                    edge_done[eu.edge as usize] = true;
                    let [c0, c1] = local_edge_corners(le);
                    let xi = [
                        0.5 * (corner_bit(c0, 0) + corner_bit(c1, 0)),
                        0.5 * (corner_bit(c0, 1) + corner_bit(c1, 1)),
                        0.5 * (corner_bit(c0, 2) + corner_bit(c1, 2)),
                    ];
                    vertices[n_v + eu.edge as usize] = self.geometry_sample(eid, xi).point;
                }
            }
            for lf in 0..N_FACES {
                let fu = self.elem_faces[e][lf];
                if !face_done[fu.face as usize] {
                    face_done[fu.face as usize] = true;
                    let xi = face_point_to_ref(lf, 0.5, 0.5);
                    vertices[n_v + n_e + fu.face as usize] = self.geometry_sample(eid, xi).point;
                }
            }
            vertices[n_v + n_e + n_f + e] = self.geometry_sample(eid, [0.5, 0.5, 0.5]).point;
        }

        // Global vertex id of the child-grid node at parent reference
        // coordinates with per-axis doubled integer coordinates in 0..=2.
        let node_id = |e: usize, q: [usize; 3]| -> VertexId {
            let half: Vec<usize> = (0..3).filter(|&d| q[d] == 1).collect();
            match half.len() {
                0 => {
                    let c = corner_index([q[0] / 2, q[1] / 2, q[2] / 2]);
                    self.elements[e].vertices[c]
                }
                1 => {
                    let d = half[0];
                    let [t1, t2] = face_tangents(d);
                    let le = 4 * d + (q[t1] / 2) + 2 * (q[t2] / 2);
                    n_v as VertexId + self.elem_edges[e][le].edge
                }
                2 => {
                    let d = (0..3).find(|&d| q[d] != 1).unwrap();
                    let lf = 2 * d + q[d] / 2;
                    (n_v + n_e) as VertexId + self.elem_faces[e][lf].face
                }
                _ => (n_v + n_e + n_f + e) as VertexId,
            }
        };

        let mut elements = Vec::with_capacity(8 * self.elements.len());
        let mut boundary_tags = Vec::new();
        for (e, elem) in self.elements.iter().enumerate() {
            for child in 0..8 {
                let cb = [child & 1, (child >> 1) & 1, (child >> 2) & 1];
                let mut verts = [0 as VertexId; 8];
                for c in 0..8 {
                    let ib = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
                    verts[c] = node_id(e, [cb[0] + ib[0], cb[1] + ib[1], cb[2] + ib[2]]);
                }
                let geometry = match elem.geometry {
                    GeometryKind::Trilinear => GeometryKind::Trilinear,
                    GeometryKind::Cylinder(p) => {
                        let sub = |range: [f64; 2], bit: usize| -> [f64; 2] {
                            let mid = range[0] + 0.5 * (range[1] - range[0]);
                            if bit == 0 {
                                [range[0], mid]
                            } else {
                                [mid, range[1]]
                            }
                        };
                        GeometryKind::Cylinder(CylinderPatch {
                            r: sub(p.r, cb[0]),
                            theta: sub(p.theta, cb[1]),
                            z: sub(p.z, cb[2]),
                        })
                    }
                };
                let child_id = (8 * e + child) as ElementId;
                for lf in 0..N_FACES {
                    let d = face_axis(lf);
                    let s = face_side(lf);
                    if cb[d] == s {
                        let parent_face = self.elem_faces[e][lf];
                        let tag = self.faces[parent_face.face as usize].tag;
                        if tag.is_boundary() {
                            boundary_tags.push((child_id, lf as u8, tag));
                        }
                    }
                }
                elements.push(Element {
                    vertices: verts,
                    subdomain: elem.subdomain,
                    geometry,
                });
            }
        }
        Mesh::from_parts(vertices, elements, &boundary_tags)
    }

    /// Plain-text dump of vertices, elements and tagged faces.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "mesh vertices={} elements={} faces={} edges={}",
            self.n_vertices(),
            self.n_elements(),
            self.n_faces(),
            self.n_edges()
        )?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "v {i} {:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
        }
        for (i, e) in self.elements.iter().enumerate() {
            write!(w, "e {i} sub={}", e.subdomain)?;
            for &v in &e.vertices {
                write!(w, " {v}")?;
            }
            match e.geometry {
                GeometryKind::Trilinear => writeln!(w, " trilinear")?,
                GeometryKind::Cylinder(p) => writeln!(
                    w,
                    " cylinder r=[{:.17e},{:.17e}] theta=[{:.17e},{:.17e}] z=[{:.17e},{:.17e}]",
                    p.r[0], p.r[1], p.theta[0], p.theta[1], p.z[0], p.z[1]
                )?,
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            writeln!(
                w,
                "f {i} owner={} local={} tag={:?} verts={:?} neighbor={}",
                f.owner,
                f.owner_local,
                f.tag,
                f.vertices,
                f.neighbor
                    .map(|n| n.element.to_string())
                    .unwrap_or_else(|| "-".into())
            )?;
        }
        Ok(())
    }
}

fn corner_bit(c: usize, axis: usize) -> f64 {
    ((c >> axis) & 1) as f64
}

/// Trilinear interpolation of corner positions: value and jacobian.
fn trilinear_eval(pos: &[[f64; 3]; 8], xi: [f64; 3]) -> ([f64; 3], Mat3) {
    let mut point = [0.0; 3];
    let mut jac = Mat3::zeros();
    for c in 0..8 {
        let w = [
            if c & 1 == 1 { xi[0] } else { 1.0 - xi[0] },
            if c >> 1 & 1 == 1 { xi[1] } else { 1.0 - xi[1] },
            if c >> 2 & 1 == 1 { xi[2] } else { 1.0 - xi[2] },
        ];
        let dw = [
            if c & 1 == 1 { 1.0 } else { -1.0 },
            if c >> 1 & 1 == 1 { 1.0 } else { -1.0 },
            if c >> 2 & 1 == 1 { 1.0 } else { -1.0 },
        ];
        let n = w[0] * w[1] * w[2];
        let dn = [
            dw[0] * w[1] * w[2],
            w[0] * dw[1] * w[2],
            w[0] * w[1] * dw[2],
        ];
        for d in 0..3 {
            point[d] += n * pos[c][d];
            for k in 0..3 {
                jac[(d, k)] += dn[k] * pos[c][d];
            }
        }
    }
    (point, jac)
}

/// Cylindrical map: value and jacobian.
fn cylinder_eval(patch: &CylinderPatch, xi: [f64; 3]) -> ([f64; 3], Mat3) {
    let dr = patch.r[1] - patch.r[0];
    let dth = patch.theta[1] - patch.theta[0];
    let dz = patch.z[1] - patch.z[0];
    let r = patch.r[0] + xi[0] * dr;
    let th = patch.theta[0] + xi[1] * dth;
    let z = patch.z[0] + xi[2] * dz;
    let (sin, cos) = th.sin_cos();
    let point = [r * cos, r * sin, z];
    let jac = Mat3::new(
        cos * dr,
        -r * sin * dth,
        0.0,
        sin * dr,
        r * cos * dth,
        0.0,
        0.0,
        0.0,
        dz,
    );
    (point, jac)
}
