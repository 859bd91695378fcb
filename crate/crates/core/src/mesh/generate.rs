//! Structured mesh generators: axis-aligned boxes and cylindrical shells.

use super::{
    CylinderPatch, Element, FaceSample, FaceTag, GeometryKind, Mesh, SubdomainId, VertexId,
};

/// Axis-aligned box split into a uniform cell grid.
#[derive(Debug, Clone)]
pub struct BoxMeshSpec {
    pub origin: [f64; 3],
    pub size: [f64; 3],
    pub cells: [usize; 3],
}

/// Builds the box mesh; `subdomain` assigns a subdomain per cell index.
/// All boundary faces start as `DisplacementPart(0)`.
pub fn box_mesh(spec: &BoxMeshSpec, subdomain: impl Fn([usize; 3]) -> SubdomainId) -> Mesh {
    let n = spec.cells;
    assert!(n.iter().all(|&c| c >= 1));
    let breaks: Vec<Vec<f64>> = (0..3)
        .map(|d| {
            (0..=n[d])
                .map(|i| spec.origin[d] + spec.size[d] * i as f64 / n[d] as f64)
                .collect()
        })
        .collect();
    let nv = [n[0] + 1, n[1] + 1, n[2] + 1];
    let vid = |i: usize, j: usize, k: usize| -> VertexId {
        (i + nv[0] * (j + nv[1] * k)) as VertexId
    };
    let mut vertices = Vec::with_capacity(nv[0] * nv[1] * nv[2]);
    for k in 0..nv[2] {
        for j in 0..nv[1] {
            for i in 0..nv[0] {
                vertices.push([breaks[0][i], breaks[1][j], breaks[2][k]]);
            }
        }
    }
    let mut elements = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let mut verts = [0 as VertexId; 8];
                for c in 0..8 {
                    verts[c] = vid(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                }
                elements.push(Element {
                    vertices: verts,
                    subdomain: subdomain([i, j, k]),
                    geometry: GeometryKind::Trilinear,
                });
            }
        }
    }
    Mesh::from_parts(vertices, elements, &[]).expect("box mesh construction cannot fail")
}

/// Full cylindrical shell with layered radii. Reference axes map to
/// (r, theta, z) in that order.
#[derive(Debug, Clone)]
pub struct CylinderShellSpec {
    /// Radial break points, ascending, one more than the number of layers.
    pub r_breaks: Vec<f64>,
    /// Subdomain per radial layer.
    pub layer_subdomains: Vec<SubdomainId>,
    /// Angular cells over the full circle (at least 2).
    pub n_theta: usize,
    /// Axial cells.
    pub n_z: usize,
    pub z_range: [f64; 2],
    /// Tag for the innermost radial surface.
    pub inner_tag: FaceTag,
    /// Tag for the outermost radial surface.
    pub outer_tag: FaceTag,
    /// Tag for both axial end surfaces.
    pub end_tag: FaceTag,
}

pub fn cylinder_shell_mesh(spec: &CylinderShellSpec) -> Mesh {
    let n_r = spec.r_breaks.len() - 1;
    assert!(n_r >= 1 && spec.layer_subdomains.len() == n_r);
    assert!(spec.n_theta >= 2 && spec.n_z >= 1);
    assert!(spec.r_breaks.windows(2).all(|w| w[1] > w[0] && w[0] > 0.0));
    let two_pi = 2.0 * std::f64::consts::PI;
    let theta = |i: usize| -> f64 { two_pi * i as f64 / spec.n_theta as f64 };
    let z_break = |k: usize| -> f64 {
        spec.z_range[0] + (spec.z_range[1] - spec.z_range[0]) * k as f64 / spec.n_z as f64
    };

    // Vertices: theta fastest (periodic, no duplicate seam), then r, then z.
    let vid = |it: usize, ir: usize, iz: usize| -> VertexId {
        ((it % spec.n_theta) + spec.n_theta * (ir + (n_r + 1) * iz)) as VertexId
    };
    let mut vertices = Vec::with_capacity(spec.n_theta * (n_r + 1) * (spec.n_z + 1));
    for iz in 0..=spec.n_z {
        for ir in 0..=n_r {
            for it in 0..spec.n_theta {
                let (s, c) = theta(it).sin_cos();
                let r = spec.r_breaks[ir];
                vertices.push([r * c, r * s, z_break(iz)]);
            }
        }
    }

    let mut elements = Vec::new();
    let mut tags = Vec::new();
    for iz in 0..spec.n_z {
        for ir in 0..n_r {
            for it in 0..spec.n_theta {
                let mut verts = [0 as VertexId; 8];
                for c in 0..8 {
                    verts[c] = vid(it + (c >> 1 & 1), ir + (c & 1), iz + (c >> 2 & 1));
                }
                let id = elements.len() as u32;
                elements.push(Element {
                    vertices: verts,
                    subdomain: spec.layer_subdomains[ir],
                    geometry: GeometryKind::Cylinder(CylinderPatch {
                        r: [spec.r_breaks[ir], spec.r_breaks[ir + 1]],
                        theta: [theta(it), theta(it + 1)],
                        z: [z_break(iz), z_break(iz + 1)],
                    }),
                });
                if ir == 0 {
                    tags.push((id, 0u8, spec.inner_tag));
                }
                if ir == n_r - 1 {
                    tags.push((id, 1u8, spec.outer_tag));
                }
                if iz == 0 {
                    tags.push((id, 4u8, spec.end_tag));
                }
                if iz == spec.n_z - 1 {
                    tags.push((id, 5u8, spec.end_tag));
                }
            }
        }
    }
    Mesh::from_parts(vertices, elements, &tags).expect("cylinder shell construction cannot fail")
}

impl Mesh {
    /// Replaces boundary tags using a predicate on the face center sample.
    pub fn retag_boundary_faces(&mut self, f: impl Fn(&FaceSample, FaceTag) -> Option<FaceTag>) {
        for i in 0..self.faces.len() {
            if self.faces[i].neighbor.is_some() {
                continue;
            }
            let sample = self.face_sample(i as u32, 0.5, 0.5);
            if let Some(tag) = f(&sample, self.faces[i].tag) {
                assert!(tag.is_boundary());
                self.faces[i].tag = tag;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementId;

    #[test]
    fn box_2x2x2_entity_counts() {
        let spec = BoxMeshSpec {
            origin: [0.0, 0.0, 0.0],
            size: [2.0, 2.0, 2.0],
            cells: [2, 2, 2],
        };
        let mesh = box_mesh(&spec, |c| (c[0] + 2 * c[1] + 4 * c[2]) as u16);
        assert_eq!(mesh.n_elements(), 8);
        assert_eq!(mesh.n_vertices(), 27);
        assert_eq!(mesh.n_faces(), 36);
        assert_eq!(mesh.n_edges(), 54);
        assert_eq!(mesh.n_boundary_faces(), 24);
        mesh.validate_geometry(2).unwrap();
        // With one subdomain per cell every interior face is an interface.
        let n_interface = mesh
            .faces
            .iter()
            .filter(|f| f.tag == FaceTag::Interface)
            .count();
        assert_eq!(n_interface, 12);
        let vol: f64 = (0..8)
            .map(|e| mesh.geometry_sample(e as ElementId, [0.3, 0.6, 0.9]).det)
            .sum();
        assert!((vol - 8.0).abs() < 1e-13);
    }

    #[test]
    fn cylinder_shell_counts_and_tags() {
        let spec = CylinderShellSpec {
            r_breaks: vec![0.5, 0.99, 1.0],
            layer_subdomains: vec![0, 1],
            n_theta: 4,
            n_z: 1,
            z_range: [0.0, 1.0],
            inner_tag: FaceTag::TractionPart(1),
            outer_tag: FaceTag::TractionPart(2),
            end_tag: FaceTag::NormalClampPart(3),
        };
        let mesh = cylinder_shell_mesh(&spec);
        assert_eq!(mesh.n_elements(), 8);
        assert_eq!(mesh.n_vertices(), 24);
        assert_eq!(mesh.n_faces(), 36);
        assert_eq!(mesh.n_boundary_faces(), 24);
        mesh.validate_geometry(3).unwrap();
        let count = |tag: FaceTag| mesh.faces.iter().filter(|f| f.tag == tag).count();
        assert_eq!(count(FaceTag::TractionPart(1)), 4);
        assert_eq!(count(FaceTag::TractionPart(2)), 4);
        assert_eq!(count(FaceTag::NormalClampPart(3)), 16);
        assert_eq!(count(FaceTag::Interface), 4);
        assert_eq!(count(FaceTag::Interior), 8);
        // Inner surface normals point toward the axis.
        for (i, f) in mesh.faces.iter().enumerate() {
            if f.tag == FaceTag::TractionPart(1) {
                let s = mesh.face_sample(i as u32, 0.4, 0.6);
                let r = (s.point[0] * s.point[0] + s.point[1] * s.point[1]).sqrt();
                assert!((r - 0.5).abs() < 1e-14);
                let dot = s.unit_normal[0] * s.point[0] + s.unit_normal[1] * s.point[1];
                assert!(dot < 0.0);
            }
        }
    }

    #[test]
    fn refined_cylinder_keeps_exact_geometry() {
        let spec = CylinderShellSpec {
            r_breaks: vec![0.5, 1.0],
            layer_subdomains: vec![0],
            n_theta: 4,
            n_z: 1,
            z_range: [0.0, 1.0],
            inner_tag: FaceTag::TractionPart(1),
            outer_tag: FaceTag::TractionPart(2),
            end_tag: FaceTag::NormalClampPart(3),
        };
        let mesh = cylinder_shell_mesh(&spec);
        let fine = mesh.refined_uniform().unwrap();
        assert_eq!(fine.n_elements(), 32);
        fine.validate_geometry(3).unwrap();
        // Shell volume is exact for the analytic map at any refinement.
        let rule = crate::mesh::quadrature::tensor_cube(3);
        let vol: f64 = (0..fine.n_elements())
            .map(|e| {
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&xi, &w)| w * fine.geometry_sample(e as ElementId, xi).det)
                    .sum::<f64>()
            })
            .sum();
        let exact = std::f64::consts::PI * (1.0 - 0.25);
        assert!((vol - exact).abs() < 1e-12 * exact);
    }
}
