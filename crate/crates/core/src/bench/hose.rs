//! Pressurized two-layer cylindrical shell: a soft inner liner inside a
//! stiff outer sheath, loaded by internal pressure.
//!
//! The axisymmetric plane-strain solution is radial in each layer,
//! `u_r = alpha r + beta / r`, with layer constants coupled through
//! displacement and radial-stress continuity. The exactly incompressible
//! liner is the `alpha -> 0` limit with a finite reaction pressure; its
//! closed-form constants are built directly, while the compressible variant
//! solves the small linear system. Everything here works in nondimensional
//! units: lengths over the outer radius, stresses over the sheath Young's
//! modulus.

use super::{formulation_config_string, BenchError, ErrorMeasure, Problem};
use crate::forms::Formulation;
use crate::material::IsotropicMaterial;
use crate::mesh::generate::{cylinder_shell_mesh, CylinderShellSpec};
use crate::mesh::{FaceTag, Mesh, VertexId};
use crate::system::assemble::{Assembled, Discretization, SubdomainSetup};
use crate::system::bc::{BcSpec, PartBc};
use crate::system::SystemError;
use nalgebra::{DVector, Matrix4, Vector4};
use std::collections::HashMap;

/// Boundary part ids of the shell mesh.
pub const INNER_PART: u16 = 1;
pub const OUTER_PART: u16 = 2;
pub const END_PART: u16 = 3;
/// Subdomain ids by layer.
pub const RUBBER_SUB: u16 = 0;
pub const STEEL_SUB: u16 = 1;

/// Inner-surface pressure profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureKind {
    /// Constant pressure; the exact solution applies.
    Uniform,
    /// `p(theta) = p_in cos^2(theta)`; demo without a closed-form solution.
    Cos2,
}

/// Physical description of the shell problem, in SI units.
#[derive(Debug, Clone)]
pub struct HoseSpec {
    /// Inner, interface and outer radius in meters, ascending.
    pub radii: [f64; 3],
    pub rubber_e: f64,
    pub rubber_nu: f64,
    pub steel_e: f64,
    pub steel_nu: f64,
    /// Inner and outer pressure in Pa.
    pub p_in: f64,
    pub p_out: f64,
    pub rubber_formulation: Formulation,
    pub steel_formulation: Formulation,
    pub pressure: PressureKind,
    pub n_theta: usize,
    pub n_z: usize,
    /// Axial length in meters.
    pub z_len: f64,
}

impl Default for HoseSpec {
    fn default() -> Self {
        HoseSpec {
            radii: [0.5, 0.99, 1.0],
            rubber_e: 0.01e9,
            rubber_nu: 0.5,
            steel_e: 200e9,
            steel_nu: 0.285,
            p_in: 1e6,
            p_out: 0.0,
            rubber_formulation: Formulation::Ultraweak,
            steel_formulation: Formulation::Primal,
            pressure: PressureKind::Uniform,
            n_theta: 4,
            n_z: 1,
            z_len: 1.0,
        }
    }
}

/// One layer of the radial solution: `u_r = alpha r + beta / r` with
/// cylindrical stresses `s_rr = s_base - 2 mu beta / r^2`,
/// `s_tt = s_base + 2 mu beta / r^2` and constant `s_zz`.
#[derive(Debug, Clone, Copy)]
pub struct RadialLayer {
    pub alpha: f64,
    pub beta: f64,
    pub s_base: f64,
    pub s_zz: f64,
    pub mu: f64,
}

impl RadialLayer {
    pub fn u_r(&self, r: f64) -> f64 {
        self.alpha * r + self.beta / r
    }

    pub fn du_r(&self, r: f64) -> f64 {
        self.alpha - self.beta / (r * r)
    }

    /// `(s_rr, s_tt, s_zz)` at radius `r`.
    pub fn stress_cyl(&self, r: f64) -> (f64, f64, f64) {
        let hoop = 2.0 * self.mu * self.beta / (r * r);
        (self.s_base - hoop, self.s_base + hoop, self.s_zz)
    }

    /// Residual of radial equilibrium `d s_rr / dr + (s_rr - s_tt) / r`,
    /// formed from the two independent closed forms (identically zero up to
    /// rounding).
    pub fn equilibrium_residual(&self, r: f64) -> f64 {
        let d_rr = 4.0 * self.mu * self.beta / (r * r * r);
        let (s_rr, s_tt, _) = self.stress_cyl(r);
        d_rr + (s_rr - s_tt) / r
    }
}

/// The full two-layer radial solution (nondimensional).
#[derive(Debug, Clone)]
pub struct RadialSolution {
    /// Inner (liner) layer first.
    pub layers: [RadialLayer; 2],
    pub radii: [f64; 3],
}

impl RadialSolution {
    pub fn layer_of_radius(&self, r: f64) -> usize {
        usize::from(r >= self.radii[1])
    }

    /// Cartesian displacement `u_r(r) (cos t, sin t, 0)`.
    pub fn displacement(&self, x: [f64; 3]) -> [f64; 3] {
        let r = x[0].hypot(x[1]);
        let u = self.layers[self.layer_of_radius(r)].u_r(r);
        [u * x[0] / r, u * x[1] / r, 0.0]
    }

    /// Cartesian stress tensor in the given layer.
    pub fn stress(&self, layer: usize, x: [f64; 3]) -> [[f64; 3]; 3] {
        let r = x[0].hypot(x[1]);
        let (ct, st) = (x[0] / r, x[1] / r);
        let (s_rr, s_tt, s_zz) = self.layers[layer].stress_cyl(r);
        [
            [
                s_rr * ct * ct + s_tt * st * st,
                (s_rr - s_tt) * ct * st,
                0.0,
            ],
            [
                (s_rr - s_tt) * ct * st,
                s_rr * st * st + s_tt * ct * ct,
                0.0,
            ],
            [0.0, 0.0, s_zz],
        ]
    }

    /// Hoop-stress jump across the interface, sheath side minus liner side.
    pub fn sigma_tt_jump(&self) -> f64 {
        let r = self.radii[1];
        self.layers[1].stress_cyl(r).1 - self.layers[0].stress_cyl(r).1
    }
}

/// Closed-form constants of the incompressible-liner solution:
/// `u_r = a / r` inside, `u_r = b r + c / r` in the sheath, with the liner
/// reaction pressure `p0`; `d` is the common denominator.
#[derive(Debug, Clone, Copy)]
pub struct IncompressibleConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p0: f64,
    pub d: f64,
}

pub fn incompressible_constants(
    mu_r: f64,
    lam_s: f64,
    mu_s: f64,
    radii: [f64; 3],
    p_in: f64,
    p_out: f64,
) -> Result<IncompressibleConstants, BenchError> {
    let (ri2, rm2, ro2) = (
        radii[0] * radii[0],
        radii[1] * radii[1],
        radii[2] * radii[2],
    );
    let d = ((mu_r - mu_s) * (lam_s + mu_s) * ro2 + mu_s * (lam_s + mu_r + mu_s) * rm2) * ri2
        - mu_r * (mu_s * rm2 + (lam_s + mu_s) * ro2) * rm2;
    if d == 0.0 || !d.is_finite() {
        return Err(BenchError::SingularRadialSystem { d });
    }
    let a = (-p_in * (mu_s * rm2 + (lam_s + mu_s) * ro2) + p_out * (lam_s + 2.0 * mu_s) * ro2)
        * rm2
        * ri2
        / (2.0 * d);
    let b = (-p_in * mu_s * ri2 * rm2 - p_out * ((mu_r - mu_s) * ri2 - mu_r * rm2) * ro2)
        / (2.0 * d);
    let c = (-p_in * (lam_s + mu_s) * ri2 + p_out * ((lam_s + mu_r + mu_s) * ri2 - mu_r * rm2))
        * rm2
        * ro2
        / (2.0 * d);
    let p0 = (p_in * ((mu_r - mu_s) * (lam_s + mu_s) * ro2 + mu_s * (lam_s + mu_r + mu_s) * rm2)
        * ri2
        - p_out * mu_r * (lam_s + 2.0 * mu_s) * ro2 * rm2)
        / d;
    Ok(IncompressibleConstants { a, b, c, p0, d })
}

/// Radial solution with an exactly incompressible liner.
pub fn incompressible_solution(
    mu_r: f64,
    lam_s: f64,
    mu_s: f64,
    radii: [f64; 3],
    p_in: f64,
    p_out: f64,
) -> Result<RadialSolution, BenchError> {
    let k = incompressible_constants(mu_r, lam_s, mu_s, radii, p_in, p_out)?;
    Ok(RadialSolution {
        layers: [
            RadialLayer {
                alpha: 0.0,
                beta: k.a,
                s_base: -k.p0,
                s_zz: -k.p0,
                mu: mu_r,
            },
            RadialLayer {
                alpha: k.b,
                beta: k.c,
                s_base: 2.0 * (lam_s + mu_s) * k.b,
                s_zz: 2.0 * lam_s * k.b,
                mu: mu_s,
            },
        ],
        radii,
    })
}

/// Radial solution with two compressible layers, from the 4 x 4 linear
/// system of the pressure and continuity conditions.
pub fn compressible_solution(
    lam_r: f64,
    mu_r: f64,
    lam_s: f64,
    mu_s: f64,
    radii: [f64; 3],
    p_in: f64,
    p_out: f64,
) -> Result<RadialSolution, BenchError> {
    let (ri2, rm2, ro2) = (
        radii[0] * radii[0],
        radii[1] * radii[1],
        radii[2] * radii[2],
    );
    let rm = radii[1];
    // Unknowns (alpha_1, beta_1, alpha_2, beta_2); rows: inner pressure,
    // displacement continuity, radial-stress continuity, outer pressure.
    let m = Matrix4::new(
        2.0 * (lam_r + mu_r),
        -2.0 * mu_r / ri2,
        0.0,
        0.0,
        rm,
        1.0 / rm,
        -rm,
        -1.0 / rm,
        2.0 * (lam_r + mu_r),
        -2.0 * mu_r / rm2,
        -2.0 * (lam_s + mu_s),
        2.0 * mu_s / rm2,
        0.0,
        0.0,
        2.0 * (lam_s + mu_s),
        -2.0 * mu_s / ro2,
    );
    let rhs = Vector4::new(-p_in, 0.0, 0.0, -p_out);
    let lu = m.lu();
    let det = lu.determinant();
    let sol = lu
        .solve(&rhs)
        .ok_or(BenchError::SingularRadialSystem { d: det })?;
    let layer = |alpha: f64, beta: f64, lam: f64, mu: f64| RadialLayer {
        alpha,
        beta,
        s_base: 2.0 * (lam + mu) * alpha,
        s_zz: 2.0 * lam * alpha,
        mu,
    };
    Ok(RadialSolution {
        layers: [
            layer(sol[0], sol[1], lam_r, mu_r),
            layer(sol[2], sol[3], lam_s, mu_s),
        ],
        radii,
    })
}

/// Scales and exact solution that accompany a built shell problem.
pub struct HoseArtifacts {
    /// Exact radial solution in nondimensional units; absent for the
    /// cos^2 pressure profile.
    pub exact: Option<RadialSolution>,
    /// Multiply nondimensional stresses by this to recover Pa.
    pub stress_scale: f64,
    /// Multiply nondimensional lengths by this to recover meters.
    pub length_scale: f64,
    pub radii_nd: [f64; 3],
}

/// Builds the ready-to-run problem plus its scales and exact solution.
pub fn problem(spec: &HoseSpec) -> Result<(Problem, HoseArtifacts), BenchError> {
    let e_ref = spec.rubber_e.min(spec.steel_e);
    let l0 = spec.radii[2];
    let radii_nd = [
        spec.radii[0] / l0,
        spec.radii[1] / l0,
        spec.radii[2] / l0,
    ];
    let (p_in, p_out) = (spec.p_in / e_ref, spec.p_out / e_ref);
    let rubber = IsotropicMaterial::from_engineering(spec.rubber_e / e_ref, spec.rubber_nu)?;
    let steel = IsotropicMaterial::from_engineering(spec.steel_e / e_ref, spec.steel_nu)?;

    let exact = match spec.pressure {
        PressureKind::Cos2 => None,
        PressureKind::Uniform => {
            let mu_r = rubber.shear_modulus();
            let mu_s = steel.shear_modulus();
            let lam_s = steel.lambda()?;
            Some(if rubber.is_incompressible() {
                incompressible_solution(mu_r, lam_s, mu_s, radii_nd, p_in, p_out)?
            } else {
                compressible_solution(rubber.lambda()?, mu_r, lam_s, mu_s, radii_nd, p_in, p_out)?
            })
        }
    };

    let mut subdomains = HashMap::new();
    subdomains.insert(
        RUBBER_SUB,
        SubdomainSetup {
            formulation: spec.rubber_formulation,
            material: rubber,
        },
    );
    subdomains.insert(
        STEEL_SUB,
        SubdomainSetup {
            formulation: spec.steel_formulation,
            material: steel,
        },
    );

    let base_mesh = cylinder_shell_mesh(&CylinderShellSpec {
        r_breaks: radii_nd.to_vec(),
        layer_subdomains: vec![RUBBER_SUB, STEEL_SUB],
        n_theta: spec.n_theta,
        n_z: spec.n_z,
        z_range: [0.0, spec.z_len / l0],
        inner_tag: FaceTag::TractionPart(INNER_PART),
        outer_tag: FaceTag::TractionPart(OUTER_PART),
        end_tag: FaceTag::NormalClampPart(END_PART),
    });

    let pressure = spec.pressure;
    let r_pin = radii_nd[2];
    let make_bc = move |mesh: &Mesh| -> BcSpec {
        let mut parts = HashMap::new();
        let inner: PartBc = match pressure {
            PressureKind::Uniform => PartBc::Traction(Box::new(move |_x, n: [f64; 3]| {
                [-p_in * n[0], -p_in * n[1], -p_in * n[2]]
            })),
            PressureKind::Cos2 => PartBc::Traction(Box::new(move |x: [f64; 3], n: [f64; 3]| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let p = p_in * x[0] * x[0] / r2;
                [-p * n[0], -p * n[1], -p * n[2]]
            })),
        };
        parts.insert(INNER_PART, inner);
        parts.insert(
            OUTER_PART,
            PartBc::Traction(Box::new(move |_x, n: [f64; 3]| {
                [-p_out * n[0], -p_out * n[1], -p_out * n[2]]
            })),
        );
        parts.insert(END_PART, PartBc::NormalClamp);
        // In-plane rigid modes are removed by single-component pins on the
        // outer rim at z = 0, consistent with the mirror symmetries of the
        // load: u_y = 0 at theta = 0 and pi, u_x = 0 at theta = pi/2.
        let pins = vec![
            (find_vertex(mesh, [r_pin, 0.0, 0.0]), 1, 0.0),
            (find_vertex(mesh, [0.0, r_pin, 0.0]), 0, 0.0),
            (find_vertex(mesh, [-r_pin, 0.0, 0.0]), 1, 0.0),
        ];
        BcSpec { parts, pins }
    };

    let measures = match &exact {
        Some(sol) => {
            let disp = sol.clone();
            let stress = sol.clone();
            vec![
                ErrorMeasure::DisplacementL2(Box::new(move |x| disp.displacement(x))),
                ErrorMeasure::StressL2(Box::new(move |sub, x| {
                    stress.stress(sub as usize, x)
                })),
            ]
        }
        None => Vec::new(),
    };

    let benchmark = match spec.pressure {
        PressureKind::Uniform => "hose_uniform",
        PressureKind::Cos2 => "hose_cos2",
    };
    let problem = Problem {
        benchmark: benchmark.to_string(),
        formulation_config: formulation_config_string(&subdomains),
        base_mesh,
        subdomains,
        body_force: Box::new(|_| [0.0; 3]),
        quadrature_boost: 1,
        make_bc: Box::new(make_bc),
        measures,
    };
    Ok((
        problem,
        HoseArtifacts {
            exact,
            stress_scale: e_ref,
            length_scale: l0,
            radii_nd,
        },
    ))
}

/// Vertex closest to `target`; panics if none lies within a mesh-size
/// tolerance (the pin positions are level-0 vertices of the shell mesh and
/// survive every uniform refinement).
fn find_vertex(mesh: &Mesh, target: [f64; 3]) -> VertexId {
    let mut best = (f64::INFINITY, 0u32);
    for (i, v) in mesh.vertices.iter().enumerate() {
        let d2 = (0..3).map(|d| (v[d] - target[d]).powi(2)).sum::<f64>();
        if d2 < best.0 {
            best = (d2, i as u32);
        }
    }
    assert!(
        best.0.sqrt() < 1e-8,
        "no mesh vertex at pin position {target:?}"
    );
    best.1
}

/// Hoop stress sampled on both sides of each interface face center.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceSample {
    pub theta: f64,
    pub z: f64,
    /// Liner-side hoop stress.
    pub rubber: f64,
    /// Sheath-side hoop stress.
    pub steel: f64,
}

/// Evaluates the discrete hoop stress on both sides of every interface
/// face, at the face centers, sorted by `(z, theta)`.
pub fn sigma_tt_interface_samples(
    disc: &Discretization,
    asm: &Assembled,
    u: &DVector<f64>,
) -> Result<Vec<InterfaceSample>, SystemError> {
    let mesh = disc.mesh;
    let mut out = Vec::new();
    for (fid, face) in mesh.faces.iter().enumerate() {
        if face.tag != FaceTag::Interface {
            continue;
        }
        let nb = face.neighbor.as_ref().expect("interface face has two sides");
        let sides = [
            (face.owner, face.owner_local as usize),
            (nb.element, nb.local as usize),
        ];
        let fs = mesh.face_sample(fid as u32, 0.5, 0.5);
        let theta = fs.point[1].atan2(fs.point[0]);
        let e_t = [-theta.sin(), theta.cos(), 0.0];
        let mut by_layer = [0.0; 2];
        for &(e, lf) in &sides {
            // The face center is a fixed point of every face orientation,
            // so both sides can evaluate at their own local (1/2, 1/2).
            let xi = crate::mesh::face_point_to_ref(lf, 0.5, 0.5);
            let s = super::error::stress_at_ref_point(disc, asm, e, u, xi)?;
            let mut stt = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    stt += e_t[a] * s[a][b] * e_t[b];
                }
            }
            by_layer[mesh.elements[e as usize].subdomain as usize] = stt;
        }
        out.push(InterfaceSample {
            theta,
            z: fs.point[2],
            rubber: by_layer[RUBBER_SUB as usize],
            steel: by_layer[STEEL_SUB as usize],
        });
    }
    out.sort_by(|a, b| {
        (a.z, a.theta)
            .partial_cmp(&(b.z, b.theta))
            .expect("finite sample coordinates")
    });
    Ok(out)
}
