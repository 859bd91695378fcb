//! Manufactured smooth solution on a box, split into eight octant
//! subdomains so that different formulations can be coupled across
//! interfaces.
//!
//! Every displacement component is the product of sines vanishing on the
//! boundary of the size-2 cube; the body force is the corresponding
//! negative stress divergence. With the default box the boundary data is
//! zero, but the builder accepts any axis-aligned box and then prescribes
//! the (nonzero) exact trace.

use super::{formulation_config_string, ErrorMeasure, Problem};
use crate::forms::Formulation;
use crate::material::IsotropicMaterial;
use crate::mesh::generate::{box_mesh, BoxMeshSpec};
use crate::system::assemble::SubdomainSetup;
use crate::system::bc::{BcSpec, PartBc};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Geometry, material and formulation assignment of the box problem.
#[derive(Debug, Clone)]
pub struct CubeSpec {
    /// Formulation per cell of the coarse grid, index `i + 2 j + 4 k`.
    pub octants: [Formulation; 8],
    pub lambda: f64,
    pub mu: f64,
    pub origin: [f64; 3],
    pub size: [f64; 3],
}

impl Default for CubeSpec {
    fn default() -> Self {
        use Formulation::*;
        CubeSpec {
            // Mirror-symmetric assignment: every pair of distinct letters
            // meets across at least one interface.
            octants: [Strong, Ultraweak, Mixed, Primal, Primal, Mixed, Ultraweak, Strong],
            lambda: 1.0,
            mu: 1.0,
            origin: [0.0; 3],
            size: [2.0; 3],
        }
    }
}

/// Exact displacement: every component `sin(pi x) sin(pi y) sin(pi z)`.
pub fn exact_displacement(x: [f64; 3]) -> [f64; 3] {
    let s = (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin();
    [s, s, s]
}

/// Exact stress `lambda tr(E) I + 2 mu E` of the displacement above.
pub fn exact_stress(lambda: f64, mu: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
    let s: Vec<f64> = x.iter().map(|&t| (PI * t).sin()).collect();
    let c: Vec<f64> = x.iter().map(|&t| (PI * t).cos()).collect();
    // d_j u_i = pi c_j prod_{k != j} s_k, independent of i.
    let du = |j: usize| -> f64 {
        PI * c[j] * (0..3).filter(|&k| k != j).map(|k| s[k]).product::<f64>()
    };
    let d = [du(0), du(1), du(2)];
    let div = d[0] + d[1] + d[2];
    let mut sig = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let sym = 0.5 * (d[a] + d[b]);
            sig[a][b] = 2.0 * mu * sym + if a == b { lambda * div } else { 0.0 };
        }
    }
    sig
}

/// Body force `-div(exact stress)`: component `c` equals
/// `pi^2 [ (lambda + 4 mu) s1 s2 s3 - (lambda + mu) c_c (c_k s_l + c_l s_k) ]`
/// with `{k, l}` the two other axes.
pub fn body_force(lambda: f64, mu: f64, x: [f64; 3]) -> [f64; 3] {
    let s: Vec<f64> = x.iter().map(|&t| (PI * t).sin()).collect();
    let c: Vec<f64> = x.iter().map(|&t| (PI * t).cos()).collect();
    let sss = s[0] * s[1] * s[2];
    let mut f = [0.0; 3];
    for cc in 0..3 {
        let (k, l) = match cc {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        f[cc] = PI * PI
            * ((lambda + 4.0 * mu) * sss - (lambda + mu) * c[cc] * (c[k] * s[l] + c[l] * s[k]));
    }
    f
}

/// Builds the ready-to-run problem from the spec.
pub fn problem(spec: &CubeSpec) -> Result<Problem, super::BenchError> {
    let material = IsotropicMaterial::from_lame(spec.lambda, spec.mu)?;
    let mut subdomains = HashMap::new();
    for (i, &f) in spec.octants.iter().enumerate() {
        subdomains.insert(
            i as u16,
            SubdomainSetup {
                formulation: f,
                material,
            },
        );
    }
    let base_mesh = box_mesh(
        &BoxMeshSpec {
            origin: spec.origin,
            size: spec.size,
            cells: [2, 2, 2],
        },
        |c| (c[0] + 2 * c[1] + 4 * c[2]) as u16,
    );
    let (lambda, mu) = (spec.lambda, spec.mu);
    // Only the displacement error is reported for this problem.
    let measures = vec![ErrorMeasure::DisplacementL2(Box::new(exact_displacement))];
    Ok(Problem {
        benchmark: "cube".to_string(),
        formulation_config: formulation_config_string(&subdomains),
        base_mesh,
        subdomains,
        body_force: Box::new(move |x| body_force(lambda, mu, x)),
        quadrature_boost: 0,
        make_bc: Box::new(|_mesh| {
            let mut parts = HashMap::new();
            parts.insert(0u16, PartBc::Displacement(Box::new(exact_displacement)));
            BcSpec { parts, pins: vec![] }
        }),
        measures,
    })
}
