//! Built-in verification problems and convergence studies.
//!
//! A [`Problem`] bundles everything a convergence study needs: a coarse
//! mesh, per-subdomain formulation and material assignments, loads and
//! boundary data, and the error measures to report. [`study`] runs the
//! refinement loop and writes the CSV reports.

pub mod cube;
pub mod error;
pub mod hose;
pub mod study;

use crate::material::MaterialError;
use crate::mesh::{Mesh, MeshError, SubdomainId};
use crate::system::assemble::SubdomainSetup;
use crate::system::bc::BcSpec;
use crate::system::SystemError;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("the radial two-layer system is singular (determinant {d:.3e})")]
    SingularRadialSystem { d: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Error norm to report, with the exact field it is measured against.
pub enum ErrorMeasure {
    /// L2 norm of the displacement error; the exact displacement is a
    /// function of the physical point.
    DisplacementL2(Box<dyn Fn([f64; 3]) -> [f64; 3] + Sync>),
    /// L2 norm of the stress error; the exact stress may depend on the
    /// subdomain (discontinuous material data).
    StressL2(Box<dyn Fn(SubdomainId, [f64; 3]) -> [[f64; 3]; 3] + Sync>),
}

impl ErrorMeasure {
    pub fn label(&self) -> &'static str {
        match self {
            ErrorMeasure::DisplacementL2(_) => "displacement_l2",
            ErrorMeasure::StressL2(_) => "stress_l2",
        }
    }
}

/// A ready-to-run verification problem.
pub struct Problem {
    /// Name used in the `benchmark` CSV column.
    pub benchmark: String,
    /// Formulation letters by subdomain id, used in the CSV reports.
    pub formulation_config: String,
    pub base_mesh: Mesh,
    pub subdomains: HashMap<SubdomainId, SubdomainSetup>,
    pub body_force: Box<dyn Fn([f64; 3]) -> [f64; 3] + Sync>,
    /// Extra Gauss points per direction (curved geometries).
    pub quadrature_boost: usize,
    /// Builds the boundary conditions for one refinement level; the mesh is
    /// needed because vertex pins are located by coordinates.
    pub make_bc: Box<dyn Fn(&Mesh) -> BcSpec + Sync>,
    pub measures: Vec<ErrorMeasure>,
}

/// One letter per formulation, used to build `formulation_config` strings.
pub fn formulation_letter(f: crate::forms::Formulation) -> char {
    use crate::forms::Formulation::*;
    match f {
        Strong => 'S',
        Ultraweak => 'U',
        DualMixed => 'D',
        Mixed => 'M',
        Primal => 'P',
    }
}

/// Formulation letters of `subdomains` in ascending subdomain id order.
pub fn formulation_config_string(subdomains: &HashMap<SubdomainId, SubdomainSetup>) -> String {
    let mut ids: Vec<_> = subdomains.keys().copied().collect();
    ids.sort_unstable();
    ids.iter()
        .map(|id| formulation_letter(subdomains[id].formulation))
        .collect()
}
