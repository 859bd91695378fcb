//! Global problem setup: skeleton degrees of freedom, boundary constraints,
//! assembly of the condensed normal equations and linear solvers.

pub mod assemble;
pub mod bc;
pub mod dofmap;
pub mod solve;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Forms(#[from] crate::forms::FormsError),
    #[error(transparent)]
    Dpg(#[from] crate::dpg::DpgError),
    #[error("boundary part {part} has no configured condition")]
    PartNotConfigured { part: u16 },
    #[error("boundary part {part} is tagged {tag} but configured as {config}")]
    PartKindMismatch {
        part: u16,
        tag: &'static str,
        config: &'static str,
    },
    #[error("clamped face normal is not axis aligned (normal {normal:?})")]
    ClampNormalNotAxisAligned { normal: [f64; 3] },
    #[error("subdomain {subdomain} has no formulation or material assigned")]
    SubdomainNotConfigured { subdomain: u16 },
    #[error("stash i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("conjugate gradients stalled at relative residual {rel:.3e} after {iterations} iterations")]
    CgNotConverged { rel: f64, iterations: usize },
}
