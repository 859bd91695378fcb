//! Minimum-residual (DPG) finite element solver for three-dimensional linear
//! elasticity on hexahedral meshes.
//!
//! The solver discretizes the elasticity system with one of five broken
//! variational formulations per subdomain (strong, ultraweak, dual-mixed,
//! mixed, primal), couples subdomains through shared displacement-trace and
//! traction unknowns on the mesh skeleton, and solves the discrete
//! least-squares normal equations with element-local Gram inversion.
//!
//! Module map:
//! - [`material`]: isotropic stiffness/compliance actions, incompressible limit
//! - [`mesh`]: box and cylinder-shell hex meshes, uniform refinement, quadrature
//! - [`spaces`]: exact-sequence shape functions on the reference hex and traces
//! - [`forms`]: the five broken bilinear forms as element matrices
//! - [`dpg`]: Gram factorization, local condensation, residual evaluation
//! - [`system`]: global degree-of-freedom management, assembly, linear solvers
//! - [`bench`]: manufactured-solution and pressurized-hose studies, error norms
//! - [`config`]: run configuration parsing and top-level drivers

pub mod bench;
pub mod config;
pub mod dpg;
pub mod forms;
pub mod material;
pub mod mesh;
pub mod spaces;
pub mod system;

mod dense;

pub use material::IsotropicMaterial;

/// Initializes the global rayon thread pool from the `DPGEL_THREADS`
/// environment variable. A best-effort call: if the pool was already built
/// (e.g. by a prior call or by rayon itself), the existing pool is kept.
pub fn init_threads_from_env() -> usize {
    let requested = std::env::var("DPGEL_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = requested {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
