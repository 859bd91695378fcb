//! Run configuration: TOML parsing, validation and problem construction.
//!
//! The configuration names one of the built-in benchmarks (or a custom box
//! variant of the manufactured solution), the polynomial orders, the number
//! of refinements, solver options and an output directory. Unknown keys are
//! rejected and every value is validated before any compute starts.

use crate::bench::hose::{HoseArtifacts, HoseSpec, PressureKind};
use crate::bench::study::StudyOptions;
use crate::bench::{cube, hose, BenchError, Problem};
use crate::forms::Formulation;
use crate::material::{IsotropicMaterial, MaterialError};
use crate::system::solve::SolverKind;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("configuration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field} must be {requirement}, got {got}")]
    OutOfRange {
        field: &'static str,
        requirement: &'static str,
        got: String,
    },
    #[error("invalid material: {0}")]
    Material(#[from] MaterialError),
    #[error(
        "subdomain {subdomain} assigns formulation {formulation:?} to an \
         incompressible material, which needs a compliance-based formulation"
    )]
    IncompressibleAssignment {
        subdomain: u16,
        formulation: Formulation,
    },
    #[error("building the problem failed: {0}")]
    Problem(#[from] BenchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Cube,
    HoseUniform,
    HoseCos2,
    Custom,
}

fn default_dp() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub p: usize,
    #[serde(default = "default_dp")]
    pub dp: usize,
    pub refinements: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub cube: CubeConfig,
    #[serde(default)]
    pub hose: HoseConfig,
    #[serde(default)]
    pub custom: CustomConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
}

/// Material override shared by the box benchmarks: either Lame parameters
/// or engineering constants, not both.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxMaterialConfig {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    /// Young's modulus in Pa.
    pub e: Option<f64>,
    pub nu: Option<f64>,
}

impl BoxMaterialConfig {
    fn build(&self) -> Result<(f64, f64), ConfigError> {
        let engineering = self.e.is_some() || self.nu.is_some();
        let lame = self.lambda.is_some() || self.mu.is_some();
        if engineering && lame {
            return Err(ConfigError::OutOfRange {
                field: "material",
                requirement: "either (lambda, mu) or (e, nu), not both",
                got: "both".to_string(),
            });
        }
        let material = if engineering {
            let (Some(e), Some(nu)) = (self.e, self.nu) else {
                return Err(ConfigError::OutOfRange {
                    field: "material",
                    requirement: "e and nu given together",
                    got: "only one of them".to_string(),
                });
            };
            IsotropicMaterial::from_engineering(e, nu)?
        } else {
            IsotropicMaterial::from_lame(self.lambda.unwrap_or(1.0), self.mu.unwrap_or(1.0))?
        };
        if material.is_incompressible() {
            // The manufactured box solution reports stiffness-based data.
            return Err(ConfigError::OutOfRange {
                field: "material.nu",
                requirement: "compressible (nu < 1/2) for the box benchmarks",
                got: "1/2".to_string(),
            });
        }
        Ok((material.lambda()?, material.shear_modulus()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeConfig {
    /// Formulation per octant, index `i + 2 j + 4 k`; defaults to the
    /// mirror-symmetric four-letter assignment.
    pub octants: Option<[Formulation; 8]>,
    #[serde(flatten)]
    pub material: BoxMaterialConfig,
}

impl Default for CubeConfig {
    fn default() -> Self {
        CubeConfig {
            octants: None,
            material: BoxMaterialConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub origin: [f64; 3],
    pub size: [f64; 3],
    pub octants: Option<[Formulation; 8]>,
    #[serde(flatten)]
    pub material: BoxMaterialConfig,
}

impl Default for CustomConfig {
    fn default() -> Self {
        CustomConfig {
            origin: [0.0; 3],
            size: [2.0; 3],
            octants: None,
            material: BoxMaterialConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    /// Young's modulus in Pa.
    pub e: f64,
    pub nu: f64,
    pub formulation: Formulation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoseConfig {
    /// Inner, interface and outer radius in meters.
    pub radii: [f64; 3],
    pub rubber: LayerConfig,
    pub steel: LayerConfig,
    /// Pressures in Pa.
    pub p_in: f64,
    pub p_out: f64,
    pub n_theta: usize,
    pub n_z: usize,
    /// Axial length in meters.
    pub z_len: f64,
}

impl Default for HoseConfig {
    fn default() -> Self {
        let d = HoseSpec::default();
        HoseConfig {
            radii: d.radii,
            rubber: LayerConfig {
                e: d.rubber_e,
                nu: d.rubber_nu,
                formulation: d.rubber_formulation,
            },
            steel: LayerConfig {
                e: d.steel_e,
                nu: d.steel_nu,
                formulation: d.steel_formulation,
            },
            p_in: d.p_in,
            p_out: d.p_out,
            n_theta: d.n_theta,
            n_z: d.n_z,
            z_len: d.z_len,
        }
    }
}

/// Cylindrical sampling grid of the exact-field dump.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_r: 8,
            n_theta: 16,
            n_z: 3,
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: RunConfig = toml::from_str(&text)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn range_err(
    field: &'static str,
    requirement: &'static str,
    got: impl std::fmt::Display,
) -> ConfigError {
    ConfigError::OutOfRange {
        field,
        requirement,
        got: got.to_string(),
    }
}

pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    if !(1..=5).contains(&cfg.p) {
        return Err(range_err("p", "between 1 and 5", cfg.p));
    }
    if !(1..=3).contains(&cfg.dp) {
        return Err(range_err("dp", "between 1 and 3", cfg.dp));
    }
    if cfg.refinements > 6 {
        return Err(range_err("refinements", "between 0 and 6", cfg.refinements));
    }
    match cfg.benchmark {
        Benchmark::Cube | Benchmark::Custom => {}
        Benchmark::HoseUniform | Benchmark::HoseCos2 => {
            let h = &cfg.hose;
            let ascending = h.radii[0] > 0.0 && h.radii[0] < h.radii[1] && h.radii[1] < h.radii[2];
            if !ascending {
                return Err(range_err(
                    "hose.radii",
                    "positive and strictly ascending",
                    format!("{:?}", h.radii),
                ));
            }
            if h.n_theta < 2 {
                return Err(range_err("hose.n_theta", "at least 2", h.n_theta));
            }
            if h.n_z < 1 {
                return Err(range_err("hose.n_z", "at least 1", h.n_z));
            }
            if !(h.z_len > 0.0) {
                return Err(range_err("hose.z_len", "positive", h.z_len));
            }
            if !h.p_in.is_finite() || !h.p_out.is_finite() {
                return Err(range_err(
                    "hose.p_in/p_out",
                    "finite",
                    format!("{} / {}", h.p_in, h.p_out),
                ));
            }
        }
    }
    if cfg.benchmark != Benchmark::Custom {
        // Size zero would only be hit through the custom geometry.
    } else if cfg.custom.size.iter().any(|&s| !(s > 0.0)) {
        return Err(range_err(
            "custom.size",
            "positive in every direction",
            format!("{:?}", cfg.custom.size),
        ));
    }
    Ok(())
}

/// A validated, ready-to-run problem with its scales.
pub struct BuiltRun {
    pub problem: Problem,
    /// Present for the shell benchmarks.
    pub hose: Option<HoseArtifacts>,
    /// Multiply nondimensional lengths by this for meters.
    pub length_scale: f64,
    /// Multiply nondimensional stresses by this for Pa.
    pub stress_scale: f64,
}

pub fn build_problem(cfg: &RunConfig) -> Result<BuiltRun, ConfigError> {
    match cfg.benchmark {
        Benchmark::Cube | Benchmark::Custom => {
            let (octants, material, origin, size) = match cfg.benchmark {
                Benchmark::Cube => (
                    cfg.cube.octants,
                    &cfg.cube.material,
                    [0.0; 3],
                    [2.0; 3],
                ),
                _ => (
                    cfg.custom.octants,
                    &cfg.custom.material,
                    cfg.custom.origin,
                    cfg.custom.size,
                ),
            };
            let (lambda, mu) = material.build()?;
            let mut spec = cube::CubeSpec {
                lambda,
                mu,
                origin,
                size,
                ..cube::CubeSpec::default()
            };
            if let Some(o) = octants {
                spec.octants = o;
            }
            let mut problem = cube::problem(&spec)?;
            if cfg.benchmark == Benchmark::Custom {
                problem.benchmark = "custom".to_string();
            }
            Ok(BuiltRun {
                problem,
                hose: None,
                length_scale: 1.0,
                stress_scale: 1.0,
            })
        }
        Benchmark::HoseUniform | Benchmark::HoseCos2 => {
            let h = &cfg.hose;
            let spec = HoseSpec {
                radii: h.radii,
                rubber_e: h.rubber.e,
                rubber_nu: h.rubber.nu,
                steel_e: h.steel.e,
                steel_nu: h.steel.nu,
                p_in: h.p_in,
                p_out: h.p_out,
                rubber_formulation: h.rubber.formulation,
                steel_formulation: h.steel.formulation,
                pressure: if cfg.benchmark == Benchmark::HoseUniform {
                    PressureKind::Uniform
                } else {
                    PressureKind::Cos2
                },
                n_theta: h.n_theta,
                n_z: h.n_z,
                z_len: h.z_len,
            };
            check_assignment(h)?;
            let (problem, artifacts) = hose::problem(&spec)?;
            Ok(BuiltRun {
                length_scale: artifacts.length_scale,
                stress_scale: artifacts.stress_scale,
                problem,
                hose: Some(artifacts),
            })
        }
    }
}

/// Stiffness-based formulations cannot host an exactly incompressible
/// material; catch that as a configuration error before any assembly.
fn check_assignment(h: &HoseConfig) -> Result<(), ConfigError> {
    for (sub, layer) in [(hose::RUBBER_SUB, &h.rubber), (hose::STEEL_SUB, &h.steel)] {
        let needs_stiffness = matches!(
            layer.formulation,
            Formulation::Strong | Formulation::Primal
        );
        if needs_stiffness && layer.nu == 0.5 {
            return Err(ConfigError::IncompressibleAssignment {
                subdomain: sub,
                formulation: layer.formulation,
            });
        }
    }
    Ok(())
}

pub fn study_options(cfg: &RunConfig) -> StudyOptions {
    StudyOptions {
        p: cfg.p,
        dp: cfg.dp,
        refinements: cfg.refinements,
        solver: cfg.solver,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_cube_toml() -> &'static str {
        "benchmark = \"cube\"\np = 2\nrefinements = 1\noutput_dir = \"out\"\n"
    }

    #[test]
    fn minimal_cube_config_builds_default_problem() {
        let cfg: RunConfig = toml::from_str(minimal_cube_toml()).unwrap();
        validate(&cfg).unwrap();
        assert_eq!(cfg.dp, 1);
        assert_eq!(cfg.solver, SolverKind::Auto);
        let built = build_problem(&cfg).unwrap();
        assert_eq!(built.problem.benchmark, "cube");
        assert_eq!(built.problem.formulation_config, "SUMPPMUS");
        assert_eq!(built.problem.base_mesh.n_elements(), 8);
        assert_eq!(built.length_scale, 1.0);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        let with_unknown = format!("{}typo_key = 1\n", minimal_cube_toml());
        assert!(toml::from_str::<RunConfig>(&with_unknown).is_err());

        for (field, bad) in [("p", "p = 6"), ("dp", "dp = 4"), ("refinements", "refinements = 7")]
        {
            let text = format!(
                "benchmark = \"cube\"\np = 2\nrefinements = 1\noutput_dir = \"o\"\n{bad}\n"
            );
            let text = if field == "p" {
                text.replace("p = 2\n", "")
            } else if field == "refinements" {
                text.replace("refinements = 1\n", "")
            } else {
                text
            };
            let cfg: RunConfig = toml::from_str(&text).unwrap();
            assert!(validate(&cfg).is_err(), "{field} accepted: {text}");
        }
    }

    #[test]
    fn poisson_ratio_above_half_is_rejected() {
        let text = format!("{}[cube]\ne = 1.0\nnu = 0.6\n", minimal_cube_toml());
        let cfg: RunConfig = toml::from_str(&text).unwrap();
        validate(&cfg).unwrap();
        match build_problem(&cfg) {
            Err(ConfigError::Material(MaterialError::PoissonOutOfRange(v))) => {
                assert_eq!(v, 0.6)
            }
            Err(other) => panic!("expected Poisson rejection, got {other:?}"),
            Ok(_) => panic!("expected Poisson rejection, got a built problem"),
        }
    }

    #[test]
    fn hose_default_matches_reference_setup() {
        let text = "benchmark = \"hose_uniform\"\np = 2\nrefinements = 1\noutput_dir = \"o\"\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        validate(&cfg).unwrap();
        assert_eq!(cfg.hose.radii, [0.5, 0.99, 1.0]);
        assert_eq!(cfg.hose.steel.e, 200e9);
        assert_eq!(cfg.hose.rubber.nu, 0.5);
        let built = build_problem(&cfg).unwrap();
        assert_eq!(built.problem.benchmark, "hose_uniform");
        assert_eq!(built.problem.formulation_config, "UP");
        assert_eq!(built.stress_scale, 200e9);
        assert!(built.hose.unwrap().exact.is_some());
    }

    #[test]
    fn incompressible_material_with_stiffness_formulation_is_config_error() {
        let text = "benchmark = \"hose_uniform\"\np = 2\nrefinements = 0\noutput_dir = \"o\"\n\
                    [hose]\nradii = [0.5, 0.99, 1.0]\np_in = 1e6\np_out = 0.0\n\
                    n_theta = 4\nn_z = 1\nz_len = 1.0\n\
                    rubber = { e = 1e7, nu = 0.5, formulation = \"primal\" }\n\
                    steel = { e = 2e11, nu = 0.285, formulation = \"primal\" }\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        validate(&cfg).unwrap();
        assert!(matches!(
            build_problem(&cfg),
            Err(ConfigError::IncompressibleAssignment { subdomain: 0, .. })
        ));
    }

    #[test]
    fn custom_box_overrides_geometry_and_name() {
        let text = "benchmark = \"custom\"\np = 1\nrefinements = 0\noutput_dir = \"o\"\n\
                    [custom]\norigin = [1.0, 0.0, 0.0]\nsize = [1.0, 1.0, 1.0]\n\
                    lambda = 2.0\nmu = 3.0\n\
                    octants = [\"primal\",\"primal\",\"primal\",\"primal\",\
                               \"primal\",\"primal\",\"primal\",\"primal\"]\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        validate(&cfg).unwrap();
        let built = build_problem(&cfg).unwrap();
        assert_eq!(built.problem.benchmark, "custom");
        assert_eq!(built.problem.formulation_config, "PPPPPPPP");
        // Vertices span the shifted box.
        let xs: Vec<f64> = built
            .problem
            .base_mesh
            .vertices
            .iter()
            .map(|v| v[0])
            .collect();
        assert!(xs.iter().cloned().fold(f64::INFINITY, f64::min) >= 1.0 - 1e-12);
    }
}
