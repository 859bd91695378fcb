//! Isotropic linear-elastic material behavior: stiffness and compliance
//! actions on second-order tensors, including the exact incompressible limit.
//!
//! The incompressible case is represented by a dedicated flag rather than a
//! large-but-finite first Lamé parameter, so compliance stays exact and any
//! attempt to apply the (unbounded) stiffness action is a reported error.

use nalgebra::Matrix3;
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;

/// Symmetric part `(m + m^T)/2`.
pub fn sym_part(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Antisymmetric part `(m - m^T)/2`.
pub fn skew_part(m: &Mat3) -> Mat3 {
    (m - m.transpose()) * 0.5
}

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("Young's modulus must be positive, got {0}")]
    NonPositiveYoung(f64),
    #[error("Poisson's ratio must lie in (-1, 1/2], got {0}")]
    PoissonOutOfRange(f64),
    #[error("Lame parameters must satisfy mu > 0 and 3*lambda + 2*mu > 0, got lambda={lambda}, mu={mu}")]
    InvalidLame { lambda: f64, mu: f64 },
    #[error(
        "stiffness action is unbounded for an incompressible material; \
         use a formulation based on the compliance tensor instead"
    )]
    IncompressibleStiffness,
}

/// Isotropic material in Lame form, with exact incompressible support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicMaterial {
    /// First Lame parameter; meaningless (and unused) when `incompressible`.
    lambda: f64,
    /// Shear modulus.
    mu: f64,
    incompressible: bool,
}

impl IsotropicMaterial {
    /// Builds the material from Young's modulus and Poisson's ratio.
    /// `nu == 0.5` exactly selects the incompressible limit with `mu = e/3`.
    pub fn from_engineering(e: f64, nu: f64) -> Result<Self, MaterialError> {
        if !(e > 0.0) || !e.is_finite() {
            return Err(MaterialError::NonPositiveYoung(e));
        }
        if !(nu > -1.0 && nu <= 0.5) || !nu.is_finite() {
            return Err(MaterialError::PoissonOutOfRange(nu));
        }
        if nu == 0.5 {
            return Ok(Self {
                lambda: f64::NAN,
                mu: e / 3.0,
                incompressible: true,
            });
        }
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        Ok(Self {
            lambda,
            mu,
            incompressible: false,
        })
    }

    /// Builds a compressible material directly from Lame parameters.
    pub fn from_lame(lambda: f64, mu: f64) -> Result<Self, MaterialError> {
        if !(mu > 0.0) || !(3.0 * lambda + 2.0 * mu > 0.0) || !lambda.is_finite() || !mu.is_finite()
        {
            return Err(MaterialError::InvalidLame { lambda, mu });
        }
        Ok(Self {
            lambda,
            mu,
            incompressible: false,
        })
    }

    /// Builds an incompressible material from its shear modulus.
    pub fn incompressible_from_shear(mu: f64) -> Result<Self, MaterialError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(MaterialError::InvalidLame {
                lambda: f64::INFINITY,
                mu,
            });
        }
        Ok(Self {
            lambda: f64::NAN,
            mu,
            incompressible: true,
        })
    }

    pub fn is_incompressible(&self) -> bool {
        self.incompressible
    }

    pub fn shear_modulus(&self) -> f64 {
        self.mu
    }

    /// First Lame parameter; errors in the incompressible limit.
    pub fn lambda(&self) -> Result<f64, MaterialError> {
        if self.incompressible {
            Err(MaterialError::IncompressibleStiffness)
        } else {
            Ok(self.lambda)
        }
    }

    /// Returns the same material with every modulus divided by `scale`
    /// (used when casting a run into nondimensional units).
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            lambda: self.lambda / scale,
            mu: self.mu / scale,
            incompressible: self.incompressible,
        }
    }

    /// Stiffness action `lambda * tr(sym m) I + 2 mu * sym m`; the
    /// antisymmetric part of `m` is annihilated.
    pub fn stiffness_apply(&self, m: &Mat3) -> Result<Mat3, MaterialError> {
        let (lambda, mu) = self.stiffness_coefficients()?;
        let s = sym_part(m);
        Ok(Mat3::identity() * (lambda * s.trace()) + s * (2.0 * mu))
    }

    /// `(lambda, mu)` for stiffness-based formulations; errors when
    /// incompressible.
    pub fn stiffness_coefficients(&self) -> Result<(f64, f64), MaterialError> {
        if self.incompressible {
            return Err(MaterialError::IncompressibleStiffness);
        }
        Ok((self.lambda, self.mu))
    }

    /// Compliance action `sym(m)/(2 mu) - c * tr(sym m) I`, where the trace
    /// coefficient `c` has the exact finite value `1/(6 mu)` in the
    /// incompressible limit.
    pub fn compliance_apply(&self, m: &Mat3) -> Mat3 {
        let (inv_two_mu, c) = self.compliance_coefficients();
        let s = sym_part(m);
        s * inv_two_mu - Mat3::identity() * (c * s.trace())
    }

    /// `(1/(2 mu), c)` with `c = lambda / (2 mu (3 lambda + 2 mu))`
    /// compressible and `c = 1/(6 mu)` incompressible.
    pub fn compliance_coefficients(&self) -> (f64, f64) {
        let inv_two_mu = 1.0 / (2.0 * self.mu);
        let c = if self.incompressible {
            1.0 / (6.0 * self.mu)
        } else {
            self.lambda / (2.0 * self.mu * (3.0 * self.lambda + 2.0 * self.mu))
        };
        (inv_two_mu, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mat3(rng: &mut impl Rng) -> Mat3 {
        Mat3::from_fn(|_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn engineering_conversions_match_reference_values() {
        let steel = IsotropicMaterial::from_engineering(200e9, 0.285).unwrap();
        assert!((steel.lambda().unwrap() - 103158085241.15465).abs() < 1.0);
        assert!((steel.shear_modulus() - 77821011673.15175).abs() < 1.0);

        let unit = IsotropicMaterial::from_engineering(2.5, 0.25).unwrap();
        assert!((unit.lambda().unwrap() - 1.0).abs() < 1e-14);
        assert!((unit.shear_modulus() - 1.0).abs() < 1e-14);

        let rubber = IsotropicMaterial::from_engineering(0.01e9, 0.5).unwrap();
        assert!(rubber.is_incompressible());
        assert!((rubber.shear_modulus() - 0.01e9 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(IsotropicMaterial::from_engineering(-1.0, 0.3).is_err());
        assert!(IsotropicMaterial::from_engineering(1.0, 0.6).is_err());
        assert!(IsotropicMaterial::from_engineering(1.0, -1.0).is_err());
        assert!(IsotropicMaterial::from_lame(1.0, -1.0).is_err());
        let rubber = IsotropicMaterial::from_engineering(1.0, 0.5).unwrap();
        assert_eq!(
            rubber.stiffness_apply(&Mat3::identity()),
            Err(MaterialError::IncompressibleStiffness)
        );
    }

    #[test]
    fn compliance_inverts_stiffness_on_symmetric_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let lambda = rng.gen::<f64>() * 10.0;
            let mu = rng.gen::<f64>() * 10.0 + 0.1;
            let mat = IsotropicMaterial::from_lame(lambda, mu).unwrap();
            let m = random_mat3(&mut rng);
            let round = mat.compliance_apply(&mat.stiffness_apply(&m).unwrap());
            assert!((round - sym_part(&m)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn incompressible_compliance_is_deviatoric() {
        let mat = IsotropicMaterial::incompressible_from_shear(2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = random_mat3(&mut rng);
            let s = mat.compliance_apply(&m);
            assert!(s.trace().abs() < 1e-13 * (1.0 + m.abs().max()));
        }
    }

    #[test]
    fn incompressible_limit_is_continuous() {
        // c(nu -> 1/2) approaches 1/(6 mu) smoothly.
        let e = 3.0;
        let exact = IsotropicMaterial::from_engineering(e, 0.5).unwrap();
        let near = IsotropicMaterial::from_engineering(e, 0.5 - 1e-9).unwrap();
        let (_, c_exact) = exact.compliance_coefficients();
        let (_, c_near) = near.compliance_coefficients();
        assert!((c_exact - c_near).abs() < 1e-8 * c_exact);
        assert!((exact.shear_modulus() - near.shear_modulus()).abs() < 1e-8);
    }

    #[test]
    fn stiffness_annihilates_antisymmetric_part() {
        let mat = IsotropicMaterial::from_lame(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_mat3(&mut rng);
        let skew = skew_part(&m);
        assert!(mat.stiffness_apply(&skew).unwrap().abs().max() < 1e-15);
        let sym_only = mat.stiffness_apply(&sym_part(&m)).unwrap();
        let full = mat.stiffness_apply(&m).unwrap();
        assert!((sym_only - full).abs().max() < 1e-15);
    }
}
