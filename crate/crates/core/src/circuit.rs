//! Physical rf-SQUID parameters and their reduction to the dimensionless
//! driven Hamiltonian
//!
//! ```text
//! H_D = Q²/2 + (Φ − Φ_ex(t))²/2 + β_c cos(κ Φ),   Φ_ex(t) = Φ_ex0 cos(ω_d t)
//! ```
//!
//! Times are measured in units of 1/ω₀ and energies in units of ħω₀, with
//! ω₀ = 1/√(LC).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Elementary charge (C), exact in the 2019 SI.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Planck constant (J·s), exact in the 2019 SI.
pub const PLANCK: f64 = 6.62607015e-34;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    pub e: f64,
    pub h: f64,
    pub hbar: f64,
    pub phi0: f64,
}

impl PhysicalConstants {
    pub const fn codata2018() -> Self {
        Self {
            e: ELEMENTARY_CHARGE,
            h: PLANCK,
            hbar: PLANCK / (2.0 * PI),
            phi0: PLANCK / (2.0 * ELEMENTARY_CHARGE),
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

/// Circuit values of a single-junction rf-SQUID under flux drive
/// `φ_ex(t) = φ_ex(0) cos(ω_d t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquidParameters {
    /// Junction capacitance C (F).
    pub capacitance: f64,
    /// Loop inductance L (H).
    pub inductance: f64,
    /// Critical current I_c (A).
    pub critical_current: f64,
    /// Drive frequency ω_d in units of ω₀.
    pub omega_d_ratio: f64,
    /// Drive amplitude φ_ex(0) in units of φ₀.
    pub phi_ex0_ratio: f64,
}

impl SquidParameters {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("capacitance", self.capacitance),
            ("inductance", self.inductance),
            ("critical_current", self.critical_current),
            ("omega_d_ratio", self.omega_d_ratio),
            ("phi_ex0_ratio", self.phi_ex0_ratio),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Hysteresis parameter β_L = 2π L I_c / φ₀.
    pub fn beta_l(&self, k: &PhysicalConstants) -> f64 {
        2.0 * PI * self.inductance * self.critical_current / k.phi0
    }
}

/// The reduced model. All fields are dimensionless except `omega0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimensionlessModel {
    /// Cosine amplitude I_c/(2eω₀).
    pub beta_c: f64,
    /// Cosine argument scale 2e/√(ħω₀C).
    pub kappa: f64,
    /// Drive amplitude √(ω₀C/ħ)·φ_ex(0).
    pub phi_ex0: f64,
    pub omega_d_ratio: f64,
    /// ω₀ = 1/√(LC) in rad/s; only used to convert rates back to SI.
    pub omega0: f64,
}

/// Reduce circuit values to the dimensionless model.
pub fn reduce(p: &SquidParameters, k: &PhysicalConstants) -> Result<DimensionlessModel> {
    p.validate()?;
    let beta_l = p.beta_l(k);
    if beta_l <= 1.0 {
        log::warn!("beta_L = {beta_l:.4} <= 1: flux potential has no multi-well structure");
    }
    let omega0 = 1.0 / (p.inductance * p.capacitance).sqrt();
    let flux_unit = (k.hbar * omega0 * p.capacitance).sqrt();
    let model = DimensionlessModel {
        beta_c: p.critical_current / (2.0 * k.e * omega0),
        kappa: 2.0 * k.e / flux_unit,
        phi_ex0: p.phi_ex0_ratio * k.phi0 * omega0 * p.capacitance / flux_unit,
        omega_d_ratio: p.omega_d_ratio,
        omega0,
    };
    debug_assert!(model.is_finite());
    Ok(model)
}

impl DimensionlessModel {
    /// Build a model directly from reduced values (ω₀ set to 1).
    pub fn from_reduced(beta_c: f64, kappa: f64, phi_ex0: f64, omega_d_ratio: f64) -> Self {
        Self { beta_c, kappa, phi_ex0, omega_d_ratio, omega0: 1.0 }
    }

    pub fn is_finite(&self) -> bool {
        [self.beta_c, self.kappa, self.phi_ex0, self.omega_d_ratio, self.omega0]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Drive period 2π/ω_d in units of 1/ω₀.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_d_ratio
    }

    /// External flux Φ_ex(t).
    pub fn drive(&self, t: f64) -> f64 {
        self.phi_ex0 * (self.omega_d_ratio * t).cos()
    }

    /// Classical potential (φ − Φ_ex(t))²/2 + β_c cos(κφ).
    pub fn potential(&self, phi: f64, t: f64) -> f64 {
        let x = phi - self.drive(t);
        0.5 * x * x + self.beta_c * (self.kappa * phi).cos()
    }
}

/// Free-function form of [`DimensionlessModel::drive`].
pub fn drive(m: &DimensionlessModel, t: f64) -> f64 {
    m.drive(t)
}

/// Free-function form of [`DimensionlessModel::potential`].
pub fn potential(m: &DimensionlessModel, phi: f64, t: f64) -> f64 {
    m.potential(phi, t)
}
