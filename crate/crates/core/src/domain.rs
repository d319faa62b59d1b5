//! Shared experiment description: atom, cell geometry, thermal ensemble,
//! magnetic fields. All quantities SI unless a field name says otherwise.

use serde::{Deserialize, Serialize};

use crate::constants::*;
use crate::error::{CoreError, Result};

/// One alkali species with the line data the simulator needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    /// Atomic mass, kg.
    pub mass: f64,
    /// Ground-manifold total angular momentum F.
    pub f_ground: f64,
    /// Excited-manifold total angular momentum F'.
    pub f_excited: f64,
    /// Ground-manifold Lande factor.
    pub g_f: f64,
    /// Excited-manifold Lande factor.
    pub g_e: f64,
    /// Excited-state decay rate, rad/s.
    pub gamma_e: f64,
    /// Spin-exchange cross section, m^2.
    pub sigma_se: f64,
}

impl AtomSpecies {
    /// 87Rb on the closed F=2 -> F'=3 line.
    pub fn rubidium87() -> Self {
        AtomSpecies {
            mass: MASS_RB87,
            f_ground: 2.0,
            f_excited: 3.0,
            g_f: G_F_GROUND_RB87,
            g_e: G_F_EXCITED_RB87,
            gamma_e: GAMMA_E_RB87,
            sigma_se: SIGMA_SE_RB87,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(CoreError::Domain(format!("mass must be positive, got {}", self.mass)));
        }
        if self.gamma_e < 0.0 || self.sigma_se < 0.0 {
            return Err(CoreError::Domain("decay rate and cross section must be non-negative".into()));
        }
        if (self.f_excited - self.f_ground - 1.0).abs() > 1e-12 {
            return Err(CoreError::Domain(format!(
                "closed-line model requires F' = F + 1, got F = {}, F' = {}",
                self.f_ground, self.f_excited
            )));
        }
        Ok(())
    }
}

/// Thin-cell and beam geometry.
///
/// The pump illuminates an annulus of width `pump_ring_width` whose inner
/// radius is `separation` (= ring diameter / 2); the probe is a coaxial disc
/// of radius `probe_radius`. `thickness` is the gap the atoms bounce inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    /// Cell thickness W, m.
    pub thickness: f64,
    /// Pump-probe separation L (ring inner radius), m.
    pub separation: f64,
    /// Radial width of the pump ring, m.
    pub pump_ring_width: f64,
    /// Probe beam radius, m.
    pub probe_radius: f64,
    /// In-plane cell size, m. Informational; no boundary is applied there.
    #[serde(default)]
    pub lateral_extent: Option<f64>,
}

impl CellGeometry {
    pub fn new(thickness: f64, separation: f64, pump_ring_width: f64, probe_radius: f64) -> Result<Self> {
        let g = CellGeometry {
            thickness,
            separation,
            pump_ring_width,
            probe_radius,
            lateral_extent: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("thickness", self.thickness),
            ("separation", self.separation),
            ("pump_ring_width", self.pump_ring_width),
            ("probe_radius", self.probe_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Domain(format!("cell.{name} must be positive and finite, got {v}")));
            }
        }
        let ratio = self.thickness / self.separation;
        if ratio >= 0.1 {
            return Err(CoreError::Domain(format!(
                "thin-cell model requires W/L < 0.1, got W/L = {ratio:.3}"
            )));
        }
        Ok(())
    }

    /// Largest glancing angle that still crosses from pump to probe: atan(W/L).
    pub fn alpha_max(&self) -> f64 {
        (self.thickness / self.separation).atan()
    }
}

/// Temperature/density state with the derived speed scales.
///
/// `u` = sqrt(kB T / m) sets the Gaussian width of each velocity component;
/// `v_p` = u*sqrt(2) is the most probable 3D speed; `v_rel` = sqrt(4 kB T/(pi m))
/// is the mean relative speed entering collision rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    /// Temperature, K.
    pub temperature: f64,
    /// Number density, m^-3.
    pub density: f64,
    pub u: f64,
    pub v_p: f64,
    pub v_rel: f64,
}

/// Builds a [`ThermalEnsemble`], deriving the speed scales from T and the mass.
pub fn derive_thermal(temperature: f64, density: f64, species: &AtomSpecies) -> Result<ThermalEnsemble> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CoreError::Domain(format!("temperature must be positive, got {temperature} K")));
    }
    if !(density >= 0.0) || !density.is_finite() {
        return Err(CoreError::Domain(format!("density must be non-negative, got {density} m^-3")));
    }
    species.validate()?;
    let u = (K_BOLTZMANN * temperature / species.mass).sqrt();
    Ok(ThermalEnsemble {
        temperature,
        density,
        u,
        v_p: u * std::f64::consts::SQRT_2,
        v_rel: (4.0 * K_BOLTZMANN * temperature / (std::f64::consts::PI * species.mass)).sqrt(),
    })
}

/// Static field and model parameters for a lineshape evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Scanned longitudinal field component, T. Grid evaluations override
    /// this per point; sequenced (time-domain) runs read it directly.
    #[serde(default)]
    pub b_parallel: f64,
    /// Transverse bias field, T.
    pub b_perp: f64,
    /// Ground-state coherence relaxation rate, 1/s.
    pub gamma_coh: f64,
    /// Amplitude of the linear (single-pass) rotation term, rad s.
    pub c1: f64,
    /// Amplitude of the velocity-filtered precession term, rad.
    pub c2: f64,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_coh < 0.0 || !self.gamma_coh.is_finite() {
            return Err(CoreError::Domain(format!(
                "coherence relaxation rate must be non-negative, got {}",
                self.gamma_coh
            )));
        }
        if !self.b_parallel.is_finite()
            || !self.b_perp.is_finite()
            || !self.c1.is_finite()
            || !self.c2.is_finite()
        {
            return Err(CoreError::Domain("field parameters must be finite".into()));
        }
        Ok(())
    }

    /// Total static field magnitude sqrt(B_parallel^2 + B_perp^2).
    pub fn total_field(&self) -> f64 {
        self.b_parallel.hypot(self.b_perp)
    }
}

/// Gyromagnetic ratio g_F mu_B / hbar, rad/(s T).
pub fn gyromagnetic_ratio(species: &AtomSpecies) -> f64 {
    species.g_f * MU_BOHR / HBAR
}

/// Larmor precession frequency, rad/s.
pub fn larmor(gamma: f64, b: f64) -> f64 {
    gamma * b
}

/// Precession frequency used throughout the lineshape model: magnitude from
/// the total field, sign from the scanned longitudinal component (zero at
/// B_parallel = 0 so the nonlinear response stays odd).
pub fn signed_larmor(gamma: f64, b_parallel: f64, b_perp: f64) -> f64 {
    if b_parallel == 0.0 {
        return 0.0;
    }
    b_parallel.signum() * gamma * b_parallel.hypot(b_perp)
}
