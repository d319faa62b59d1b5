//! Physical constants (CODATA 2018) and the default atom line data.
//!
//! Every dimensioned constant in the workspace lives here; nothing else
//! hard-codes SI values.

/// Boltzmann constant, J/K (exact).
pub const K_BOLTZMANN: f64 = 1.380649e-23;

/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.62607015e-34;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054571817e-34;

/// Bohr magneton, J/T.
pub const MU_BOHR: f64 = 9.2740100783e-24;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299792458.0;

/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS: f64 = 1.66053906660e-27;

///87Rb atomic mass, kg (86.909180531 u).
pub const MASS_RB87: f64 = 86.909180531 * ATOMIC_MASS;

/// 87Rb 5P3/2 natural decay rate, rad/s (2pi x 6.0666 MHz).
pub const GAMMA_E_RB87: f64 = 3.8117e7;

/// 87Rb ground-state spin-exchange cross section, m^2.
pub const SIGMA_SE_RB87: f64 = 1.9e-18;

/// Lande factor of the 87Rb 5S1/2 F=2 manifold.
pub const G_F_GROUND_RB87: f64 = 0.5;

/// Lande factor of the 87Rb 5P3/2 F'=3 manifold.
pub const G_F_EXCITED_RB87: f64 = 2.0 / 3.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hbar_consistent_with_planck() {
        let derived = PLANCK / (2.0 * std::f64::consts::PI);
        assert!((HBAR - derived).abs() / derived < 1e-9);
    }

    #[test]
    fn bohr_magneton_over_planck_in_ghz_per_tesla() {
        // mu_B/h = 13.996 GHz/T pins the magneton and Planck values together.
        let ghz_per_t = MU_BOHR / PLANCK / 1e9;
        assert!((ghz_per_t - 13.9962449361).abs() < 1e-6);
    }
}
