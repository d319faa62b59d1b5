//! Kinetic theory of the thin-cell geometry: which atoms survive the flight
//! from the pump ring to the probe spot, and at what rate.
//!
//! Wall collisions depolarize, so the detected ensemble is filtered: only
//! atoms whose longitudinal displacement over the transit stays inside the
//! gap contribute. That filter turns the 3D Maxwell distribution into a
//! sharply peaked longitudinal marginal and a narrow angular acceptance.

use libm::erfc;
use serde::Serialize;

use crate::domain::{AtomSpecies, CellGeometry, ThermalEnsemble};
use crate::error::{CoreError, Result};
use crate::numerics::{adaptive_quad, QuadTol};

const SQRT_PI: f64 = 1.7724538509055160;

/// Shape of the wall-filtered longitudinal velocity marginal as a function of
/// eta = L|v_par| / (W u). Normalization: integral over eta in [0, inf) is
/// 1/(4 sqrt(pi)).
pub fn marginal_shape(eta: f64) -> f64 {
    let eta = eta.abs();
    (-eta * eta).exp() / std::f64::consts::PI - eta * erfc(eta) / SQRT_PI
}

/// eta = ratio of mean transverse transit time L/u to the wall-collision
/// time W/|v_par|.
pub fn eta(v_par: f64, geometry: &CellGeometry, ensemble: &ThermalEnsemble) -> f64 {
    geometry.separation * v_par.abs() / (geometry.thickness * ensemble.u)
}

/// Angular acceptance of the pump-to-probe flight: enter at longitudinal
/// offset z, survive if the climb L tan|alpha| stays below W - z. Averaged
/// over entry position (uniform in W) the weight is proportional to
/// (W - L tan|alpha|), clamped at zero.
#[derive(Debug, Clone)]
pub struct AngularDistribution {
    pub geometry: CellGeometry,
    /// Weight prefactor; the linearized density integrates to A w^2 / l.
    pub a_norm: f64,
    pub alpha_max: f64,
}

impl AngularDistribution {
    /// Acceptance for `n_pumped` atoms in the source ring; the linearized
    /// density then integrates to exactly `n_pumped`.
    pub fn new(geometry: &CellGeometry, n_pumped: f64) -> Self {
        let a_norm = n_pumped * geometry.separation / (geometry.thickness * geometry.thickness);
        AngularDistribution { geometry: geometry.clone(), a_norm, alpha_max: geometry.alpha_max() }
    }

    /// Unit-normalized acceptance (one source atom).
    pub fn unit(geometry: &CellGeometry) -> Self {
        Self::new(geometry, 1.0)
    }

    /// Density at elevation angle `alpha` (rad). `linearized` replaces
    /// tan|alpha| by |alpha|, valid for W << L; the exact form is never
    /// larger than the linearized one.
    pub fn density(&self, alpha: f64, linearized: bool) -> f64 {
        let a = alpha.abs();
        if a >= self.alpha_max {
            return 0.0;
        }
        let climb = if linearized { a } else { a.tan() };
        let w = self.geometry.thickness - self.geometry.separation * climb;
        self.a_norm * w.max(0.0)
    }
}

/// Longitudinal velocity marginal of the arriving ensemble.
///
/// `normalized` selects a probability density over v_par in (-inf, inf);
/// otherwise the raw per-source-atom weight (unit pumped number) is returned,
/// which is what the transverse-distribution integral produces directly.
#[derive(Debug, Clone)]
pub struct VelocityMarginal {
    pub ensemble: ThermalEnsemble,
    pub geometry: CellGeometry,
    pub normalized: bool,
}

impl VelocityMarginal {
    pub fn new(geometry: &CellGeometry, ensemble: &ThermalEnsemble, normalized: bool) -> Self {
        VelocityMarginal { ensemble: ensemble.clone(), geometry: geometry.clone(), normalized }
    }

    fn prefactor(&self) -> f64 {
        let l = self.geometry.separation;
        let w = self.geometry.thickness;
        if self.normalized {
            // integral of the shape over eta is 1/(4 sqrt(pi)); two signs of v_par
            2.0 * SQRT_PI * l / (w * self.ensemble.u)
        } else {
            // A * W * sqrt(pi)/2 with unit pumped number, A = L/W^2
            SQRT_PI * l / (2.0 * w)
        }
    }

    /// Closed-form marginal density at longitudinal velocity `v_par` (m/s).
    pub fn density(&self, v_par: f64) -> f64 {
        self.prefactor() * marginal_shape(eta(v_par, &self.geometry, &self.ensemble))
    }

    /// Quadrature route: integrate the acceptance-weighted speed density over
    /// all speeds fast enough to cross before hitting a wall. Serves as the
    /// independent check on [`Self::density`].
    pub fn density_numeric(&self, v_par: f64) -> Result<f64> {
        let v_par = v_par.abs();
        let u = self.ensemble.u;
        let l = self.geometry.separation;
        let w = self.geometry.thickness;
        let a_norm = l / (w * w); // unit pumped number
        let v_min = l * v_par / w;
        // beyond sqrt(v_min^2 + 81 u^2) the Gaussian weight is down by e^-81
        let v_max = (v_min * v_min + 81.0 * u * u).sqrt();
        let raw = adaptive_quad(
            |v| a_norm * (w - l * v_par / v) * (v / (u * u)) * (-v * v / (u * u)).exp() / SQRT_PI,
            v_min.max(1e-300),
            v_max,
            &[u, 2.0 * u, 3.0 * u],
            QuadTol::new(1e-11, 0.0),
            "longitudinal marginal",
        )?;
        Ok(if self.normalized { raw * 4.0 / u } else { raw })
    }
}

/// Maxwell speed weight as used in the transverse-distribution integral:
/// (v/u^2) e^{-v^2/u^2} / sqrt(pi). Raw integral over [0, inf) is
/// 1/(2 sqrt(pi)); `normalized` rescales to a unit-integral density
/// (mode at u/sqrt(2)).
pub fn maxwell_speed_density(v: f64, ensemble: &ThermalEnsemble, normalized: bool) -> f64 {
    if v < 0.0 {
        return 0.0;
    }
    let u = ensemble.u;
    let raw = (v / (u * u)) * (-v * v / (u * u)).exp() / SQRT_PI;
    if normalized {
        2.0 * SQRT_PI * raw
    } else {
        raw
    }
}

/// Atom budget of one shot: pumped volume and number, geometric escape
/// probability to the probe spot, and the resulting detected flux, plus the
/// spin-exchange mean free path and rate at this density.
#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    /// Pumped ring volume, m^3.
    #[serde(rename = "V_pu")]
    pub pumped_volume: f64,
    /// Atoms inside the pumped volume.
    #[serde(rename = "N_pu")]
    pub pumped_number: f64,
    /// Probability for a pumped atom to reach the probe spot.
    #[serde(rename = "R_es")]
    pub escape_ratio: f64,
    /// Atoms expected at the probe spot per shot.
    #[serde(rename = "N_exp")]
    pub expected_number: f64,
    /// Detected atom flux, 1/s.
    #[serde(rename = "F_meas")]
    pub measured_flux: f64,
    /// Spin-exchange mean free path, m.
    #[serde(rename = "lambda_SE")]
    pub se_mean_free_path: f64,
    /// Spin-exchange rate, 1/s.
    #[serde(rename = "R_SE")]
    pub se_rate: f64,
}

pub fn flux_report(
    geometry: &CellGeometry,
    ensemble: &ThermalEnsemble,
    species: &AtomSpecies,
) -> Result<FluxReport> {
    geometry.validate()?;
    if !(ensemble.density > 0.0) {
        return Err(CoreError::Validation("flux report needs a positive density".into()));
    }
    let tau = std::f64::consts::TAU;
    let pumped_volume = tau * geometry.separation * geometry.pump_ring_width * geometry.thickness;
    let pumped_number = ensemble.density * pumped_volume;
    let escape_ratio =
        geometry.probe_radius * geometry.thickness / (tau * geometry.separation * geometry.separation);
    let expected_number = escape_ratio * pumped_number;
    let measured_flux = expected_number * ensemble.v_p / geometry.separation;
    let se_mean_free_path = 1.0 / (std::f64::consts::SQRT_2 * ensemble.density * species.sigma_se);
    let se_rate = std::f64::consts::SQRT_2 * ensemble.v_rel / se_mean_free_path;
    let report = FluxReport {
        pumped_volume,
        pumped_number,
        escape_ratio,
        expected_number,
        measured_flux,
        se_mean_free_path,
        se_rate,
    };
    if report.escape_ratio > 1.0 {
        return Err(CoreError::Validation(format!(
            "escape ratio {} exceeds 1; geometry is outside the thin-cell regime",
            report.escape_ratio
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::derive_thermal;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_cell(w: f64) -> CellGeometry {
        CellGeometry::new(w, 4.0e-3, 0.5e-3, 0.5e-3).unwrap()
    }

    fn paper_ensemble() -> ThermalEnsemble {
        derive_thermal(393.15, 2.0e19, &AtomSpecies::rubidium87()).unwrap()
    }

    #[test]
    fn marginal_shape_reference_values() {
        assert_relative_eq!(marginal_shape(0.0), 0.31830988618379067, max_relative = 1e-14);
        assert_relative_eq!(marginal_shape(0.5), 0.11263550149542817, max_relative = 1e-13);
        assert_relative_eq!(marginal_shape(1.0), 0.028353088930545664, max_relative = 1e-13);
        assert_relative_eq!(marginal_shape(2.5), 4.0487413270193472e-5, max_relative = 1e-12);
        assert_relative_eq!(marginal_shape(4.0), 1.0280333997310086e-9, max_relative = 1e-10);
    }

    #[test]
    fn marginal_shape_integral() {
        // integral over [0, inf) = 1/(4 sqrt(pi))
        let v = adaptive_quad(marginal_shape, 0.0, 12.0, &[1.0, 2.0], QuadTol::new(1e-12, 0.0), "shape").unwrap();
        assert_relative_eq!(v, 0.14104739588693907, max_relative = 1e-11);
    }

    #[test]
    fn eta_definition() {
        let geom = paper_cell(5.0e-6);
        let ens = paper_ensemble();
        assert_eq!(eta(0.0, &geom, &ens), 0.0);
        let v1 = geom.thickness * ens.u / geom.separation;
        assert_relative_eq!(eta(v1, &geom, &ens), 1.0, max_relative = 1e-15);
        // W=5 um, L=4 mm, u~194 m/s: eta=1 near v_par = 0.2425 m/s
        assert_relative_eq!(v1, 0.242422, max_relative = 1e-4);
    }

    #[test]
    fn closed_form_matches_quadrature_both_cells() {
        let ens = paper_ensemble();
        for w in [5.0e-6, 30.0e-6] {
            let geom = paper_cell(w);
            let marg = VelocityMarginal::new(&geom, &ens, false);
            let scale = geom.thickness * ens.u / geom.separation;
            let mut worst = 0.0f64;
            for i in 0..=80 {
                let eta = 4.0 * i as f64 / 80.0;
                let closed = marg.density(eta * scale);
                let numeric = marg.density_numeric(eta * scale).unwrap();
                if closed != 0.0 {
                    worst = worst.max(((closed - numeric) / closed).abs());
                }
            }
            assert!(worst < 1e-4, "W={w}: sup relative gap {worst:.3e}");
            // the two routes are the same integral done two ways; expect much better
            assert!(worst < 1e-8, "W={w}: routes drifted apart: {worst:.3e}");
        }
    }

    #[test]
    fn normalized_marginal_integrates_to_one() {
        let ens = paper_ensemble();
        for w in [5.0e-6, 30.0e-6] {
            let geom = paper_cell(w);
            let marg = VelocityMarginal::new(&geom, &ens, true);
            let lim = 12.0 * geom.thickness * ens.u / geom.separation;
            let total = adaptive_quad(
                |v| marg.density(v),
                -lim,
                lim,
                &[0.0],
                QuadTol::new(1e-12, 0.0),
                "marginal mass",
            )
            .unwrap();
            assert!((total - 1.0).abs() < 1e-9, "W={w}: mass {total}");
        }
    }

    #[test]
    fn marginal_mass_concentrated_below_ten_meters_per_second() {
        let ens = paper_ensemble();
        for w in [5.0e-6, 30.0e-6] {
            let geom = paper_cell(w);
            let marg = VelocityMarginal::new(&geom, &ens, true);
            let inside = adaptive_quad(
                |v| marg.density(v),
                -10.0,
                10.0,
                &[0.0],
                QuadTol::new(1e-12, 0.0),
                "slow mass",
            )
            .unwrap();
            assert!(inside >= 0.95, "W={w}: only {inside:.4} of the mass below 10 m/s");
        }
    }

    #[test]
    fn halving_thickness_halves_marginal_width() {
        let ens = paper_ensemble();
        let narrow = VelocityMarginal::new(&paper_cell(5.0e-6), &ens, true);
        let wide = VelocityMarginal::new(&paper_cell(10.0e-6), &ens, true);
        // p_W(v) = 2 p_2W(2v): doubling W stretches the density by 2 in v
        for v in [0.05, 0.1, 0.3] {
            assert_relative_eq!(narrow.density(v), 2.0 * wide.density(2.0 * v), max_relative = 1e-12);
        }
    }

    #[test]
    fn maxwell_speed_density_checks() {
        let ens = paper_ensemble();
        let raw = adaptive_quad(
            |v| maxwell_speed_density(v, &ens, false),
            0.0,
            9.0 * ens.u,
            &[ens.u],
            QuadTol::new(1e-12, 0.0),
            "raw speed",
        )
        .unwrap();
        assert_relative_eq!(raw, 0.5 / SQRT_PI, max_relative = 1e-11);
        let unit = adaptive_quad(
            |v| maxwell_speed_density(v, &ens, true),
            0.0,
            9.0 * ens.u,
            &[ens.u],
            QuadTol::new(1e-12, 0.0),
            "unit speed",
        )
        .unwrap();
        assert_relative_eq!(unit, 1.0, max_relative = 1e-11);
        // mode at u/sqrt(2)
        let mode = ens.u / std::f64::consts::SQRT_2;
        let f0 = maxwell_speed_density(mode, &ens, true);
        assert!(f0 > maxwell_speed_density(mode * 0.99, &ens, true));
        assert!(f0 > maxwell_speed_density(mode * 1.01, &ens, true));
    }

    #[test]
    fn angular_density_shape() {
        let geom = paper_cell(5.0e-6);
        let dist = AngularDistribution::unit(&geom);
        assert_relative_eq!(
            dist.density(0.0, true),
            dist.a_norm * geom.thickness,
            max_relative = 1e-15
        );
        assert_eq!(dist.density(dist.alpha_max, true), 0.0);
        assert_eq!(dist.density(-dist.alpha_max * 1.5, false), 0.0);
        // linearized integral over the full range = pumped number
        let total = adaptive_quad(
            |a| dist.density(a, true),
            -2.0 * dist.alpha_max,
            2.0 * dist.alpha_max,
            &[0.0],
            QuadTol::new(1e-12, 0.0),
            "angular mass",
        )
        .unwrap();
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn marginal_even_and_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let ens = paper_ensemble();
            let geom = paper_cell(5.0e-6);
            let marg = VelocityMarginal::new(&geom, &ens, true);
            let scale = geom.thickness * ens.u / geom.separation;
            prop_assert!((marg.density(a * scale) - marg.density(-a * scale)).abs() <= 1e-18 * marg.density(0.0));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(marg.density(lo * scale) >= marg.density(hi * scale));
        }

        #[test]
        fn exact_angular_form_never_exceeds_linearized(alpha in -1.0e-3f64..1.0e-3) {
            let dist = AngularDistribution::unit(&paper_cell(5.0e-6));
            prop_assert!(dist.density(alpha, false) <= dist.density(alpha, true) + 1e-18);
            prop_assert!(dist.density(alpha, false) >= 0.0);
        }
    }

    #[test]
    fn flux_report_reference_chain() {
        let species = AtomSpecies::rubidium87();
        let ens = paper_ensemble();
        let thin = flux_report(&paper_cell(5.0e-6), &ens, &species).unwrap();
        // volumes in m^3 (1 cm^3 = 1e-6 m^3)
        assert_relative_eq!(thin.pumped_volume, 6.2831853e-11, max_relative = 1e-6);
        assert_relative_eq!(thin.pumped_number, 1.2566371e9, max_relative = 1e-6);
        assert_relative_eq!(thin.escape_ratio, 2.4867960e-5, max_relative = 1e-6);
        assert_relative_eq!(thin.measured_flux, 2.1427349e9, max_relative = 1e-6);
        assert_relative_eq!(thin.se_mean_free_path, 18.608073e-3, max_relative = 1e-6);
        assert_relative_eq!(thin.se_rate, 16631.524, max_relative = 1e-6);

        let thick = flux_report(&paper_cell(30.0e-6), &ens, &species).unwrap();
        assert_relative_eq!(thick.pumped_volume, 3.7699112e-10, max_relative = 1e-6);
        assert_relative_eq!(thick.pumped_number, 7.5398224e9, max_relative = 1e-6);
        assert_relative_eq!(thick.measured_flux, 7.7138455e10, max_relative = 1e-6);
        // flux scales exactly as W^2 in this model
        assert_relative_eq!(thick.measured_flux / thin.measured_flux, 36.0, max_relative = 1e-12);
    }
}
