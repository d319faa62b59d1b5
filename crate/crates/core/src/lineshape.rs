//! Magnetic lineshape of the pump-probe rotation signal.
//!
//! Atoms cross from the pump ring to the probe spot ballistically; each
//! arrival contributes sin(2 w_L t) e^{-Gamma t} at its own transit time t.
//! Averaging over the surviving ensemble's transit times produces a
//! dispersive fringe pattern in B whose width shrinks as the flight gets
//! longer — the Ramsey mechanism, with the velocity spread supplying the
//! fringe decay instead of a second interaction zone.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    gyromagnetic_ratio, signed_larmor, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble,
};
use crate::error::{CoreError, Result};
use crate::numerics::{adaptive_quad, expint_en, QuadTol};

/// How the transit-time average is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    /// Average the Ramsey factor over the in-plane speed distribution with
    /// t = L/v. Default; exact in the W/L -> 0 limit.
    SpeedAverage,
    /// Double average over (elevation angle, speed) with the exact tan
    /// acceptance and t = L/(v cos a). Oracle for [`Strategy::SpeedAverage`].
    Joint2d,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::SpeedAverage => write!(f, "speed-average"),
            Strategy::Joint2d => write!(f, "joint-2d"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speed-average" => Ok(Strategy::SpeedAverage),
            "joint-2d" => Ok(Strategy::Joint2d),
            other => Err(CoreError::Validation(format!(
                "unknown strategy '{other}' (expected speed-average or joint-2d)"
            ))),
        }
    }
}

/// Where the scaled-time integral switches from quadrature to the analytic
/// large-s expansion.
const TAIL_START: f64 = 10.0;
/// Below this scaled time the weight e^{-1/s^2} is under 1e-19; skipped.
const BULK_START: f64 = 0.15;

/// Dimensionless Ramsey kernel q(x, g) = int_0^inf w(s) sin(x s) e^{-g s} ds
/// with the transit-time weight w(s) = 2 s^{-3} e^{-1/s^2} (unit integral).
///
/// x = 2 w_L L / u carries the sign of the scanned field; g = Gamma L / u.
/// Odd in x. Quadrature panels are split at the sine zeros; the s > 10 tail
/// is summed analytically via complex exponential integrals.
pub fn kernel_shape(x: f64, g: f64) -> Result<f64> {
    if !(g >= 0.0) {
        return Err(CoreError::Domain(format!("kernel damping must be >= 0, got {g}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ax = x.abs();
    let sign = x.signum();

    // panel seeds: sine zeros k pi / |x| inside the bulk window, plus fixed
    // points resolving the weight's rise and fall
    let mut breaks: Vec<f64> = vec![0.3, 0.5, 0.8, 1.3, 2.0, 3.5, 6.0];
    let kmax = (TAIL_START * ax / std::f64::consts::PI).floor() as usize;
    for k in 1..=kmax {
        breaks.push(k as f64 * std::f64::consts::PI / ax);
    }
    let bulk = adaptive_quad(
        |s| 2.0 * s.powi(-3) * (-1.0 / (s * s)).exp() * (ax * s).sin() * (-g * s).exp(),
        BULK_START,
        TAIL_START,
        &breaks,
        QuadTol::new(1e-12, 1e-16),
        "ramsey kernel bulk",
    )
    .map_err(|e| CoreError::Numeric(format!("{e} at x={x}, g={g}")))?;

    // tail: expand e^{-1/s^2} about s = inf; each power integrates to an
    // exponential integral, int_S^inf s^{-n} e^{-z s} ds = S^{1-n} E_n(z S)
    let z = Complex64::new(g, -ax);
    let w = z * TAIL_START;
    let coeff = [2.0, -2.0, 1.0, -1.0 / 3.0, 1.0 / 12.0, -1.0 / 60.0];
    let mut tail = Complex64::new(0.0, 0.0);
    for (k, &c) in coeff.iter().enumerate() {
        let n = 3 + 2 * k as u32;
        tail += expint_en(n, w)? * c * TAIL_START.powi(1 - n as i32);
    }
    Ok(sign * (bulk + tail.im))
}

/// Field-domain Ramsey kernel K(B): the transit-time averaged
/// sin(2 w_L t) e^{-Gamma t} factor for scanned field `b_parallel`.
pub fn nl_kernel(
    b_parallel: f64,
    geometry: &CellGeometry,
    ensemble: &ThermalEnsemble,
    fields: &FieldConfig,
    species: &AtomSpecies,
    strategy: Strategy,
) -> Result<f64> {
    let gamma = gyromagnetic_ratio(species);
    let omega = signed_larmor(gamma, b_parallel, fields.b_perp);
    let x = 2.0 * omega * geometry.separation / ensemble.u;
    let g = fields.gamma_coh * geometry.separation / ensemble.u;
    match strategy {
        Strategy::SpeedAverage => kernel_shape(x, g),
        Strategy::Joint2d => {
            let w = geometry.thickness;
            let l = geometry.separation;
            let a_max = geometry.alpha_max();
            // exact-tan acceptance, unit-normalized over [-a_max, a_max]
            let norm = 2.0 * (w * a_max + l * a_max.cos().ln());
            // the absolute floor cannot be tighter than the inner kernel
            // quadrature's own budget (1e-16 per evaluation)
            let half = adaptive_quad(
                |a| {
                    let weight = (w - l * a.tan()) / norm;
                    let boost = 1.0 / a.cos();
                    weight * kernel_shape(x * boost, g * boost).unwrap_or(f64::NAN)
                },
                0.0,
                a_max,
                &[a_max * 0.5],
                QuadTol::new(1e-9, 1e-15),
                "angular average",
            )
            .map_err(|e| CoreError::Numeric(format!("{e} at B={b_parallel}")))?;
            if !half.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "kernel evaluation failed inside the angular average at B={b_parallel}"
                )));
            }
            Ok(2.0 * half)
        }
    }
}

/// A rotation-vs-field scan plus everything needed to reproduce it.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumMeta {
    pub geometry: CellGeometry,
    pub ensemble: ThermalEnsemble,
    pub fields: FieldConfig,
    pub strategy: Strategy,
    /// RNG seed when the values are Monte Carlo estimates.
    pub seed: Option<u64>,
    /// True once the linear baseline has been subtracted out.
    pub nonlinear_component: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub b_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-point standard errors for stochastic estimates.
    pub stderr: Option<Vec<f64>>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn validate(&self) -> Result<()> {
        if self.b_grid.len() != self.values.len() {
            return Err(CoreError::Validation(format!(
                "grid has {} points but values has {}",
                self.b_grid.len(),
                self.values.len()
            )));
        }
        if let Some(se) = &self.stderr {
            if se.len() != self.b_grid.len() {
                return Err(CoreError::Validation("stderr length differs from grid".into()));
            }
        }
        if !self.b_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(CoreError::Validation("field grid must be strictly increasing".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Validation(format!("non-finite value at grid index {i}")));
        }
        Ok(())
    }
}

/// Rotation signal c1 * gamma * B + c2 * K(B) over a field grid. Points are
/// evaluated in parallel; output order and content are independent of the
/// thread count.
pub fn full_lineshape(
    b_grid: &[f64],
    geometry: &CellGeometry,
    ensemble: &ThermalEnsemble,
    fields: &FieldConfig,
    species: &AtomSpecies,
    strategy: Strategy,
) -> Result<Spectrum> {
    if !b_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(CoreError::Validation("field grid must be strictly increasing".into()));
    }
    let gamma = gyromagnetic_ratio(species);
    let values: Result<Vec<f64>> = b_grid
        .par_iter()
        .map(|&b| {
            let kernel = nl_kernel(b, geometry, ensemble, fields, species, strategy)?;
            Ok(fields.c1 * gamma * b + fields.c2 * kernel)
        })
        .collect();
    let spectrum = Spectrum {
        b_grid: b_grid.to_vec(),
        values: values?,
        stderr: None,
        meta: SpectrumMeta {
            geometry: geometry.clone(),
            ensemble: ensemble.clone(),
            fields: fields.clone(),
            strategy,
            seed: None,
            nonlinear_component: false,
        },
    };
    spectrum.validate()?;
    Ok(spectrum)
}

/// Pointwise pump-on minus pump-off: removes the linear rotation baseline,
/// leaving the pure fringe component.
pub fn subtract_linear(pump_on: &Spectrum, pump_off: &Spectrum) -> Result<Spectrum> {
    if pump_on.b_grid.len() != pump_off.b_grid.len() {
        return Err(CoreError::Validation(format!(
            "grid length mismatch: {} vs {}",
            pump_on.b_grid.len(),
            pump_off.b_grid.len()
        )));
    }
    for (i, (a, b)) in pump_on.b_grid.iter().zip(&pump_off.b_grid).enumerate() {
        if (a - b).abs() > 1e-12 {
            return Err(CoreError::Validation(format!(
                "field grids disagree at index {i}: {a} vs {b}"
            )));
        }
    }
    let values: Vec<f64> =
        pump_on.values.iter().zip(&pump_off.values).map(|(a, b)| a - b).collect();
    let stderr = match (&pump_on.stderr, &pump_off.stderr) {
        (None, None) => None,
        (a, b) => {
            let zeros = vec![0.0; pump_on.b_grid.len()];
            let a = a.as_deref().unwrap_or(&zeros);
            let b = b.as_deref().unwrap_or(&zeros);
            Some(a.iter().zip(b).map(|(x, y)| x.hypot(*y)).collect())
        }
    };
    let mut meta = pump_on.meta.clone();
    meta.nonlinear_component = true;
    Ok(Spectrum { b_grid: pump_on.b_grid.clone(), values, stderr, meta })
}

/// Width metrics of a dispersive fringe pattern.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinewidthReport {
    /// Full width of the central positive lobe at half its maximum, tesla.
    pub fwhm_central_lobe: f64,
    /// Separation between the positive and negative extrema, tesla.
    pub peak_to_peak: f64,
    /// Location of the positive-side extremum, tesla.
    pub b_peak: f64,
}

fn cross(b0: f64, v0: f64, b1: f64, v1: f64, level: f64) -> f64 {
    b0 + (level - v0) * (b1 - b0) / (v1 - v0)
}

/// Extract lobe metrics from a nonlinear-component spectrum. The spectrum
/// must resolve the central lobe (>= 20 points across it for quotable
/// numbers) and must actually change sign.
pub fn linewidth(spectrum: &Spectrum) -> Result<LinewidthReport> {
    spectrum.validate()?;
    let b = &spectrum.b_grid;
    let v = &spectrum.values;
    let pos: Vec<usize> = (0..b.len()).filter(|&i| b[i] > 0.0).collect();
    let neg: Vec<usize> = (0..b.len()).filter(|&i| b[i] < 0.0).collect();
    if pos.len() < 3 || neg.len() < 3 {
        return Err(CoreError::Degenerate("spectrum needs points on both sides of B = 0".into()));
    }
    let &ipk = pos
        .iter()
        .max_by(|&&i, &&j| v[i].abs().partial_cmp(&v[j].abs()).unwrap())
        .unwrap();
    let peak = v[ipk];
    if peak == 0.0 {
        return Err(CoreError::Degenerate("flat spectrum: no lobe on B > 0".into()));
    }
    let &ing = neg
        .iter()
        .max_by(|&&i, &&j| v[i].abs().partial_cmp(&v[j].abs()).unwrap())
        .unwrap();
    if v[ing] * peak >= 0.0 {
        return Err(CoreError::Degenerate(
            "spectrum does not change sign across B = 0; not a dispersive lobe".into(),
        ));
    }

    // half-maximum crossings of the lobe, scanning outward from the peak
    let sgn = peak.signum();
    let half = peak.abs() / 2.0;
    let mut left = None;
    for i in (0..ipk).rev() {
        if sgn * v[i] < half {
            left = Some(cross(b[i], sgn * v[i], b[i + 1], sgn * v[i + 1], half));
            break;
        }
    }
    let mut right = None;
    for i in ipk + 1..b.len() {
        if sgn * v[i] < half {
            right = Some(cross(b[i - 1], sgn * v[i - 1], b[i], sgn * v[i], half));
            break;
        }
    }
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(CoreError::Degenerate(
                "central lobe does not fall below half maximum inside the grid".into(),
            ))
        }
    };
    Ok(LinewidthReport {
        fwhm_central_lobe: right - left,
        peak_to_peak: b[ipk] - b[ing],
        b_peak: b[ipk],
    })
}

/// One linewidth scan point per pump-ring diameter D (probe at the center,
/// so the flight length is D/2). The field grid is rescaled with 1/L so
/// every diameter resolves the same number of fringes.
pub fn sweep_diameter(
    d_list: &[f64],
    geometry_template: &CellGeometry,
    ensemble: &ThermalEnsemble,
    fields: &FieldConfig,
    species: &AtomSpecies,
    strategy: Strategy,
    grid_points: usize,
) -> Result<Vec<(f64, LinewidthReport)>> {
    if grid_points < 41 || grid_points % 2 == 0 {
        return Err(CoreError::Validation(
            "diameter sweep needs an odd grid of at least 41 points".into(),
        ));
    }
    let gamma = gyromagnetic_ratio(species);
    let mut out = Vec::with_capacity(d_list.len());
    for &d in d_list {
        if !(d > 0.0) {
            return Err(CoreError::Validation(format!("diameter must be positive, got {d}")));
        }
        let mut geometry = geometry_template.clone();
        geometry.separation = d / 2.0;
        geometry.validate()?;
        // span x = 2 gamma B L / u in [-25, 25]: central lobe plus several fringes
        let b_max = 25.0 * ensemble.u / (2.0 * gamma * geometry.separation);
        let n = grid_points as i64;
        let grid: Vec<f64> = (-n / 2..=n / 2).map(|i| b_max * i as f64 / (n / 2) as f64).collect();
        let spectrum = full_lineshape(&grid, &geometry, ensemble, fields, species, strategy)?;
        out.push((d, linewidth(&spectrum)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::derive_thermal;
    use approx::assert_relative_eq;

    fn paper_setup(w: f64) -> (CellGeometry, ThermalEnsemble, AtomSpecies) {
        let geometry = CellGeometry::new(w, 4.0e-3, 0.5e-3, 0.5e-3).unwrap();
        let species = AtomSpecies::rubidium87();
        let ensemble = derive_thermal(393.15, 2.0e19, &species).unwrap();
        (geometry, ensemble, species)
    }

    #[test]
    fn kernel_shape_reference_values() {
        // pinned against an arbitrary-precision evaluation of the integral
        assert_relative_eq!(kernel_shape(0.5, 0.0).unwrap(), 0.55978161959059129, max_relative = 1e-9);
        assert_relative_eq!(kernel_shape(1.0, 0.0).unwrap(), 0.67926333546684871, max_relative = 1e-9);
        assert_relative_eq!(kernel_shape(2.0, 0.0).unwrap(), 0.40548077976422408, max_relative = 1e-9);
        assert_relative_eq!(kernel_shape(4.0, 0.0).unwrap(), -0.12566884313791682, max_relative = 1e-9);
        assert_relative_eq!(kernel_shape(7.0, 0.35).unwrap(), -0.063173002936232223, max_relative = 1e-9);
        assert_relative_eq!(kernel_shape(30.0, 0.0).unwrap(), 0.00022223351138834175, max_relative = 1e-8);
        // heavy cancellation: ~6 digits is the honest f64 limit here
        assert_relative_eq!(kernel_shape(120.0, 0.7).unwrap(), 7.1402607536595698e-10, max_relative = 1e-5);
    }

    #[test]
    fn kernel_shape_odd_and_zero() {
        assert_eq!(kernel_shape(0.0, 0.3).unwrap(), 0.0);
        for x in [0.3, 1.7, 12.0] {
            let plus = kernel_shape(x, 0.2).unwrap();
            let minus = kernel_shape(-x, 0.2).unwrap();
            assert_eq!(plus, -minus);
        }
        assert!(kernel_shape(1.0, -0.1).is_err());
    }

    #[test]
    fn kernel_dies_under_heavy_damping() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.0e9, c1: 0.0, c2: 1.0 };
        let k = nl_kernel(20.0e-6, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
            .unwrap();
        assert!(k.abs() < 1e-6, "kernel {k} survived Gamma = 1e9");
    }

    #[test]
    fn field_kernel_antisymmetric_with_and_without_transverse_field() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        for b_perp in [0.0, 20.0e-6] {
            let fields = FieldConfig { b_parallel: 0.0, b_perp, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
            assert_eq!(
                nl_kernel(0.0, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage).unwrap(),
                0.0
            );
            for b in [2.0e-6, 11.0e-6, 40.0e-6] {
                let plus =
                    nl_kernel(b, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage).unwrap();
                let minus =
                    nl_kernel(-b, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage).unwrap();
                assert_eq!(plus, -minus);
            }
        }
    }

    #[test]
    fn strategies_agree_for_thin_cells() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let mut worst = 0.0f64;
        for i in 1..=12 {
            let b = 1.5e-6 * i as f64;
            let fast =
                nl_kernel(b, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage).unwrap();
            let exact =
                nl_kernel(b, &geometry, &ensemble, &fields, &species, Strategy::Joint2d).unwrap();
            if exact.abs() > 1e-6 {
                worst = worst.max(((fast - exact) / exact).abs());
            }
        }
        assert!(worst < 1e-3, "strategy disagreement {worst:.2e}");
    }

    #[test]
    fn lineshape_reduces_to_straight_line_without_kernel_weight() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.4, c2: 0.0 };
        let grid: Vec<f64> = (-10..=10).map(|i| 3.0e-6 * i as f64).collect();
        let spec =
            full_lineshape(&grid, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
                .unwrap();
        let gamma = gyromagnetic_ratio(&species);
        for (b, v) in grid.iter().zip(&spec.values) {
            assert_relative_eq!(*v, 0.4 * gamma * b, max_relative = 1e-15);
        }
    }

    #[test]
    fn nonlinear_component_antisymmetric() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let grid: Vec<f64> = (-40..=40).map(|i| 1.0e-6 * i as f64).collect();
        let spec =
            full_lineshape(&grid, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
                .unwrap();
        let n = grid.len();
        let peak = spec.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let a = spec.values[i];
            let b = spec.values[n - 1 - i];
            assert!((a + b).abs() <= 1e-6 * peak, "index {i}: {a} vs {b}");
        }
    }

    #[test]
    fn fringe_pattern_has_decaying_side_lobes() {
        // 8 mm ring, spin-exchange-limited damping: central lobe plus fringes
        let (mut geometry, ensemble, species) = paper_setup(5.0e-6);
        geometry.separation = 4.0e-3;
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let gamma = gyromagnetic_ratio(&species);
        let b_max = 25.0 * ensemble.u / (2.0 * gamma * geometry.separation);
        let grid: Vec<f64> = (-500..=500).map(|i| b_max * i as f64 / 500.0).collect();
        let spec =
            full_lineshape(&grid, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
                .unwrap();
        // local maxima of |phi| on B > 0, left to right
        let mut lobes = Vec::new();
        let v = &spec.values;
        for i in 502..grid.len() - 1 {
            if v[i].abs() > v[i - 1].abs() && v[i].abs() >= v[i + 1].abs() {
                lobes.push(v[i].abs());
            }
        }
        assert!(lobes.len() >= 3, "expected several fringes, found {}", lobes.len());
        for pair in lobes.windows(2).take(3) {
            assert!(pair[0] > pair[1], "fringe magnitudes must decay: {pair:?}");
        }
    }

    #[test]
    fn subtraction_recovers_kernel_term() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let on_fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.25, c2: 0.8 };
        let off_fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.25, c2: 0.0 };
        let grid: Vec<f64> = (-20..=20).map(|i| 2.0e-6 * i as f64).collect();
        let on = full_lineshape(&grid, &geometry, &ensemble, &on_fields, &species, Strategy::SpeedAverage)
            .unwrap();
        let off =
            full_lineshape(&grid, &geometry, &ensemble, &off_fields, &species, Strategy::SpeedAverage)
                .unwrap();
        let diff = subtract_linear(&on, &off).unwrap();
        assert!(diff.meta.nonlinear_component);
        let pure = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 0.8 };
        let kernel =
            full_lineshape(&grid, &geometry, &ensemble, &pure, &species, Strategy::SpeedAverage)
                .unwrap();
        let gamma = gyromagnetic_ratio(&species);
        for ((a, b), bfield) in diff.values.iter().zip(&kernel.values).zip(&grid) {
            // identical in exact arithmetic; in floats the difference is
            // limited by cancellation against the linear term
            let cancel = 4.0 * f64::EPSILON * (0.25 * gamma * bfield).abs();
            assert!((a - b).abs() <= cancel + 1e-18, "{a} vs {b} at B={bfield}");
        }
        // same spectrum subtracted from itself vanishes identically
        let zero = subtract_linear(&on, &on).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn subtraction_rejects_mismatched_grids() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let g1: Vec<f64> = (-5..=5).map(|i| 2.0e-6 * i as f64).collect();
        let mut g2 = g1.clone();
        g2[3] += 1e-9;
        let a = full_lineshape(&g1, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
            .unwrap();
        let b = full_lineshape(&g2, &geometry, &ensemble, &fields, &species, Strategy::SpeedAverage)
            .unwrap();
        let err = subtract_linear(&a, &b).unwrap_err();
        assert!(err.to_string().contains("index 3"), "{err}");
    }

    fn synthetic_odd_spectrum() -> Spectrum {
        // x e^{-x^2}: analytic peak at 1/sqrt(2), half-max crossings at
        // 0.22564178590649157 and 1.3587925759455885
        let b_grid: Vec<f64> = (-2000..=2000).map(|i| 2.5e-3 * i as f64).collect();
        let values: Vec<f64> = b_grid.iter().map(|x| x * (-x * x).exp()).collect();
        let (geometry, ensemble, _) = paper_setup(5.0e-6);
        Spectrum {
            b_grid,
            values,
            stderr: None,
            meta: SpectrumMeta {
                geometry,
                ensemble,
                fields: FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 0.0, c1: 0.0, c2: 1.0 },
                strategy: Strategy::SpeedAverage,
                seed: None,
                nonlinear_component: true,
            },
        }
    }

    #[test]
    fn linewidth_of_analytic_lobe() {
        let report = linewidth(&synthetic_odd_spectrum()).unwrap();
        assert!((report.b_peak - 0.70710678118654752).abs() <= 2.5e-3);
        assert!((report.fwhm_central_lobe - 1.1331507900390969).abs() < 1e-5);
        assert!((report.peak_to_peak - 1.414213562373095).abs() <= 5.0e-3);
    }

    #[test]
    fn linewidth_rejects_degenerate_input() {
        let mut flat = synthetic_odd_spectrum();
        for v in &mut flat.values {
            *v = 0.0;
        }
        assert!(matches!(linewidth(&flat), Err(CoreError::Degenerate(_))));
        let mut positive = synthetic_odd_spectrum();
        for v in &mut positive.values {
            *v = v.abs() + 0.1;
        }
        assert!(matches!(linewidth(&positive), Err(CoreError::Degenerate(_))));
    }

    #[test]
    fn doubling_flight_length_halves_metrics() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 0.0, c1: 0.0, c2: 1.0 };
        let sweep = sweep_diameter(
            &[4.0e-3, 8.0e-3],
            &geometry,
            &ensemble,
            &fields,
            &species,
            Strategy::SpeedAverage,
            801,
        )
        .unwrap();
        let (short, long) = (&sweep[0].1, &sweep[1].1);
        assert_relative_eq!(short.fwhm_central_lobe / long.fwhm_central_lobe, 2.0, max_relative = 1e-9);
        assert_relative_eq!(short.peak_to_peak / long.peak_to_peak, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn diameter_sweep_trends() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let species_ref = &species;
        let d_list: Vec<f64> = (1..=8).map(|d| d as f64 * 1.0e-3).collect();
        let free = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 0.0, c1: 0.0, c2: 1.0 };
        let sweep = sweep_diameter(
            &d_list,
            &geometry,
            &ensemble,
            &free,
            species_ref,
            Strategy::SpeedAverage,
            801,
        )
        .unwrap();
        assert_eq!(sweep.len(), 8);
        for pair in sweep.windows(2) {
            assert!(pair[0].1.fwhm_central_lobe > pair[1].1.fwhm_central_lobe);
            assert!(pair[0].1.peak_to_peak > pair[1].1.peak_to_peak);
        }
        // undamped kernel depends on B only through B*L: widths scale as 1/D
        let base = sweep[0].1.fwhm_central_lobe;
        for (d, report) in &sweep {
            let predicted = base * 1.0e-3 / d;
            assert!(
                (report.fwhm_central_lobe - predicted).abs() <= 0.01 * predicted,
                "D={d}: {} vs 1/L prediction {predicted}",
                report.fwhm_central_lobe
            );
        }

        // a damping floor compresses the spread between small and large rings
        let damped_fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let damped = sweep_diameter(
            &[1.0e-3, 8.0e-3],
            &geometry,
            &ensemble,
            &damped_fields,
            species_ref,
            Strategy::SpeedAverage,
            801,
        )
        .unwrap();
        let ratio = damped[1].1.fwhm_central_lobe / damped[0].1.fwhm_central_lobe;
        assert!(ratio > 1.0 / 8.0, "damped ratio {ratio} should exceed the undamped 1/8");

        let single = sweep_diameter(
            &[2.0e-3],
            &geometry,
            &ensemble,
            &free,
            species_ref,
            Strategy::SpeedAverage,
            201,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn metrics_stable_under_grid_refinement() {
        let (geometry, ensemble, species) = paper_setup(5.0e-6);
        let fields = FieldConfig { b_parallel: 0.0, b_perp: 0.0, gamma_coh: 1.7e4, c1: 0.0, c2: 1.0 };
        let coarse = sweep_diameter(
            &[8.0e-3],
            &geometry,
            &ensemble,
            &fields,
            &species,
            Strategy::SpeedAverage,
            401,
        )
        .unwrap()[0]
            .1;
        let fine = sweep_diameter(
            &[8.0e-3],
            &geometry,
            &ensemble,
            &fields,
            &species,
            Strategy::SpeedAverage,
            801,
        )
        .unwrap()[0]
            .1;
        assert!(
            (coarse.fwhm_central_lobe - fine.fwhm_central_lobe).abs()
                < 0.005 * fine.fwhm_central_lobe
        );
        assert!((coarse.peak_to_peak - fine.peak_to_peak).abs() < 0.005 * fine.peak_to_peak);
    }
}
