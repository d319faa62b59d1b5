//! Time-domain master equation for the closed F=2 -> F'=3 line under a
//! pump / dark / probe pulse train, in the frame rotating at the optical
//! carrier. State is a 12x12 density matrix over
//! [g_{-2}..g_{+2}, e_{-3}..e_{+3}]; all rates and Rabi couplings in rad/s.

use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::constants::{HBAR, MU_BOHR, SPEED_OF_LIGHT};
use crate::domain::{gyromagnetic_ratio, larmor, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble};
use crate::error::{CoreError, Result};
use crate::spin::{clebsch_gordan, expectation_moments, spin_matrices, GroundStateMoments};

pub const GROUND_LEVELS: usize = 5;
pub const EXCITED_LEVELS: usize = 7;
pub const TOTAL_LEVELS: usize = GROUND_LEVELS + EXCITED_LEVELS;

/// Full two-manifold density matrix.
pub type DensityMatrix = SMatrix<Complex64, 12, 12>;

/// Default relative tolerance of the embedded integrator.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Integrity budget enforced on states entering and leaving `evolve`.
const INTEGRITY_TOL: f64 = 1e-6;

fn cs(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Basis slot of the ground sublevel m (m in -2..=2).
pub fn ground_index(m: i32) -> usize {
    debug_assert!((-2..=2).contains(&m));
    (m + 2) as usize
}

/// Basis slot of the excited sublevel m (m in -3..=3).
pub fn excited_index(m: i32) -> usize {
    debug_assert!((-3..=3).contains(&m));
    GROUND_LEVELS + (m + 3) as usize
}

/// Rectangular pump / dark / probe timing and couplings.
///
/// Durations are dwell times of the moving atom in each region; the probe
/// never carries more Rabi coupling than the pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    /// Pump dwell time, s.
    pub pump_duration: f64,
    /// Field-only flight time between the beams, s.
    pub dark_duration: f64,
    /// Probe dwell time, s.
    pub probe_duration: f64,
    /// Pump Rabi frequency, rad/s.
    pub omega_pump: f64,
    /// Probe Rabi frequency, rad/s.
    pub omega_probe: f64,
    /// Laser detuning from the transition, rad/s.
    pub detuning: f64,
}

impl PulseSequence {
    pub fn new(
        pump_duration: f64,
        dark_duration: f64,
        probe_duration: f64,
        omega_pump: f64,
        omega_probe: f64,
        detuning: f64,
    ) -> Result<Self> {
        let seq = PulseSequence {
            pump_duration,
            dark_duration,
            probe_duration,
            omega_pump,
            omega_probe,
            detuning,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Timing from ballistic flight at the most probable speed: 0.5 mm beams
    /// a cell-separation apart, 50 MHz pump and 2 MHz probe Rabi couplings
    /// on resonance.
    pub fn transit_defaults(geometry: &CellGeometry, ensemble: &ThermalEnsemble) -> Self {
        let beam_diameter = 0.5e-3;
        let t_beam = beam_diameter / ensemble.v_p;
        PulseSequence {
            pump_duration: t_beam,
            dark_duration: geometry.separation / ensemble.v_p,
            probe_duration: t_beam,
            omega_pump: 2.0 * std::f64::consts::PI * 50.0e6,
            omega_probe: 2.0 * std::f64::consts::PI * 2.0e6,
            detuning: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("pump_duration", self.pump_duration),
            ("dark_duration", self.dark_duration),
            ("probe_duration", self.probe_duration),
            ("omega_pump", self.omega_pump),
            ("omega_probe", self.omega_probe),
        ];
        for (name, v) in vals {
            if !v.is_finite() || v < 0.0 {
                return Err(CoreError::Validation(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.detuning.is_finite() {
            return Err(CoreError::Validation("detuning must be finite".into()));
        }
        if self.omega_probe > self.omega_pump {
            return Err(CoreError::Validation(format!(
                "probe coupling must not exceed the pump coupling, got probe {} > pump {}",
                self.omega_probe, self.omega_pump
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulsePhase {
    Pump,
    Dark,
    Probe,
}

/// Hamiltonian split into detuning offset, Zeeman term, and light coupling.
/// Each part is Hermitian on its own.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    /// Manifold energy offsets in the rotating frame: -detuning on the
    /// excited diagonal, zero on the ground diagonal.
    pub h0: DensityMatrix,
    /// Zeeman term per manifold with that manifold's Lande factor.
    pub hb: DensityMatrix,
    /// Light coupling; zero in the dark phase.
    pub v: DensityMatrix,
}

impl HamiltonianParts {
    pub fn total(&self) -> DensityMatrix {
        self.h0 + self.hb + self.v
    }
}

fn require_standard_manifolds(species: &AtomSpecies) -> Result<()> {
    if (species.f_ground - 2.0).abs() > 1e-12 || (species.f_excited - 3.0).abs() > 1e-12 {
        return Err(CoreError::Validation(format!(
            "solver is specialised to the five-level ground / seven-level excited system, \
             got F = {}, F' = {}",
            species.f_ground, species.f_excited
        )));
    }
    Ok(())
}

/// Builds the rotating-frame Hamiltonian for one pulse phase.
///
/// The Zeeman part carries g_F on the ground block and g_e on the excited
/// block; linearly polarised light running along the quantization axis
/// decomposes into both circular components, so V couples g_k -> e_{k±1}
/// with weight Omega/(2*sqrt(2)) times the transition's Clebsch-Gordan
/// coefficient.
pub fn build_hamiltonian(
    fields: &FieldConfig,
    pulse: &PulseSequence,
    species: &AtomSpecies,
    phase: PulsePhase,
) -> Result<HamiltonianParts> {
    species.validate()?;
    require_standard_manifolds(species)?;
    fields.validate()?;
    pulse.validate()?;

    let gyro_g = gyromagnetic_ratio(species);
    let gyro_e = species.g_e * MU_BOHR / HBAR;
    let ground = spin_matrices(species.f_ground)?;
    let excited = spin_matrices(species.f_excited)?;

    let mut hb = DensityMatrix::zeros();
    for i in 0..GROUND_LEVELS {
        for j in 0..GROUND_LEVELS {
            hb[(i, j)] = cs(gyro_g)
                * (cs(fields.b_parallel) * ground.fz[(i, j)] + cs(fields.b_perp) * ground.fx[(i, j)]);
        }
    }
    for i in 0..EXCITED_LEVELS {
        for j in 0..EXCITED_LEVELS {
            hb[(GROUND_LEVELS + i, GROUND_LEVELS + j)] = cs(gyro_e)
                * (cs(fields.b_parallel) * excited.fz[(i, j)]
                    + cs(fields.b_perp) * excited.fx[(i, j)]);
        }
    }

    let mut h0 = DensityMatrix::zeros();
    for i in GROUND_LEVELS..TOTAL_LEVELS {
        h0[(i, i)] = cs(-pulse.detuning);
    }

    let omega = match phase {
        PulsePhase::Pump => pulse.omega_pump,
        PulsePhase::Dark => 0.0,
        PulsePhase::Probe => pulse.omega_probe,
    };
    let mut v = DensityMatrix::zeros();
    if omega != 0.0 {
        let amp = omega / (2.0 * std::f64::consts::SQRT_2);
        for m in -2..=2 {
            for q in [-1i32, 1] {
                let me = m + q;
                let c = clebsch_gordan(2.0, f64::from(m), 1.0, f64::from(q), 3.0, f64::from(me))?;
                let (gi, ei) = (ground_index(m), excited_index(me));
                v[(gi, ei)] += cs(amp * c);
                v[(ei, gi)] += cs(amp * c);
            }
        }
    }

    Ok(HamiltonianParts { h0, hb, v })
}

/// Spontaneous-emission lowering operators, one per emitted polarisation
/// p in {-1, 0, +1}: entries <g_m| C_p |e_{m+p}> are the F'=3 -> F=2
/// Clebsch-Gordan coefficients. Their completeness over p makes the
/// repopulation trace-preserving.
fn emission_operators() -> &'static [SMatrix<Complex64, 5, 7>; 3] {
    static OPS: OnceLock<[SMatrix<Complex64, 5, 7>; 3]> = OnceLock::new();
    OPS.get_or_init(|| {
        let mut ops = [SMatrix::<Complex64, 5, 7>::zeros(); 3];
        for (slot, p) in (-1i32..=1).enumerate() {
            for m in -2i32..=2 {
                let me = m + p;
                if me.abs() > 3 {
                    continue;
                }
                let c = clebsch_gordan(2.0, f64::from(m), 1.0, f64::from(p), 3.0, f64::from(me))
                    .expect("valid dipole quantum numbers");
                ops[slot][(ground_index(m), (me + 3) as usize)] = cs(c);
            }
        }
        ops
    })
}

/// Ground-block source term fed by spontaneous decay of the excited block:
/// Gamma_e * sum_p C_p rho_ee C_p^dagger. Hermitian for Hermitian input,
/// with trace Gamma_e * tr(rho_ee).
pub fn repopulation_rates(
    rho_ee: &SMatrix<Complex64, 7, 7>,
    gamma_e: f64,
) -> SMatrix<Complex64, 5, 5> {
    let mut src = SMatrix::<Complex64, 5, 5>::zeros();
    for op in emission_operators() {
        src += op * rho_ee * op.adjoint();
    }
    src * cs(gamma_e)
}

/// Master-equation right-hand side: coherent commutator, excited decay at
/// gamma_e, optical-coherence decay at gamma_e/2, ground repopulation.
fn master_rhs(
    rho: &DensityMatrix,
    h: &DensityMatrix,
    gamma_e: f64,
    emission: &[SMatrix<Complex64, 5, 7>; 3],
) -> DensityMatrix {
    let mut out = (h * rho - rho * h) * Complex64::new(0.0, -1.0);
    for i in 0..TOTAL_LEVELS {
        for j in 0..TOTAL_LEVELS {
            let excited_rows = (i >= GROUND_LEVELS) as u32 + (j >= GROUND_LEVELS) as u32;
            let rate = match excited_rows {
                2 => gamma_e,
                1 => 0.5 * gamma_e,
                _ => 0.0,
            };
            out[(i, j)] -= cs(rate) * rho[(i, j)];
        }
    }
    let rho_ee = rho.fixed_view::<7, 7>(GROUND_LEVELS, GROUND_LEVELS).into_owned();
    let mut src = SMatrix::<Complex64, 5, 5>::zeros();
    for op in emission {
        src += op * rho_ee * op.adjoint();
    }
    for a in 0..GROUND_LEVELS {
        for b in 0..GROUND_LEVELS {
            out[(a, b)] += cs(gamma_e) * src[(a, b)];
        }
    }
    out
}

/// Health measures of a would-be density matrix.
#[derive(Debug, Clone, Copy)]
pub struct DensityDiagnostics {
    pub hermiticity_deviation: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
}

pub fn density_diagnostics(rho: &DensityMatrix) -> DensityDiagnostics {
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return DensityDiagnostics {
            hermiticity_deviation: f64::INFINITY,
            trace_deviation: f64::INFINITY,
            min_eigenvalue: f64::NEG_INFINITY,
        };
    }
    let mut herm: f64 = 0.0;
    for i in 0..TOTAL_LEVELS {
        for j in 0..TOTAL_LEVELS {
            herm = herm.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    let trace: Complex64 = (0..TOTAL_LEVELS).map(|i| rho[(i, i)]).sum();
    let trace_deviation = (trace - cs(1.0)).norm();
    // Eigenvalues of the Hermitian part; for near-Hermitian input this is the
    // spectrum up to the hermiticity deviation itself.
    let herm_part = (rho + rho.adjoint()) * cs(0.5);
    let eigs = herm_part.symmetric_eigenvalues();
    let min_eigenvalue = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    DensityDiagnostics {
        hermiticity_deviation: herm,
        trace_deviation,
        min_eigenvalue,
    }
}

fn check_density(rho: &DensityMatrix, tol: f64, stage: &str) -> Result<()> {
    let d = density_diagnostics(rho);
    if d.hermiticity_deviation > tol || d.trace_deviation > tol || d.min_eigenvalue < -tol {
        return Err(CoreError::Numeric(format!(
            "density matrix integrity violated {stage}: hermiticity {:.2e}, trace deviation {:.2e}, min eigenvalue {:.2e} (budget {tol:.0e})",
            d.hermiticity_deviation, d.trace_deviation, d.min_eigenvalue
        )));
    }
    Ok(())
}

/// Unpolarised ground manifold, the relaxed state entering the pump region.
pub fn unpolarized_ground() -> DensityMatrix {
    let mut rho = DensityMatrix::zeros();
    for i in 0..GROUND_LEVELS {
        rho[(i, i)] = cs(1.0 / GROUND_LEVELS as f64);
    }
    rho
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order solution minus the embedded fourth-order one.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Like [`evolve`], additionally reporting every accepted step `(t, rho)`
/// with t relative to the start of this segment.
pub fn evolve_observed(
    rho0: &DensityMatrix,
    parts: &HamiltonianParts,
    duration: f64,
    gamma_e: f64,
    rel_tol: f64,
    mut observe: impl FnMut(f64, &DensityMatrix),
) -> Result<DensityMatrix> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(CoreError::Validation(format!(
            "duration must be finite and non-negative, got {duration}"
        )));
    }
    if !(gamma_e >= 0.0) || !gamma_e.is_finite() {
        return Err(CoreError::Validation(format!(
            "decay rate must be finite and non-negative, got {gamma_e}"
        )));
    }
    if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(CoreError::Validation(format!(
            "relative tolerance must lie in (0, 1e-2], got {rel_tol}"
        )));
    }
    check_density(rho0, INTEGRITY_TOL, "on entry")?;
    if duration == 0.0 {
        return Ok(*rho0);
    }

    let h = parts.total();
    let emission = emission_operators();
    let rhs = |r: &DensityMatrix| master_rhs(r, &h, gamma_e, emission);

    let abs_tol = 1e-14;
    let mut t = 0.0_f64;
    let mut y = *rho0;
    let mut step = duration * 1e-3;
    let mut k1 = rhs(&y);
    while duration - t > 4.0 * f64::EPSILON * duration {
        step = step.min(duration - t);
        if step <= duration * 1e-14 {
            return Err(CoreError::Numeric(format!(
                "integrator step size underflow at t = {t:.6e} s of {duration:.6e} s"
            )));
        }
        let hh = step;
        let k2 = rhs(&(y + k1 * cs(A21 * hh)));
        let k3 = rhs(&(y + k1 * cs(A31 * hh) + k2 * cs(A32 * hh)));
        let k4 = rhs(&(y + k1 * cs(A41 * hh) + k2 * cs(A42 * hh) + k3 * cs(A43 * hh)));
        let k5 = rhs(
            &(y + k1 * cs(A51 * hh) + k2 * cs(A52 * hh) + k3 * cs(A53 * hh) + k4 * cs(A54 * hh)),
        );
        let k6 = rhs(
            &(y + k1 * cs(A61 * hh)
                + k2 * cs(A62 * hh)
                + k3 * cs(A63 * hh)
                + k4 * cs(A64 * hh)
                + k5 * cs(A65 * hh)),
        );
        let y_new = y
            + k1 * cs(B1 * hh)
            + k3 * cs(B3 * hh)
            + k4 * cs(B4 * hh)
            + k5 * cs(B5 * hh)
            + k6 * cs(B6 * hh);
        let k7 = rhs(&y_new);
        let err_mat = k1 * cs(E1 * hh)
            + k3 * cs(E3 * hh)
            + k4 * cs(E4 * hh)
            + k5 * cs(E5 * hh)
            + k6 * cs(E6 * hh)
            + k7 * cs(E7 * hh);
        let mut err: f64 = 0.0;
        for i in 0..TOTAL_LEVELS {
            for j in 0..TOTAL_LEVELS {
                let scale = abs_tol + rel_tol * y[(i, j)].norm().max(y_new[(i, j)].norm());
                err = err.max(err_mat[(i, j)].norm() / scale);
            }
        }
        if !err.is_finite() {
            step *= 0.2;
            k1 = rhs(&y);
            continue;
        }
        if err <= 1.0 {
            t += hh;
            y = y_new;
            k1 = k7;
            observe(t, &y);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            step = hh * grow;
        } else {
            step = hh * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    check_density(&y, INTEGRITY_TOL, "after evolution")?;
    Ok(y)
}

/// Integrates d rho/dt = -i [H, rho] + L(rho) over `duration` with an
/// adaptive embedded Runge-Kutta pair.
pub fn evolve(
    rho0: &DensityMatrix,
    parts: &HamiltonianParts,
    duration: f64,
    gamma_e: f64,
    rel_tol: f64,
) -> Result<DensityMatrix> {
    evolve_observed(rho0, parts, duration, gamma_e, rel_tol, |_, _| {})
}

/// Moments of the ground block of the full state.
pub fn ground_moments(rho: &DensityMatrix) -> Result<GroundStateMoments> {
    let view = rho.fixed_view::<5, 5>(0, 0);
    let block = nalgebra::DMatrix::from_fn(GROUND_LEVELS, GROUND_LEVELS, |i, j| view[(i, j)]);
    expectation_moments(&block, 1.0)
}

/// Polarimeter-facing output of one pulse train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationResult {
    /// Ground-state quadrupole alignment at the probe.
    pub alignment: f64,
    /// Birefringence-axis angle at the probe, rad, in [0, pi).
    pub theta: f64,
    /// Faraday rotation angle, rad.
    pub phi_f: f64,
}

/// Rotation angle picked up by a probe crossing an aligned slab whose axis
/// sits at angle theta: kappa * alignment * (omega_L * L / 2c) * sin(2 theta).
pub fn faraday_rotation(alignment: f64, theta: f64, kappa: f64, omega_l: f64, l_sep: f64) -> f64 {
    kappa * alignment * (omega_l * l_sep / (2.0 * SPEED_OF_LIGHT)) * (2.0 * theta).sin()
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryPoint {
    /// Time since the atom entered the pump, s.
    pub t: f64,
    pub moments: GroundStateMoments,
    /// Rotation angle a probe would measure at this instant.
    pub phi_f: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub trajectory: Vec<TrajectoryPoint>,
    /// Rotation observables evaluated at the probe's arrival.
    pub rotation: RotationResult,
    pub final_rho: DensityMatrix,
    /// Ground-manifold precession frequency about the total field, rad/s.
    pub larmor_frequency: f64,
}

/// Runs pump -> dark -> probe on one density matrix, recording ground-state
/// moments at every accepted integrator step.
///
/// The birefringence axis is locked to the pump polarisation while the light
/// is on and precesses at the ground Larmor frequency afterwards, so
/// theta(t) = omega_L * (t - T_pump) mod pi during the dark and probe phases;
/// the reported rotation uses the state and angle at the probe's arrival.
pub fn run_sequence(
    pulse: &PulseSequence,
    fields: &FieldConfig,
    species: &AtomSpecies,
    separation: f64,
    kappa: f64,
    rho0: Option<DensityMatrix>,
    rel_tol: f64,
) -> Result<SequenceResult> {
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(CoreError::Validation(format!(
            "separation must be positive and finite, got {separation}"
        )));
    }
    if !kappa.is_finite() {
        return Err(CoreError::Validation("kappa must be finite".into()));
    }
    let omega_l = larmor(gyromagnetic_ratio(species), fields.total_field());
    let rho_start = rho0.unwrap_or_else(unpolarized_ground);

    let mut trajectory = Vec::new();
    let mut first_err: Option<CoreError> = None;
    let t_pump = pulse.pump_duration;
    let record =
        |t_abs: f64, rho: &DensityMatrix, trajectory: &mut Vec<TrajectoryPoint>,
         first_err: &mut Option<CoreError>| {
            if first_err.is_some() {
                return;
            }
            match ground_moments(rho) {
                Ok(moments) => {
                    let theta = if t_abs <= t_pump {
                        0.0
                    } else {
                        (omega_l * (t_abs - t_pump)).rem_euclid(std::f64::consts::PI)
                    };
                    let phi_f = faraday_rotation(moments.alignment, theta, kappa, omega_l, separation);
                    trajectory.push(TrajectoryPoint { t: t_abs, moments, phi_f });
                }
                Err(e) => *first_err = Some(e),
            }
        };

    record(0.0, &rho_start, &mut trajectory, &mut first_err);

    let phases = [
        (PulsePhase::Pump, pulse.pump_duration),
        (PulsePhase::Dark, pulse.dark_duration),
        (PulsePhase::Probe, pulse.probe_duration),
    ];
    let mut rho = rho_start;
    let mut t_offset = 0.0;
    let mut rho_at_probe = rho_start;
    for (phase, duration) in phases {
        if phase == PulsePhase::Probe {
            rho_at_probe = rho;
        }
        let parts = build_hamiltonian(fields, pulse, species, phase)?;
        rho = evolve_observed(&rho, &parts, duration, species.gamma_e, rel_tol, |t, r| {
            record(t_offset + t, r, &mut trajectory, &mut first_err)
        })?;
        if let Some(e) = first_err.take() {
            return Err(e);
        }
        t_offset += duration;
    }

    let probe_moments = ground_moments(&rho_at_probe)?;
    let theta = (omega_l * pulse.dark_duration).rem_euclid(std::f64::consts::PI);
    let rotation = RotationResult {
        alignment: probe_moments.alignment,
        theta,
        phi_f: faraday_rotation(probe_moments.alignment, theta, kappa, omega_l, separation),
    };
    Ok(SequenceResult { trajectory, rotation, final_rho: rho, larmor_frequency: omega_l })
}

/// Angular frequency from the mean spacing of downward zero crossings of a
/// sampled oscillation; linear interpolation between samples, first-to-last
/// crossing averaging.
pub fn crossing_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(CoreError::Validation(format!(
            "times and values must have equal length, got {} and {}",
            times.len(),
            values.len()
        )));
    }
    let mut crossings = Vec::new();
    for i in 0..times.len().saturating_sub(1) {
        let (v0, v1) = (values[i], values[i + 1]);
        if v0 > 0.0 && v1 <= 0.0 {
            crossings.push(times[i] + (times[i + 1] - times[i]) * v0 / (v0 - v1));
        }
    }
    if crossings.len() < 2 {
        return Err(CoreError::Statistics(format!(
            "need at least two downward zero crossings to estimate a frequency, found {}",
            crossings.len()
        )));
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    let period = span / (crossings.len() - 1) as f64;
    Ok(2.0 * std::f64::consts::PI / period)
}
