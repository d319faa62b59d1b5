//! One function per subcommand. Each takes the resolved config and a
//! [`RunContext`], writes its outputs, and leaves manifest emission to the
//! caller. Inputs are never modified.

use serde::Serialize;
use thincell_core::kinetics::{flux_report, AngularDistribution, VelocityMarginal};
use thincell_core::lineshape::{full_lineshape, nl_kernel, subtract_linear, sweep_diameter};
use thincell_core::montecarlo::{mc_lineshape, v_parallel_chi_square, Histogram, McConfig};
use thincell_core::obe::{density_diagnostics, run_sequence, PulseSequence, RotationResult};
use thincell_core::{
    fit_rotation_curve, gyromagnetic_ratio, FitProblem, Spectrum, SpectrumMeta,
};

use crate::config::{parse_strategy, FullConfig};
use crate::output::{fmt_float, read_spectrum_csv, RunContext};
use crate::CliError;

fn symmetric_grid(b_max_ut: f64, points: usize, section: &str) -> Result<Vec<f64>, CliError> {
    if points < 2 {
        return Err(CliError::Config(format!("{section}.points must be at least 2, got {points}")));
    }
    if !(b_max_ut > 0.0) || !b_max_ut.is_finite() {
        return Err(CliError::Config(format!(
            "{section}.b_max_ut must be positive and finite, got {b_max_ut}"
        )));
    }
    let b_max = b_max_ut * 1e-6;
    let step = 2.0 * b_max / (points - 1) as f64;
    Ok((0..points).map(|i| -b_max + i as f64 * step).collect())
}

pub fn lineshape(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let strategy = parse_strategy(&cfg.lineshape.strategy)?;
    let grid = symmetric_grid(cfg.lineshape.b_max_ut, cfg.lineshape.points, "lineshape")?;
    let spectrum =
        full_lineshape(&grid, &core.geometry, &core.ensemble, &core.fields, &core.species, strategy)?;
    ctx.write_csv(
        "lineshape.csv",
        &["B_tesla", "phi"],
        spectrum
            .b_grid
            .iter()
            .zip(&spectrum.values)
            .map(|(&b, &v)| vec![fmt_float(b), fmt_float(v)]),
    )?;
    Ok(())
}

pub fn scan_fwhm(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let strategy = parse_strategy(&cfg.scan_fwhm.strategy)?;
    let d_list: Vec<f64> = cfg.scan_fwhm.d_mm_list.iter().map(|d| d * 1e-3).collect();
    // width metrics are defined on the fringe alone; the linear background
    // grows without bound and has no width
    let mut fields = core.fields.clone();
    fields.c1 = 0.0;
    let sweep = sweep_diameter(
        &d_list,
        &core.geometry,
        &core.ensemble,
        &fields,
        &core.species,
        strategy,
        cfg.scan_fwhm.points,
    )?;
    ctx.write_csv(
        "scan_fwhm.csv",
        &["D_m", "fwhm_T", "peak_to_peak_T"],
        sweep.iter().map(|(d, report)| {
            vec![fmt_float(*d), fmt_float(report.fwhm_central_lobe), fmt_float(report.peak_to_peak)]
        }),
    )?;
    Ok(())
}

pub fn distributions(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let d = &cfg.distributions;
    if d.v_points < 2 || d.alpha_points < 2 {
        return Err(CliError::Config(
            "distributions.v_points and distributions.alpha_points must be at least 2".into(),
        ));
    }
    if !(d.v_max_m_per_s > 0.0) {
        return Err(CliError::Config(format!(
            "distributions.v_max_m_per_s must be positive, got {}",
            d.v_max_m_per_s
        )));
    }
    let marginal = VelocityMarginal::new(&core.geometry, &core.ensemble, true);
    let v_step = d.v_max_m_per_s / (d.v_points - 1) as f64;
    let mut v_rows = Vec::with_capacity(d.v_points);
    for i in 0..d.v_points {
        let v = i as f64 * v_step;
        let closed = marginal.density(v);
        let numeric = marginal.density_numeric(v)?;
        v_rows.push(vec![fmt_float(v), fmt_float(closed), fmt_float(numeric)]);
    }
    ctx.write_csv(
        "distributions_v_parallel.csv",
        &["v_parallel_m_per_s", "marginal_closed", "marginal_numeric"],
        v_rows,
    )?;

    let angular = AngularDistribution::unit(&core.geometry);
    let alpha_max = core.geometry.alpha_max();
    let a_step = alpha_max / (d.alpha_points - 1) as f64;
    ctx.write_csv(
        "distributions_angular.csv",
        &["alpha_rad", "f_alpha"],
        (0..d.alpha_points).map(|i| {
            let alpha = i as f64 * a_step;
            vec![fmt_float(alpha), fmt_float(angular.density(alpha, false))]
        }),
    )?;
    Ok(())
}

pub fn flux(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let report = flux_report(&core.geometry, &core.ensemble, &core.species)?;
    ctx.write_json("flux.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct ObeSummary {
    pulse: PulseSequence,
    larmor_frequency_rad_per_s: f64,
    rotation: RotationResult,
    final_trace_deviation: f64,
    final_hermiticity_deviation: f64,
    final_min_eigenvalue: f64,
}

pub fn obe(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let o = &cfg.obe;
    let mut pulse = PulseSequence::transit_defaults(&core.geometry, &core.ensemble);
    pulse.omega_pump = 2.0 * std::f64::consts::PI * o.omega_pump_mhz * 1e6;
    pulse.omega_probe = 2.0 * std::f64::consts::PI * o.omega_probe_mhz * 1e6;
    pulse.detuning = 2.0 * std::f64::consts::PI * o.detuning_mhz * 1e6;
    if o.pump_us > 0.0 {
        pulse.pump_duration = o.pump_us * 1e-6;
    }
    if o.dark_us > 0.0 {
        pulse.dark_duration = o.dark_us * 1e-6;
    }
    if o.probe_us > 0.0 {
        pulse.probe_duration = o.probe_us * 1e-6;
    }
    let result = run_sequence(
        &pulse,
        &core.fields,
        &core.species,
        core.geometry.separation,
        o.kappa,
        None,
        o.rel_tol,
    )?;
    ctx.write_csv(
        "obe_trajectory.csv",
        &["t_s", "Fx", "Fy", "Fz", "alignment", "phi_F"],
        result.trajectory.iter().map(|p| {
            vec![
                fmt_float(p.t),
                fmt_float(p.moments.fx),
                fmt_float(p.moments.fy),
                fmt_float(p.moments.fz),
                fmt_float(p.moments.alignment),
                fmt_float(p.phi_f),
            ]
        }),
    )?;
    let diag = density_diagnostics(&result.final_rho);
    ctx.write_json(
        "obe_summary.json",
        &ObeSummary {
            pulse,
            larmor_frequency_rad_per_s: result.larmor_frequency,
            rotation: result.rotation,
            final_trace_deviation: diag.trace_deviation,
            final_hermiticity_deviation: diag.hermiticity_deviation,
            final_min_eigenvalue: diag.min_eigenvalue,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ChiSquareSummary {
    statistic: f64,
    dof: usize,
    bins: usize,
    p_value: f64,
    fitted_scale_m_per_s: f64,
}

#[derive(Serialize)]
struct McSummary {
    n_samples: u64,
    n_arrived: u64,
    arrival_fraction: f64,
    arrival_fraction_stderr: f64,
    mean_transit_time_s: f64,
    /// None when too few arrivals for a distribution test.
    v_parallel_chi_square: Option<ChiSquareSummary>,
}

fn histogram_rows(hist: &Histogram) -> Vec<Vec<String>> {
    (0..hist.counts.len())
        .map(|i| vec![fmt_float(hist.bin_center(i)), hist.counts[i].to_string()])
        .collect()
}

pub fn montecarlo(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let m = &cfg.montecarlo;
    ctx.seeds.push(m.seed);
    let grid = symmetric_grid(m.b_max_ut, m.points, "montecarlo")?;
    let mc_config = McConfig {
        n_samples: m.n_samples,
        seed: m.seed,
        batch_size: m.batch_size,
        geometry: core.geometry.clone(),
        ensemble: core.ensemble.clone(),
    };
    let result = mc_lineshape(&grid, &mc_config, &core.fields, &core.species)?;
    let spectrum = &result.spectrum;
    let stderr = spectrum.stderr.as_deref().unwrap_or(&[]);
    ctx.write_csv(
        "mc_lineshape.csv",
        &["B_tesla", "phi_mean", "phi_stderr"],
        (0..spectrum.b_grid.len()).map(|i| {
            vec![
                fmt_float(spectrum.b_grid[i]),
                fmt_float(spectrum.values[i]),
                fmt_float(stderr.get(i).copied().unwrap_or(f64::NAN)),
            ]
        }),
    )?;
    ctx.write_csv(
        "mc_v_parallel_hist.csv",
        &["v_parallel_m_per_s", "count"],
        histogram_rows(&result.v_parallel_histogram),
    )?;
    ctx.write_csv("mc_transit_hist.csv", &["t_s", "count"], histogram_rows(&result.transit_time_histogram))?;
    let chi = if result.arrival_v_parallel.len() >= 30 {
        let r = v_parallel_chi_square(&result.arrival_v_parallel)?;
        Some(ChiSquareSummary {
            statistic: r.statistic,
            dof: r.dof,
            bins: r.bins,
            p_value: r.p_value,
            fitted_scale_m_per_s: r.fitted_scale,
        })
    } else {
        None
    };
    ctx.write_json(
        "mc_summary.json",
        &McSummary {
            n_samples: result.n_samples,
            n_arrived: result.n_arrived,
            arrival_fraction: result.arrival_fraction,
            arrival_fraction_stderr: result.arrival_fraction_stderr,
            mean_transit_time_s: result.mean_transit_time,
            v_parallel_chi_square: chi,
        },
    )?;
    Ok(())
}

pub fn fit(cfg: &FullConfig, ctx: &mut RunContext) -> Result<(), CliError> {
    let core = cfg.core_inputs()?;
    let f = &cfg.fit;
    if f.pump_on.is_empty() {
        return Err(CliError::Config("missing required key `fit.pump_on`".into()));
    }
    let strategy = parse_strategy(&f.strategy)?;
    let meta = SpectrumMeta {
        geometry: core.geometry.clone(),
        ensemble: core.ensemble.clone(),
        fields: core.fields.clone(),
        strategy,
        seed: None,
        nonlinear_component: false,
    };
    let load = |path: &str| -> Result<Spectrum, CliError> {
        let (b_grid, values, stderr) = read_spectrum_csv(path.as_ref())?;
        let spectrum = Spectrum { b_grid, values, stderr, meta: meta.clone() };
        spectrum.validate()?;
        Ok(spectrum)
    };
    let pump_on = load(&f.pump_on)?;
    let data = if f.pump_off.is_empty() {
        pump_on
    } else {
        subtract_linear(&pump_on, &load(&f.pump_off)?)?
    };

    let problem = FitProblem {
        data,
        species: core.species.clone(),
        initial_c1: f.initial_c1,
        initial_c2: f.initial_c2,
        initial_gamma: f.initial_gamma_per_s,
        fit_offset: f.fit_offset,
    };
    let result = fit_rotation_curve(&problem)?;
    ctx.write_json("fit_result.json", &result)?;

    // Model on the data grid at the fitted parameters, for residual plots.
    let b0 = result.b_offset.unwrap_or(0.0);
    let mut fitted_fields = problem.data.meta.fields.clone();
    fitted_fields.gamma_coh = result.gamma_coh;
    let gyro = gyromagnetic_ratio(&problem.species);
    let mut rows = Vec::with_capacity(problem.data.b_grid.len());
    for (&b, &y) in problem.data.b_grid.iter().zip(&problem.data.values) {
        let kernel = nl_kernel(
            b - b0,
            &problem.data.meta.geometry,
            &problem.data.meta.ensemble,
            &fitted_fields,
            &problem.species,
            strategy,
        )?;
        let model = result.c1 * gyro * (b - b0) + result.c2 * kernel;
        rows.push(vec![fmt_float(b), fmt_float(y), fmt_float(model), fmt_float(y - model)]);
    }
    ctx.write_csv("fit_residuals.csv", &["B_tesla", "data", "model", "residual"], rows)?;
    Ok(())
}
