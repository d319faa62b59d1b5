//! Least-squares estimation of the rotation-curve parameters (c1, c2,
//! Gamma_coh) and optionally a field-axis offset. The model
//! phi(B) = c1 * gamma * (B - B0) + c2 * K(B - B0; Gamma) is linear in
//! (c1, c2), so those are profiled out in closed form and only Gamma (and
//! B0 when requested) is searched: a coarse log-spaced bracket followed by
//! local Brent refinement, with Gamma kept positive by working in log space.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{gyromagnetic_ratio, AtomSpecies};
use crate::error::{CoreError, Result};
use crate::lineshape::{nl_kernel, Spectrum};
use crate::numerics::minimize_scalar;

/// One spectrum plus everything the model needs to reproduce it. The
/// spectrum's metadata supplies the cell, ensemble, transverse field, and
/// averaging strategy; its gamma_coh entry is ignored here because Gamma is
/// a fit parameter.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: Spectrum,
    pub species: AtomSpecies,
    pub initial_c1: f64,
    pub initial_c2: f64,
    pub initial_gamma: f64,
    /// Also fit a field-axis offset B0 (nested 1D search).
    pub fit_offset: bool,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.species.validate()?;
        let free = if self.fit_offset { 4 } else { 3 };
        let n = self.data.b_grid.len();
        if n < free + 3 {
            return Err(CoreError::Validation(format!(
                "{n} data points cannot constrain {free} free parameters; need at least {}",
                free + 3
            )));
        }
        if !(self.initial_gamma > 0.0) || !self.initial_gamma.is_finite() {
            return Err(CoreError::Validation(format!(
                "initial gamma must be positive and finite, got {}",
                self.initial_gamma
            )));
        }
        if !self.initial_c1.is_finite() || !self.initial_c2.is_finite() {
            return Err(CoreError::Validation("initial coefficients must be finite".into()));
        }
        if let Some(se) = &self.data.stderr {
            if se.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(CoreError::Validation(
                    "per-point standard errors must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Inverse-variance weights normalized to mean one, plus the mean that
    /// was divided out. Searching on normalized weights keeps the objective
    /// scale independent of the uncertainty units; the mean restores true
    /// 1/sigma^2 weighting in the covariance and residual norm.
    fn weights(&self) -> (Vec<f64>, f64) {
        match &self.data.stderr {
            Some(se) => {
                let mut w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
                let mean = w.iter().sum::<f64>() / w.len() as f64;
                for wi in &mut w {
                    *wi /= mean;
                }
                (w, mean)
            }
            None => (vec![1.0; self.data.b_grid.len()], 1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub c1: f64,
    pub c2: f64,
    pub gamma_coh: f64,
    pub b_offset: Option<f64>,
    pub c1_stderr: f64,
    pub c2_stderr: f64,
    pub gamma_stderr: f64,
    pub b_offset_stderr: Option<f64>,
    /// Square root of the weighted sum of squared residuals at the optimum.
    pub residual_norm: f64,
    /// Same measure at the caller's initial guess; never smaller than
    /// `residual_norm`.
    pub initial_residual_norm: f64,
    pub converged: bool,
    /// False when the data carry no nonlinear component (c2 = 0), leaving
    /// Gamma unconstrained.
    pub gamma_identifiable: bool,
    /// Number of profiled-objective evaluations spent.
    pub iterations: usize,
}

/// Closed-form weighted least squares for the two linear coefficients of
/// data = c1 * linear + c2 * kernel. Errors on a collinear (or vanishing)
/// basis.
pub fn separable_linear_solve(
    data: &[f64],
    kernel_basis: &[f64],
    linear_basis: &[f64],
    weights: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let n = data.len();
    if kernel_basis.len() != n || linear_basis.len() != n || n < 2 {
        return Err(CoreError::Validation(format!(
            "basis lengths must match data length >= 2, got {} / {} / {n}",
            kernel_basis.len(),
            linear_basis.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(CoreError::Validation("weights length differs from data".into()));
        }
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut d11, mut d12, mut d22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (f1, f2, y, wi) = (linear_basis[i], kernel_basis[i], data[i], w(i));
        d11 += wi * f1 * f1;
        d12 += wi * f1 * f2;
        d22 += wi * f2 * f2;
        r1 += wi * f1 * y;
        r2 += wi * f2 * y;
    }
    let det = d11 * d22 - d12 * d12;
    if !(det > 1e-12 * d11 * d22) {
        return Err(CoreError::Degenerate(format!(
            "linear and kernel basis are collinear or vanish on this grid \
             (gram determinant {det:.3e} vs scale {:.3e})",
            d11 * d22
        )));
    }
    Ok(((r1 * d22 - r2 * d12) / det, (r2 * d11 - r1 * d12) / det))
}

/// Kernel column K(b - b0; gamma) over the data grid, evaluated in parallel.
fn kernel_column(problem: &FitProblem, gamma: f64, b0: f64) -> Result<Vec<f64>> {
    let meta = &problem.data.meta;
    let mut fields = meta.fields.clone();
    fields.gamma_coh = gamma;
    problem
        .data
        .b_grid
        .par_iter()
        .map(|&b| {
            nl_kernel(
                b - b0,
                &meta.geometry,
                &meta.ensemble,
                &fields,
                &problem.species,
                meta.strategy,
            )
        })
        .collect()
}

struct ProfilePoint {
    c1: f64,
    c2: f64,
    ssr: f64,
}

/// Weighted SSR with the linear pair profiled out at fixed (gamma, b0).
fn profile(problem: &FitProblem, linear: &[f64], weights: &[f64], gamma: f64, b0: f64) -> Result<ProfilePoint> {
    let kernel = kernel_column(problem, gamma, b0)?;
    let shifted_linear: Vec<f64>;
    let lin = if b0 == 0.0 {
        linear
    } else {
        let gyro = gyromagnetic_ratio(&problem.species);
        shifted_linear = problem.data.b_grid.iter().map(|&b| gyro * (b - b0)).collect();
        &shifted_linear
    };
    let (c1, c2) = separable_linear_solve(&problem.data.values, &kernel, lin, Some(weights))?;
    let ssr = ssr_of(&problem.data.values, lin, &kernel, weights, c1, c2);
    Ok(ProfilePoint { c1, c2, ssr })
}

fn ssr_of(data: &[f64], linear: &[f64], kernel: &[f64], weights: &[f64], c1: f64, c2: f64) -> f64 {
    let mut ssr = 0.0;
    for i in 0..data.len() {
        let r = data[i] - c1 * linear[i] - c2 * kernel[i];
        ssr += weights[i] * r * r;
    }
    ssr
}

/// Minimum of the profiled objective over gamma at fixed b0: log-spaced
/// bracket around the current center, re-centered while the minimum sits on
/// an edge, then Brent in log space.
fn search_gamma(
    problem: &FitProblem,
    linear: &[f64],
    weights: &[f64],
    gamma_center: f64,
    b0: f64,
    evals: &mut usize,
) -> Result<(f64, ProfilePoint, bool)> {
    const GRID_HALF: i32 = 12;
    const DECADE_STEP: f64 = 1.0 / 6.0;
    let mut center = gamma_center;
    let mut best_edge_restarts = 0;
    loop {
        let exponents: Vec<f64> =
            (-GRID_HALF..=GRID_HALF).map(|k| f64::from(k) * DECADE_STEP).collect();
        let mut best_k = 0usize;
        let mut best = f64::INFINITY;
        let mut points = Vec::with_capacity(exponents.len());
        for (k, e) in exponents.iter().enumerate() {
            let gamma = center * 10f64.powf(*e);
            let p = profile(problem, linear, weights, gamma, b0)?;
            *evals += 1;
            if p.ssr < best {
                best = p.ssr;
                best_k = k;
            }
            points.push((gamma, p));
        }
        if best_k == 0 || best_k == points.len() - 1 {
            // Minimum on the bracket edge: recenter there and widen.
            center = points[best_k].0;
            best_edge_restarts += 1;
            if best_edge_restarts > 4 {
                let (gamma, p) = points.swap_remove(best_k);
                return Ok((gamma, p, false));
            }
            continue;
        }
        let lo = points[best_k - 1].0.ln();
        let hi = points[best_k + 1].0.ln();
        let mut inner_err: Option<CoreError> = None;
        let mut local_evals = 0usize;
        let (log_gamma, _) = minimize_scalar(
            |lg: f64| {
                if inner_err.is_some() {
                    return f64::INFINITY;
                }
                local_evals += 1;
                match profile(problem, linear, weights, lg.exp(), b0) {
                    Ok(p) => p.ssr,
                    Err(e) => {
                        inner_err = Some(e);
                        f64::INFINITY
                    }
                }
            },
            lo,
            hi,
            1e-10,
            200,
        )?;
        if let Some(e) = inner_err {
            return Err(e);
        }
        *evals += local_evals;
        let gamma = log_gamma.exp();
        let refined = profile(problem, linear, weights, gamma, b0)?;
        *evals += 1;
        // Keep whichever of grid point and refinement actually won.
        if refined.ssr <= best {
            return Ok((gamma, refined, true));
        }
        let (g, p) = points.swap_remove(best_k);
        return Ok((g, p, true));
    }
}

/// Fits c1, c2, Gamma (and optionally B0) to a rotation spectrum by
/// variable projection.
pub fn fit_rotation_curve(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let n = problem.data.b_grid.len();
    let gyro = gyromagnetic_ratio(&problem.species);
    let (weights, weight_mean) = problem.weights();
    let linear: Vec<f64> = problem.data.b_grid.iter().map(|&b| gyro * b).collect();

    // Residual at the caller's guess, for the never-worse contract.
    let initial_kernel = kernel_column(problem, problem.initial_gamma, 0.0)?;
    let initial_ssr = ssr_of(
        &problem.data.values,
        &linear,
        &initial_kernel,
        &weights,
        problem.initial_c1,
        problem.initial_c2,
    );

    let mut evals = 0usize;
    let span = problem.data.b_grid[n - 1] - problem.data.b_grid[0];

    let mut b0 = 0.0;
    let (mut gamma, mut point, mut converged) =
        search_gamma(problem, &linear, &weights, problem.initial_gamma, b0, &mut evals)?;

    if problem.fit_offset {
        // Alternate the two 1D searches until both stall.
        for _round in 0..12 {
            let mut inner_err: Option<CoreError> = None;
            let mut local_evals = 0usize;
            let (b0_new, _) = minimize_scalar(
                |cand: f64| {
                    if inner_err.is_some() {
                        return f64::INFINITY;
                    }
                    local_evals += 1;
                    match profile(problem, &linear, &weights, gamma, cand) {
                        Ok(p) => p.ssr,
                        Err(e) => {
                            inner_err = Some(e);
                            f64::INFINITY
                        }
                    }
                },
                -0.25 * span,
                0.25 * span,
                1e-12,
                200,
            )?;
            if let Some(e) = inner_err {
                return Err(e);
            }
            evals += local_evals;
            let (gamma_new, point_new, ok) =
                search_gamma(problem, &linear, &weights, gamma, b0_new, &mut evals)?;
            let gamma_step = (gamma_new - gamma).abs() / gamma.max(f64::MIN_POSITIVE);
            let b0_step = (b0_new - b0).abs() / span;
            b0 = b0_new;
            gamma = gamma_new;
            point = point_new;
            converged = ok;
            if gamma_step < 1e-9 && b0_step < 1e-12 {
                break;
            }
        }
    }

    // The profiled optimum can only improve on the caller's guess when the
    // guess was inside the searched bracket; guard anyway.
    if point.ssr > initial_ssr {
        let p = profile(problem, &linear, &weights, problem.initial_gamma, 0.0)?;
        evals += 1;
        if p.ssr < point.ssr {
            gamma = problem.initial_gamma;
            b0 = 0.0;
            point = p;
            converged = false;
        }
    }

    let gamma_identifiable = point.c2 != 0.0;
    let (stderrs, offset_stderr) =
        parameter_stderr(problem, &weights, weight_mean, gamma, b0, &point, gamma_identifiable)?;

    Ok(FitResult {
        c1: point.c1,
        c2: point.c2,
        gamma_coh: gamma,
        b_offset: problem.fit_offset.then_some(b0),
        c1_stderr: stderrs[0],
        c2_stderr: stderrs[1],
        gamma_stderr: stderrs[2],
        b_offset_stderr: offset_stderr,
        residual_norm: (weight_mean * point.ssr).sqrt(),
        initial_residual_norm: (weight_mean * initial_ssr).sqrt(),
        converged,
        gamma_identifiable,
        iterations: evals,
    })
}

/// Standard errors from the (weighted) Jacobian normal matrix at the
/// optimum. With caller-supplied uncertainties the covariance is
/// (J^T W J)^-1; with unit weights it is scaled by SSR / (n - p).
fn parameter_stderr(
    problem: &FitProblem,
    weights: &[f64],
    weight_mean: f64,
    gamma: f64,
    b0: f64,
    point: &ProfilePoint,
    gamma_identifiable: bool,
) -> Result<([f64; 3], Option<f64>)> {
    let n = problem.data.b_grid.len();
    let gyro = gyromagnetic_ratio(&problem.species);
    let lin: Vec<f64> = problem.data.b_grid.iter().map(|&b| gyro * (b - b0)).collect();
    let kernel = kernel_column(problem, gamma, b0)?;

    let h = 1e-3;
    let dk_dgamma: Vec<f64> = if gamma_identifiable {
        let plus = kernel_column(problem, gamma * (1.0 + h), b0)?;
        let minus = kernel_column(problem, gamma * (1.0 - h), b0)?;
        plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * gamma * h)).collect()
    } else {
        vec![0.0; n]
    };

    let fit_offset = problem.fit_offset;
    let dk_db0: Vec<f64> = if fit_offset {
        let span = problem.data.b_grid[n - 1] - problem.data.b_grid[0];
        let db = span * 1e-6;
        let plus = kernel_column(problem, gamma, b0 + db)?;
        let minus = kernel_column(problem, gamma, b0 - db)?;
        plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * db)).collect()
    } else {
        Vec::new()
    };

    let p = 2 + usize::from(gamma_identifiable) + usize::from(fit_offset);
    let mut jtj = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let mut row = Vec::with_capacity(p);
        row.push(lin[i]);
        row.push(kernel[i]);
        if gamma_identifiable {
            row.push(point.c2 * dk_dgamma[i]);
        }
        if fit_offset {
            row.push(-point.c1 * gyro - point.c2 * dk_db0[i]);
        }
        for a in 0..p {
            for b in 0..p {
                jtj[(a, b)] += weights[i] * row[a] * row[b];
            }
        }
    }
    // jtj uses the mean-normalized weights; dividing by the mean restores
    // true inverse-variance weighting when uncertainties were supplied.
    let cov_scale = if problem.data.stderr.is_some() {
        1.0 / weight_mean
    } else if n > p {
        point.ssr / (n - p) as f64
    } else {
        return Err(CoreError::Degenerate("no residual degrees of freedom".into()));
    };
    let cov = jtj.clone().try_inverse().ok_or_else(|| {
        CoreError::Degenerate("singular normal matrix; parameters are not independent".into())
    })? * cov_scale;

    let mut out = [0.0; 3];
    out[0] = cov[(0, 0)].max(0.0).sqrt();
    out[1] = cov[(1, 1)].max(0.0).sqrt();
    out[2] = if gamma_identifiable { cov[(2, 2)].max(0.0).sqrt() } else { f64::INFINITY };
    let offset_stderr = fit_offset.then(|| {
        let idx = p - 1;
        cov[(idx, idx)].max(0.0).sqrt()
    });
    Ok((out, offset_stderr))
}
