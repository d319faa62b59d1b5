//! Ballistic transport Monte Carlo: atoms born in the pump ring with
//! Maxwell-Boltzmann velocities fly in straight lines until they hit a cell
//! wall (spin death) or enter the probe disc. Arrivals carry the Ramsey
//! weight sin(2 omega_L t) e^{-Gamma t}, giving a stochastic estimate of the
//! nonlinear rotation kernel against which the closed-form model is checked.
//!
//! Reproducibility contract: sample i draws from its own counter-selected
//! RNG stream, every statistic is reduced from the arrival list in sample
//! order, and histograms hold integer counts — so McResult is bit-identical
//! for a fixed (seed, n_samples) across thread counts and batch sizes.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::domain::{
    gyromagnetic_ratio, signed_larmor, AtomSpecies, CellGeometry, FieldConfig, ThermalEnsemble,
};
use crate::error::{CoreError, Result};
use crate::kinetics::marginal_shape;
use crate::lineshape::{Spectrum, SpectrumMeta, Strategy};
use crate::numerics::{adaptive_quad, QuadTol};

/// 32-byte ChaCha key from one user-facing seed word.
fn expand_seed(seed: u64) -> [u8; 32] {
    let mut s = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        // splitmix64: the usual way to grow one word into a key without
        // correlated lanes.
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = s;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    key
}

/// Independent generator for one sample: same key for everyone, the sample
/// index selects the stream. Scheduling can never change what a sample draws.
pub fn sample_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(expand_seed(seed));
    rng.set_stream(sample_index);
    rng
}

/// One atom leaving the pump ring: position uniform over the annular pump
/// volume, velocity 3D Maxwell-Boltzmann. Draw order is fixed (r, phi, z,
/// vx, vy, vz) and part of the reproducibility contract.
pub fn sample_initial(
    rng: &mut impl RngCore,
    geometry: &CellGeometry,
    ensemble: &ThermalEnsemble,
) -> ([f64; 3], [f64; 3]) {
    let l = geometry.separation;
    let ring = geometry.pump_ring_width;
    // Area-uniform radius over [L, L + w_pu]: r^2 uniform.
    let r = (l * l + (2.0 * l * ring + ring * ring) * rng.gen::<f64>()).sqrt();
    let phi = std::f64::consts::TAU * rng.gen::<f64>();
    let z = geometry.thickness * rng.gen::<f64>();
    let u = ensemble.u;
    let vx: f64 = rng.sample::<f64, _>(StandardNormal) * u;
    let vy: f64 = rng.sample::<f64, _>(StandardNormal) * u;
    let vz: f64 = rng.sample::<f64, _>(StandardNormal) * u;
    ([r * phi.cos(), r * phi.sin(), z], [vx, vy, vz])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitOutcome {
    /// First contact with z = 0 or z = thickness, or a path that never
    /// reaches the probe disc.
    WallDeath,
    /// Entered the probe disc after flying for `t` seconds.
    ProbeArrival { t: f64 },
}

/// Straight-line flight from `position` with `velocity`: death at the first
/// crossing of z = 0 or z = W, arrival when the planar path first enters the
/// probe disc centered on the cell axis.
pub fn transit(position: [f64; 3], velocity: [f64; 3], geometry: &CellGeometry) -> TransitOutcome {
    let [x0, y0, z0] = position;
    let [vx, vy, vz] = velocity;
    let t_wall = if vz > 0.0 {
        (geometry.thickness - z0) / vz
    } else if vz < 0.0 {
        z0 / -vz
    } else {
        f64::INFINITY
    };
    let a = vx * vx + vy * vy;
    let b = 2.0 * (x0 * vx + y0 * vy);
    // Start radius exceeds the probe radius (validated at config level), so
    // c > 0 and a positive entry time requires inward motion (b < 0).
    let c = x0 * x0 + y0 * y0 - geometry.probe_radius * geometry.probe_radius;
    if a == 0.0 || b >= 0.0 {
        return TransitOutcome::WallDeath;
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return TransitOutcome::WallDeath;
    }
    let t_in = (-b - disc.sqrt()) / (2.0 * a);
    if t_in < t_wall {
        TransitOutcome::ProbeArrival { t: t_in }
    } else {
        TransitOutcome::WallDeath
    }
}

/// Simulation size and reproducibility knobs.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub n_samples: u64,
    pub seed: u64,
    /// Samples handed to one worker task; affects scheduling only.
    pub batch_size: u64,
    pub geometry: CellGeometry,
    pub ensemble: ThermalEnsemble,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(CoreError::Validation("n_samples must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::Validation("batch_size must be positive".into()));
        }
        self.geometry.validate()?;
        if !(self.ensemble.u > 0.0) {
            return Err(CoreError::Validation(format!(
                "thermal speed must be positive, got {}",
                self.ensemble.u
            )));
        }
        if self.geometry.separation <= self.geometry.probe_radius {
            return Err(CoreError::Validation(format!(
                "pump ring radius {} m must exceed the probe radius {} m",
                self.geometry.separation, self.geometry.probe_radius
            )));
        }
        Ok(())
    }
}

/// Fixed-width binning with explicit out-of-range counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(CoreError::Validation(format!(
                "histogram range must be finite with hi > lo, got [{lo}, {hi}]"
            )));
        }
        if bins == 0 {
            return Err(CoreError::Validation("histogram needs at least one bin".into()));
        }
        Ok(Histogram { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0 })
    }

    pub fn record(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x > self.hi {
            self.overflow += 1;
        } else {
            let frac = (x - self.lo) / (self.hi - self.lo);
            let bin = ((frac * self.counts.len() as f64) as usize).min(self.counts.len() - 1);
            self.counts[bin] += 1;
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Everything one simulation produces. All floating-point members are
/// reduced from the arrival list in sample order.
#[derive(Debug, Clone)]
pub struct McResult {
    pub n_samples: u64,
    pub n_arrived: u64,
    pub arrival_fraction: f64,
    /// Binomial standard error of the fraction.
    pub arrival_fraction_stderr: f64,
    pub mean_transit_time: f64,
    pub transit_time_histogram: Histogram,
    /// Thin-axis velocity component of arriving atoms (signed), binned.
    pub v_parallel_histogram: Histogram,
    /// Raw arrival data in sample order, for distribution tests.
    pub arrival_times: Vec<f64>,
    pub arrival_v_parallel: Vec<f64>,
    /// Kernel estimate: mean of sin(2 omega_L t) e^{-Gamma t} over arrivals,
    /// with per-point standard errors.
    pub spectrum: Spectrum,
}

/// Runs the transport simulation and accumulates the rotation kernel on
/// `b_grid`. Batches execute in parallel; reduction order is fixed.
pub fn mc_lineshape(
    b_grid: &[f64],
    config: &McConfig,
    fields: &FieldConfig,
    species: &AtomSpecies,
) -> Result<McResult> {
    config.validate()?;
    fields.validate()?;
    species.validate()?;
    if b_grid.is_empty() {
        return Err(CoreError::Validation("field grid must not be empty".into()));
    }
    if !b_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(CoreError::Validation("field grid must be strictly increasing".into()));
    }

    let n = config.n_samples;
    let batch = config.batch_size;
    let n_batches = n.div_ceil(batch);
    let template = ChaCha8Rng::from_seed(expand_seed(config.seed));
    let per_batch: Vec<Vec<(f64, f64)>> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let mut arrivals = Vec::new();
            let end = ((bi + 1) * batch).min(n);
            for i in (bi * batch)..end {
                let mut rng = template.clone();
                rng.set_stream(i);
                let (pos, vel) = sample_initial(&mut rng, &config.geometry, &config.ensemble);
                if let TransitOutcome::ProbeArrival { t } = transit(pos, vel, &config.geometry) {
                    arrivals.push((t, vel[2]));
                }
            }
            arrivals
        })
        .collect();

    let mut arrival_times = Vec::new();
    let mut arrival_v_parallel = Vec::new();
    for batch_arrivals in per_batch {
        for (t, vz) in batch_arrivals {
            arrival_times.push(t);
            arrival_v_parallel.push(vz);
        }
    }
    let n_arrived = arrival_times.len() as u64;
    if n_arrived < 2 {
        return Err(CoreError::Statistics(format!(
            "{n_arrived} of {n} samples reached the probe disc; too few for error bars — \
             increase n_samples"
        )));
    }

    let nf = n as f64;
    let frac = n_arrived as f64 / nf;
    let frac_stderr = (frac * (1.0 - frac) / nf).sqrt();

    let mut transit_hist = Histogram::new(
        0.0,
        10.0 * config.geometry.separation / config.ensemble.u,
        100,
    )?;
    let mut v_par_hist = Histogram::new(-10.0, 10.0, 81)?;
    for (&t, &vz) in arrival_times.iter().zip(&arrival_v_parallel) {
        transit_hist.record(t);
        v_par_hist.record(vz);
    }
    let mean_transit_time = arrival_times.iter().sum::<f64>() / n_arrived as f64;

    let gyro = gyromagnetic_ratio(species);
    let m = n_arrived as f64;
    let mut values = Vec::with_capacity(b_grid.len());
    let mut stderr = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        let omega = signed_larmor(gyro, b, fields.b_perp);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for &t in &arrival_times {
            let y = (2.0 * omega * t).sin() * (-fields.gamma_coh * t).exp();
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / m;
        let var = ((sumsq - sum * sum / m) / (m - 1.0)).max(0.0);
        values.push(mean);
        stderr.push((var / m).sqrt());
    }

    let spectrum = Spectrum {
        b_grid: b_grid.to_vec(),
        values,
        stderr: Some(stderr),
        meta: SpectrumMeta {
            geometry: config.geometry.clone(),
            ensemble: config.ensemble.clone(),
            fields: fields.clone(),
            // The analytic model this estimate is meant to be compared with.
            strategy: Strategy::SpeedAverage,
            seed: Some(config.seed),
            nonlinear_component: true,
        },
    };
    spectrum.validate()?;

    Ok(McResult {
        n_samples: n,
        n_arrived,
        arrival_fraction: frac,
        arrival_fraction_stderr: frac_stderr,
        mean_transit_time,
        transit_time_histogram: transit_hist,
        v_parallel_histogram: v_par_hist,
        arrival_times,
        arrival_v_parallel,
        spectrum,
    })
}

/// Goodness-of-fit summary for the arrival-velocity distribution test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub bins: usize,
    pub p_value: f64,
    /// Velocity scale of the best-fit filtered marginal, m/s.
    pub fitted_scale: f64,
}

/// Tests arrival thin-axis velocities against the wall-filtered marginal
/// family p(v) proportional to marginal_shape(|v|/s).
///
/// The family's scale is fitted from the second moment — E[v^2] = s^2/4 for
/// this shape — because the simulated ring-to-disc geometry shortens the
/// effective flight distance relative to the plane-to-plane model and shifts
/// the scale while leaving the shape intact. Bins are equal-probability
/// quantiles of the fitted density; dof = bins - 2 (one fitted parameter,
/// one normalization).
pub fn v_parallel_chi_square(samples: &[f64]) -> Result<ChiSquareReport> {
    let n = samples.len();
    if n < 30 {
        return Err(CoreError::Statistics(format!(
            "need at least 30 arrivals for a distribution test, got {n}"
        )));
    }
    let mean_sq = samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = 2.0 * mean_sq.sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CoreError::Statistics(format!(
            "degenerate velocity sample (fitted scale {scale})"
        )));
    }

    let bins = (n / 30).clamp(6, 12);
    // Equal-probability bin edges in the scaled variable eta = |v| / s.
    let tol = QuadTol::new(1e-11, 1e-15);
    let eta_max = 12.0;
    let total = adaptive_quad(marginal_shape, 0.0, eta_max, &[1.0, 3.0], tol, "marginal mass")?;
    let cdf = |eta: f64| -> Result<f64> {
        if eta <= 0.0 {
            return Ok(0.0);
        }
        let mass =
            adaptive_quad(marginal_shape, 0.0, eta.min(eta_max), &[], tol, "marginal cdf")?;
        Ok(mass / total)
    };
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let target = k as f64 / bins as f64;
        let (mut lo, mut hi) = (0.0, eta_max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }

    let mut observed = vec![0u64; bins];
    for v in samples {
        let eta = v.abs() / scale;
        let bin = edges.partition_point(|&e| e < eta);
        observed[bin] += 1;
    }
    let expected = n as f64 / bins as f64;
    let statistic: f64 =
        observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let dof = bins - 2;
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| CoreError::Statistics(format!("chi-square setup failed: {e}")))?;
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(ChiSquareReport { statistic, dof, bins, p_value, fitted_scale: scale })
}
