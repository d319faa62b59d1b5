//! Angular-momentum algebra: ladder coefficients, spin operator matrices,
//! Wigner 3-j symbols, and ground-state moment extraction.
//!
//! The 3-j symbol is evaluated with the Racah single-sum formula carried out
//! in exact big-rational arithmetic; the square of the symbol stays rational
//! and only one square root is taken at the f64 boundary, so no precision is
//! lost to factorial cancellation.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{CoreError, Result};

/// Basis convention used everywhere: row/column `i` of a (2F+1)-dim matrix
/// is the Zeeman sublevel m = -F + i.
pub fn sublevel(f: f64, index: usize) -> f64 {
    -f + index as f64
}

fn half_int(x: f64, name: &str) -> Result<i64> {
    let doubled = 2.0 * x;
    let rounded = doubled.round();
    if !x.is_finite() || (doubled - rounded).abs() > 1e-9 {
        return Err(CoreError::Domain(format!(
            "{name} must be an integer or half-integer, got {x}"
        )));
    }
    Ok(rounded as i64)
}

/// Ladder matrix element sqrt(F(F+1) - m(m+1)) = <F,m+1|F_+|F,m>.
pub fn ladder_coefficient(f: f64, m: f64) -> Result<f64> {
    let tf = half_int(f, "F")?;
    let tm = half_int(m, "m")?;
    if tf < 0 {
        return Err(CoreError::Domain(format!("F must be non-negative, got {f}")));
    }
    if (tf - tm) % 2 != 0 {
        return Err(CoreError::Domain(format!("m = {m} is not a sublevel of F = {f}")));
    }
    if tm < -tf || tm >= tf {
        return Err(CoreError::Domain(format!(
            "raising from m = {m} requires -F <= m <= F-1 for F = {f}"
        )));
    }
    // exact in doubled units: 4*(F(F+1) - m(m+1)) = tf(tf+2) - tm(tm+2)
    let quad = (tf * (tf + 2) - tm * (tm + 2)) as f64 / 4.0;
    Ok(quad.sqrt())
}

/// The dimensionless spin operators for one F manifold (hbar = 1).
#[derive(Debug, Clone)]
pub struct SpinMatrices {
    pub f: f64,
    pub fx: DMatrix<Complex64>,
    pub fy: DMatrix<Complex64>,
    pub fz: DMatrix<Complex64>,
    pub fplus: DMatrix<Complex64>,
    pub fminus: DMatrix<Complex64>,
}

/// Builds F_x, F_y, F_z, F_+/- in the m = -F..F basis.
pub fn spin_matrices(f: f64) -> Result<SpinMatrices> {
    let tf = half_int(f, "F")?;
    if tf < 0 {
        return Err(CoreError::Domain(format!("F must be non-negative, got {f}")));
    }
    let n = (tf + 1) as usize;
    let mut fz = DMatrix::<Complex64>::zeros(n, n);
    let mut fplus = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        fz[(i, i)] = Complex64::new(sublevel(f, i), 0.0);
        if i + 1 < n {
            let a = ladder_coefficient(f, sublevel(f, i))?;
            fplus[(i + 1, i)] = Complex64::new(a, 0.0);
        }
    }
    let fminus = fplus.adjoint();
    let fx = (&fplus + &fminus).scale(0.5);
    let fy = (&fplus - &fminus) * Complex64::new(0.0, -0.5);
    Ok(SpinMatrices { f, fx, fy, fz, fplus, fminus })
}

fn factorial(n: i64) -> BigInt {
    debug_assert!(n >= 0);
    let mut acc = BigInt::from(1);
    for k in 2..=n {
        acc *= k;
    }
    acc
}

/// Wigner 3-j symbol (j1 j2 j3; m1 m2 m3).
///
/// Violated m-sum, triangle, or parity conditions give 0.0; inputs that are
/// not (half-)integers or have |m| > j are domain errors.
pub fn wigner_3j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> Result<f64> {
    let t = [half_int(j1, "j1")?, half_int(j2, "j2")?, half_int(j3, "j3")?];
    let u = [half_int(m1, "m1")?, half_int(m2, "m2")?, half_int(m3, "m3")?];
    for i in 0..3 {
        if t[i] < 0 {
            return Err(CoreError::Domain(format!("j{} must be non-negative", i + 1)));
        }
        if u[i].abs() > t[i] {
            return Err(CoreError::Domain(format!("|m{}| exceeds j{}", i + 1, i + 1)));
        }
        if (t[i] - u[i]) % 2 != 0 {
            return Err(CoreError::Domain(format!("m{} is not a sublevel of j{}", i + 1, i + 1)));
        }
    }
    if u[0] + u[1] + u[2] != 0 {
        return Ok(0.0);
    }
    // triangle: |j1-j2| <= j3 <= j1+j2 with integer perimeter
    if (t[0] + t[1] + t[2]) % 2 != 0 {
        return Ok(0.0);
    }
    if t[2] < (t[0] - t[1]).abs() || t[2] > t[0] + t[1] {
        return Ok(0.0);
    }

    let a1 = (t[0] + t[1] - t[2]) / 2;
    let a2 = (t[0] - t[1] + t[2]) / 2;
    let a3 = (-t[0] + t[1] + t[2]) / 2;
    let perim1 = (t[0] + t[1] + t[2]) / 2 + 1;

    let kmin = 0.max((t[1] - t[2] - u[0]) / 2).max((t[0] - t[2] + u[1]) / 2);
    let kmax = a1.min((t[0] - u[0]) / 2).min((t[1] + u[1]) / 2);

    let mut sum = BigRational::zero();
    for k in kmin..=kmax {
        let denom = factorial(k)
            * factorial(a1 - k)
            * factorial((t[0] - u[0]) / 2 - k)
            * factorial((t[1] + u[1]) / 2 - k)
            * factorial((t[2] - t[1] + u[0]) / 2 + k)
            * factorial((t[2] - t[0] - u[1]) / 2 + k);
        let term = BigRational::new(BigInt::from(1), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(0.0);
    }

    let delta = BigRational::new(factorial(a1) * factorial(a2) * factorial(a3), factorial(perim1));
    let prod = factorial((t[0] + u[0]) / 2)
        * factorial((t[0] - u[0]) / 2)
        * factorial((t[1] + u[1]) / 2)
        * factorial((t[1] - u[1]) / 2)
        * factorial((t[2] + u[2]) / 2)
        * factorial((t[2] - u[2]) / 2);
    let squared = delta * BigRational::from(prod) * (&sum * &sum);

    let phase_exp = (t[0] - t[1] - u[2]) / 2;
    let mut sign = if sum.is_negative() { -1.0 } else { 1.0 };
    if phase_exp.rem_euclid(2) == 1 {
        sign = -sign;
    }
    let magnitude = squared
        .to_f64()
        .ok_or_else(|| CoreError::Numeric("3-j square did not fit in f64".into()))?
        .sqrt();
    Ok(sign * magnitude)
}

/// Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M>.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> Result<f64> {
    let three_j = wigner_3j(j1, j2, j, m1, m2, -m)?;
    if three_j == 0.0 {
        return Ok(0.0);
    }
    let phase_exp = half_int(j1 - j2 + m, "j1 - j2 + M")?;
    if phase_exp % 2 != 0 {
        return Err(CoreError::Domain(
            "j1 - j2 + M must be an integer for a Clebsch-Gordan coefficient".into(),
        ));
    }
    let sign = if (phase_exp / 2).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    Ok(sign * (2.0 * j + 1.0).sqrt() * three_j)
}

/// Ground-manifold observables scaled by the atom number.
///
/// The transverse moments are the printed coherence sums: with matrices
/// stored as rho[(i, j)] = <i|rho|j> the F_y sum reads the transposed element,
/// so `fy` here is minus the trace against the Condon-Shortley F_y. That is
/// the convention the rotation model uses throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStateMoments {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    /// Quadrupole alignment <3 F_z^2 - F^2>.
    pub alignment: f64,
}

/// Extracts the moment set from a (2F+1)x(2F+1) density matrix.
pub fn expectation_moments(rho: &DMatrix<Complex64>, n_atoms: f64) -> Result<GroundStateMoments> {
    let n = rho.nrows();
    if n == 0 || rho.ncols() != n {
        return Err(CoreError::Validation(format!(
            "density matrix must be square and non-empty, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut herm_dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            herm_dev = herm_dev.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    if herm_dev > 1e-10 {
        return Err(CoreError::Validation(format!(
            "density matrix is not Hermitian (max deviation {herm_dev:.2e})"
        )));
    }
    let f = (n as f64 - 1.0) / 2.0;
    let casimir = f * (f + 1.0);
    let (mut fx, mut fy, mut fz, mut alignment) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let m = sublevel(f, i);
        let pop = rho[(i, i)].re;
        fz += m * pop;
        alignment += (3.0 * m * m - casimir) * pop;
        if i + 1 < n {
            let a = ladder_coefficient(f, m)?;
            let up = rho[(i + 1, i)];
            let down = rho[(i, i + 1)];
            fx += a / 2.0 * (up + down).re;
            fy += a * (up - down).im / 2.0;
        }
    }
    Ok(GroundStateMoments {
        fx: n_atoms * fx,
        fy: n_atoms * fy,
        fz: n_atoms * fz,
        alignment: n_atoms * alignment,
    })
}
