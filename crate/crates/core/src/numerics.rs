//! Shared numerical machinery: adaptive Gauss-Kronrod quadrature, complex
//! exponential integrals for oscillatory tails, and a derivative-free
//! scalar minimizer.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// 7-point Gauss / 15-point Kronrod nodes on [-1, 1] (positive half).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss-Kronrod panel: returns (integral, error estimate).
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let lo = f(c - h * x);
        let hi = f(c + h * x);
        kronrod += WGK[i] * (lo + hi);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (lo + hi);
        }
    }
    kronrod *= h;
    gauss *= h;
    (kronrod, (kronrod - gauss).abs())
}

/// Tolerances for [`adaptive_quad`]. Convergence requires the summed error
/// estimate to drop below `max(abs_tol, rel_tol * |integral|)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl QuadTol {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        QuadTol { rel_tol, abs_tol, max_panels: 20_000 }
    }
}

/// Globally adaptive Gauss-Kronrod integration over [a, b].
///
/// `breakpoints` seeds the initial partition (values outside (a, b) are
/// ignored); the worst panel is bisected until the error budget is met.
pub fn adaptive_quad(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: QuadTol,
    context: &str,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(CoreError::Numeric(format!(
            "bad integration interval [{a}, {b}] for {context}"
        )));
    }
    let mut edges: Vec<f64> = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|x| *x > a && *x < b));
    edges.push(b);
    edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
    edges.dedup();

    // (neg error, a, b, integral) max-heap on error via sorted insertion
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(edges.len() + 64);
    for w in edges.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        panels.push((e, w[0], w[1], v));
    }
    loop {
        let total: f64 = panels.iter().map(|p| p.3).sum();
        let err: f64 = panels.iter().map(|p| p.0).sum();
        // summed |panel| bounds the achievable absolute accuracy: once the
        // error estimate reaches the rounding floor of the panel sums,
        // further splitting only adds noise (heavily cancelling oscillatory
        // integrands hit this long before the nominal tolerance)
        let magnitude: f64 = panels.iter().map(|p| p.3.abs()).sum();
        let floor = 32.0 * f64::EPSILON * magnitude;
        if err <= tol.abs_tol.max(tol.rel_tol * total.abs()).max(floor) {
            return Ok(total);
        }
        if panels.len() >= tol.max_panels {
            return Err(CoreError::Numeric(format!(
                "quadrature did not converge for {context}: {} panels, error {err:.3e} vs target {:.3e}",
                panels.len(),
                tol.abs_tol.max(tol.rel_tol * total.abs())
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .unwrap();
        let (_, pa, pb, _) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(CoreError::Numeric(format!(
                "quadrature interval underflow near {pa} for {context}"
            )));
        }
        let (v1, e1) = gk15(&mut f, pa, mid);
        let (v2, e2) = gk15(&mut f, mid, pb);
        panels.push((e1, pa, mid, v1));
        panels.push((e2, mid, pb, v2));
    }
}

/// Complex exponential integral E_n(z) for Re z >= 0, z != 0, n >= 1.
///
/// Power series below |z| = 6, modified Lentz continued fraction above.
pub fn expint_en(n: u32, z: Complex64) -> Result<Complex64> {
    if n == 0 {
        return Err(CoreError::Numeric("E_0 not supported".into()));
    }
    if z.norm() == 0.0 {
        return Err(CoreError::Numeric("E_n(0) diverges".into()));
    }
    if z.re < -1e-12 {
        return Err(CoreError::Numeric("E_n requires Re z >= 0".into()));
    }
    let nf = n as f64;
    if z.norm() < 6.0 {
        // series: E_n(z) = (-z)^(n-1)/(n-1)! (psi(n) - ln z) - sum_{m != n-1} (-z)^m / (m! (m-n+1))
        let euler = 0.5772156649015329;
        let mut psi = -euler;
        for k in 1..n {
            psi += 1.0 / k as f64;
        }
        let mut fact_nm1 = 1.0;
        for k in 2..n {
            fact_nm1 *= k as f64;
        }
        let neg_z = -z;
        let lead = neg_z.powu(n - 1) / fact_nm1 * (Complex64::new(psi, 0.0) - z.ln());
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0); // (-z)^m / m!
        let mut m = 0i64;
        loop {
            if m != (n as i64 - 1) {
                sum += pow / (m as f64 - nf + 1.0);
            }
            m += 1;
            pow *= neg_z / m as f64;
            if m > 3 && pow.norm() / (m as f64) < 1e-18 * (sum.norm() + 1.0) {
                break;
            }
            if m > 500 {
                return Err(CoreError::Numeric("E_n series did not converge".into()));
            }
        }
        Ok(lead - sum)
    } else {
        // modified Lentz on E_n(z) = e^{-z} / (z + n/(1 + 1/(z + (n+1)/(1 + 2/(z + ...)))))
        let tiny = 1e-300;
        let mut b = z + Complex64::new(nf, 0.0);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = b.inv();
        let mut h = d;
        for i in 1..=400 {
            let ai = -(i as f64) * (nf - 1.0 + i as f64);
            b += Complex64::new(2.0, 0.0);
            d = (Complex64::new(ai, 0.0) * d + b).inv();
            c = b + Complex64::new(ai, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - Complex64::new(1.0, 0.0)).norm() < 1e-16 {
                return Ok((-z).exp() * h);
            }
        }
        Err(CoreError::Numeric("E_n continued fraction did not converge".into()))
    }
}

/// Brent-style derivative-free minimization of `f` on [a, b].
///
/// Returns (x_min, f(x_min)). `rel_tol` is on the abscissa.
pub fn minimize_scalar(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(f64, f64)> {
    if !(a < b) {
        return Err(CoreError::Numeric(format!("bad bracket [{a}, {b}]")));
    }
    let golden = 0.3819660112501051;
    let (mut lo, mut hi) = (a, b);
    let mut x = lo + golden * (hi - lo);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (lo + hi);
        let tol1 = rel_tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (hi - lo) {
            return Ok((x, fx));
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // parabolic interpolation through x, w, v
            let r = (x - w) * (fx - fv);
            let q0 = (x - v) * (fx - fw);
            let mut p = (x - v) * q0 - (x - w) * r;
            let mut q = 2.0 * (q0 - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if (u - lo) < tol2 || (hi - u) < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { hi - x } else { lo - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d > 0.0 { tol1 } else { -tol1 } };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}
