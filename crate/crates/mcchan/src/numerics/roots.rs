//! Bracketed root refinement (Brent) and the transcendental eigenvalue
//! problem of the vesicle release series.

use crate::error::{McError, Result};

/// Ordered positive roots of the membrane-fusion eigenvalue condition
/// -D_v lambda j0'(lambda r_T) = k_f j0(lambda r_T), with the residual of
/// each root in that original form.
#[derive(Debug, Clone)]
pub struct EigenvalueSet {
    /// Roots lambda_n in 1/um, strictly increasing.
    pub roots: Vec<f64>,
    /// |LHS - RHS| of the defining equation at each root.
    pub residuals: Vec<f64>,
    pub truncation: usize,
}

/// Brent's method on a bracketing interval. `fa` and `fb` must have opposite
/// signs.
pub fn brent<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa * fb > 0.0 {
        return Err(McError::Solver {
            index: 0,
            message: format!("no sign change on [{a}, {b}]"),
        });
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() <= tol {
            return Ok(b);
        }
        let mut s;
        if fa != fc && fb != fc {
            // inverse quadratic interpolation
            s = a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb));
        } else {
            // secant
            s = b - fb * (b - a) / (fb - fa);
        }
        let lo = (3.0 * a + b) / 4.0;
        let cond = !((lo.min(b) < s && s < lo.max(b))
            && (!bisected || (s - b).abs() < 0.5 * d.abs())
            && d.abs() > tol);
        if cond {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = b - c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

fn j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn j0_prime(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        -x / 3.0
    } else {
        x.cos() / x - x.sin() / (x * x)
    }
}

/// Solve -D_v lambda j0'(lambda r_T) = k_f j0(lambda r_T) for the first
/// `n_max` positive roots.
///
/// In x = lambda r_T the condition reads (D_v - k_f r_T) sin x = D_v x cos x,
/// which has exactly one root per interval ((n-1) pi, n pi); the bracket
/// endpoints have alternating signs, so no root can be missed.
pub fn solve_eigenvalues(r_t: f64, d_v: f64, k_f: f64, n_max: usize, tol: f64) -> Result<EigenvalueSet> {
    if r_t <= 0.0 || d_v <= 0.0 || k_f < 0.0 {
        return Err(McError::Domain(
            "eigenvalue parameters must be positive".into(),
        ));
    }
    let g = |x: f64| (d_v - k_f * r_t) * x.sin() - d_v * x * x.cos();
    let mut roots = Vec::with_capacity(n_max);
    let mut residuals = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let lo = (n as f64 - 1.0) * std::f64::consts::PI + 1e-9;
        let hi = n as f64 * std::f64::consts::PI - 1e-9;
        if g(lo) * g(hi) > 0.0 {
            return Err(McError::Solver {
                index: n,
                message: format!("bracket ({lo:.6}, {hi:.6}) has no sign change"),
            });
        }
        let x = brent(g, lo, hi, 1e-15 * hi, 200).map_err(|_| McError::Solver {
            index: n,
            message: "refinement failed".into(),
        })?;
        let lambda = x / r_t;
        let residual = (-d_v * lambda * j0_prime(x) - k_f * j0(x)).abs();
        if residual > tol {
            return Err(McError::Solver {
                index: n,
                message: format!("residual {residual:e} above tolerance {tol:e}"),
            });
        }
        roots.push(lambda);
        residuals.push(residual);
    }
    Ok(EigenvalueSet {
        roots,
        residuals,
        truncation: n_max,
    })
}
