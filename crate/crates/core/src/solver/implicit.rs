//! Solvers for the implicit relation `Y − θh·α(Y) = X`.

use crate::error::{Error, Result};
use crate::linalg::{eigh, SymMatrix};
use crate::models::{drift_eval, ModelSpec, ScalarFn};

/// Result of an implicit solve.
#[derive(Debug, Clone)]
pub struct ImplicitSolution {
    pub value: SymMatrix,
    pub iterations: usize,
    /// `‖Y − θh·α(Y) − X‖₂`
    pub residual: f64,
}

const MAX_BRACKET_EXPANSIONS: usize = 200;

/// Solves `y − th·α(y) = x` for a single real `x` by safeguarded Newton.
///
/// `y ↦ y − th·α(y)` must be increasing. The root is bracketed starting from
/// `[x, x ± th·|α(x)|]` with doubling, and Newton steps that leave the
/// bracket (or meet a non-positive slope) fall back to bisection.
pub fn solve_scalar(
    alpha: &ScalarFn,
    th: f64,
    x: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    if th == 0.0 {
        return Ok((x, 0));
    }
    let g = |y: f64| y - th * alpha.eval(y) - x;

    let gx = g(x);
    if gx == 0.0 {
        return Ok((x, 0));
    }
    // g is increasing: g(x) < 0 puts the root to the right of x.
    let dir = if gx < 0.0 { 1.0 } else { -1.0 };
    let mut width = (th * alpha.eval(x))
        .abs()
        .max(tol)
        .max(f64::EPSILON * x.abs());
    let mut far = x + dir * width;
    let mut gfar = g(far);
    let mut expansions = 0;
    while gfar.is_finite() && gfar.signum() == gx.signum() && gfar != 0.0 {
        expansions += 1;
        if expansions > MAX_BRACKET_EXPANSIONS {
            return Err(Error::Bracket { x, expansions });
        }
        width *= 2.0;
        far = x + dir * width;
        gfar = g(far);
    }
    if !gfar.is_finite() {
        return Err(Error::Bracket { x, expansions });
    }
    if gfar == 0.0 {
        return Ok((far, 0));
    }
    let (mut lo, mut hi) = if dir > 0.0 { (x, far) } else { (far, x) };

    let mut y = x;
    let mut gy = gx;
    for iter in 1..=max_iter {
        let slope = 1.0 - th * alpha.eval_derivative(y);
        let newton = y - gy / slope;
        let next = if slope > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - y).abs();
        y = next;
        gy = g(y);
        if gy.abs() <= tol || gy == 0.0 {
            return Ok((y, iter));
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        // no further progress possible in double precision
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        if hi - lo <= 4.0 * f64::EPSILON * scale || step <= 2.0 * f64::EPSILON * y.abs() {
            return Ok((y, iter));
        }
    }
    Err(Error::ImplicitSolve {
        iterations: max_iter,
        last_change: gy.abs(),
    })
}

/// Solves `Y − θh·α(Y) = X` eigenvalue by eigenvalue.
///
/// `iterations` is the largest Newton count over the spectrum.
pub fn implicit_solve_spectral(
    model: &ModelSpec,
    x: &SymMatrix,
    theta: f64,
    h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ImplicitSolution> {
    let th = theta * h;
    if th == 0.0 {
        return Ok(ImplicitSolution {
            value: x.clone(),
            iterations: 0,
            residual: 0.0,
        });
    }
    let spec = eigh(x)?;
    let mut roots = Vec::with_capacity(spec.dim());
    let mut iterations = 0;
    for &lambda in &spec.eigenvalues {
        let (y, it) = solve_scalar(&model.drift, th, lambda, tol, max_iter)?;
        roots.push(y);
        iterations = iterations.max(it);
    }
    let value = spec.reassemble(&roots);
    let image: Vec<f64> = roots
        .iter()
        .map(|&y| y - th * model.drift.eval(y))
        .collect();
    let residual = (&spec.reassemble(&image) - x).l2_norm();
    Ok(ImplicitSolution {
        value,
        iterations,
        residual,
    })
}

/// Picard iteration `V ← X + θh·α(V)` started at `start`.
///
/// Contracts with ratio `θh·L₀` when `θh·L₀ < 1`; stops once successive
/// iterates differ by at most `tol` in the `L²` norm.
pub fn fixed_point_solve(
    model: &ModelSpec,
    start: &SymMatrix,
    x: &SymMatrix,
    theta: f64,
    h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ImplicitSolution> {
    let th = theta * h;
    if th == 0.0 {
        return Ok(ImplicitSolution {
            value: x.clone(),
            iterations: 1,
            residual: 0.0,
        });
    }
    let mut v = start.clone();
    let mut change = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = x + &drift_eval(model, &v)?.scale(th);
        change = (&next - &v).l2_norm();
        v = next;
        if change <= tol {
            let residual = (&(&v - &drift_eval(model, &v)?.scale(th)) - x).l2_norm();
            return Ok(ImplicitSolution {
                value: v,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::ImplicitSolve {
        iterations: max_iter,
        last_change: change,
    })
}
