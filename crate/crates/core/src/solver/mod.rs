//! The free stochastic theta method
//!
//! ```text
//! U_{n+1} = U_n + (1−θ)·h·α(U_n) + θ·h·α(U_{n+1}) + Σᵢ βⁱ(U_n)·ΔW_n·γⁱ(U_n)
//! ```
//!
//! `θ = 0` is the explicit free Euler–Maruyama scheme and `θ = 1` the free
//! backward Euler scheme. For `θ > 0` each step solves
//! `Y − θh·α(Y) = X` with one of the strategies in [`Strategy`].

mod implicit;
mod stability;

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

pub use implicit::{fixed_point_solve, implicit_solve_spectral, solve_scalar, ImplicitSolution};
pub use stability::{stability_bound, StabilityBound};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::{diffusion_with, Lifter, ModelSpec};
use crate::noise::NoisePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Closed form when the model has one, spectral Newton otherwise.
    #[default]
    Auto,
    ClosedForm,
    SpectralNewton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub theta: f64,
    pub h: f64,
    pub steps: usize,
    pub strategy: Strategy,
    pub newton_tol: f64,
    pub fp_tol: f64,
    pub max_iter: usize,
}

/// Strategy and tolerances, independent of the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub strategy: Strategy,
    pub newton_tol: f64,
    pub fp_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            newton_tol: 1e-12,
            fp_tol: 1e-12,
            max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn new(theta: f64, h: f64, steps: usize) -> Self {
        Self::with_options(theta, h, steps, &SolverOptions::default())
    }

    pub fn with_options(theta: f64, h: f64, steps: usize, options: &SolverOptions) -> Self {
        Self {
            theta,
            h,
            steps,
            strategy: options.strategy,
            newton_tol: options.newton_tol,
            fp_tol: options.fp_tol,
            max_iter: options.max_iter,
        }
    }

    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            strategy: self.strategy,
            newton_tol: self.newton_tol,
            fp_tol: self.fp_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Checks the configuration against `model` and resolves `Auto`.
    pub fn resolve(&self, model: &ModelSpec) -> Result<Strategy> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size h must be positive, got {}",
                self.h
            )));
        }
        if !(self.newton_tol > 0.0 && self.fp_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        let th = self.theta * self.h;
        let contraction = model.drift_lipschitz().map(|l| th * l);
        let strategy = match self.strategy {
            Strategy::Auto if model.implicit_closed_form.is_some() => Strategy::ClosedForm,
            Strategy::Auto => Strategy::SpectralNewton,
            s => s,
        };
        match strategy {
            Strategy::ClosedForm => {
                let cf = model.implicit_closed_form.as_ref().ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "model '{}' has no closed-form implicit solve",
                        model.name
                    ))
                })?;
                if th > 0.0 {
                    cf.check(self.theta, self.h)?;
                }
            }
            Strategy::FixedPoint => match contraction {
                Some(q) if q < 1.0 => {}
                Some(q) => {
                    return Err(Error::InvalidParameter(format!(
                        "fixed-point solve needs theta*h*L0 < 1, got {q}"
                    )))
                }
                None if th == 0.0 => {}
                None => {
                    return Err(Error::InvalidParameter(
                        "fixed-point solve needs a Lipschitz bound on the drift".into(),
                    ))
                }
            },
            Strategy::SpectralNewton => {
                if let Some(q) = contraction {
                    if q >= 1.0 {
                        return Err(Error::InvalidParameter(format!(
                            "spectral Newton solve needs theta*h*L0 < 1, got {q}"
                        )));
                    }
                }
            }
            Strategy::Auto => unreachable!(),
        }
        Ok(strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub clamped: usize,
}

/// A model bound to a validated configuration.
#[derive(Debug, Clone, Copy)]
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    cfg: SolverConfig,
    strategy: Strategy,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ModelSpec, cfg: &SolverConfig) -> Result<Self> {
        let strategy = cfg.resolve(model)?;
        Ok(Self {
            model,
            cfg: *cfg,
            strategy,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// The explicit part `X = U + (1−θ)h·α(U) + Σ βⁱ(U)·dW·γⁱ(U)`.
    pub fn explicit_part(&self, u: &SymMatrix, dw: &SymMatrix) -> Result<(SymMatrix, usize)> {
        let (theta, h) = (self.cfg.theta, self.cfg.h);
        let mut lifter = Lifter::new(u, self.model.clamp_tol);
        let drift = lifter.lift(&self.model.drift)?.to_matrix(u.dim());
        let diffusion = SymMatrix::symmetrize(&diffusion_with(self.model, &mut lifter, dw)?);
        let x = &(u + &drift.scale((1.0 - theta) * h)) + &diffusion;
        Ok((x, lifter.clamped()))
    }

    pub fn step(&self, u: &SymMatrix, dw: &SymMatrix) -> Result<(SymMatrix, StepDiagnostics)> {
        let (theta, h) = (self.cfg.theta, self.cfg.h);
        let (x, clamped) = self.explicit_part(u, dw)?;
        if theta == 0.0 {
            return finite(x).map(|x| {
                (
                    x,
                    StepDiagnostics {
                        iterations: 0,
                        residual: 0.0,
                        clamped,
                    },
                )
            });
        }
        let sol = match self.strategy {
            Strategy::ClosedForm => {
                let cf = self.model.implicit_closed_form.as_ref().expect("resolved");
                let value = cf.apply(theta, h, &x)?;
                let residual = implicit_residual(self.model, &value, &x, theta * h)?;
                ImplicitSolution {
                    value,
                    iterations: 1,
                    residual,
                }
            }
            Strategy::SpectralNewton => implicit_solve_spectral(
                self.model,
                &x,
                theta,
                h,
                self.cfg.newton_tol,
                self.cfg.max_iter,
            )?,
            Strategy::FixedPoint => fixed_point_solve(
                self.model,
                u,
                &x,
                theta,
                h,
                self.cfg.fp_tol,
                self.cfg.max_iter,
            )?,
            Strategy::Auto => unreachable!(),
        };
        finite(sol.value).map(|value| {
            (
                value,
                StepDiagnostics {
                    iterations: sol.iterations,
                    residual: sol.residual,
                    clamped,
                },
            )
        })
    }
}

fn finite(u: SymMatrix) -> Result<SymMatrix> {
    if u.as_matrix().iter().all(|v| v.is_finite()) {
        Ok(u)
    } else {
        Err(Error::NonFinite {
            max_abs: u.max_abs(),
        })
    }
}

/// `‖Y − θh·α(Y) − X‖₂`.
pub fn implicit_residual(model: &ModelSpec, y: &SymMatrix, x: &SymMatrix, th: f64) -> Result<f64> {
    let drift = crate::models::drift_eval(model, y)?;
    Ok((&(y - &drift.scale(th)) - x).l2_norm())
}

/// One step of the free stochastic theta method.
pub fn stm_step(
    model: &ModelSpec,
    u: &SymMatrix,
    dw: &SymMatrix,
    cfg: &SolverConfig,
) -> Result<(SymMatrix, StepDiagnostics)> {
    Stepper::new(model, cfg)?.step(u, dw)
}

/// Aggregate diagnostics over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub total_clamped: usize,
    pub max_clamped: usize,
}

impl RunSummary {
    fn record(&mut self, d: &StepDiagnostics) {
        self.steps += 1;
        self.max_iterations = self.max_iterations.max(d.iterations);
        self.max_residual = self.max_residual.max(d.residual);
        self.total_clamped += d.clamped;
        self.max_clamped = self.max_clamped.max(d.clamped);
    }
}

/// Runs the scheme over `increments`, calling `observe(n, U_n)` for every
/// state including the initial one. Only the final state is kept.
pub fn integrate<I>(
    model: &ModelSpec,
    initial: &SymMatrix,
    increments: I,
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &SymMatrix, Option<&StepDiagnostics>),
) -> Result<(SymMatrix, RunSummary)>
where
    I: IntoIterator,
    I::Item: Borrow<SymMatrix>,
{
    let stepper = Stepper::new(model, cfg)?;
    let mut u = initial.clone();
    let mut summary = RunSummary::default();
    observe(0, &u, None);
    for (n, dw) in increments.into_iter().enumerate() {
        if n >= cfg.steps {
            return Err(Error::InvalidParameter(format!(
                "noise path has more increments than the configured {} steps",
                cfg.steps
            )));
        }
        let dw = dw.borrow();
        if dw.dim() != u.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                actual: dw.dim(),
            });
        }
        let (next, diag) = stepper.step(&u, dw).map_err(|e| e.at_step(n))?;
        summary.record(&diag);
        u = next;
        observe(n + 1, &u, Some(&diag));
    }
    if summary.steps != cfg.steps {
        return Err(Error::InvalidParameter(format!(
            "noise path has {} increments but {} steps are configured",
            summary.steps, cfg.steps
        )));
    }
    Ok((u, summary))
}

/// Full state history of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SymMatrix>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub summary: RunSummary,
}

impl Trajectory {
    pub fn final_state(&self) -> &SymMatrix {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Simulates along any increment sequence, keeping every state.
pub fn simulate_increments<I>(
    model: &ModelSpec,
    initial: &SymMatrix,
    increments: I,
    cfg: &SolverConfig,
) -> Result<Trajectory>
where
    I: IntoIterator,
    I::Item: Borrow<SymMatrix>,
{
    let mut times = Vec::with_capacity(cfg.steps + 1);
    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut diagnostics = Vec::with_capacity(cfg.steps);
    let (_, summary) = integrate(model, initial, increments, cfg, |n, u, d| {
        times.push(n as f64 * cfg.h);
        states.push(u.clone());
        if let Some(d) = d {
            diagnostics.push(*d);
        }
    })?;
    Ok(Trajectory {
        times,
        states,
        diagnostics,
        summary,
    })
}

/// Simulates along a materialized noise path; its grid must match `cfg`.
pub fn simulate(
    model: &ModelSpec,
    initial: &SymMatrix,
    path: &NoisePath,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_grid(path.step_size(), path.steps(), cfg)?;
    simulate_increments(model, initial, path.increments(), cfg)
}

pub(crate) fn check_grid(step_size: f64, steps: usize, cfg: &SolverConfig) -> Result<()> {
    if (step_size - cfg.h).abs() > 1e-12 * cfg.h.abs() {
        return Err(Error::InvalidParameter(format!(
            "noise step size {step_size} differs from solver step size {}",
            cfg.h
        )));
    }
    if steps != cfg.steps {
        return Err(Error::InvalidParameter(format!(
            "noise path has {steps} steps but the solver expects {}",
            cfg.steps
        )));
    }
    Ok(())
}
