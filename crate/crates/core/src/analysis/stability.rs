use serde::{Deserialize, Serialize};

use super::ensemble::map_paths;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::{ModelSpec, ScalarKind};
use crate::noise::PathSpec;
use crate::solver::{stability_bound, SolverConfig, SolverOptions, StabilityBound, Stepper};

/// Terminal mean square at or below this fraction of the initial value is
/// classified stable.
pub const STABLE_RATIO: f64 = 1e-4;
/// Terminal mean square at or above this multiple of the initial value (or
/// any overflow) is classified unstable.
pub const UNSTABLE_RATIO: f64 = 10.0;
/// The per-step factor is only compared while `‖D_n‖₂` stays above this
/// floor; below it the difference of two `O(1)` states is dominated by
/// round-off.
pub const FACTOR_FLOOR: f64 = 1e-3;
/// Absolute slack, relative to the initial value, in the monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Tracks `E‖U_n‖₂²`.
    Norm,
    /// Tracks `E‖U_n − Ũ_n‖₂²` for two initial values on shared noise.
    Perturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalClass {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoreticalClass {
    /// The step size lies below the guaranteed bound.
    Stable,
    NotGuaranteed,
    /// No constants are known for this model and mode.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySetup {
    pub mode: StabilityMode,
    pub dim: usize,
    pub paths: usize,
    pub horizon: f64,
    pub step_sizes: Vec<f64>,
    pub theta: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySeries {
    pub h: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    pub mean_square: Vec<f64>,
    pub empirical: EmpiricalClass,
    pub theoretical: TheoreticalClass,
    /// `mean_square` never increases (up to round-off slack).
    pub monotone: bool,
    pub diverged_paths: usize,
    /// Exact per-step contraction of the difference for linear drift with
    /// additive noise.
    pub analytic_factor: Option<f64>,
    /// Largest `‖D_{n+1} − c·D_n‖₂ / ‖D_n‖₂` over checked steps.
    pub factor_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub model: String,
    pub setup: StabilitySetup,
    pub bound: Option<StabilityBound>,
    pub series: Vec<StabilitySeries>,
}

impl StabilityReport {
    /// No step size guaranteed stable by the bound was observed unstable.
    pub fn consistent_with_bound(&self) -> bool {
        self.series.iter().all(|s| {
            !(s.theoretical == TheoreticalClass::Stable && s.empirical == EmpiricalClass::Unstable)
        })
    }
}

/// `(1 + (1−θ)μh) / (1 − θμh)` when the drift is linear and all diffusion
/// coefficients are constant, so that the noise cancels in differences.
pub fn linear_perturbation_factor(model: &ModelSpec, theta: f64, h: f64) -> Option<f64> {
    let (mu, _) = model.drift.as_affine()?;
    let constant = |f: &crate::models::ScalarFn| matches!(f.kind, ScalarKind::Constant(_));
    if !model
        .diffusion
        .iter()
        .all(|t| constant(&t.beta) && constant(&t.gamma))
    {
        return None;
    }
    Some((1.0 + (1.0 - theta) * mu * h) / (1.0 - theta * mu * h))
}

/// The bound from the model's constants, if they apply to `mode`.
///
/// The constants describe the perturbation system; in norm mode they apply
/// only when `0` is an equilibrium, i.e. drift and diffusion vanish there.
pub fn applicable_bound(
    model: &ModelSpec,
    mode: StabilityMode,
    theta: f64,
) -> Option<StabilityBound> {
    let c = model.stability_constants?;
    if mode == StabilityMode::Norm {
        let zero_diffusion = model
            .diffusion
            .iter()
            .all(|t| t.beta.eval(0.0) * t.gamma.eval(0.0) == 0.0);
        if model.drift.eval(0.0) != 0.0 || !zero_diffusion {
            return None;
        }
    }
    stability_bound(theta, c.l_prime, c.k_hat?, c.k_bar).ok()
}

fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} and step size {h} must be positive"
        )));
    }
    let steps = (horizon / h).round();
    if steps < 1.0 || (steps * h - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidParameter(format!(
            "step size {h} does not divide the horizon {horizon}"
        )));
    }
    Ok(steps as usize)
}

/// Steps one or two states along the same increments, calling
/// `observe(n, U_n, Ũ_n)` for every grid point. Returns the index of the
/// first step that failed numerically, if any.
fn run_shared<I: Iterator<Item = SymMatrix>>(
    stepper: &Stepper<'_>,
    a: &SymMatrix,
    b: Option<&SymMatrix>,
    increments: I,
    mut observe: impl FnMut(usize, &SymMatrix, Option<&SymMatrix>),
) -> Result<Option<usize>> {
    let mut u = a.clone();
    let mut v = b.cloned();
    observe(0, &u, v.as_ref());
    for (n, dw) in increments.enumerate() {
        let next = stepper.step(&u, &dw).and_then(|(nu, _)| match &v {
            Some(v) => stepper.step(v, &dw).map(|(nv, _)| (nu, Some(nv))),
            None => Ok((nu, None)),
        });
        match next {
            Ok((nu, nv)) => {
                u = nu;
                v = nv;
            }
            Err(e) if e.is_numerical() => return Ok(Some(n)),
            Err(e) => return Err(e.at_step(n)),
        }
        observe(n + 1, &u, v.as_ref());
    }
    Ok(None)
}

/// State sequences of two initial values driven by the same noise path.
pub fn paired_states(
    model: &ModelSpec,
    a: &SymMatrix,
    b: &SymMatrix,
    spec: &PathSpec,
    cfg: &SolverConfig,
) -> Result<(Vec<SymMatrix>, Vec<SymMatrix>)> {
    crate::solver::check_grid(spec.step_size(), spec.steps(), cfg)?;
    let stepper = Stepper::new(model, cfg)?;
    let (mut us, mut vs) = (vec![], vec![]);
    if let Some(n) = run_shared(&stepper, a, Some(b), spec.increments(), |_, u, v| {
        us.push(u.clone());
        vs.push(v.expect("paired").clone());
    })? {
        return Err(Error::InvalidParameter(format!(
            "paired run diverged at step {n}"
        )));
    }
    Ok((us, vs))
}

struct PathRun {
    series: Vec<f64>,
    factor_error: Option<f64>,
    diverged: bool,
}

pub fn stability_experiment(
    model: &ModelSpec,
    initial: &SymMatrix,
    perturbed: Option<&SymMatrix>,
    setup: &StabilitySetup,
) -> Result<StabilityReport> {
    let perturbed = match (setup.mode, perturbed) {
        (StabilityMode::Perturbation, None) => {
            return Err(Error::InvalidParameter(
                "perturbation mode needs two initial values".into(),
            ))
        }
        (StabilityMode::Perturbation, p) => p,
        (StabilityMode::Norm, _) => None,
    };
    for m in std::iter::once(initial).chain(perturbed) {
        if m.dim() != setup.dim {
            return Err(Error::DimensionMismatch {
                expected: setup.dim,
                actual: m.dim(),
            });
        }
    }
    if setup.paths == 0 || setup.step_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "stability needs at least one path and one step size".into(),
        ));
    }
    let grids = setup
        .step_sizes
        .iter()
        .map(|&h| steps_for(setup.horizon, h).map(|steps| (h, steps)))
        .collect::<Result<Vec<_>>>()?;
    let bound = applicable_bound(model, setup.mode, setup.theta);

    let mut series = Vec::with_capacity(grids.len());
    for (h, steps) in grids {
        let cfg = SolverConfig::with_options(setup.theta, h, steps, &setup.solver);
        let stepper = Stepper::new(model, &cfg)?;
        let factor = match setup.mode {
            StabilityMode::Perturbation => linear_perturbation_factor(model, setup.theta, h),
            StabilityMode::Norm => None,
        };
        let runs = map_paths(setup.paths, |p| {
            let spec = PathSpec::new(setup.dim, steps, h, setup.seed, p)?;
            let mut values = Vec::with_capacity(steps + 1);
            let mut prev: Option<SymMatrix> = None;
            let mut factor_error: Option<f64> = None;
            let diverged = run_shared(
                &stepper,
                initial,
                perturbed,
                spec.increments(),
                |_, u, v| {
                    let d = match v {
                        Some(v) => u - v,
                        None => u.clone(),
                    };
                    values.push(d.l2_norm().powi(2));
                    if let (Some(c), Some(prev)) = (factor, &prev) {
                        let base = prev.l2_norm();
                        if base >= FACTOR_FLOOR {
                            let err = (&d - &prev.scale(c)).l2_norm() / base;
                            factor_error = Some(factor_error.map_or(err, |e| e.max(err)));
                        }
                    }
                    if factor.is_some() {
                        prev = Some(d);
                    }
                },
            )?
            .is_some();
            values.resize(steps + 1, f64::INFINITY);
            Ok(PathRun {
                series: values,
                factor_error,
                diverged,
            })
        })?;

        let mut mean_square = vec![0.0; steps + 1];
        for run in &runs {
            for (acc, v) in mean_square.iter_mut().zip(&run.series) {
                *acc += v;
            }
        }
        for v in &mut mean_square {
            *v /= setup.paths as f64;
        }
        let first = mean_square[0];
        let last = mean_square[steps];
        let empirical = if !last.is_finite() || last >= UNSTABLE_RATIO * first {
            EmpiricalClass::Unstable
        } else if last <= STABLE_RATIO * first {
            EmpiricalClass::Stable
        } else {
            EmpiricalClass::Inconclusive
        };
        let theoretical = match &bound {
            Some(b) if b.guarantees(h) => TheoreticalClass::Stable,
            Some(_) => TheoreticalClass::NotGuaranteed,
            None => TheoreticalClass::Unavailable,
        };
        let slack = MONOTONE_SLACK * first;
        let monotone = mean_square.windows(2).all(|w| w[1] <= w[0] + slack);
        let factor_error = runs.iter().filter_map(|r| r.factor_error).reduce(f64::max);
        series.push(StabilitySeries {
            h,
            steps,
            times: (0..=steps).map(|n| n as f64 * h).collect(),
            mean_square,
            empirical,
            theoretical,
            monotone,
            diverged_paths: runs.iter().filter(|r| r.diverged).count(),
            analytic_factor: factor,
            factor_error,
        });
    }
    Ok(StabilityReport {
        model: model.name.clone(),
        setup: setup.clone(),
        bound,
        series,
    })
}
