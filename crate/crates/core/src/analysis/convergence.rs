use serde::Serialize;

use super::ensemble::map_paths;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::ModelSpec;
use crate::noise::PathSpec;
use crate::solver::{integrate, SolverConfig, SolverOptions};

/// Ordinary least squares on `(log h, log e)`; returns `(slope, intercept)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "a log-log fit needs at least two points".into(),
        ));
    }
    if let Some(&(h, e)) = points.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs positive values, got ({h}, {e})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "log-log fit needs distinct step sizes".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSetup {
    pub dim: usize,
    pub paths: usize,
    /// Number of fine steps `P`.
    pub steps: usize,
    pub h_fine: f64,
    pub ratios: Vec<usize>,
    pub theta: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderPoint {
    pub ratio: usize,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub setup: ConvergenceSetup,
    /// Sorted by `h` ascending.
    pub ladder: Vec<LadderPoint>,
    /// Fit over the points with positive error; absent with fewer than two.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Root-mean-square terminal error of each coarse level against the finest
/// grid, all levels driven by the same Brownian path.
pub fn strong_error_experiment(
    model: &ModelSpec,
    initial: &SymMatrix,
    setup: &ConvergenceSetup,
) -> Result<ConvergenceReport> {
    if setup.ratios.is_empty() {
        return Err(Error::InvalidParameter("ratio list is empty".into()));
    }
    if setup.paths == 0 {
        return Err(Error::InvalidParameter(
            "convergence needs at least one path".into(),
        ));
    }
    if initial.dim() != setup.dim {
        return Err(Error::DimensionMismatch {
            expected: setup.dim,
            actual: initial.dim(),
        });
    }
    let mut ratios = setup.ratios.clone();
    ratios.sort_unstable();
    ratios.dedup();
    let base = PathSpec::new(setup.dim, setup.steps, setup.h_fine, setup.seed, 0)?;
    let mut levels = vec![(
        1,
        SolverConfig::with_options(setup.theta, setup.h_fine, setup.steps, &setup.solver),
    )];
    for &r in &ratios {
        let coarse = base.coarsened(r)?;
        levels.push((
            r,
            SolverConfig::with_options(
                setup.theta,
                coarse.step_size(),
                coarse.steps(),
                &setup.solver,
            ),
        ));
    }
    for (_, cfg) in &levels {
        cfg.resolve(model)?;
    }

    let tasks = levels.len();
    let finals = map_paths(setup.paths * tasks, |task| {
        let (path, level) = (task / tasks as u64, task as usize % tasks);
        let (ratio, cfg) = &levels[level];
        let spec = PathSpec {
            path_id: path,
            ..base
        }
        .coarsened(*ratio)?;
        integrate(model, initial, spec.increments(), cfg, |_, _, _| {}).map(|(u, _)| u)
    })?;

    let ladder = ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let sum: f64 = finals
                .chunks(tasks)
                .map(|states| (&states[0] - &states[i + 1]).l2_norm().powi(2))
                .sum();
            LadderPoint {
                ratio,
                h: levels[i + 1].1.h,
                error: (sum / setup.paths as f64).sqrt(),
            }
        })
        .collect::<Vec<_>>();

    let positive: Vec<(f64, f64)> = ladder
        .iter()
        .filter(|p| p.error > 0.0)
        .map(|p| (p.h, p.error))
        .collect();
    let fit = if positive.len() >= 2 {
        Some(fit_loglog_slope(&positive)?)
    } else {
        None
    };
    Ok(ConvergenceReport {
        model: model.name.clone(),
        setup: setup.clone(),
        ladder,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
    })
}
