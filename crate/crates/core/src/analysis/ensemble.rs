use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::models::ModelSpec;
use crate::noise::PathSpec;
use crate::solver::{integrate, SolverConfig, SolverOptions};

/// Monte Carlo ensemble on a uniform grid; path `p` draws from stream `p`
/// of `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ensemble {
    pub dim: usize,
    pub paths: usize,
    pub steps: usize,
    pub h: f64,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(dim: usize, paths: usize, steps: usize, h: f64, seed: u64) -> Result<Self> {
        if paths == 0 {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one path".into(),
            ));
        }
        PathSpec::new(dim, steps, h, seed, 0)?;
        Ok(Self {
            dim,
            paths,
            steps,
            h,
            seed,
        })
    }

    pub fn path_spec(&self, path_id: u64) -> PathSpec {
        PathSpec::new(self.dim, self.steps, self.h, self.seed, path_id)
            .expect("validated on construction")
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.h
    }

    pub fn solver_config(&self, theta: f64, options: &SolverOptions) -> SolverConfig {
        SolverConfig::with_options(theta, self.h, self.steps, options)
    }

    fn check_initial(&self, initial: &SymMatrix) -> Result<()> {
        if initial.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: initial.dim(),
            });
        }
        Ok(())
    }
}

/// Runs `task` for every path id in parallel and returns the results in
/// path order; the reported error is the one of the lowest failing path.
pub fn map_paths<T: Send>(paths: usize, task: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..paths as u64).into_par_iter().map(&task).collect();
    results.into_iter().collect()
}

/// Terminal states of every path, in path order.
pub fn final_states(
    model: &ModelSpec,
    initial: &SymMatrix,
    ensemble: &Ensemble,
    theta: f64,
    options: &SolverOptions,
) -> Result<Vec<SymMatrix>> {
    ensemble.check_initial(initial)?;
    let cfg = ensemble.solver_config(theta, options);
    cfg.resolve(model)?;
    map_paths(ensemble.paths, |p| {
        let spec = ensemble.path_spec(p);
        integrate(model, initial, spec.increments(), &cfg, |_, _, _| {}).map(|(u, _)| u)
    })
}

/// Ensemble means of `observables(U_n)` at every grid point.
pub fn mean_series(
    model: &ModelSpec,
    initial: &SymMatrix,
    ensemble: &Ensemble,
    theta: f64,
    options: &SolverOptions,
    observables: &(dyn Fn(&SymMatrix) -> Vec<f64> + Sync),
) -> Result<Vec<Vec<f64>>> {
    ensemble.check_initial(initial)?;
    let cfg = ensemble.solver_config(theta, options);
    cfg.resolve(model)?;
    let per_path = map_paths(ensemble.paths, |p| {
        let spec = ensemble.path_spec(p);
        let mut series = Vec::with_capacity(ensemble.steps + 1);
        integrate(model, initial, spec.increments(), &cfg, |_, u, _| {
            series.push(observables(u))
        })?;
        Ok(series)
    })?;
    let m = ensemble.paths as f64;
    let mut means = per_path[0].clone();
    for series in &per_path[1..] {
        for (acc, obs) in means.iter_mut().zip(series) {
            for (a, o) in acc.iter_mut().zip(obs) {
                *a += o;
            }
        }
    }
    for row in &mut means {
        for a in row.iter_mut() {
            *a /= m;
        }
    }
    Ok(means)
}

/// Normalized-trace statistics of an ensemble of states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceMoments {
    /// Mean of `tr(U)`.
    pub mean: f64,
    /// Mean of `tr(U²) − tr(U)²`, the variance of the spectral distribution.
    pub spectral_variance: f64,
    /// Mean of `tr(U²)`.
    pub second_moment: f64,
    /// Standard error of the mean of `tr(U)` across paths.
    pub mean_std_error: f64,
}

pub fn trace_moments(states: &[SymMatrix]) -> TraceMoments {
    let m = states.len() as f64;
    let traces: Vec<f64> = states.iter().map(SymMatrix::normalized_trace).collect();
    let squares: Vec<f64> = states
        .iter()
        .map(|u| u.as_matrix().norm_squared() / u.dim() as f64)
        .collect();
    let mean = traces.iter().sum::<f64>() / m;
    let second_moment = squares.iter().sum::<f64>() / m;
    let spectral_variance = traces
        .iter()
        .zip(&squares)
        .map(|(t, s)| s - t * t)
        .sum::<f64>()
        / m;
    let mean_std_error = if states.len() > 1 {
        (traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    TraceMoments {
        mean,
        spectral_variance,
        second_moment,
        mean_std_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_paths_keeps_order_and_first_error() {
        let out = map_paths(50, |p| Ok(p * 2)).unwrap();
        assert_eq!(out, (0..50).map(|p| p * 2).collect::<Vec<_>>());
        let err = map_paths(50, |p| {
            if p % 7 == 3 {
                Err(Error::InvalidParameter(format!("{p}")))
            } else {
                Ok(p)
            }
        });
        assert_eq!(err.unwrap_err(), Error::InvalidParameter("3".into()));
    }

    #[test]
    fn trace_moments_of_known_states() {
        let states = [
            SymMatrix::from_diagonal(&[1.0, 3.0]),
            SymMatrix::from_diagonal(&[0.0, 0.0]),
        ];
        let t = trace_moments(&states);
        assert_eq!(t.mean, 1.0);
        assert_eq!(t.second_moment, 2.5);
        assert_eq!(t.spectral_variance, 0.5);
        assert!((t.mean_std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_ensemble_is_deterministic_recursion() {
        let model = ModelSpec::free_ou(-1.0, 0.0);
        let ens = Ensemble::new(3, 4, 10, 0.1, 7).unwrap();
        let finals = final_states(
            &model,
            &SymMatrix::identity(3),
            &ens,
            0.0,
            &SolverOptions::default(),
        )
        .unwrap();
        for u in finals {
            assert!((&u - &SymMatrix::scaled_identity(3, 0.9f64.powi(10))).max_abs() < 1e-15);
        }
        let series = mean_series(
            &model,
            &SymMatrix::identity(3),
            &ens,
            0.0,
            &SolverOptions::default(),
            &|u| vec![u.normalized_trace()],
        )
        .unwrap();
        assert_eq!(series.len(), 11);
        assert!((series[10][0] - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let ens = Ensemble::new(3, 2, 4, 0.1, 1).unwrap();
        let model = ModelSpec::free_ou(-1.0, 1.0);
        assert!(final_states(
            &model,
            &SymMatrix::identity(2),
            &ens,
            1.0,
            &SolverOptions::default()
        )
        .is_err());
        assert!(Ensemble::new(3, 0, 4, 0.1, 1).is_err());
    }
}
