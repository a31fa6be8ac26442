//! Experiments and analytic reference values.
//!
//! All Monte Carlo work fans out over path ids with rayon and is reduced in
//! path order, so results do not depend on the number of threads.

mod convergence;
mod ensemble;
mod histogram;
mod moments;
mod oracles;
mod stability;

pub use convergence::{
    fit_loglog_slope, strong_error_experiment, ConvergenceReport, ConvergenceSetup, LadderPoint,
};
pub use ensemble::{final_states, map_paths, mean_series, trace_moments, Ensemble, TraceMoments};
pub use histogram::{spectral_histogram, Histogram, DEFAULT_BINS};
pub use moments::{ito_moment_check, ItoMomentReport, MatrixSpec, MomentEstimate};
pub use oracles::{
    cir_mean, gbm1_support, gbm2_moments, ou_oracle, semicircle_density, terminal_oracle, OuOracle,
    TerminalOracle,
};
pub use stability::{
    applicable_bound, linear_perturbation_factor, paired_states, stability_experiment,
    EmpiricalClass, StabilityMode, StabilityReport, StabilitySeries, StabilitySetup,
    TheoreticalClass, FACTOR_FLOOR, MONOTONE_SLACK, STABLE_RATIO, UNSTABLE_RATIO,
};
