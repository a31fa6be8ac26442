//! Closed-form limits for the built-in processes started at the identity.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{Builtin, ModelSpec};

/// Semicircle density of variance `variance`, supported on `[−2σ, 2σ]`.
pub fn semicircle_density(variance: f64, x: f64) -> Result<f64> {
    if variance.is_nan() || variance <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "semicircle variance must be positive, got {variance}"
        )));
    }
    let r2 = 4.0 * variance - x * x;
    Ok(if r2 > 0.0 {
        r2.sqrt() / (2.0 * std::f64::consts::PI * variance)
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuOracle {
    pub variance: f64,
    /// Edge of the semicircle support, `2·sqrt(variance)`.
    pub radius: f64,
}

/// Spectral variance and support radius of the free OU process at time `t`.
pub fn ou_oracle(mu: f64, sigma: f64, t: f64) -> Result<OuOracle> {
    if mu.is_nan() || mu >= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "OU oracle needs mu < 0, got {mu}"
        )));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time must be non-negative, got {t}"
        )));
    }
    let variance = sigma * sigma * (2.0 * mu * t).exp_m1() / (2.0 * mu);
    Ok(OuOracle {
        variance,
        radius: 2.0 * variance.sqrt(),
    })
}

/// Endpoints `(lower, upper)` of the spectral support of free GBM I at `t`.
pub fn gbm1_support(mu: f64, t: f64) -> Result<(f64, f64)> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "support is defined for t > 0, got {t}"
        )));
    }
    let disc = (1.0 + 4.0 / t).sqrt();
    let edge = |r: f64| r / (r + 1.0) * ((mu - 1.0 - r) * t).exp();
    let a = edge((-1.0 - disc) / 2.0);
    let b = edge((-1.0 + disc) / 2.0);
    Ok((a.min(b), a.max(b)))
}

/// Mean and variance of `tr(U_T)` for free GBM II.
pub fn gbm2_moments(mu: f64, t: f64) -> (f64, f64) {
    let mean = (mu * t).exp();
    (mean, 2.0 * (2.0 * mu * t).exp() * (2.0 * t).exp_m1())
}

/// Mean of `tr(U_T)` for the free CIR process.
pub fn cir_mean(alpha: f64, beta: f64, t: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "CIR mean needs beta > 0, got {beta}"
        )));
    }
    Ok((-beta * t).exp() / beta * (beta + alpha * (beta * t).exp_m1()))
}

/// Reference values for a built-in model at time `t`, when its oracle
/// preconditions hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TerminalOracle {
    FreeOu { variance: f64, radius: f64 },
    FreeGbm1 { lower: f64, upper: f64 },
    FreeGbm2 { mean: f64, variance: f64 },
    FreeCir { mean: f64 },
}

pub fn terminal_oracle(model: &ModelSpec, t: f64) -> Option<TerminalOracle> {
    match model.oracle? {
        Builtin::FreeOu { mu, sigma } => {
            ou_oracle(mu, sigma, t)
                .ok()
                .map(|o| TerminalOracle::FreeOu {
                    variance: o.variance,
                    radius: o.radius,
                })
        }
        Builtin::FreeGbm1 { mu } => gbm1_support(mu, t)
            .ok()
            .map(|(lower, upper)| TerminalOracle::FreeGbm1 { lower, upper }),
        Builtin::FreeGbm2 { mu } => {
            let (mean, variance) = gbm2_moments(mu, t);
            Some(TerminalOracle::FreeGbm2 { mean, variance })
        }
        Builtin::FreeCir { alpha, beta, .. } => cir_mean(alpha, beta, t)
            .ok()
            .map(|mean| TerminalOracle::FreeCir { mean }),
    }
}
