//! Mean-square stability bound for the theta scheme.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest admissible step size and the guaranteed decay rate.
///
/// For `θ < 1`, `h_max = (2L′−K̂)/((1−θ)²K̄)` and
/// `C(h) = (2L′−K̂−(1−θ)²K̄h)/(1+2L′θh)`. For `θ = 1`, `h_max = ∞` and
/// `C(h) = (2L′−K̂)/(1+2L′h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityBound {
    pub theta: f64,
    pub l_prime: f64,
    pub k_hat: f64,
    pub k_bar: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub h_max: f64,
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

impl StabilityBound {
    pub fn decay_rate(&self, h: f64) -> f64 {
        let gap = 2.0 * self.l_prime - self.k_hat;
        if self.theta == 1.0 {
            gap / (1.0 + 2.0 * self.l_prime * h)
        } else {
            let q = 1.0 - self.theta;
            (gap - q * q * self.k_bar * h) / (1.0 + 2.0 * self.l_prime * self.theta * h)
        }
    }

    /// Whether the bound guarantees exponential mean-square stability at `h`.
    pub fn guarantees(&self, h: f64) -> bool {
        h > 0.0 && h < self.h_max
    }

    /// Decay rate of the continuous-time equation, the `h → 0` limit.
    pub fn continuous_rate(&self) -> f64 {
        2.0 * self.l_prime - self.k_hat
    }
}

pub fn stability_bound(theta: f64, l_prime: f64, k_hat: f64, k_bar: f64) -> Result<StabilityBound> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    if ![l_prime, k_hat, k_bar].iter().all(|v| v.is_finite()) || k_hat < 0.0 || k_bar < 0.0 {
        return Err(Error::InvalidParameter(
            "stability constants must be finite with K̂, K̄ ≥ 0".into(),
        ));
    }
    let gap = 2.0 * l_prime - k_hat;
    if gap <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no stability bound: 2L′ − K̂ = {gap} is not positive"
        )));
    }
    let h_max = if theta == 1.0 {
        f64::INFINITY
    } else {
        let q = 1.0 - theta;
        if k_bar == 0.0 {
            f64::INFINITY
        } else {
            gap / (q * q * k_bar)
        }
    };
    Ok(StabilityBound {
        theta,
        l_prime,
        k_hat,
        k_bar,
        h_max,
    })
}
