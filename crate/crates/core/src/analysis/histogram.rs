use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

pub const DEFAULT_BINS: usize = 50;

/// Equal-width histogram with a probability density per bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// Bins `values` over `[min, max]`; a degenerate range is widened by ±0.5.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter(
                "histogram needs at least one bin".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                value: *v,
                reason: "histogram input must be finite".into(),
            });
        }
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if values.is_empty() {
            (lo, hi) = (0.0, 1.0);
        } else if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()) {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let width = (hi - lo) / bins as f64;
        let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
        bin_edges.push(hi);

        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let total = values.len() as f64;
        let density = counts
            .iter()
            .zip(bin_edges.windows(2))
            .map(|(&c, e)| {
                if total > 0.0 {
                    c as f64 / (total * (e[1] - e[0]))
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            bin_edges,
            counts,
            density,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges
            .windows(2)
            .map(|e| 0.5 * (e[0] + e[1]))
            .collect()
    }

    /// `Σ density·width`; 1 for a non-empty histogram.
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

/// Histogram of the eigenvalues of `u`.
pub fn spectral_histogram(u: &SymMatrix, bins: usize) -> Result<Histogram> {
    Histogram::from_values(&u.eigenvalues()?, bins)
}
