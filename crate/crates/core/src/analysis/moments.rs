use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::noise::{sample_increment, RandomStream};

/// Stream id reserved for drawing random test matrices.
const MATRIX_STREAM: u64 = u64::MAX;

/// A deterministic symmetric test matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    #[default]
    Identity,
    Zero,
    /// Diagonal entries, repeated cyclically to fill the dimension.
    Diagonal {
        values: Vec<f64>,
    },
    /// `shift·I + G` with `G` symmetric Gaussian, off-diagonal variance `1/N`.
    Random {
        seed: u64,
        #[serde(default)]
        shift: f64,
    },
}

impl MatrixSpec {
    pub fn build(&self, dim: usize) -> Result<SymMatrix> {
        match self {
            MatrixSpec::Identity => Ok(SymMatrix::identity(dim)),
            MatrixSpec::Zero => Ok(SymMatrix::zeros(dim)),
            MatrixSpec::Diagonal { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "diagonal values must be finite and non-empty".into(),
                    ));
                }
                let diag: Vec<f64> = values.iter().cycle().take(dim).copied().collect();
                Ok(SymMatrix::from_diagonal(&diag))
            }
            MatrixSpec::Random { seed, shift } => {
                let mut s = RandomStream::new(*seed, MATRIX_STREAM);
                let scale = 1.0 / (dim as f64).sqrt();
                Ok(SymMatrix::from_upper_fn(dim, |_, _| scale * s.standard_normal()).shift(*shift))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub empirical: f64,
    pub predicted: f64,
    pub std_error: f64,
    pub z_score: f64,
}

impl MomentEstimate {
    fn new(empirical: f64, predicted: f64, std_error: f64) -> Self {
        let z_score = if std_error > 0.0 {
            (empirical - predicted) / std_error
        } else if empirical == predicted {
            0.0
        } else {
            f64::INFINITY.copysign(empirical - predicted)
        };
        Self {
            empirical,
            predicted,
            std_error,
            z_score,
        }
    }
}

/// Sample mean of `tr(A·ΔW·B·ΔW)` against the free Itô rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItoMomentReport {
    pub dim: usize,
    pub samples: usize,
    pub h: f64,
    /// Prediction `tr(A)·tr(B)·h` of the infinite-dimensional rule.
    pub limit: MomentEstimate,
    /// Exact finite-`N` expectation `h·tr(A)·tr(B) + (h/N)·tr(AB)`.
    pub finite_n: MomentEstimate,
    /// `tr(ΔW²)` against its exact mean `h(1 + 1/N)`.
    pub quadratic_variation: MomentEstimate,
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Draw `m` uses stream `m` of `seed`.
pub fn ito_moment_check(
    dim: usize,
    samples: usize,
    h: f64,
    a: &SymMatrix,
    b: &SymMatrix,
    seed: u64,
) -> Result<ItoMomentReport> {
    if dim == 0 || samples == 0 || !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "moment check needs N, M >= 1 and h > 0 (got {dim}, {samples}, {h})"
        )));
    }
    for m in [a, b] {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
    }
    let (am, bm) = (a.as_matrix(), b.as_matrix());
    let draws: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|id| {
            let dw = sample_increment(dim, h, &mut RandomStream::new(seed, id));
            let dwm = dw.as_matrix();
            let left = am * dwm;
            let right = bm * dwm;
            // tr(XY) = Σ X_ij Y_ji
            let ito = left.component_mul(&right.transpose()).sum() / dim as f64;
            (ito, dw.l2_norm().powi(2))
        })
        .collect();
    let (ito, qv): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    let (ito_mean, ito_se) = mean_and_error(&ito);
    let (qv_mean, qv_se) = mean_and_error(&qv);

    let (ta, tb) = (a.normalized_trace(), b.normalized_trace());
    let tab = a.matmul(b).trace() / dim as f64;
    let n = dim as f64;
    Ok(ItoMomentReport {
        dim,
        samples,
        h,
        limit: MomentEstimate::new(ito_mean, h * ta * tb, ito_se),
        finite_n: MomentEstimate::new(ito_mean, h * ta * tb + h / n * tab, ito_se),
        quadratic_variation: MomentEstimate::new(qv_mean, h * (1.0 + 1.0 / n), qv_se),
    })
}
