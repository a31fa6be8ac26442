//! Free Brownian increments approximated by symmetrized Gaussian matrices.
//!
//! An increment over a step of length `h` is `sqrt(h / 2N) · (G + Gᵀ)` with
//! `G` an `N×N` matrix of independent standard normals. Off-diagonal entries
//! have variance `h/N` and diagonal entries `2h/N`, so
//! `E[tr_N(ΔW²)] = h·(1 + 1/N)`.
//!
//! Randomness comes from a [`RandomStream`]: ChaCha8 keyed by the 64-bit
//! seed, with the path id selecting the ChaCha stream. A path is therefore a
//! pure function of `(seed, path_id, N, P, h)` and can be regenerated on any
//! worker in any order. Normals are drawn with the ziggurat sampler of
//! `rand_distr::StandardNormal`, filling `G` row by row.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Seeded counter-based random stream.
#[derive(Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self(rng)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

impl fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomStream")
            .field("stream", &self.0.get_stream())
            .field("word_pos", &self.0.get_word_pos())
            .finish()
    }
}

/// Draws one increment `sqrt(h / 2N) · (G + Gᵀ)`.
pub fn sample_increment(dim: usize, h: f64, stream: &mut RandomStream) -> SymMatrix {
    assert!(dim >= 1, "dimension must be positive");
    assert!(h > 0.0, "step size must be positive");
    let g: Vec<f64> = (0..dim * dim).map(|_| stream.standard_normal()).collect();
    let s = (h / (2.0 * dim as f64)).sqrt();
    SymMatrix::from_upper_fn(dim, |i, j| s * (g[i * dim + j] + g[j * dim + i]))
}

/// Everything needed to regenerate a noise path; increments themselves are
/// never stored on disk.
///
/// `ratio > 1` describes the coarsening of a fine path of `fine_steps`
/// increments into blocks of `ratio` consecutive increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub dim: usize,
    pub fine_steps: usize,
    pub fine_step_size: f64,
    pub seed: u64,
    pub path_id: u64,
    #[serde(default = "one")]
    pub ratio: usize,
}

fn one() -> usize {
    1
}

impl PathSpec {
    pub fn new(dim: usize, steps: usize, step_size: f64, seed: u64, path_id: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "dimension N must be at least 1".into(),
            ));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "step count P must be at least 1".into(),
            ));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        Ok(Self {
            dim,
            fine_steps: steps,
            fine_step_size: step_size,
            seed,
            path_id,
            ratio: 1,
        })
    }

    /// Same noise, aggregated over blocks of `ratio` steps.
    pub fn coarsened(&self, ratio: usize) -> Result<Self> {
        let total = ratio.checked_mul(self.ratio).unwrap_or(0);
        if ratio == 0 || total == 0 || !self.fine_steps.is_multiple_of(total) {
            return Err(Error::Refinement {
                ratio,
                steps: self.steps(),
            });
        }
        Ok(Self {
            ratio: total,
            ..*self
        })
    }

    pub fn steps(&self) -> usize {
        self.fine_steps / self.ratio
    }

    pub fn step_size(&self) -> f64 {
        self.ratio as f64 * self.fine_step_size
    }

    pub fn increments(&self) -> Increments {
        Increments {
            spec: *self,
            stream: RandomStream::new(self.seed, self.path_id),
            remaining: self.steps(),
        }
    }

    pub fn generate(&self) -> NoisePath {
        NoisePath {
            spec: *self,
            increments: self.increments().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path header serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PathSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("path header: {e}")))?;
        let base = PathSpec::new(
            spec.dim,
            spec.fine_steps,
            spec.fine_step_size,
            spec.seed,
            spec.path_id,
        )?;
        if spec.ratio == 1 {
            Ok(base)
        } else {
            base.coarsened(spec.ratio)
        }
    }
}

/// Lazily generated increments of a [`PathSpec`].
#[derive(Debug, Clone)]
pub struct Increments {
    spec: PathSpec,
    stream: RandomStream,
    remaining: usize,
}

impl Iterator for Increments {
    type Item = SymMatrix;

    fn next(&mut self) -> Option<SymMatrix> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let (n, h) = (self.spec.dim, self.spec.fine_step_size);
        let mut acc = sample_increment(n, h, &mut self.stream);
        for _ in 1..self.spec.ratio {
            acc = &acc + &sample_increment(n, h, &mut self.stream);
        }
        Some(acc)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Increments {}

/// A materialized sequence of increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    spec: PathSpec,
    increments: Vec<SymMatrix>,
}

impl NoisePath {
    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn step_size(&self) -> f64 {
        self.spec.step_size()
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn path_id(&self) -> u64 {
        self.spec.path_id
    }

    pub fn increments(&self) -> &[SymMatrix] {
        &self.increments
    }

    /// Sum of all increments, i.e. `W_T − W_0`.
    pub fn total(&self) -> SymMatrix {
        let mut it = self.increments.iter();
        let first = it.next().expect("paths have at least one step").clone();
        it.fold(first, |acc, dw| &acc + dw)
    }
}

pub fn generate_path(
    dim: usize,
    steps: usize,
    h: f64,
    seed: u64,
    path_id: u64,
) -> Result<NoisePath> {
    Ok(PathSpec::new(dim, steps, h, seed, path_id)?.generate())
}

/// Aggregates consecutive, non-overlapping blocks of `ratio` increments.
pub fn coarsen(path: &NoisePath, ratio: usize) -> Result<NoisePath> {
    if ratio == 0 || !path.steps().is_multiple_of(ratio) {
        return Err(Error::Refinement {
            ratio,
            steps: path.steps(),
        });
    }
    let spec = path.spec.coarsened(ratio)?;
    let increments = path
        .increments
        .chunks(ratio)
        .map(|block| {
            let mut acc = block[0].clone();
            for dw in &block[1..] {
                acc = &acc + dw;
            }
            acc
        })
        .collect();
    Ok(NoisePath { spec, increments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn same_seed_and_path_reproduce() {
        let a = generate_path(6, 5, 0.1, 42, 3).unwrap();
        let b = generate_path(6, 5, 0.1, 42, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_path_ids_differ() {
        let a = generate_path(6, 1, 0.1, 42, 0).unwrap();
        let b = generate_path(6, 1, 0.1, 42, 1).unwrap();
        assert_ne!(a.increments()[0], b.increments()[0]);
    }

    #[test]
    fn increments_are_exactly_symmetric() {
        let p = generate_path(9, 3, 0.5, 1, 0).unwrap();
        for dw in p.increments() {
            assert_eq!(crate::linalg::max_asymmetry(dw.as_matrix()), 0.0);
        }
    }

    #[test]
    fn coarsen_ratio_one_is_identity() {
        let p = generate_path(4, 8, 0.25, 5, 0).unwrap();
        let c = coarsen(&p, 1).unwrap();
        assert_eq!(c.increments(), p.increments());
        assert_eq!(c.step_size(), 0.25);
    }

    #[test]
    fn coarsen_full_ratio_is_total() {
        let p = generate_path(4, 8, 0.25, 5, 0).unwrap();
        let c = coarsen(&p, 8).unwrap();
        assert_eq!(c.steps(), 1);
        assert_eq!(c.step_size(), 2.0);
        assert_eq!(c.increments()[0], p.total());
    }

    #[test]
    fn coarsen_block_sums_are_exact() {
        let p = generate_path(5, 12, 0.1, 9, 2).unwrap();
        for r in [2, 3, 4, 6] {
            let c = coarsen(&p, r).unwrap();
            assert_eq!(c.steps(), 12 / r);
            for (n, coarse) in c.increments().iter().enumerate() {
                let mut acc = p.increments()[n * r].clone();
                for i in n * r + 1..(n + 1) * r {
                    acc = &acc + &p.increments()[i];
                }
                assert_eq!((coarse - &acc).max_abs(), 0.0);
            }
            assert!((&c.total() - &p.total()).max_abs() < 1e-14, "ratio {r}");
        }
    }

    #[test]
    fn lazy_coarse_stream_matches_materialized() {
        let spec = PathSpec::new(4, 16, 0.125, 77, 4).unwrap();
        let fine = spec.generate();
        let eager = coarsen(&fine, 4).unwrap();
        let lazy = spec.coarsened(4).unwrap().generate();
        assert_eq!(eager, lazy);
        let twice = spec.coarsened(2).unwrap().coarsened(2).unwrap();
        assert_eq!(twice, spec.coarsened(4).unwrap());
    }

    #[test]
    fn coarsen_rejects_non_divisor() {
        let p = generate_path(3, 10, 0.1, 1, 0).unwrap();
        assert!(matches!(
            coarsen(&p, 3),
            Err(Error::Refinement {
                ratio: 3,
                steps: 10
            })
        ));
        assert!(coarsen(&p, 0).is_err());
    }

    #[test]
    fn header_round_trip_regenerates() {
        let spec = PathSpec::new(3, 4, 0.5, 123, 8)
            .unwrap()
            .coarsened(2)
            .unwrap();
        let back = PathSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.generate(), spec.generate());
        assert!(PathSpec::from_json(
            "{\"dim\":0,\"fine_steps\":1,\"fine_step_size\":1.0,\"seed\":1,\"path_id\":0}"
        )
        .is_err());
        assert!(PathSpec::from_json("{\"dim\":2,\"fine_steps\":1,\"fine_step_size\":1.0,\"seed\":1,\"path_id\":0,\"extra\":1}").is_err());
    }

    #[test]
    fn parallel_generation_is_schedule_independent() {
        let seq: Vec<NoisePath> = (0..16)
            .map(|id| generate_path(5, 4, 0.1, 2024, id).unwrap())
            .collect();
        let par: Vec<NoisePath> = (0..16u64)
            .collect::<Vec<_>>()
            .into_par_iter()
            .rev()
            .map(|id| generate_path(5, 4, 0.1, 2024, id).unwrap())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(seq, par);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_path(0, 1, 0.1, 0, 0).is_err());
        assert!(generate_path(2, 0, 0.1, 0, 0).is_err());
        assert!(generate_path(2, 1, 0.0, 0, 0).is_err());
        assert!(generate_path(2, 1, f64::NAN, 0, 0).is_err());
    }
}
