//! TOML run configuration, schema version 1.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    ConvergenceSetup, Ensemble, MatrixSpec, StabilityMode, StabilitySetup, DEFAULT_BINS,
};
use crate::linalg::SymMatrix;
use crate::models::{builtin_model, BuiltinName, ModelSpec};
use crate::noise::PathSpec;
use crate::solver::{stability_bound, SolverConfig, SolverOptions, StabilityBound};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, reported with the offending field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: BuiltinName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// Stability constants, given explicitly or taken from the model.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BoundsSource {
    /// Must be the string `"from_model"`.
    Keyword(String),
    Explicit {
        l_prime: f64,
        k_hat: f64,
        k_bar: f64,
    },
}

impl Default for BoundsSource {
    fn default() -> Self {
        BoundsSource::Keyword("from_model".into())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Spectrum {
        #[serde(default = "default_bins")]
        bins: usize,
    },
    Converge {
        ratios: Vec<usize>,
    },
    Stability {
        mode: StabilityMode,
        step_sizes: Vec<f64>,
        /// Defaults to `[I]` in norm mode and `[I, 2I]` in perturbation mode.
        #[serde(default)]
        initials: Vec<MatrixSpec>,
    },
    Moments {
        h: f64,
        #[serde(default)]
        a: MatrixSpec,
        #[serde(default)]
        b: MatrixSpec,
    },
    Bounds {
        #[serde(default)]
        constants: BoundsSource,
        #[serde(default)]
        step_sizes: Vec<f64>,
    },
    Simulate,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum { .. } => "spectrum",
            Experiment::Converge { .. } => "converge",
            Experiment::Stability { .. } => "stability",
            Experiment::Moments { .. } => "moments",
            Experiment::Bounds { .. } => "bounds",
            Experiment::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    /// Matrix dimension.
    #[serde(rename = "N")]
    pub dim: Option<usize>,
    /// Number of Monte Carlo paths.
    #[serde(rename = "M", default = "default_paths")]
    pub paths: usize,
    /// Number of (fine) steps; the step size is `T/P`.
    #[serde(rename = "P")]
    pub steps: Option<usize>,
    /// Time horizon.
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: MatrixSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    pub experiment: Experiment,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_paths() -> usize {
    1
}

fn default_theta() -> f64 {
    1.0
}

/// A fully validated experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    Spectrum {
        model: ModelSpec,
        initial: SymMatrix,
        ensemble: Ensemble,
        theta: f64,
        options: SolverOptions,
        bins: usize,
    },
    Converge {
        model: ModelSpec,
        initial: SymMatrix,
        setup: ConvergenceSetup,
    },
    Stability {
        model: ModelSpec,
        initial: SymMatrix,
        perturbed: Option<SymMatrix>,
        setup: StabilitySetup,
    },
    Moments {
        dim: usize,
        samples: usize,
        h: f64,
        a: SymMatrix,
        b: SymMatrix,
        seed: u64,
    },
    Bounds {
        bound: StabilityBound,
        step_sizes: Vec<f64>,
    },
    Simulate {
        model: ModelSpec,
        initial: SymMatrix,
        ensemble: Ensemble,
        theta: f64,
        options: SolverOptions,
    },
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| ConfigError::new("config", e.message().trim()))?;
    cfg.plan()?;
    Ok(cfg)
}

/// Hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(
            field,
            format!("must be a positive number, got {v}"),
        ))
    }
}

impl RunConfig {
    fn require<T: Copy>(&self, value: Option<T>, field: &str) -> Result<T, ConfigError> {
        value.ok_or_else(|| {
            ConfigError::new(
                field,
                format!("required by the {} experiment", self.experiment.name()),
            )
        })
    }

    fn dim(&self) -> Result<usize, ConfigError> {
        match self.require(self.dim, "N")? {
            0 => Err(ConfigError::new("N", "must be at least 1")),
            n => Ok(n),
        }
    }

    fn horizon(&self) -> Result<f64, ConfigError> {
        positive("T", self.require(self.horizon, "T")?)
    }

    fn grid(&self) -> Result<(usize, f64), ConfigError> {
        let steps = match self.require(self.steps, "P")? {
            0 => return Err(ConfigError::new("P", "must be at least 1")),
            p => p,
        };
        Ok((steps, self.horizon()? / steps as f64))
    }

    fn model(&self) -> Result<ModelSpec, ConfigError> {
        builtin_model(self.model.name, &self.model.params)
            .map_err(|e| ConfigError::new("model.params", e))
    }

    fn matrix(spec: &MatrixSpec, dim: usize, field: &str) -> Result<SymMatrix, ConfigError> {
        spec.build(dim).map_err(|e| ConfigError::new(field, e))
    }

    fn admissible(&self, model: &ModelSpec, h: f64, steps: usize) -> Result<(), ConfigError> {
        SolverConfig::with_options(self.theta, h, steps, &self.solver)
            .resolve(model)
            .map(|_| ())
            .map_err(|e| ConfigError::new("solver", e))
    }

    /// Checks every field against the preconditions of the experiment.
    pub fn plan(&self) -> Result<Plan, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError::new(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if self.paths == 0 {
            return Err(ConfigError::new("M", "must be at least 1"));
        }
        positive("solver.newton_tol", self.solver.newton_tol)?;
        positive("solver.fp_tol", self.solver.fp_tol)?;
        if self.solver.max_iter == 0 {
            return Err(ConfigError::new("solver.max_iter", "must be at least 1"));
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::new(
                "output.formats",
                "must name at least one format",
            ));
        }
        let model = self.model()?;

        match &self.experiment {
            Experiment::Spectrum { bins } => {
                if *bins == 0 {
                    return Err(ConfigError::new("experiment.bins", "must be at least 1"));
                }
                let (dim, (steps, h)) = (self.dim()?, self.grid()?);
                self.admissible(&model, h, steps)?;
                Ok(Plan::Spectrum {
                    initial: Self::matrix(&self.initial, dim, "initial")?,
                    ensemble: Ensemble::new(dim, self.paths, steps, h, self.seed)
                        .map_err(|e| ConfigError::new("P", e))?,
                    model,
                    theta: self.theta,
                    options: self.solver,
                    bins: *bins,
                })
            }
            Experiment::Simulate => {
                let (dim, (steps, h)) = (self.dim()?, self.grid()?);
                self.admissible(&model, h, steps)?;
                Ok(Plan::Simulate {
                    initial: Self::matrix(&self.initial, dim, "initial")?,
                    ensemble: Ensemble::new(dim, self.paths, steps, h, self.seed)
                        .map_err(|e| ConfigError::new("P", e))?,
                    model,
                    theta: self.theta,
                    options: self.solver,
                })
            }
            Experiment::Converge { ratios } => {
                let (dim, (steps, h)) = (self.dim()?, self.grid()?);
                if ratios.is_empty() {
                    return Err(ConfigError::new(
                        "experiment.ratios",
                        "must list at least one ratio",
                    ));
                }
                let base = PathSpec::new(dim, steps, h, self.seed, 0)
                    .map_err(|e| ConfigError::new("P", e))?;
                for (i, &r) in ratios.iter().enumerate() {
                    let coarse = base.coarsened(r).map_err(|_| {
                        ConfigError::new(
                            format!("experiment.ratios[{i}]"),
                            format!("ratio {r} does not divide P = {steps}"),
                        )
                    })?;
                    self.admissible(&model, coarse.step_size(), coarse.steps())?;
                }
                self.admissible(&model, h, steps)?;
                Ok(Plan::Converge {
                    initial: Self::matrix(&self.initial, dim, "initial")?,
                    model,
                    setup: ConvergenceSetup {
                        dim,
                        paths: self.paths,
                        steps,
                        h_fine: h,
                        ratios: ratios.clone(),
                        theta: self.theta,
                        seed: self.seed,
                        solver: self.solver,
                    },
                })
            }
            Experiment::Stability {
                mode,
                step_sizes,
                initials,
            } => {
                let (dim, horizon) = (self.dim()?, self.horizon()?);
                if step_sizes.is_empty() {
                    return Err(ConfigError::new(
                        "experiment.step_sizes",
                        "must list at least one step size",
                    ));
                }
                for (i, &h) in step_sizes.iter().enumerate() {
                    let field = format!("experiment.step_sizes[{i}]");
                    positive(&field, h)?;
                    let steps = (horizon / h).round();
                    if steps < 1.0 || (steps * h - horizon).abs() > 1e-9 * horizon {
                        return Err(ConfigError::new(
                            field,
                            format!("step size {h} does not divide T = {horizon}"),
                        ));
                    }
                    self.admissible(&model, h, steps as usize)?;
                }
                let defaults = match mode {
                    StabilityMode::Norm => vec![MatrixSpec::Identity],
                    StabilityMode::Perturbation => vec![
                        MatrixSpec::Identity,
                        MatrixSpec::Diagonal { values: vec![2.0] },
                    ],
                };
                let initials = if initials.is_empty() {
                    &defaults
                } else {
                    initials
                };
                let needed = if *mode == StabilityMode::Norm { 1 } else { 2 };
                if initials.len() != needed {
                    return Err(ConfigError::new(
                        "experiment.initials",
                        format!(
                            "{mode:?} mode needs exactly {needed} initial value(s), got {}",
                            initials.len()
                        )
                        .to_lowercase(),
                    ));
                }
                let mut built = initials
                    .iter()
                    .enumerate()
                    .map(|(i, m)| Self::matrix(m, dim, &format!("experiment.initials[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let perturbed = if built.len() == 2 { built.pop() } else { None };
                Ok(Plan::Stability {
                    model,
                    initial: built.pop().expect("one initial"),
                    perturbed,
                    setup: StabilitySetup {
                        mode: *mode,
                        dim,
                        paths: self.paths,
                        horizon,
                        step_sizes: step_sizes.clone(),
                        theta: self.theta,
                        seed: self.seed,
                        solver: self.solver,
                    },
                })
            }
            Experiment::Moments { h, a, b } => {
                let dim = self.dim()?;
                Ok(Plan::Moments {
                    dim,
                    samples: self.paths,
                    h: positive("experiment.h", *h)?,
                    a: Self::matrix(a, dim, "experiment.a")?,
                    b: Self::matrix(b, dim, "experiment.b")?,
                    seed: self.seed,
                })
            }
            Experiment::Bounds {
                constants,
                step_sizes,
            } => {
                let (l_prime, k_hat, k_bar) = match constants {
                    BoundsSource::Keyword(k) if k == "from_model" => {
                        let c = model.stability_constants.ok_or_else(|| {
                            ConfigError::new("experiment.constants", "model has no stability constants")
                        })?;
                        let k_hat = c.k_hat.ok_or_else(|| {
                            ConfigError::new(
                                "experiment.constants",
                                format!("no finite K̂ is known for {}; give the constants explicitly", model.name),
                            )
                        })?;
                        (c.l_prime, k_hat, c.k_bar)
                    }
                    BoundsSource::Keyword(k) => {
                        return Err(ConfigError::new(
                            "experiment.constants",
                            format!("expected \"from_model\" or a table of l_prime, k_hat, k_bar, got \"{k}\""),
                        ))
                    }
                    BoundsSource::Explicit { l_prime, k_hat, k_bar } => (*l_prime, *k_hat, *k_bar),
                };
                for (i, &h) in step_sizes.iter().enumerate() {
                    positive(&format!("experiment.step_sizes[{i}]"), h)?;
                }
                let bound = stability_bound(self.theta, l_prime, k_hat, k_bar)
                    .map_err(|e| ConfigError::new("experiment.constants", e))?;
                Ok(Plan::Bounds {
                    bound,
                    step_sizes: step_sizes.clone(),
                })
            }
        }
    }
}
