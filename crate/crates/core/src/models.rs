//! Free SDE models `dU = α(U) dt + Σᵢ βⁱ(U) dW γⁱ(U)` whose coefficients are
//! scalar functions lifted to symmetric matrices by functional calculus.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, SpectralDecomposition, SymMatrix};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(θ, h, x) ↦ y` with `y − θh·α(y) = x`.
pub type ImplicitFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// How a [`ScalarFn`] acts; the structured kinds are lifted without an
/// eigendecomposition.
#[derive(Clone)]
pub enum ScalarKind {
    Constant(f64),
    /// `x ↦ slope·x + offset`
    Affine {
        slope: f64,
        offset: f64,
    },
    /// `x ↦ scale·sqrt(x)` on the clamped spectrum
    ScaledSqrt(f64),
    Custom(RealFn),
}

/// A coefficient function `ℝ → ℝ`.
#[derive(Clone)]
pub struct ScalarFn {
    pub kind: ScalarKind,
    pub lipschitz_bound: Option<f64>,
    /// Eigenvalues below the floor are clamped up to it before evaluation.
    pub domain_floor: Option<f64>,
    pub derivative: Option<RealFn>,
}

impl ScalarFn {
    pub fn constant(c: f64) -> Self {
        Self {
            kind: ScalarKind::Constant(c),
            lipschitz_bound: Some(0.0),
            domain_floor: None,
            derivative: None,
        }
    }

    pub fn identity() -> Self {
        Self::affine(1.0, 0.0)
    }

    pub fn affine(slope: f64, offset: f64) -> Self {
        Self {
            kind: ScalarKind::Affine { slope, offset },
            lipschitz_bound: Some(slope.abs()),
            domain_floor: None,
            derivative: None,
        }
    }

    pub fn scaled_sqrt(scale: f64) -> Self {
        Self {
            kind: ScalarKind::ScaledSqrt(scale),
            lipschitz_bound: None,
            domain_floor: Some(0.0),
            derivative: None,
        }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ScalarKind::Custom(Arc::new(f)),
            lipschitz_bound: None,
            domain_floor: None,
            derivative: None,
        }
    }

    pub fn with_lipschitz(mut self, bound: f64) -> Self {
        self.lipschitz_bound = Some(bound);
        self
    }

    pub fn with_domain_floor(mut self, floor: f64) -> Self {
        self.domain_floor = Some(floor);
        self
    }

    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(df));
        self
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = match self.domain_floor {
            Some(floor) => x.max(floor),
            None => x,
        };
        match &self.kind {
            ScalarKind::Constant(c) => *c,
            ScalarKind::Affine { slope, offset } => slope * x + offset,
            ScalarKind::ScaledSqrt(s) => s * x.sqrt(),
            ScalarKind::Custom(f) => f(x),
        }
    }

    /// Analytic where known, otherwise a central difference.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        if let Some(df) = &self.derivative {
            return df(x);
        }
        match &self.kind {
            ScalarKind::Constant(_) => 0.0,
            ScalarKind::Affine { slope, .. } => *slope,
            ScalarKind::ScaledSqrt(s) => 0.5 * s / x.max(f64::MIN_POSITIVE).sqrt(),
            ScalarKind::Custom(_) => {
                let step = 1e-6 * x.abs().max(1.0);
                (self.eval(x + step) - self.eval(x - step)) / (2.0 * step)
            }
        }
    }

    /// Linear coefficients if the function is affine.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self.kind {
            ScalarKind::Constant(c) => Some((0.0, c)),
            ScalarKind::Affine { slope, offset } => Some((slope, offset)),
            _ => None,
        }
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ScalarKind::Constant(c) => format!("Constant({c})"),
            ScalarKind::Affine { slope, offset } => format!("Affine({slope}·x + {offset})"),
            ScalarKind::ScaledSqrt(s) => format!("ScaledSqrt({s})"),
            ScalarKind::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("ScalarFn")
            .field("kind", &kind)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("domain_floor", &self.domain_floor)
            .finish()
    }
}

/// One `βⁱ(U) dW γⁱ(U)` term.
#[derive(Debug, Clone)]
pub struct DiffusionTerm {
    pub beta: ScalarFn,
    pub gamma: ScalarFn,
}

impl DiffusionTerm {
    pub fn new(beta: ScalarFn, gamma: ScalarFn) -> Self {
        Self { beta, gamma }
    }
}

/// Closed-form inverse of `y ↦ y − θh·α(y)`.
#[derive(Clone)]
pub enum ImplicitClosedForm {
    /// For `α(y) = slope·y + offset`: `y = (x + θh·offset) / (1 − θh·slope)`.
    Affine {
        slope: f64,
        offset: f64,
    },
    Custom(ImplicitFn),
}

impl ImplicitClosedForm {
    fn affine_denominator(theta: f64, h: f64, slope: f64) -> Result<f64> {
        let d = 1.0 - theta * h * slope;
        if d <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "implicit drift is degenerate: 1 - theta*h*slope = {d} (theta={theta}, h={h}, slope={slope})"
            )));
        }
        Ok(d)
    }

    /// Rejects `(θ, h)` pairs for which the inverse is undefined.
    pub fn check(&self, theta: f64, h: f64) -> Result<()> {
        match self {
            ImplicitClosedForm::Affine { slope, .. } => {
                Self::affine_denominator(theta, h, *slope).map(|_| ())
            }
            ImplicitClosedForm::Custom(_) => Ok(()),
        }
    }

    pub fn eval(&self, theta: f64, h: f64, x: f64) -> Result<f64> {
        match self {
            ImplicitClosedForm::Affine { slope, offset } => {
                let d = Self::affine_denominator(theta, h, *slope)?;
                Ok((x + theta * h * offset) / d)
            }
            ImplicitClosedForm::Custom(f) => Ok(f(theta, h, x)),
        }
    }

    pub fn apply(&self, theta: f64, h: f64, x: &SymMatrix) -> Result<SymMatrix> {
        match self {
            ImplicitClosedForm::Affine { slope, offset } => {
                let d = Self::affine_denominator(theta, h, *slope)?;
                Ok(x.shift(theta * h * offset).map_entries(|v| v / d))
            }
            ImplicitClosedForm::Custom(f) => eigh(x)?.map(|v| f(theta, h, v)),
        }
    }
}

impl fmt::Debug for ImplicitClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImplicitClosedForm::Affine { slope, offset } => {
                write!(f, "Affine {{ slope: {slope}, offset: {offset} }}")
            }
            ImplicitClosedForm::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Constants of the mean-square stability hypotheses:
/// `tr_N(U·α(U)) ≤ −L′‖U‖₂²`, `Σ‖β(U)‖₂²‖γ(U)‖₂² ≤ K̂‖U‖₂²`, `‖α(U)‖₂² ≤ K̄‖U‖₂²`.
///
/// For models without a zero solution (OU, CIR) they describe the
/// perturbation system, i.e. the difference of two solutions driven by the
/// same noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub l_prime: f64,
    /// `None` when no finite bound is known (square-root diffusions).
    pub k_hat: Option<f64>,
    pub k_bar: f64,
}

/// The built-in processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    FreeOu,
    FreeGbm1,
    FreeGbm2,
    FreeCir,
}

impl BuiltinName {
    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::FreeOu => "free_ou",
            BuiltinName::FreeGbm1 => "free_gbm1",
            BuiltinName::FreeGbm2 => "free_gbm2",
            BuiltinName::FreeCir => "free_cir",
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            BuiltinName::FreeOu => &["mu", "sigma"],
            BuiltinName::FreeGbm1 | BuiltinName::FreeGbm2 => &["mu"],
            BuiltinName::FreeCir => &["alpha", "beta", "sigma"],
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A built-in model together with its parameters; doubles as the descriptor
/// of which analytic oracle applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    FreeOu { mu: f64, sigma: f64 },
    FreeGbm1 { mu: f64 },
    FreeGbm2 { mu: f64 },
    FreeCir { alpha: f64, beta: f64, sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub drift: ScalarFn,
    pub diffusion: Vec<DiffusionTerm>,
    pub implicit_closed_form: Option<ImplicitClosedForm>,
    pub oracle: Option<Builtin>,
    pub stability_constants: Option<StabilityConstants>,
    /// Negative eigenvalues below `-clamp_tol` count as meaningful clamps.
    pub clamp_tol: f64,
}

pub const DEFAULT_CLAMP_TOL: f64 = 1e-12;

impl ModelSpec {
    pub fn new(name: impl Into<String>, drift: ScalarFn, diffusion: Vec<DiffusionTerm>) -> Self {
        let implicit_closed_form = drift
            .as_affine()
            .map(|(slope, offset)| ImplicitClosedForm::Affine { slope, offset });
        Self {
            name: name.into(),
            drift,
            diffusion,
            implicit_closed_form,
            oracle: None,
            stability_constants: None,
            clamp_tol: DEFAULT_CLAMP_TOL,
        }
    }

    /// `dU = μU dt + σ dW`
    pub fn free_ou(mu: f64, sigma: f64) -> Self {
        let mut m = Self::new(
            "free_ou",
            ScalarFn::affine(mu, 0.0),
            vec![DiffusionTerm::new(
                ScalarFn::constant(sigma),
                ScalarFn::constant(1.0),
            )],
        );
        m.oracle = Some(Builtin::FreeOu { mu, sigma });
        m.stability_constants = Some(StabilityConstants {
            l_prime: -mu,
            k_hat: Some(0.0),
            k_bar: mu * mu,
        });
        m
    }

    /// `dU = μU dt + √U dW √U`
    pub fn free_gbm1(mu: f64) -> Self {
        let mut m = Self::new(
            "free_gbm1",
            ScalarFn::affine(mu, 0.0),
            vec![DiffusionTerm::new(
                ScalarFn::scaled_sqrt(1.0),
                ScalarFn::scaled_sqrt(1.0),
            )],
        );
        m.oracle = Some(Builtin::FreeGbm1 { mu });
        // ‖√U‖₂⁴ = tr_N(U)² ≤ ‖U‖₂² for U ⪰ 0
        m.stability_constants = Some(StabilityConstants {
            l_prime: -mu,
            k_hat: Some(1.0),
            k_bar: mu * mu,
        });
        m
    }

    /// `dU = μU dt + U dW + dW U`
    pub fn free_gbm2(mu: f64) -> Self {
        let mut m = Self::new(
            "free_gbm2",
            ScalarFn::affine(mu, 0.0),
            vec![
                DiffusionTerm::new(ScalarFn::identity(), ScalarFn::constant(1.0)),
                DiffusionTerm::new(ScalarFn::constant(1.0), ScalarFn::identity()),
            ],
        );
        m.oracle = Some(Builtin::FreeGbm2 { mu });
        // two terms with ‖U‖₂²·1 each, doubled to cover the cross terms
        m.stability_constants = Some(StabilityConstants {
            l_prime: -mu,
            k_hat: Some(4.0),
            k_bar: mu * mu,
        });
        m
    }

    /// `dU = (α − βU) dt + (σ/2)√U dW + (σ/2) dW √U`
    pub fn free_cir(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "free_cir needs alpha, beta, sigma >= 0 (got {alpha}, {beta}, {sigma})"
            )));
        }
        if 2.0 * alpha < sigma * sigma {
            return Err(Error::InvalidParameter(format!(
                "free_cir violates the Feller condition 2*alpha >= sigma^2 ({} < {})",
                2.0 * alpha,
                sigma * sigma
            )));
        }
        let mut m = Self::new(
            "free_cir",
            ScalarFn::affine(-beta, alpha),
            vec![
                DiffusionTerm::new(ScalarFn::scaled_sqrt(0.5 * sigma), ScalarFn::constant(1.0)),
                DiffusionTerm::new(ScalarFn::constant(1.0), ScalarFn::scaled_sqrt(0.5 * sigma)),
            ],
        );
        m.oracle = Some(Builtin::FreeCir { alpha, beta, sigma });
        m.stability_constants = Some(StabilityConstants {
            l_prime: beta,
            k_hat: None,
            k_bar: beta * beta,
        });
        Ok(m)
    }

    pub fn drift_lipschitz(&self) -> Option<f64> {
        self.drift.lipschitz_bound
    }
}

/// Builds a built-in model from named parameters; every listed parameter is
/// required and no others are accepted.
pub fn builtin_model(name: BuiltinName, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let expected = name.parameter_names();
    if let Some(unknown) = params.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(Error::InvalidParameter(format!(
            "unknown parameter '{unknown}' for {name} (expected {})",
            expected.join(", ")
        )));
    }
    let get = |key: &str| -> Result<f64> {
        let v = *params.get(key).ok_or_else(|| {
            Error::InvalidParameter(format!("missing parameter '{key}' for {name}"))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "parameter '{key}' must be finite"
            )));
        }
        Ok(v)
    };
    match name {
        BuiltinName::FreeOu => Ok(ModelSpec::free_ou(get("mu")?, get("sigma")?)),
        BuiltinName::FreeGbm1 => Ok(ModelSpec::free_gbm1(get("mu")?)),
        BuiltinName::FreeGbm2 => Ok(ModelSpec::free_gbm2(get("mu")?)),
        BuiltinName::FreeCir => ModelSpec::free_cir(get("alpha")?, get("beta")?, get("sigma")?),
    }
}

/// A lifted coefficient: a multiple of the identity or a full matrix.
#[derive(Debug, Clone)]
pub enum Lifted {
    Scalar(f64),
    Matrix(SymMatrix),
}

impl Lifted {
    pub fn to_matrix(&self, dim: usize) -> SymMatrix {
        match self {
            Lifted::Scalar(c) => SymMatrix::scaled_identity(dim, *c),
            Lifted::Matrix(m) => m.clone(),
        }
    }
}

/// Lifts scalar functions at a fixed matrix, sharing one eigendecomposition
/// between all spectral lifts.
pub struct Lifter<'a> {
    u: &'a SymMatrix,
    clamp_tol: f64,
    spectrum: Option<SpectralDecomposition>,
    clamped: usize,
}

impl<'a> Lifter<'a> {
    pub fn new(u: &'a SymMatrix, clamp_tol: f64) -> Self {
        Self {
            u,
            clamp_tol,
            spectrum: None,
            clamped: 0,
        }
    }

    /// Largest number of meaningfully negative eigenvalues clamped by any lift.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    fn spectrum(&mut self) -> Result<&SpectralDecomposition> {
        if self.spectrum.is_none() {
            self.spectrum = Some(eigh(self.u)?);
        }
        Ok(self.spectrum.as_ref().unwrap())
    }

    pub fn lift(&mut self, f: &ScalarFn) -> Result<Lifted> {
        match &f.kind {
            ScalarKind::Constant(c) => Ok(Lifted::Scalar(*c)),
            ScalarKind::Affine { slope, offset } => {
                let mut m = self.u.scale(*slope);
                if *offset != 0.0 {
                    m = m.shift(*offset);
                }
                Ok(Lifted::Matrix(m))
            }
            _ => {
                let clamp_tol = self.clamp_tol;
                let spec = self.spectrum()?;
                let clamped = match f.domain_floor {
                    Some(floor) => spec
                        .eigenvalues
                        .iter()
                        .filter(|&&v| v < floor - clamp_tol)
                        .count(),
                    None => 0,
                };
                let m = spec.map(|x| f.eval(x))?;
                self.clamped = self.clamped.max(clamped);
                Ok(Lifted::Matrix(m))
            }
        }
    }
}

/// `α(U)`.
pub fn drift_eval(model: &ModelSpec, u: &SymMatrix) -> Result<SymMatrix> {
    Ok(Lifter::new(u, model.clamp_tol)
        .lift(&model.drift)?
        .to_matrix(u.dim()))
}

/// `Σᵢ βⁱ(U)·dW·γⁱ(U)` before symmetrization, with the clamp count.
pub fn diffusion_eval_raw(
    model: &ModelSpec,
    u: &SymMatrix,
    dw: &SymMatrix,
) -> Result<(DMatrix<f64>, usize)> {
    let mut lifter = Lifter::new(u, model.clamp_tol);
    let raw = diffusion_with(model, &mut lifter, dw)?;
    Ok((raw, lifter.clamped()))
}

/// Diffusion sum at the lifter's matrix, reusing its eigendecomposition.
pub(crate) fn diffusion_with(
    model: &ModelSpec,
    lifter: &mut Lifter<'_>,
    dw: &SymMatrix,
) -> Result<DMatrix<f64>> {
    let n = lifter.u.dim();
    if dw.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: dw.dim(),
        });
    }
    let mut acc = DMatrix::zeros(n, n);
    for term in &model.diffusion {
        let b = lifter.lift(&term.beta)?;
        let g = lifter.lift(&term.gamma)?;
        let prod = match (&b, &g) {
            (Lifted::Scalar(b), Lifted::Scalar(g)) => dw.as_matrix() * (b * g),
            (Lifted::Matrix(b), Lifted::Scalar(g)) => b.matmul(dw) * *g,
            (Lifted::Scalar(b), Lifted::Matrix(g)) => dw.matmul(g) * *b,
            (Lifted::Matrix(b), Lifted::Matrix(g)) => b.matmul(dw) * g.as_matrix(),
        };
        acc += prod;
    }
    Ok(acc)
}

/// `Σᵢ βⁱ(U)·dW·γⁱ(U)`, symmetrized, with the clamp count.
pub fn diffusion_eval(
    model: &ModelSpec,
    u: &SymMatrix,
    dw: &SymMatrix,
) -> Result<(SymMatrix, usize)> {
    let (raw, clamped) = diffusion_eval_raw(model, u, dw)?;
    Ok((SymMatrix::symmetrize(&raw), clamped))
}
