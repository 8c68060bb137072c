//! Gaussian-process surrogate with an exact posterior and the acquisition
//! functions used to rank candidates.
//!
//! Inputs are expected in normalized coordinates (see
//! [`crate::space::SearchSpace::normalize`]). Targets are z-scored before
//! fitting unless the caller opts out; predictions are returned on the
//! original target scale.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("GP fit failed: kernel matrix is not positive definite even with jitter")]
    FitFailed,
    #[error("GP fit needs at least one training point")]
    NoData,
    #[error("invalid kernel: {0}")]
    InvalidKernel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    SquaredExponential,
}

/// Scalar lengthscale or one per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengthscale {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl Lengthscale {
    fn at(&self, d: usize) -> f64 {
        match self {
            Lengthscale::Scalar(l) => *l,
            Lengthscale::PerDim(v) => v[d],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: Lengthscale,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::SquaredExponential,
            lengthscale: Lengthscale::Scalar(0.2),
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }
}

/// Lengthscales tried by [`select_lengthscale`].
pub const LENGTHSCALE_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];

const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

impl KernelSpec {
    pub fn validate(&self) -> Result<(), GpError> {
        let ok = match &self.lengthscale {
            Lengthscale::Scalar(l) => *l > 0.0 && l.is_finite(),
            Lengthscale::PerDim(v) => !v.is_empty() && v.iter().all(|l| *l > 0.0 && l.is_finite()),
        };
        if !ok {
            return Err(GpError::InvalidKernel("lengthscale must be > 0"));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(GpError::InvalidKernel("signal_variance must be > 0"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::InvalidKernel("noise_variance must be >= 0"));
        }
        Ok(())
    }

    fn check_dim(&self, dim: usize) -> Result<(), GpError> {
        match &self.lengthscale {
            Lengthscale::PerDim(v) if v.len() != dim => {
                Err(GpError::DimensionMismatch(v.len(), dim))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for (d, (a, b)) in x.iter().zip(x2).enumerate() {
            let z = (a - b) / self.lengthscale.at(d);
            r2 += z * z;
        }
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// `signal_variance * exp(-0.5 * sum(((x - x2) / l)^2))`
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64, GpError> {
    if x.len() != x2.len() {
        return Err(GpError::DimensionMismatch(x.len(), x2.len()));
    }
    spec.check_dim(x.len())?;
    Ok(spec.eval_unchecked(x, x2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetScaling {
    /// z-score targets; a constant target vector uses unit scale.
    Standardize,
    Raw,
}

/// Fitted GP posterior. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    kernel: KernelSpec,
    y_mean: f64,
    y_std: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

pub fn gp_fit(inputs: &[Vec<f64>], targets: &[f64], spec: &KernelSpec) -> Result<GpModel, GpError> {
    GpModel::fit(inputs, targets, spec, TargetScaling::Standardize)
}

pub fn gp_predict(model: &GpModel, x: &[f64]) -> Result<(f64, f64), GpError> {
    model.predict(x)
}

impl GpModel {
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        spec: &KernelSpec,
        scaling: TargetScaling,
    ) -> Result<Self, GpError> {
        spec.validate()?;
        if inputs.is_empty() {
            return Err(GpError::NoData);
        }
        if inputs.len() != targets.len() {
            return Err(GpError::DimensionMismatch(inputs.len(), targets.len()));
        }
        let dim = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
            return Err(GpError::DimensionMismatch(bad.len(), dim));
        }
        spec.check_dim(dim)?;

        let n = inputs.len();
        let (y_mean, y_std) = match scaling {
            TargetScaling::Raw => (0.0, 1.0),
            TargetScaling::Standardize => {
                let mean = targets.iter().sum::<f64>() / n as f64;
                let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
                let std = var.sqrt();
                (
                    mean,
                    if std > 0.0 && std.is_finite() {
                        std
                    } else {
                        1.0
                    },
                )
            }
        };
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_std));

        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = spec.eval_unchecked(&inputs[i], &inputs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        for i in 0..n {
            k[(i, i)] += spec.noise_variance;
        }

        let mut jitter = 0.0;
        let mut chol = Cholesky::new(k.clone());
        for &j in &JITTER_LADDER {
            if chol.is_some() {
                break;
            }
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += j;
            }
            jitter = j;
            chol = Cholesky::new(kj);
        }
        let chol = chol.ok_or(GpError::FitFailed)?;
        let alpha = chol.solve(&y);
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(GpError::FitFailed);
        }
        let l = chol.l_dirty();
        let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let log_marginal_likelihood = -0.5 * y.dot(&alpha)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        Ok(Self {
            inputs: inputs.to_vec(),
            kernel: spec.clone(),
            y_mean,
            y_std,
            chol,
            alpha,
            jitter,
            log_marginal_likelihood,
        })
    }

    /// Posterior mean and variance at `x` on the original target scale.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        let dim = self.inputs[0].len();
        if x.len() != dim {
            return Err(GpError::DimensionMismatch(x.len(), dim));
        }
        let n = self.inputs.len();
        let kstar = DVector::from_iterator(
            n,
            self.inputs
                .iter()
                .map(|xi| self.kernel.eval_unchecked(xi, x)),
        );
        let mean = kstar.dot(&self.alpha);
        // v = L^-1 k*, var = k(x,x) - v.v
        let mut v = kstar;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let var = (self.kernel.signal_variance - v.dot(&v)).max(0.0);
        Ok((
            self.y_mean + self.y_std * mean,
            var * self.y_std * self.y_std,
        ))
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Diagonal jitter added on top of the noise variance (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the (scaled) targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Lower-triangular factor of `K + noise * I (+ jitter)`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn target_scaling(&self) -> (f64, f64) {
        (self.y_mean, self.y_std)
    }
}

/// Fits one model per scalar lengthscale in `grid` and keeps the one with
/// the highest log marginal likelihood (earliest on ties). Grid entries whose
/// fit fails are skipped.
pub fn select_lengthscale(
    inputs: &[Vec<f64>],
    targets: &[f64],
    base: &KernelSpec,
    grid: &[f64],
) -> Result<GpModel, GpError> {
    let mut best: Option<GpModel> = None;
    let mut last_err = GpError::FitFailed;
    for &l in grid {
        let spec = KernelSpec {
            lengthscale: Lengthscale::Scalar(l),
            ..base.clone()
        };
        match gp_fit(inputs, targets, &spec) {
            Ok(m) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| m.log_marginal_likelihood > b.log_marginal_likelihood);
                if better {
                    best = Some(m);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionKind {
    #[default]
    ExpectedImprovement,
    Ucb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub xi: f64,
    pub kappa: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::ExpectedImprovement,
            xi: 0.01,
            kappa: 2.0,
        }
    }
}

impl AcquisitionSpec {
    /// Scores a posterior `(mu, var)` for maximization.
    pub fn score(&self, mu: f64, var: f64, f_best: f64) -> f64 {
        let sigma = var.max(0.0).sqrt();
        match self.kind {
            AcquisitionKind::ExpectedImprovement => {
                expected_improvement(mu, sigma, f_best, self.xi)
            }
            AcquisitionKind::Ucb => ucb(mu, sigma, self.kappa),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Expected improvement over `f_best + xi` under `N(mu, sigma^2)`.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64, xi: f64) -> f64 {
    let imp = mu - f_best - xi;
    if sigma <= 0.0 {
        return imp.max(0.0);
    }
    let z = imp / sigma;
    let n = std_normal();
    (imp * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

pub fn ucb(mu: f64, sigma: f64, kappa: f64) -> f64 {
    mu + kappa * sigma
}
