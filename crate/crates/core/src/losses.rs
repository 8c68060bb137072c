//! Segmentation and classification losses.
//!
//! Segmentation uses a weighted sum of Dice and binary cross-entropy.
//! Classification uses focal loss plus a linear false-negative penalty.
//! Probabilities are clamped to `[eps, 1 - eps]` before any logarithm and
//! batch losses are means over elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("undefined Dice: prediction and target are both all zero")]
    UndefinedDice,
    #[error("empty input")]
    Empty,
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

/// Values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self, LossError> {
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LossError::OutOfRange(v));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = LossError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegLossWeights {
    pub lambda_dice: f64,
    pub lambda_ce: f64,
}

impl Default for SegLossWeights {
    fn default() -> Self {
        Self {
            lambda_dice: 1.0,
            lambda_ce: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta_fn: f64,
    pub eps: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            beta_fn: 0.5,
            eps: DEFAULT_EPS,
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LossError::InvalidParam("alpha must be in (0, 1)"));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(LossError::InvalidParam("gamma must be >= 0"));
        }
        if self.beta_fn.is_nan() || self.beta_fn < 0.0 {
            return Err(LossError::InvalidParam("beta must be >= 0"));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(LossError::InvalidParam("eps must be in (0, 0.5)"));
        }
        Ok(())
    }
}

fn check_pair(p: &ProbVector, g: &ProbVector) -> Result<(), LossError> {
    if p.len() != g.len() {
        return Err(LossError::LengthMismatch(p.len(), g.len()));
    }
    if p.is_empty() {
        return Err(LossError::Empty);
    }
    Ok(())
}

#[inline]
fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// `1 - 2 sum(p g) / (sum p + sum g)`
pub fn dice_loss(p: &ProbVector, g: &ProbVector) -> Result<f64, LossError> {
    check_pair(p, g)?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
        inter += a * b;
        sp += a;
        sg += b;
    }
    let denom = sp + sg;
    if denom <= 0.0 {
        return Err(LossError::UndefinedDice);
    }
    Ok(1.0 - 2.0 * inter / denom)
}

/// Mean binary cross-entropy with clamp `eps`.
pub fn cross_entropy_loss(p: &ProbVector, g: &ProbVector, eps: f64) -> Result<f64, LossError> {
    check_pair(p, g)?;
    let sum: f64 = p
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(&a, &y)| {
            let q = clamp_prob(a, eps);
            -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
        })
        .sum();
    Ok(sum / p.len() as f64)
}

pub fn seg_loss(p: &ProbVector, g: &ProbVector, w: &SegLossWeights) -> Result<f64, LossError> {
    if !(w.lambda_dice >= 0.0 && w.lambda_ce >= 0.0) || (w.lambda_dice == 0.0 && w.lambda_ce == 0.0)
    {
        return Err(LossError::InvalidParam(
            "weights must be >= 0 and not both zero",
        ));
    }
    let dice = if w.lambda_dice == 0.0 {
        0.0
    } else {
        w.lambda_dice * dice_loss(p, g)?
    };
    let ce = if w.lambda_ce == 0.0 {
        0.0
    } else {
        w.lambda_ce * cross_entropy_loss(p, g, DEFAULT_EPS)?
    };
    Ok(dice + ce)
}

/// Focal loss for one prediction `yhat` against label `y`.
pub fn focal_loss(yhat: f64, y: f64, fp: &FocalParams) -> f64 {
    let q = clamp_prob(yhat, fp.eps);
    let pos = -fp.alpha * (1.0 - q).powf(fp.gamma) * y * q.ln();
    let neg = -(1.0 - fp.alpha) * q.powf(fp.gamma) * (1.0 - y) * (1.0 - q).ln();
    pos + neg
}

/// `y (1 - yhat)`
pub fn fn_penalty(yhat: f64, y: f64) -> f64 {
    y * (1.0 - yhat)
}

pub fn total_loss(yhat: f64, y: f64, fp: &FocalParams) -> f64 {
    focal_loss(yhat, y, fp) + fp.beta_fn * fn_penalty(yhat, y)
}

/// Analytic derivative of [`total_loss`] with respect to `yhat`, valid where
/// the clamp is inactive.
pub fn total_loss_grad(yhat: f64, y: f64, fp: &FocalParams) -> f64 {
    let q = yhat;
    let (a, g) = (fp.alpha, fp.gamma);
    let mut d = a * (1.0 - q).powf(g) * y * (-1.0 / q);
    d += -(1.0 - a) * q.powf(g) * (1.0 - y) * (-1.0 / (1.0 - q));
    if g != 0.0 {
        d += a * g * (1.0 - q).powf(g - 1.0) * y * q.ln();
        d += -(1.0 - a) * g * q.powf(g - 1.0) * (1.0 - y) * (1.0 - q).ln();
    }
    d - fp.beta_fn * y
}

fn mean_over(
    p: &ProbVector,
    y: &ProbVector,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64, LossError> {
    check_pair(p, y)?;
    let s: f64 = p
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| f(a, b))
        .sum();
    Ok(s / p.len() as f64)
}

pub fn focal_loss_mean(p: &ProbVector, y: &ProbVector, fp: &FocalParams) -> Result<f64, LossError> {
    mean_over(p, y, |a, b| focal_loss(a, b, fp))
}

pub fn fn_penalty_mean(p: &ProbVector, y: &ProbVector) -> Result<f64, LossError> {
    mean_over(p, y, fn_penalty)
}

pub fn total_loss_mean(p: &ProbVector, y: &ProbVector, fp: &FocalParams) -> Result<f64, LossError> {
    mean_over(p, y, |a, b| total_loss(a, b, fp))
}
