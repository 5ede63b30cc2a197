//! Contrastive and segmentation losses with analytic gradients, a
//! central-difference gradient checker and a small descent demo on free
//! embeddings.

mod contrastive;
mod segmentation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub use contrastive::{
    contrastive_loss, contrastive_loss_grad, cosine_similarity, nt_xent_pair, pair_similarities, partner, random_batch,
    ContrastiveConfig, EmbeddingBatch,
};
pub use segmentation::{seg_loss_grad, soft_dice_loss, tversky_loss, ProbabilityVolume, SegLoss, DEFAULT_SMOOTH};

/// Segmentation loss plus contrastive loss.
pub fn multitask_loss<T: Real>(seg: T, contrastive: T) -> Result<T> {
    multitask_loss_weighted(seg, contrastive, T::one())
}

/// `seg + weight * contrastive`; `weight = 1` is the plain sum.
pub fn multitask_loss_weighted<T: Real>(seg: T, contrastive: T, weight: T) -> Result<T> {
    if !seg.is_finite() {
        return Err(Error::NonFinite("segmentation loss"));
    }
    if !contrastive.is_finite() {
        return Err(Error::NonFinite("contrastive loss"));
    }
    if !weight.is_finite() {
        return Err(Error::NonFinite("loss weight"));
    }
    Ok(seg + weight * contrastive)
}

/// A scalar function of a flat parameter vector with a known gradient.
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Contrastive loss of a batch laid out row-major with rows of `dim`.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveObjective {
    pub dim: usize,
    pub temperature: f64,
}

impl Differentiable for ContrastiveObjective {
    fn value(&self, x: &[f64]) -> f64 {
        contrastive::loss_unchecked(x, self.dim, self.temperature)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if x.len() == 2 * self.dim {
            return vec![0.0; x.len()];
        }
        contrastive::grad_unchecked(x, self.dim, self.temperature)
    }
}

/// Overlap loss as a function of the probabilities, for a fixed target.
#[derive(Debug, Clone)]
pub struct SegObjective {
    pub loss: SegLoss,
    pub target: Vec<bool>,
}

impl Differentiable for SegObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.loss.value_unchecked(x, &self.target)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.loss.grad_unchecked(x, &self.target)
    }
}

/// Largest entrywise relative error between the analytic gradient and a
/// central difference with step `eps`, using the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// The difference uses the five-point central stencil
/// `(f(x-2h) - 8 f(x-h) + 8 f(x+h) - f(x+2h)) / 12h`. The two-point form
/// carries an `h^2 f'''/6` truncation term that at `h = 1e-4` already
/// exceeds `1e-5` relative error on gradient entries near `1e-6`.
pub fn finite_difference_check(objective: &dyn Differentiable, point: &[f64], eps: f64) -> f64 {
    let analytic = objective.gradient(point);
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        let mut at = |d: f64| {
            x[i] = orig + d;
            objective.value(&x)
        };
        let numeric = (at(-2.0 * eps) - 8.0 * at(-eps) + 8.0 * at(eps) - at(2.0 * eps)) / (12.0 * eps);
        x[i] = orig;
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Metrics recorded before the first step and after every step of
/// [`optimize_embeddings_demo`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub loss: f64,
    pub mean_positive_similarity: f64,
    /// `None` for a single pair (no negatives).
    pub mean_negative_similarity: Option<f64>,
}

/// Plain gradient descent on the embedding entries. Returns `steps + 1`
/// records, the first describing the initial batch.
pub fn optimize_embeddings_demo(
    init: &EmbeddingBatch<f64>,
    temperature: f64,
    steps: usize,
    step_size: f64,
) -> Result<Vec<DemoStep>> {
    ContrastiveConfig { temperature }.validate()?;
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be > 0, got {step_size}")));
    }
    let record = |b: &EmbeddingBatch<f64>| -> Result<DemoStep> {
        let (pos, neg) = pair_similarities(b);
        Ok(DemoStep {
            loss: contrastive_loss(b, temperature)?,
            mean_positive_similarity: pos,
            mean_negative_similarity: neg,
        })
    };
    let mut batch = init.clone();
    let mut trajectory = vec![record(&batch)?];
    for _ in 0..steps {
        let grad = contrastive_loss_grad(&batch, temperature)?;
        let dim = batch.dim();
        let next: Vec<f64> = batch
            .as_slice()
            .iter()
            .zip(&grad)
            .map(|(x, g)| x - step_size * g)
            .collect();
        batch = EmbeddingBatch::new(next, dim)?;
        trajectory.push(record(&batch)?);
    }
    Ok(trajectory)
}
