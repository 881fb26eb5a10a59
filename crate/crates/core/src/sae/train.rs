use std::collections::BTreeSet;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::sae_loss_and_grad;
use super::model::{SaeParams, SparseCode};
use crate::error::{Error, Result};
use crate::store::shuffled_batches;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// ℓ1 weight. Zero by default since Top-K already bounds the support.
    pub alpha: f64,
    pub steps: usize,
    /// Seeds the parameter initialization.
    pub seed: u64,
    /// Train on globally rescaled inputs (mean squared norm = d) and fold
    /// the scale back into the encoder bias afterwards.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 4096,
            alpha: 0.0,
            steps: 1000,
            seed: 0,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha = {} must be >= 0", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaeShape {
    pub width: usize,
    pub input_dim: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SaeParams,
    pub history: Vec<LossRecord>,
    /// Factor applied to inputs during training (1 unless standardizing).
    pub input_scale: f64,
}

/// Runs `config.steps` Adam steps, one per batch pulled from `batches`.
///
/// The loss recorded for step `t` is the one whose gradient produced the
/// `t`-th update.
pub fn train<I>(batches: I, config: &TrainConfig, shape: SaeShape) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Array2<f64>>,
{
    config.validate()?;
    let params = SaeParams::init(shape.width, shape.input_dim, shape.k, config.seed)?;
    train_from(batches, config, params)
}

/// Like [`train`], starting from the given parameters.
pub fn train_from<I>(batches: I, config: &TrainConfig, mut params: SaeParams) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Array2<f64>>,
{
    config.validate()?;
    let adam = config.adam();
    let mut state = AdamState::new(params.width(), params.input_dim());
    let mut history = Vec::with_capacity(config.steps);
    let mut scale: Option<f64> = (!config.standardize).then_some(1.0);
    let mut batches = batches.into_iter();

    for step in 1..=config.steps {
        let Some(mut batch) = batches.next() else {
            return Err(Error::TrainingAborted { completed: step - 1, requested: config.steps });
        };
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { param: format!("training batch {step}") });
        }
        let s = *scale.get_or_insert_with(|| standardizing_scale(&batch));
        if s != 1.0 {
            batch.mapv_inplace(|v| v * s);
        }
        let (loss, grads) = sae_loss_and_grad(batch.view(), &params, config.alpha)?;
        history.push(LossRecord {
            step,
            total: loss.total,
            reconstruction: loss.reconstruction,
            sparsity: loss.sparsity,
        });
        adam_step(&mut params, &grads, &mut state, &adam, step)?;
    }

    let input_scale = scale.unwrap_or(1.0);
    if input_scale != 1.0 {
        // TopK(W(s·h) + b) / s == TopK(W·h + b/s), so codes of raw inputs
        // decode back to raw scale through the same dictionary.
        params.enc_bias.mapv_inplace(|b| b / input_scale);
    }
    Ok(TrainOutcome { params, history, input_scale })
}

fn standardizing_scale(batch: &Array2<f64>) -> f64 {
    let n = batch.nrows().max(1) as f64;
    let mean_sq = batch.iter().map(|v| v * v).sum::<f64>() / n;
    if mean_sq > 0.0 {
        (batch.ncols() as f64 / mean_sq).sqrt()
    } else {
        1.0
    }
}

/// Endless stream of shuffled batches over the rows of a row-major `f32`
/// matrix. Every epoch is a full pass through a [`shuffled_batches`] buffer
/// seeded from `seed` and the epoch number.
pub fn epoch_batches(
    rows: &[f32],
    dim: usize,
    batch_size: usize,
    capacity: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Array2<f64>> + '_> {
    if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
        return Err(Error::shape(format!("{} values do not form a non-empty matrix with {dim} columns", rows.len())));
    }
    if batch_size == 0 || capacity < batch_size {
        return Err(Error::config(format!(
            "buffer capacity {capacity} must be at least the batch size {batch_size} (> 0)"
        )));
    }
    let n = rows.len() / dim;
    Ok((0u64..).flat_map(move |epoch| {
        let epoch_seed = crate::derive_seed(seed, &format!("epoch/{epoch}"));
        shuffled_batches(0..n, capacity, batch_size, epoch_seed)
            .expect("buffer parameters checked above")
            .map(move |idx| Array2::from_shape_fn((idx.len(), dim), |(r, j)| f64::from(rows[idx[r] * dim + j])))
    }))
}

/// Writes `step,total,reconstruction,sparsity` rows.
pub fn write_loss_csv<W: Write>(mut w: W, history: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,total,reconstruction,sparsity")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.step, r.total, r.reconstruction, r.sparsity)?;
    }
    Ok(())
}

/// Concepts that never fire anywhere in `codes`.
pub fn dead_feature_report<'a, I>(codes: I, width: usize) -> BTreeSet<usize>
where
    I: IntoIterator<Item = &'a SparseCode>,
{
    let mut alive = vec![false; width];
    for code in codes {
        for &(i, v) in code.entries() {
            if v > 0.0 && i < width {
                alive[i] = true;
            }
        }
    }
    alive.iter().enumerate().filter(|(_, &a)| !a).map(|(i, _)| i).collect()
}
