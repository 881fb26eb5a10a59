use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::model::{top_k_positive, SaeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    /// Mean squared reconstruction error per sample.
    pub reconstruction: f64,
    /// Mean ℓ1 norm of the codes.
    pub sparsity: f64,
}

/// Gradients of [`sae_loss`] with respect to each parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub enc_weight: Array2<f64>,
    pub dictionary: Array2<f64>,
    pub enc_bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros(width: usize, input_dim: usize) -> Self {
        Self {
            enc_weight: Array2::zeros((width, input_dim)),
            dictionary: Array2::zeros((width, input_dim)),
            enc_bias: Array1::zeros(width),
        }
    }
}

pub fn sae_loss(batch: ArrayView2<'_, f64>, params: &SaeParams, alpha: f64) -> Result<LossParts> {
    forward_backward(batch, params, alpha, false).map(|(l, _)| l)
}

/// Loss plus analytic gradients. The Top-K support is held fixed, which is
/// exact everywhere except on the measure-zero set where the support changes.
pub fn sae_loss_and_grad(batch: ArrayView2<'_, f64>, params: &SaeParams, alpha: f64) -> Result<(LossParts, Gradients)> {
    forward_backward(batch, params, alpha, true).map(|(l, g)| (l, g.expect("requested")))
}

fn forward_backward(
    batch: ArrayView2<'_, f64>,
    params: &SaeParams,
    alpha: f64,
    want_grad: bool,
) -> Result<(LossParts, Option<Gradients>)> {
    let n = batch.nrows();
    if n == 0 {
        return Err(Error::config("empty batch"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("alpha = {alpha} must be a nonnegative real")));
    }
    let (c, d) = (params.width(), params.input_dim());
    let pre = params.pre_activation_batch(batch)?;
    let dict = &params.dictionary;
    let inv_n = 1.0 / n as f64;

    let mut grads = want_grad.then(|| Gradients::zeros(c, d));
    let mut recon_sum = 0.0;
    let mut l1_sum = 0.0;
    let mut resid = vec![0.0; d];

    // Rows are reduced in order so the result does not depend on threading.
    for (h, a) in batch.rows().into_iter().zip(pre.rows()) {
        let code = top_k_positive(a.as_slice().expect("contiguous"), params.k);
        for (r, &x) in resid.iter_mut().zip(h.iter()) {
            *r = -x;
        }
        for &(i, z) in &code {
            for (r, &atom) in resid.iter_mut().zip(dict.row(i)) {
                *r += z * atom;
            }
            l1_sum += z;
        }
        recon_sum += resid.iter().map(|r| r * r).sum::<f64>();

        if let Some(g) = grads.as_mut() {
            for &(i, z) in &code {
                let atom = dict.row(i);
                let mut dz = 0.0;
                let mut g_dict = g.dictionary.row_mut(i);
                for ((gd, &r), &a) in g_dict.iter_mut().zip(&resid).zip(atom) {
                    *gd += 2.0 * inv_n * z * r;
                    dz += a * r;
                }
                let da = (2.0 * dz + alpha) * inv_n;
                for (gw, &x) in g.enc_weight.row_mut(i).iter_mut().zip(h.iter()) {
                    *gw += da * x;
                }
                g.enc_bias[i] += da;
            }
        }
    }

    let reconstruction = recon_sum * inv_n;
    let sparsity = l1_sum * inv_n;
    Ok((LossParts { total: reconstruction + alpha * sparsity, reconstruction, sparsity }, grads))
}
