use ndarray::{Array1, Array2};

use super::loss::Gradients;
use super::model::SaeParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 8e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is accepted and freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(width: usize, input_dim: usize) -> Self {
        Self { m: Gradients::zeros(width, input_dim), v: Gradients::zeros(width, input_dim) }
    }
}

/// Bias-corrected Adam update of one flat parameter slice.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], cfg: &AdamConfig, step: usize) {
    let t = step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

fn flat(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn flat_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

fn flat1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

/// One Adam step over all SAE parameters, then dictionary rows are projected
/// back onto the unit sphere.
pub fn adam_step(
    params: &mut SaeParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    step: usize,
) -> Result<()> {
    if step == 0 {
        return Err(Error::config("Adam step index starts at 1"));
    }
    let (c, d) = (params.width(), params.input_dim());
    if grads.enc_weight.dim() != (c, d) || grads.dictionary.dim() != (c, d) || grads.enc_bias.len() != c {
        return Err(Error::shape("gradient shapes do not match parameters"));
    }
    for (name, ok) in [
        ("enc_weight", grads.enc_weight.iter().all(|g| g.is_finite())),
        ("dictionary", grads.dictionary.iter().all(|g| g.is_finite())),
        ("enc_bias", grads.enc_bias.iter().all(|g| g.is_finite())),
    ] {
        if !ok {
            return Err(Error::NonFinite { param: format!("gradient of {name}") });
        }
    }

    adam_update(
        flat_mut(&mut params.enc_weight),
        flat(&grads.enc_weight),
        flat_mut(&mut state.m.enc_weight),
        flat_mut(&mut state.v.enc_weight),
        cfg,
        step,
    );
    adam_update(
        flat_mut(&mut params.dictionary),
        flat(&grads.dictionary),
        flat_mut(&mut state.m.dictionary),
        flat_mut(&mut state.v.dictionary),
        cfg,
        step,
    );
    adam_update(
        flat1_mut(&mut params.enc_bias),
        grads.enc_bias.as_slice().expect("standard layout"),
        flat1_mut(&mut state.m.enc_bias),
        flat1_mut(&mut state.v.enc_bias),
        cfg,
        step,
    );
    params.normalize_dictionary();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.5, 1e-3, 2e-8] {
            let mut p = [1.0];
            let (mut m, mut v) = ([0.0], [0.0]);
            adam_update(&mut p, &[g], &mut m, &mut v, &cfg, 1);
            let expected = cfg.learning_rate * g.abs() / (g.abs() + cfg.epsilon);
            assert!(((1.0 - p[0]).abs() - expected).abs() < 1e-15, "g = {g}");
            assert_eq!((1.0 - p[0]).signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = SaeParams::init(6, 3, 2, 5).unwrap();
        let before = params.clone();
        let mut state = AdamState::new(6, 3);
        let grads = Gradients::zeros(6, 3);
        for step in 1..=3 {
            adam_step(&mut params, &grads, &mut state, &AdamConfig::default(), step).unwrap();
        }
        assert_eq!(params.enc_weight(), before.enc_weight());
        assert_eq!(params.enc_bias(), before.enc_bias());
        for (a, b) in params.dictionary().iter().zip(before.dictionary().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dictionary_rows_stay_unit_norm() {
        let mut params = SaeParams::init(6, 3, 2, 5).unwrap();
        let mut state = AdamState::new(6, 3);
        let mut grads = Gradients::zeros(6, 3);
        grads.dictionary.iter_mut().enumerate().for_each(|(i, g)| *g = (i as f64).cos());
        let cfg = AdamConfig { learning_rate: 0.3, ..AdamConfig::default() };
        adam_step(&mut params, &grads, &mut state, &cfg, 1).unwrap();
        for row in params.dictionary().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = SaeParams::init(2, 2, 1, 0).unwrap();
        let mut state = AdamState::new(2, 2);
        let mut grads = Gradients::zeros(2, 2);
        grads.enc_bias[1] = f64::INFINITY;
        let err = adam_step(&mut params, &grads, &mut state, &AdamConfig::default(), 1).unwrap_err();
        match err {
            Error::NonFinite { param } => assert!(param.contains("enc_bias")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = |f: fn(&mut AdamConfig)| {
            let mut c = AdamConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.learning_rate = -1.0));
        assert!(bad(|c| c.beta1 = 1.0));
        assert!(bad(|c| c.beta2 = -0.1));
        assert!(bad(|c| c.epsilon = 0.0));
    }
}
