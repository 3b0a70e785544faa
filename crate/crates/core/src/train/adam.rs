use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ViTParams;
use crate::tensor::Tensor;

/// First and second moment buffers, one pair per parameter tensor in
/// [`ViTParams::named`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

/// The optimizer hyperparameters of [`TrainConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lr: c.learning_rate as f32,
            beta1: c.adam_beta1 as f32,
            beta2: c.adam_beta2 as f32,
            eps: c.adam_eps as f32,
            weight_decay: c.weight_decay as f32,
        }
    }
}

/// One bias-corrected Adam update on a flat slice. `t` is the step count
/// after incrementing (first step is 1).
pub fn adam_update(
    param: &mut [f32],
    grad: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    t: u64,
    h: &AdamHyper,
) {
    let bc1 = 1.0 - (h.beta1 as f64).powi(t as i32);
    let bc2 = 1.0 - (h.beta2 as f64).powi(t as i32);
    let (bc1, bc2) = (bc1 as f32, bc2 as f32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        if h.weight_decay > 0.0 {
            param[i] -= h.lr * h.weight_decay * param[i];
        }
        param[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

impl AdamState {
    pub fn new(params: &ViTParams) -> Self {
        let zeros: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Advances the step counter and updates every parameter tensor.
    pub fn step(
        &mut self,
        params: &mut ViTParams,
        grads: &ViTParams,
        hyper: &AdamHyper,
    ) -> Result<()> {
        let mut targets = params.named_mut();
        let sources = grads.named();
        if targets.len() != sources.len() || targets.len() != self.m.len() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment buffers",
                    targets.len(),
                    sources.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, ((name, p), (_, g))) in targets.iter_mut().zip(&sources).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::dim(
                    "adam_step",
                    format!("{name}: param {:?}, grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.t += 1;
        for (i, ((_, p), (_, g))) in targets.into_iter().zip(sources).enumerate() {
            adam_update(
                p.data_mut(),
                g.data(),
                self.m[i].data_mut(),
                self.v[i].data_mut(),
                self.t,
                hyper,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(lr: f32) -> AdamHyper {
        AdamHyper::from(&TrainConfig {
            learning_rate: lr as f64,
            ..TrainConfig::default()
        })
    }

    fn one_step(g: f32, lr: f32) -> (f32, f32, f32) {
        let (mut p, mut m, mut v) = ([0.0f32], [0.0f32], [0.0f32]);
        adam_update(&mut p, &[g], &mut m, &mut v, 1, &hyper(lr));
        (p[0], m[0], v[0])
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δ = −lr·g/(|g| + ε).
        let (p, _, _) = one_step(1.0, 1e-4);
        assert!((p as f64 + 1e-4 / (1.0 + 1e-8)).abs() < 1e-10);
        for g in [1e3f32, 1e-3] {
            let (p, _, _) = one_step(g, 1e-4);
            assert!((p + 1e-4).abs() < 1e-8, "g={g} moved {p}");
        }
    }

    #[test]
    fn zero_gradient_and_zero_lr() {
        let (p, _, _) = one_step(0.0, 1e-4);
        assert_eq!(p, 0.0);
        let (p, m, v) = one_step(2.0, 0.0);
        assert_eq!(p, 0.0);
        assert!(m > 0.0 && v > 0.0);
    }
}
