use ndarray::{Array1, Array2, Zip};

use super::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<(Array2<f64>, Array1<f64>)>,
    second: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weights.raw_dim()),
                        Array1::zeros(l.bias.raw_dim()),
                    )
                })
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. A non-finite gradient aborts the step and
    /// leaves both the network and the moment estimates untouched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.first.len()
            || grads
                .layers
                .iter()
                .zip(&self.first)
                .any(|(g, (m, mb))| g.weights.dim() != m.dim() || g.bias.dim() != mb.dim())
            || net.layers().len() != self.first.len()
        {
            return Err(Error::Shape(
                "gradients do not match the optimizer state".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient contains NaN or inf".into()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            let g = *g + wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), (m_w, m_b)), (v_w, v_b)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(m_w)
                .and(v_w)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(m_b)
                .and(v_b)
                .for_each(update);
        }
        Ok(())
    }
}
