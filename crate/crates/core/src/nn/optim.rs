use serde::{Deserialize, Serialize};

use super::model::{round_f32, Model, ModelGrads};
use crate::error::{Error, Result};

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {lr}")));
        }
        match self {
            OptimizerConfig::Sgd { momentum, .. } if !(0.0..1.0).contains(momentum) => Err(Error::InvalidConfig(
                format!("momentum must be in [0, 1), got {momentum}"),
            )),
            OptimizerConfig::Adam { beta1, beta2, eps, .. }
                if !(0.0..1.0).contains(beta1) || !(0.0..1.0).contains(beta2) || eps.is_nan() || *eps <= 0.0 =>
            {
                Err(Error::InvalidConfig("adam betas must be in [0, 1) and eps > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `θ ← θ − lr·v`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// One Adam update at step `t` (1-based) with bias-corrected moments.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grad).zip(first.iter_mut()).zip(second.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer state for one model. Moment buffers follow the model's
/// canonical parameter order; frozen layers keep their buffers untouched.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, model: &Model) -> Self {
        let buffers: Vec<Vec<f64>> = model
            .param_keys()
            .map(|k| vec![0.0; model.param(k).as_slice().len()])
            .collect();
        Self {
            config,
            steps: 0,
            first: buffers.clone(),
            second: buffers,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every layer with `trainable[layer]` set.
    /// Updated parameters are rounded to `f32` precision.
    pub fn step(&mut self, model: &mut Model, grads: &ModelGrads, trainable: &[bool]) -> Result<()> {
        for (layer, g) in grads.layers.iter().enumerate() {
            if trainable[layer] && (!g.weights.is_finite() || !g.bias.is_finite()) {
                return Err(Error::NonFiniteGradient(layer));
            }
        }
        self.steps += 1;
        let keys: Vec<_> = model.param_keys().collect();
        for (slot, key) in keys.into_iter().enumerate() {
            if !trainable[key.layer] {
                continue;
            }
            let grad = grads.get(key).as_slice();
            let params = model.param_mut(key).as_mut_slice();
            match self.config {
                OptimizerConfig::Sgd { lr, momentum } => sgd_step(params, grad, &mut self.first[slot], lr, momentum),
                OptimizerConfig::Adam { lr, beta1, beta2, eps } => adam_step(
                    params,
                    grad,
                    &mut self.first[slot],
                    &mut self.second[slot],
                    self.steps,
                    lr,
                    beta1,
                    beta2,
                    eps,
                ),
            }
            for p in params.iter_mut() {
                *p = round_f32(*p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{init_params, Activation, NetworkSpec};

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.5, -2.0];
        let mut v = vec![0.0; 2];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.0);
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn plain_sgd_scalar() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[1.0], &mut [0.0], 0.1, 0.0);
        assert_eq!(p[0], 0.9);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = vec![0.0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.5);
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.5);
        // v₁ = 1, v₂ = 1.5
        assert_eq!(p[0], -2.5);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        // t = 1: m̂ = g, v̂ = g², update = lr·g/(|g| + eps)
        for g in [1e-3, 0.5, 7.0, -300.0] {
            let mut p = vec![0.0];
            adam_step(&mut p, &[g], &mut [0.0], &mut [0.0], 1, 0.01, 0.9, 0.999, 1e-8);
            assert!((p[0].abs() - 0.01).abs() < 1e-6, "g = {g}: step {}", p[0]);
            assert_eq!(p[0].signum(), -g.signum());
        }
    }

    #[test]
    fn step_rejects_non_finite_gradients_and_respects_freezing() {
        let spec = NetworkSpec::mlp(2, &[(3, Activation::Relu)], 2).unwrap();
        let mut model = init_params(&spec, 0);
        let before = model.clone();
        let mut opt = Optimizer::new(OptimizerConfig::default(), &model);

        let mut grads = ModelGrads::zeros_like(&model);
        grads.layers[0].weights[(0, 0)] = f64::NAN;
        assert!(matches!(
            opt.step(&mut model, &grads, &[true, true]),
            Err(Error::NonFiniteGradient(0))
        ));
        assert_eq!(model, before);

        let mut grads = ModelGrads::zeros_like(&model);
        grads.layers[0].weights = grads.layers[0].weights.map(|_| 1.0);
        grads.layers[1].weights = grads.layers[1].weights.map(|_| 1.0);
        opt.step(&mut model, &grads, &[false, true]).unwrap();
        assert_eq!(model.layers()[0], before.layers()[0]);
        assert_ne!(model.layers()[1], before.layers()[1]);
    }

    #[test]
    fn config_parsing() {
        let c: OptimizerConfig = serde_json::from_str(r#"{"kind":"adam","lr":0.01}"#).unwrap();
        assert_eq!(c, OptimizerConfig::adam(0.01));
        let c: OptimizerConfig = serde_json::from_str(r#"{"kind":"sgd","lr":0.1,"momentum":0.9}"#).unwrap();
        assert_eq!(c, OptimizerConfig::Sgd { lr: 0.1, momentum: 0.9 });
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"adam","lr":0.1,"beta":0.9}"#).is_err());
        assert!(OptimizerConfig::adam(0.0).validate().is_err());
    }
}
