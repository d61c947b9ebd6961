use std::fmt;
use std::str::FromStr;

use super::grad::Gradients;
use super::network::MlpNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::ADAM),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state over the parameters of trainable layers only.
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    // One (weights, bias) pair per layer, empty for frozen layers.
    moments: Vec<(Moments, Moments)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &MlpNetwork) -> Self {
        let moments = net
            .layers()
            .iter()
            .map(|l| {
                let n = |len| if l.trainable && matches!(kind, OptimizerKind::Adam { .. }) { len } else { 0 };
                (
                    Moments {
                        m: vec![0.0; n(l.weights().len())],
                        v: vec![0.0; n(l.weights().len())],
                    },
                    Moments {
                        m: vec![0.0; n(l.bias().len())],
                        v: vec![0.0; n(l.bias().len())],
                    },
                )
            })
            .collect();
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            moments,
        }
    }

    pub fn apply(&mut self, net: &mut MlpNetwork, grads: &Gradients) {
        self.step += 1;
        let lr = self.learning_rate;
        let kind = self.kind;
        let t = self.step;
        for ((layer, g), (mw, mb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.moments)
        {
            if !layer.trainable {
                continue;
            }
            match kind {
                OptimizerKind::Sgd => {
                    sgd(layer.weights_mut(), &g.weights, lr);
                    sgd(layer.bias_mut(), &g.bias, lr);
                }
                OptimizerKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let hp = AdamStep {
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                        c1,
                        c2,
                    };
                    hp.apply(layer.weights_mut(), &g.weights, mw);
                    hp.apply(layer.bias_mut(), &g.bias, mb);
                }
            }
        }
    }
}

fn sgd(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    c1: f64,
    c2: f64,
}

impl AdamStep {
    fn apply(&self, params: &mut [f64], grads: &[f64], state: &mut Moments) {
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / self.c1;
            let v_hat = *v / self.c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
