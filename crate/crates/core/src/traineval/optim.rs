//! SGD and Adam over any [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = *self {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !unit(beta1) || !unit(beta2) || epsilon <= 0.0 || !epsilon.is_finite() {
                return Err(Error::Config(format!(
                    "adam needs betas in [0,1) and positive epsilon, got {beta1}, {beta2}, {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam()
    }
}

/// Optimizer with its per-parameter state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        kind.validate()?;
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        Ok(Optimizer {
            kind,
            learning_rate,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of `params` from `grads` (same structure).
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g: Vec<Vec<f64>> = grads.named_tensors().into_iter().map(|(_, t)| t.data().to_vec()).collect();
        let mut targets = params.named_tensors_mut();
        if targets.len() != g.len() || targets.iter().zip(&g).any(|((_, t), gi)| t.len() != gi.len()) {
            return Err(Error::Shape {
                op: "optimizer step",
                left: targets.iter().map(|(_, t)| t.len()).collect(),
                right: g.iter().map(Vec::len).collect(),
            });
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, t), gi) in targets.iter_mut().zip(&g) {
                    for (p, d) in t.data_mut().iter_mut().zip(gi) {
                        *p -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.m.is_empty() {
                    self.m = g.iter().map(|gi| vec![0.0; gi.len()]).collect();
                    self.v = self.m.clone();
                }
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((_, tensor), gi), (m, v)) in targets.iter_mut().zip(&g).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    for (k, p) in tensor.data_mut().iter_mut().enumerate() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gi[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gi[k] * gi[k];
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
