//! Named parameter collections.
//!
//! Every trainable component implements [`ParamSet`]; gradient containers use
//! the same type as the parameters they belong to, so optimizers, checkpoints
//! and gradient checks can walk parameters and gradients in lock step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{kernels, Tensor};

pub trait ParamSet {
    /// Visits every tensor in a fixed order with its dotted name.
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));

    /// Same order as [`ParamSet::visit`].
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor));

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, t| out.push((n, t)));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |n, t| out.push((n, t)));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, t| out.extend_from_slice(t.data()));
        out
    }

    fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if values.len() != expected {
            return Err(Error::Shape {
                op: "set_flat_values",
                left: vec![expected],
                right: vec![values.len()],
            });
        }
        let mut offset = 0;
        self.visit_mut("", &mut |_, t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        Ok(())
    }

    fn zero(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(0.0));
    }

    fn scale_all(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, t| t.scale(factor));
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.named_tensors();
        let mut dst = self.named_tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::Shape {
                op: "accumulate",
                left: vec![dst.len()],
                right: vec![src.len()],
            });
        }
        for ((_, d), (_, s)) in dst.iter_mut().zip(&src) {
            d.add_assign(s)?;
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, t| ok &= t.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<P: ParamSet> ParamSet for Vec<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<P: ParamSet> ParamSet for Option<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// Weight matrix drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(&[fan_out, fan_in], data).expect("shape matches data")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected layer `y = act(W x + b)` with `W[out×in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

/// Values the dense backward pass needs.
#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            w: xavier_uniform(rng, output, input),
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn output_width(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.input_width() {
            return Err(Error::Shape {
                op: "dense",
                left: self.w.shape().to_vec(),
                right: vec![x.len()],
            });
        }
        let mut y = vec![0.0; self.output_width()];
        kernels::gemv(self.w.data(), self.input_width(), x, &mut y);
        for (yi, bi) in y.iter_mut().zip(self.b.data()) {
            *yi += bi;
            if self.activation == Activation::Relu {
                *yi = yi.max(0.0);
            }
        }
        Ok((
            y.clone(),
            DenseCache {
                input: x.to_vec(),
                output: y,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, cache: &DenseCache, grad_out: &[f64], grads: &mut Dense) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_width() || cache.input.len() != self.input_width() {
            return Err(Error::CacheMismatch(format!(
                "dense {:?} got upstream width {}",
                self.w.shape(),
                grad_out.len()
            )));
        }
        let mut g = grad_out.to_vec();
        if self.activation == Activation::Relu {
            for (gi, yi) in g.iter_mut().zip(&cache.output) {
                if *yi <= 0.0 {
                    *gi = 0.0;
                }
            }
        }
        kernels::outer_acc(grads.w.data_mut(), &g, &cache.input);
        kernels::axpy(grads.b.data_mut(), 1.0, &g);
        let mut dx = vec![0.0; self.input_width()];
        kernels::gemv_t_acc(self.w.data(), self.input_width(), &g, &mut dx);
        Ok(dx)
    }
}

impl ParamSet for Dense {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn flat_round_trip_and_names() {
        let mut rng = substream(1, "t");
        let mut d = Dense::init(&mut rng, 3, 2, Activation::Relu);
        let names: Vec<String> = d.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["w", "b"]);
        let v = d.flat_values();
        assert_eq!(v.len(), 8);
        let mut doubled: Vec<f64> = v.iter().map(|x| x * 2.0).collect();
        d.set_flat_values(&doubled).unwrap();
        assert_eq!(d.flat_values(), doubled);
        doubled.pop();
        assert!(d.set_flat_values(&doubled).is_err());
    }

    #[test]
    fn xavier_respects_limit() {
        let mut rng = substream(3, "x");
        let w = xavier_uniform(&mut rng, 8, 16);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn dense_relu_blocks_gradient() {
        let d = Dense {
            w: Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap(),
            b: Tensor::zeros(&[2]),
            activation: Activation::Relu,
        };
        let (y, cache) = d.forward(&[2.0, 1.0]).unwrap();
        assert_eq!(y, vec![2.0, 0.0]);
        let mut g = Dense::zeros(2, 2, Activation::Relu);
        let dx = d.backward(&cache, &[1.0, 1.0], &mut g).unwrap();
        assert_eq!(dx, vec![1.0, 0.0]);
        assert_eq!(g.w.data(), &[2.0, 1.0, 0.0, 0.0]);
    }
}
