use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kernels, sigmoid_scalar, Tensor};
use crate::params::{join, xavier_uniform, ParamSet};

/// How the candidate state sees the previous hidden state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateForm {
    /// `h̃ = tanh(W_h·[r ⊙ h_prev, x] + b_h)`
    #[default]
    Standard,
    /// `h̃ = tanh(W_h·[h_prev, x] + b_h)`, reset gate computed but unused.
    Literal,
}

/// GRU weights. Every matrix is `hidden × (hidden + input)` and multiplies `[h_prev, x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
    pub form: CandidateForm,
    /// When false the biases are ignored in the forward pass and receive zero gradient.
    pub use_bias: bool,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        GruParams {
            w_z: w.clone(),
            w_r: w.clone(),
            w_h: w,
            b_z: b.clone(),
            b_r: b.clone(),
            b_h: b,
            form: CandidateForm::Standard,
            use_bias: true,
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let fan_in = hidden + input;
        GruParams {
            w_z: xavier_uniform(rng, hidden, fan_in),
            w_r: xavier_uniform(rng, hidden, fan_in),
            w_h: xavier_uniform(rng, hidden, fan_in),
            ..GruParams::zeros(input, hidden)
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn input_width(&self) -> usize {
        self.w_z.shape()[1] - self.hidden_width()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_width();
        for w in [&self.w_r, &self.w_h] {
            w.check_same("gru weights", &self.w_z)?;
        }
        for b in [&self.b_z, &self.b_r, &self.b_h] {
            if b.shape() != [h] {
                return Err(Error::Shape {
                    op: "gru bias",
                    left: vec![h],
                    right: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

impl ParamSet for GruParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_z"), &self.w_z);
        f(join(prefix, "w_r"), &self.w_r);
        f(join(prefix, "w_h"), &self.w_h);
        f(join(prefix, "b_z"), &self.b_z);
        f(join(prefix, "b_r"), &self.b_r);
        f(join(prefix, "b_h"), &self.b_h);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "w_z"), &mut self.w_z);
        f(join(prefix, "w_r"), &mut self.w_r);
        f(join(prefix, "w_h"), &mut self.w_h);
        f(join(prefix, "b_z"), &mut self.b_z);
        f(join(prefix, "b_r"), &mut self.b_r);
        f(join(prefix, "b_h"), &mut self.b_h);
    }
}

/// Activations of one GRU step.
#[derive(Clone, Debug)]
pub struct GruStepCache {
    h_prev: Vec<f64>,
    /// `[h_prev, x]`
    joint: Vec<f64>,
    /// `[r ⊙ h_prev, x]` (or `joint` in literal form)
    candidate_input: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    candidate: Vec<f64>,
}

impl GruStepCache {
    pub fn update_gate(&self) -> &[f64] {
        &self.z
    }

    pub fn reset_gate(&self) -> &[f64] {
        &self.r
    }

    pub fn candidate(&self) -> &[f64] {
        &self.candidate
    }
}

fn check_step_shapes(op: &'static str, hidden: usize, input: usize, h_prev: &[f64], x: &[f64]) -> Result<()> {
    if h_prev.len() != hidden || x.len() != input {
        return Err(Error::Shape {
            op,
            left: vec![hidden, input],
            right: vec![h_prev.len(), x.len()],
        });
    }
    Ok(())
}

pub(crate) fn step(p: &GruParams, h_prev: &[f64], x: &[f64]) -> Result<(Vec<f64>, GruStepCache)> {
    let h = p.hidden_width();
    check_step_shapes("gru_step", h, p.input_width(), h_prev, x)?;
    let cols = p.w_z.shape()[1];
    let mut joint = Vec::with_capacity(cols);
    joint.extend_from_slice(h_prev);
    joint.extend_from_slice(x);

    let bias = |b: &Tensor, i: usize| if p.use_bias { b.data()[i] } else { 0.0 };

    let mut z = vec![0.0; h];
    let mut r = vec![0.0; h];
    kernels::gemv(p.w_z.data(), cols, &joint, &mut z);
    kernels::gemv(p.w_r.data(), cols, &joint, &mut r);
    for i in 0..h {
        z[i] = sigmoid_scalar(z[i] + bias(&p.b_z, i));
        r[i] = sigmoid_scalar(r[i] + bias(&p.b_r, i));
    }

    let candidate_input = match p.form {
        CandidateForm::Standard => {
            let mut u = joint.clone();
            for i in 0..h {
                u[i] *= r[i];
            }
            u
        }
        CandidateForm::Literal => joint.clone(),
    };
    let mut candidate = vec![0.0; h];
    kernels::gemv(p.w_h.data(), cols, &candidate_input, &mut candidate);
    for i in 0..h {
        candidate[i] = (candidate[i] + bias(&p.b_h, i)).tanh();
    }

    let h_new: Vec<f64> = (0..h)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
        .collect();
    Ok((
        h_new,
        GruStepCache {
            h_prev: h_prev.to_vec(),
            joint,
            candidate_input,
            z,
            r,
            candidate,
        },
    ))
}

/// Backward of one step. Accumulates into `grads`; returns `(dh_prev, dx)`.
pub(crate) fn step_backward(
    p: &GruParams,
    cache: &GruStepCache,
    dh: &[f64],
    grads: &mut GruParams,
) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden_width();
    let cols = p.w_z.shape()[1];
    let mut d_joint = vec![0.0; cols];
    let mut dh_prev = vec![0.0; h];

    let mut da_h = vec![0.0; h];
    let mut da_z = vec![0.0; h];
    for i in 0..h {
        let z = cache.z[i];
        let c = cache.candidate[i];
        dh_prev[i] = dh[i] * (1.0 - z);
        da_h[i] = dh[i] * z * (1.0 - c * c);
        da_z[i] = dh[i] * (c - cache.h_prev[i]) * z * (1.0 - z);
    }

    kernels::outer_acc(grads.w_h.data_mut(), &da_h, &cache.candidate_input);
    let mut d_cand_in = vec![0.0; cols];
    kernels::gemv_t_acc(p.w_h.data(), cols, &da_h, &mut d_cand_in);

    let mut da_r = vec![0.0; h];
    match p.form {
        CandidateForm::Standard => {
            for i in 0..h {
                let r = cache.r[i];
                da_r[i] = d_cand_in[i] * cache.h_prev[i] * r * (1.0 - r);
                dh_prev[i] += d_cand_in[i] * r;
            }
            d_joint[h..].copy_from_slice(&d_cand_in[h..]);
        }
        CandidateForm::Literal => {
            // reset gate does not reach the output
            d_joint.copy_from_slice(&d_cand_in);
        }
    }

    kernels::outer_acc(grads.w_z.data_mut(), &da_z, &cache.joint);
    kernels::outer_acc(grads.w_r.data_mut(), &da_r, &cache.joint);
    kernels::gemv_t_acc(p.w_z.data(), cols, &da_z, &mut d_joint);
    kernels::gemv_t_acc(p.w_r.data(), cols, &da_r, &mut d_joint);
    if p.use_bias {
        kernels::axpy(grads.b_z.data_mut(), 1.0, &da_z);
        kernels::axpy(grads.b_r.data_mut(), 1.0, &da_r);
        kernels::axpy(grads.b_h.data_mut(), 1.0, &da_h);
    }

    for i in 0..h {
        dh_prev[i] += d_joint[i];
    }
    (dh_prev, d_joint[h..].to_vec())
}

/// One GRU step on `h_prev[h]` and `x[d]`.
pub fn gru_step(params: &GruParams, h_prev: &Tensor, x: &Tensor) -> Result<(Tensor, GruStepCache)> {
    let (h, cache) = step(params, h_prev.data(), x.data())?;
    Ok((Tensor::vector(h), cache))
}
