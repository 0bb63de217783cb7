use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{kernels, sigmoid_scalar, Tensor};
use crate::params::{join, xavier_uniform, ParamSet};

/// LSTM weights: forget, input and output gates plus the cell candidate `g`.
/// Each matrix is `hidden × (hidden + input)` and multiplies `[h_prev, x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        LstmParams {
            w_f: w.clone(),
            w_i: w.clone(),
            w_o: w.clone(),
            w_g: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_o: b.clone(),
            b_g: b,
        }
    }

    /// Xavier weights, zero biases except the forget bias which starts at 1.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let fan_in = hidden + input;
        LstmParams {
            w_f: xavier_uniform(rng, hidden, fan_in),
            w_i: xavier_uniform(rng, hidden, fan_in),
            w_o: xavier_uniform(rng, hidden, fan_in),
            w_g: xavier_uniform(rng, hidden, fan_in),
            b_f: Tensor::filled(&[hidden], 1.0),
            ..LstmParams::zeros(input, hidden)
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w_f.shape()[0]
    }

    pub fn input_width(&self) -> usize {
        self.w_f.shape()[1] - self.hidden_width()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_width();
        for w in [&self.w_i, &self.w_o, &self.w_g] {
            w.check_same("lstm weights", &self.w_f)?;
        }
        for b in [&self.b_f, &self.b_i, &self.b_o, &self.b_g] {
            if b.shape() != [h] {
                return Err(Error::Shape {
                    op: "lstm bias",
                    left: vec![h],
                    right: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

impl ParamSet for LstmParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_f"), &self.w_f);
        f(join(prefix, "w_i"), &self.w_i);
        f(join(prefix, "w_o"), &self.w_o);
        f(join(prefix, "w_g"), &self.w_g);
        f(join(prefix, "b_f"), &self.b_f);
        f(join(prefix, "b_i"), &self.b_i);
        f(join(prefix, "b_o"), &self.b_o);
        f(join(prefix, "b_g"), &self.b_g);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "w_f"), &mut self.w_f);
        f(join(prefix, "w_i"), &mut self.w_i);
        f(join(prefix, "w_o"), &mut self.w_o);
        f(join(prefix, "w_g"), &mut self.w_g);
        f(join(prefix, "b_f"), &mut self.b_f);
        f(join(prefix, "b_i"), &mut self.b_i);
        f(join(prefix, "b_o"), &mut self.b_o);
        f(join(prefix, "b_g"), &mut self.b_g);
    }
}

#[derive(Clone, Debug)]
pub struct LstmStepCache {
    joint: Vec<f64>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmStepCache {
    pub fn forget_gate(&self) -> &[f64] {
        &self.f
    }

    pub fn input_gate(&self) -> &[f64] {
        &self.i
    }

    pub fn output_gate(&self) -> &[f64] {
        &self.o
    }

    pub fn cell_candidate(&self) -> &[f64] {
        &self.g
    }
}

pub(crate) fn step(
    p: &LstmParams,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
    let h = p.hidden_width();
    if h_prev.len() != h || c_prev.len() != h || x.len() != p.input_width() {
        return Err(Error::Shape {
            op: "lstm_step",
            left: vec![h, h, p.input_width()],
            right: vec![h_prev.len(), c_prev.len(), x.len()],
        });
    }
    let cols = p.w_f.shape()[1];
    let mut joint = Vec::with_capacity(cols);
    joint.extend_from_slice(h_prev);
    joint.extend_from_slice(x);

    let gate = |w: &Tensor, b: &Tensor, act: fn(f64) -> f64| {
        let mut a = vec![0.0; h];
        kernels::gemv(w.data(), cols, &joint, &mut a);
        for (ai, bi) in a.iter_mut().zip(b.data()) {
            *ai = act(*ai + bi);
        }
        a
    };
    let f = gate(&p.w_f, &p.b_f, sigmoid_scalar);
    let i = gate(&p.w_i, &p.b_i, sigmoid_scalar);
    let o = gate(&p.w_o, &p.b_o, sigmoid_scalar);
    let g = gate(&p.w_g, &p.b_g, f64::tanh);

    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    Ok((
        h_new,
        c,
        LstmStepCache {
            joint,
            c_prev: c_prev.to_vec(),
            f,
            i,
            o,
            g,
            tanh_c,
        },
    ))
}

/// Backward of one step given the gradients reaching `h_t` and `c_t`.
/// Returns `(dh_prev, dc_prev, dx)`.
pub(crate) fn step_backward(
    p: &LstmParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc_next: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden_width();
    let cols = p.w_f.shape()[1];
    let mut da_f = vec![0.0; h];
    let mut da_i = vec![0.0; h];
    let mut da_o = vec![0.0; h];
    let mut da_g = vec![0.0; h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let (f, i, o, g, tc) = (cache.f[k], cache.i[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
        da_o[k] = dh[k] * tc * o * (1.0 - o);
        da_f[k] = dc * cache.c_prev[k] * f * (1.0 - f);
        da_i[k] = dc * g * i * (1.0 - i);
        da_g[k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }

    let mut d_joint = vec![0.0; cols];
    for (w, dw, db, da) in [
        (&p.w_f, &mut grads.w_f, &mut grads.b_f, &da_f),
        (&p.w_i, &mut grads.w_i, &mut grads.b_i, &da_i),
        (&p.w_o, &mut grads.w_o, &mut grads.b_o, &da_o),
        (&p.w_g, &mut grads.w_g, &mut grads.b_g, &da_g),
    ] {
        kernels::outer_acc(dw.data_mut(), da, &cache.joint);
        kernels::axpy(db.data_mut(), 1.0, da);
        kernels::gemv_t_acc(w.data(), cols, da, &mut d_joint);
    }
    let dx = d_joint.split_off(h);
    (d_joint, dc_prev, dx)
}

/// One LSTM step. Returns `(h_new, c_new, cache)`.
pub fn lstm_step(
    params: &LstmParams,
    h_prev: &Tensor,
    c_prev: &Tensor,
    x: &Tensor,
) -> Result<(Tensor, Tensor, LstmStepCache)> {
    let (h, c, cache) = step(params, h_prev.data(), c_prev.data(), x.data())?;
    Ok((Tensor::vector(h), Tensor::vector(c), cache))
}
