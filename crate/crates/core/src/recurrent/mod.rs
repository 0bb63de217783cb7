//! GRU and LSTM cells, sequence unrolling and backpropagation through time.
//!
//! Both cells read the concatenated vector `[h_prev, x]` (previous state
//! first). A GRU step computes
//!
//! ```text
//! z  = σ(W_z·[h, x] + b_z)
//! r  = σ(W_r·[h, x] + b_r)
//! h̃  = tanh(W_h·[r ⊙ h, x] + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! and an LSTM step `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.

mod gradcheck;
mod gru;
mod lstm;

pub use gradcheck::{gradient_check, relative_error, tensor_relative_error, GradCheckConfig, GradCheckReport, ParamCheck};
pub use gru::{gru_step, CandidateForm, GruParams, GruStepCache};
pub use lstm::{lstm_step, LstmParams, LstmStepCache};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor;
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

/// One recurrent layer.
#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentParams {
    Gru(GruParams),
    Lstm(LstmParams),
}

impl RecurrentParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, kind: CellKind, input: usize, hidden: usize) -> Self {
        match kind {
            CellKind::Gru => RecurrentParams::Gru(GruParams::init(rng, input, hidden)),
            CellKind::Lstm => RecurrentParams::Lstm(LstmParams::init(rng, input, hidden)),
        }
    }

    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        match kind {
            CellKind::Gru => RecurrentParams::Gru(GruParams::zeros(input, hidden)),
            CellKind::Lstm => RecurrentParams::Lstm(LstmParams::zeros(input, hidden)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            RecurrentParams::Gru(_) => CellKind::Gru,
            RecurrentParams::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            RecurrentParams::Gru(p) => p.input_width(),
            RecurrentParams::Lstm(p) => p.input_width(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self {
            RecurrentParams::Gru(p) => p.hidden_width(),
            RecurrentParams::Lstm(p) => p.hidden_width(),
        }
    }

    /// Zero-valued gradient container with the same structure.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero();
        g
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RecurrentParams::Gru(p) => p.validate(),
            RecurrentParams::Lstm(p) => p.validate(),
        }
    }
}

impl ParamSet for RecurrentParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        match self {
            RecurrentParams::Gru(p) => p.visit(prefix, f),
            RecurrentParams::Lstm(p) => p.visit(prefix, f),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        match self {
            RecurrentParams::Gru(p) => p.visit_mut(prefix, f),
            RecurrentParams::Lstm(p) => p.visit_mut(prefix, f),
        }
    }
}

#[derive(Clone, Debug)]
enum StepRecord {
    Gru(GruStepCache),
    Lstm(LstmStepCache),
}

/// Per-timestep records from [`unroll_forward`], consumed by [`bptt_backward`].
#[derive(Clone, Debug)]
pub struct UnrollCache {
    kind: CellKind,
    input_width: usize,
    hidden: usize,
    steps: Vec<StepRecord>,
}

impl UnrollCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Gradients produced by [`bptt_backward`].
#[derive(Clone, Debug)]
pub struct BpttGrads {
    pub params: RecurrentParams,
    pub inputs: Tensor,
    pub h0: Tensor,
    /// Present for LSTM layers.
    pub c0: Option<Tensor>,
}

fn initial_state(state: Option<&Tensor>, hidden: usize, what: &'static str) -> Result<Vec<f64>> {
    match state {
        None => Ok(vec![0.0; hidden]),
        Some(t) if t.len() == hidden => Ok(t.data().to_vec()),
        Some(t) => Err(Error::Shape {
            op: what,
            left: vec![hidden],
            right: t.shape().to_vec(),
        }),
    }
}

/// Runs the cell over `inputs[T×d]`. Missing initial states are zero.
pub fn unroll_forward(
    layer: &RecurrentParams,
    inputs: &Tensor,
    h0: Option<&Tensor>,
    c0: Option<&Tensor>,
) -> Result<(Tensor, UnrollCache)> {
    if inputs.rank() != 2 || inputs.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    let d = layer.input_width();
    let hidden = layer.hidden_width();
    if inputs.shape()[1] != d {
        return Err(Error::Shape {
            op: "unroll_forward",
            left: vec![inputs.rows(), d],
            right: inputs.shape().to_vec(),
        });
    }
    let t_len = inputs.rows();
    let mut h = initial_state(h0, hidden, "unroll_forward h0")?;
    let mut c = initial_state(c0, hidden, "unroll_forward c0")?;
    let mut outputs = Vec::with_capacity(t_len * hidden);
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let x = inputs.row(t);
        match layer {
            RecurrentParams::Gru(p) => {
                let (h_new, cache) = gru::step(p, &h, x)?;
                h = h_new;
                steps.push(StepRecord::Gru(cache));
            }
            RecurrentParams::Lstm(p) => {
                let (h_new, c_new, cache) = lstm::step(p, &h, &c, x)?;
                h = h_new;
                c = c_new;
                steps.push(StepRecord::Lstm(cache));
            }
        }
        outputs.extend_from_slice(&h);
    }
    Ok((
        Tensor::new(&[t_len, hidden], outputs)?,
        UnrollCache {
            kind: layer.kind(),
            input_width: d,
            hidden,
            steps,
        },
    ))
}

/// Reverse-mode gradients of `sum(grad_outputs ⊙ outputs)` for the pass that produced `cache`.
pub fn bptt_backward(layer: &RecurrentParams, cache: &UnrollCache, grad_outputs: &Tensor) -> Result<BpttGrads> {
    if cache.kind != layer.kind() || cache.input_width != layer.input_width() || cache.hidden != layer.hidden_width() {
        return Err(Error::CacheMismatch("cache was produced by a different layer".into()));
    }
    let t_len = cache.steps.len();
    let hidden = cache.hidden;
    if grad_outputs.shape() != [t_len, hidden] {
        return Err(Error::CacheMismatch(format!(
            "cache covers {t_len} steps of width {hidden}, gradient has shape {:?}",
            grad_outputs.shape()
        )));
    }
    let mut grads = layer.zeros_like();
    let mut d_inputs = Tensor::zeros(&[t_len, cache.input_width]);
    let mut dh_carry = vec![0.0; hidden];
    let mut dc_carry = vec![0.0; hidden];
    for t in (0..t_len).rev() {
        let dh: Vec<f64> = grad_outputs
            .row(t)
            .iter()
            .zip(&dh_carry)
            .map(|(a, b)| a + b)
            .collect();
        let dx = match (layer, &mut grads, &cache.steps[t]) {
            (RecurrentParams::Gru(p), RecurrentParams::Gru(g), StepRecord::Gru(c)) => {
                let (dh_prev, dx) = gru::step_backward(p, c, &dh, g);
                dh_carry = dh_prev;
                dx
            }
            (RecurrentParams::Lstm(p), RecurrentParams::Lstm(g), StepRecord::Lstm(c)) => {
                let (dh_prev, dc_prev, dx) = lstm::step_backward(p, c, &dh, &dc_carry, g);
                dh_carry = dh_prev;
                dc_carry = dc_prev;
                dx
            }
            _ => return Err(Error::CacheMismatch("cell kind changed".into())),
        };
        d_inputs.row_mut(t).copy_from_slice(&dx);
    }
    let c0 = (layer.kind() == CellKind::Lstm).then(|| Tensor::vector(dc_carry));
    Ok(BpttGrads {
        params: grads,
        inputs: d_inputs,
        h0: Tensor::vector(dh_carry),
        c0,
    })
}

/// Layers applied in sequence, each consuming the full output sequence of the previous one.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentStack {
    pub layers: Vec<RecurrentParams>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<UnrollCache>,
}

impl RecurrentStack {
    /// Builds a stack from cell kinds; the first layer reads `input` features, every layer has `hidden` units.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, kinds: &[CellKind], input: usize, hidden: usize) -> Self {
        let layers = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| RecurrentParams::init(rng, k, if i == 0 { input } else { hidden }, hidden))
            .collect();
        RecurrentStack { layers }
    }

    pub fn zeros(kinds: &[CellKind], input: usize, hidden: usize) -> Self {
        let layers = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| RecurrentParams::zeros(k, if i == 0 { input } else { hidden }, hidden))
            .collect();
        RecurrentStack { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty stack").hidden_width()
    }

    pub fn zeros_like(&self) -> Self {
        RecurrentStack {
            layers: self.layers.iter().map(RecurrentParams::zeros_like).collect(),
        }
    }

    /// Checks that each layer's input width equals the previous layer's hidden width.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("empty recurrent stack".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].hidden_width() != pair[1].input_width() {
                return Err(Error::Shape {
                    op: "recurrent stack chain",
                    left: vec![pair[0].hidden_width()],
                    right: vec![pair[1].input_width()],
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Tensor) -> Result<(Tensor, StackCache)> {
        let mut x = inputs.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = unroll_forward(layer, &x, None, None)?;
            caches.push(cache);
            x = out;
        }
        Ok((x, StackCache { layers: caches }))
    }

    /// Returns parameter gradients and the gradient with respect to the stack input.
    pub fn backward(&self, cache: &StackCache, grad_outputs: &Tensor) -> Result<(RecurrentStack, Tensor)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::CacheMismatch("stack depth differs from cache".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_outputs.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let out = bptt_backward(layer, c, &g)?;
            grads.push(out.params);
            g = out.inputs;
        }
        grads.reverse();
        Ok((RecurrentStack { layers: grads }, g))
    }
}

impl ParamSet for RecurrentStack {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.layers.visit(prefix, f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        self.layers.visit_mut(prefix, f);
    }
}

/// Final row of a `T×h` output sequence.
pub fn last_step(outputs: &Tensor) -> Vec<f64> {
    outputs.row(outputs.rows() - 1).to_vec()
}

/// `T×h` gradient that is zero except for the final row.
pub fn last_step_grad(steps: usize, grad: &[f64]) -> Tensor {
    let mut g = Tensor::zeros(&[steps, grad.len()]);
    g.row_mut(steps - 1).copy_from_slice(grad);
    g
}

#[cfg(test)]
mod tests;
