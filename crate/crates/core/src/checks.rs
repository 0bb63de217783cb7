//! Finite-difference gradient-check suites.
//!
//! Each suite draws parameters uniformly from `[-PARAM_SCALE, PARAM_SCALE]`
//! and inputs from fixed seeded streams, then compares the analytic gradient
//! of a random linear projection of the outputs against central differences.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::featurestreams::{tinycnn_backward, tinycnn_forward, FrameGeometry, TinyCnnParams, KEYPOINT_WIDTH};
use crate::linalg::{kernels, Tensor};
use crate::model::{ModelInput, ModelParams, Phase, ThreeStreamConfig, ThreeStreamModel};
use crate::params::ParamSet;
use crate::recurrent::{
    bptt_backward, gradient_check, unroll_forward, CellKind, GradCheckConfig, GradCheckReport, RecurrentParams,
    RecurrentStack,
};
use crate::rng::{substream, StageRng};

/// Half-width of the uniform distribution parameters are drawn from.
pub const PARAM_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradScope {
    Gru,
    Lstm,
    Stack,
    Cnn,
    Model,
    All,
}

impl GradScope {
    pub const NAMES: [&'static str; 6] = ["gru", "lstm", "stack", "cnn", "model", "all"];

    fn expand(self) -> Vec<GradScope> {
        match self {
            GradScope::All => vec![GradScope::Gru, GradScope::Lstm, GradScope::Stack, GradScope::Cnn, GradScope::Model],
            s => vec![s],
        }
    }
}

impl FromStr for GradScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gru" => GradScope::Gru,
            "lstm" => GradScope::Lstm,
            "stack" => GradScope::Stack,
            "cnn" => GradScope::Cnn,
            "model" => GradScope::Model,
            "all" => GradScope::All,
            _ => {
                return Err(Error::Config(format!(
                    "unknown gradient-check scope {s:?}; expected one of {}",
                    GradScope::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for GradScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GradScope::Gru => "gru",
            GradScope::Lstm => "lstm",
            GradScope::Stack => "stack",
            GradScope::Cnn => "cnn",
            GradScope::Model => "model",
            GradScope::All => "all",
        };
        f.write_str(name)
    }
}

/// Overwrites every parameter with a uniform draw from `[-scale, scale]`.
pub fn randomize<P: ParamSet, R: Rng + ?Sized>(params: &mut P, rng: &mut R, scale: f64) {
    params.visit_mut("", &mut |_, t| {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    });
}

fn uniform(rng: &mut StageRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches data")
}

fn project(weights: &[f64], values: &[f64]) -> f64 {
    kernels::dot(weights, values)
}

/// One recurrent cell over a single step (`h = d = 8`).
fn check_cell(kind: CellKind, seed: u64) -> Result<GradCheckReport> {
    let (d, h) = (8, 8);
    let mut rng = substream(seed, "gradcheck-cell");
    let mut layer = RecurrentParams::zeros(kind, d, h);
    randomize(&mut layer, &mut rng, PARAM_SCALE);
    let x = uniform(&mut rng, &[1, d], -1.0, 1.0);
    let h0 = uniform(&mut rng, &[h], -1.0, 1.0);
    let c0 = (kind == CellKind::Lstm).then(|| uniform(&mut rng, &[h], -1.0, 1.0));
    let w = uniform(&mut rng, &[1, h], -1.0, 1.0);
    let objective = |p: &RecurrentParams| {
        let (out, _) = unroll_forward(p, &x, Some(&h0), c0.as_ref()).expect("valid shapes");
        project(w.data(), out.data())
    };
    let (_, cache) = unroll_forward(&layer, &x, Some(&h0), c0.as_ref())?;
    let grads = bptt_backward(&layer, &cache, &w)?;
    gradient_check(objective, &layer, &grads.params, GradCheckConfig::default())
}

/// LSTM → GRU → LSTM stack, `T = 8`, `h = d = 8`.
fn check_stack(seed: u64) -> Result<GradCheckReport> {
    let (t, d, h) = (8, 8, 8);
    let mut rng = substream(seed, "gradcheck-stack");
    let mut stack = RecurrentStack::zeros(&[CellKind::Lstm, CellKind::Gru, CellKind::Lstm], d, h);
    randomize(&mut stack, &mut rng, PARAM_SCALE);
    let x = uniform(&mut rng, &[t, d], -1.0, 1.0);
    let w = uniform(&mut rng, &[t, h], -1.0, 1.0);
    let objective = |p: &RecurrentStack| project(w.data(), p.forward(&x).expect("valid shapes").0.data());
    let (_, cache) = stack.forward(&x)?;
    let (grads, _) = stack.backward(&cache, &w)?;
    gradient_check(objective, &stack, &grads, GradCheckConfig::default())
}

/// TinyCNN on 8×8 single-channel frames.
fn check_cnn(seed: u64) -> Result<GradCheckReport> {
    let g = FrameGeometry::square(8, 1);
    let features = 4;
    let mut rng = substream(seed, "gradcheck-cnn");
    let mut cnn = TinyCnnParams::zeros(g, features)?;
    randomize(&mut cnn, &mut rng, PARAM_SCALE);
    let frames = uniform(&mut rng, &[2, 8, 8, 1], 0.0, 1.0);
    let w = uniform(&mut rng, &[2, features], -1.0, 1.0);
    let objective = |p: &TinyCnnParams| project(w.data(), tinycnn_forward(p, &frames).expect("valid shapes").0.features.data());
    let (_, cache) = tinycnn_forward(&cnn, &frames)?;
    let (grads, _) = tinycnn_backward(&cnn, &cache, &w)?;
    gradient_check(objective, &cnn, &grads, GradCheckConfig::default())
}

/// Full three-stream toy model (4 frames of 16×16, width 8), dropout mask held fixed.
fn check_model(seed: u64) -> Result<GradCheckReport> {
    let cfg = ThreeStreamConfig::toy();
    let mut rng = substream(seed, "gradcheck-model");
    let mut params = ThreeStreamModel::zeros(cfg.clone())?.params().clone();
    randomize(&mut params, &mut rng, PARAM_SCALE);
    let model = ThreeStreamModel::from_params(cfg.clone(), params)?;
    let g = cfg.geometry;
    let frames = uniform(&mut rng, &[cfg.frames, g.height, g.width, g.channels], 0.0, 1.0);
    let keypoints = uniform(&mut rng, &[cfg.frames, KEYPOINT_WIDTH], 0.0, 1.0);
    let w = uniform(&mut rng, &[cfg.classes], -1.0, 1.0);
    let input = ModelInput {
        frames: Some(&frames),
        features: None,
        keypoints: Some(&keypoints),
    };
    let run = |m: &ThreeStreamModel| {
        let mut dropout = substream(seed, "gradcheck-dropout");
        m.forward(&input, Phase::Train(&mut dropout))
    };
    let out = run(&model)?;
    let grads = model.backward(&out.cache, w.data())?;
    let objective = |p: &ModelParams| {
        let m = ThreeStreamModel::from_params(cfg.clone(), p.clone()).expect("same configuration");
        project(w.data(), &run(&m).expect("valid input").logits)
    };
    gradient_check(objective, model.params(), &grads, GradCheckConfig::default())
}

/// Runs every suite in `scope`, returning `(suite name, report)` pairs.
pub fn run_gradient_checks(scope: GradScope, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    scope
        .expand()
        .into_iter()
        .map(|s| {
            let report = match s {
                GradScope::Gru => check_cell(CellKind::Gru, seed)?,
                GradScope::Lstm => check_cell(CellKind::Lstm, seed)?,
                GradScope::Stack => check_stack(seed)?,
                GradScope::Cnn => check_cnn(seed)?,
                GradScope::Model => check_model(seed)?,
                GradScope::All => unreachable!("expanded"),
            };
            Ok((s.to_string(), report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_names_round_trip() {
        for name in GradScope::NAMES {
            assert_eq!(name.parse::<GradScope>().unwrap().to_string(), name);
        }
        assert!("conv".parse::<GradScope>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        for scope in [GradScope::Gru, GradScope::Lstm, GradScope::Stack, GradScope::Cnn] {
            for (name, report) in run_gradient_checks(scope, 0).unwrap() {
                assert!(report.passed(), "{name}: {:?}", report.failures().collect::<Vec<_>>());
            }
        }
    }
}
