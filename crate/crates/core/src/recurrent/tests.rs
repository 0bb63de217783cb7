use super::*;
use crate::recurrent::gradcheck::{gradient_check, GradCheckConfig};
use crate::rng::substream;
use proptest::prelude::*;
use rand::Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar GRU written out longhand; weights are `[w_h, w_x]`.
fn gru_scalar(wz: [f64; 2], wr: [f64; 2], wh: [f64; 2], h: f64, x: f64) -> f64 {
    let z = sig(wz[0] * h + wz[1] * x);
    let r = sig(wr[0] * h + wr[1] * x);
    let c = (wh[0] * r * h + wh[1] * x).tanh();
    (1.0 - z) * h + z * c
}

fn scalar_gru(wz: [f64; 2], wr: [f64; 2], wh: [f64; 2]) -> GruParams {
    let mut p = GruParams::zeros(1, 1);
    p.w_z.data_mut().copy_from_slice(&wz);
    p.w_r.data_mut().copy_from_slice(&wr);
    p.w_h.data_mut().copy_from_slice(&wh);
    p
}

fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn gru_zero_weights() {
    let p = GruParams::zeros(3, 2);
    let (h, cache) = gru_step(&p, &Tensor::zeros(&[2]), &Tensor::vector(vec![0.3, -2.0, 5.0])).unwrap();
    assert_eq!(cache.update_gate(), &[0.5, 0.5]);
    assert_eq!(cache.reset_gate(), &[0.5, 0.5]);
    assert_eq!(cache.candidate(), &[0.0, 0.0]);
    assert_eq!(h.data(), &[0.0, 0.0]);
}

#[test]
fn gru_scalar_hand_oracle() {
    let p = scalar_gru([0.5, 0.5], [0.5, 0.5], [0.5, 0.5]);
    let (h, cache) = gru_step(&p, &Tensor::zeros(&[1]), &Tensor::vector(vec![1.0])).unwrap();
    let z = sig(0.5);
    let cand = 0.5f64.tanh();
    assert!((cache.update_gate()[0] - 0.62246).abs() < 1e-5);
    assert!((cache.reset_gate()[0] - 0.62246).abs() < 1e-5);
    assert!((cache.candidate()[0] - 0.46212).abs() < 1e-5);
    // σ(0.5)·tanh(0.5) = 0.2876491
    assert!((h.data()[0] - z * cand).abs() < 1e-12);
    assert!((h.data()[0] - 0.2876491).abs() < 1e-5);
}

#[test]
fn gru_closed_update_gate_is_identity() {
    let mut rng = substream(11, "gru-closed");
    let mut p = GruParams::init(&mut rng, 3, 4);
    p.b_z.fill(-800.0);
    let h_prev = random_tensor(&mut rng, &[4]);
    let (h, _) = gru_step(&p, &h_prev, &random_tensor(&mut rng, &[3])).unwrap();
    assert_eq!(h, h_prev);
}

#[test]
fn gru_literal_form_ignores_reset_gate() {
    let mut p = scalar_gru([0.5, 0.5], [3.0, -2.0], [0.5, 0.5]);
    p.form = CandidateForm::Literal;
    let (_, cache) = gru_step(&p, &Tensor::vector(vec![0.4]), &Tensor::vector(vec![1.0])).unwrap();
    assert!((cache.candidate()[0] - (0.5f64 * 0.4 + 0.5).tanh()).abs() < 1e-15);
}

#[test]
fn gru_no_bias_mode_matches_bias_free_equations() {
    let mut rng = substream(5, "nobias");
    let mut p = scalar_gru([0.3, -0.2], [0.1, 0.4], [0.9, -0.7]);
    p.b_z.fill(rng.random_range(1.0..2.0));
    p.b_h.fill(3.0);
    p.use_bias = false;
    let (h, _) = gru_step(&p, &Tensor::vector(vec![0.25]), &Tensor::vector(vec![-0.5])).unwrap();
    let expected = gru_scalar([0.3, -0.2], [0.1, 0.4], [0.9, -0.7], 0.25, -0.5);
    assert!((h.data()[0] - expected).abs() < 1e-15);
}

#[test]
fn gru_step_shape_error() {
    let p = GruParams::zeros(3, 2);
    assert!(gru_step(&p, &Tensor::zeros(&[3]), &Tensor::zeros(&[3])).is_err());
}

#[test]
fn lstm_zero_params() {
    let p = LstmParams::zeros(2, 1);
    let x = Tensor::vector(vec![0.7, -0.1]);
    let (h, c, cache) = lstm_step(&p, &Tensor::zeros(&[1]), &Tensor::zeros(&[1]), &x).unwrap();
    assert_eq!(cache.forget_gate(), &[0.5]);
    assert_eq!(cache.input_gate(), &[0.5]);
    assert_eq!(cache.output_gate(), &[0.5]);
    assert_eq!(cache.cell_candidate(), &[0.0]);
    assert_eq!((h.data()[0], c.data()[0]), (0.0, 0.0));

    let (h, c, _) = lstm_step(&p, &Tensor::zeros(&[1]), &Tensor::vector(vec![1.0]), &x).unwrap();
    assert_eq!(c.data()[0], 0.5);
    assert!((h.data()[0] - 0.23106).abs() < 1e-5);
    assert!((h.data()[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
}

#[test]
fn lstm_saturated_gates_retain_memory() {
    let mut rng = substream(2, "lstm-sat");
    let mut p = LstmParams::init(&mut rng, 3, 4);
    p.b_f.fill(800.0);
    p.b_i.fill(-800.0);
    p.b_o.fill(-800.0);
    let c_prev = random_tensor(&mut rng, &[4]);
    let (h, c, _) = lstm_step(&p, &random_tensor(&mut rng, &[4]), &c_prev, &random_tensor(&mut rng, &[3])).unwrap();
    assert_eq!(c, c_prev);
    assert!(h.data().iter().all(|&v| v == 0.0));
}

#[test]
fn unroll_single_step_equals_step() {
    let mut rng = substream(3, "unroll1");
    let layer = RecurrentParams::init(&mut rng, CellKind::Gru, 2, 3);
    let x = random_tensor(&mut rng, &[1, 2]);
    let (out, cache) = unroll_forward(&layer, &x, None, None).unwrap();
    let RecurrentParams::Gru(p) = &layer else { unreachable!() };
    let (h, _) = gru_step(p, &Tensor::zeros(&[3]), &Tensor::vector(x.row(0).to_vec())).unwrap();
    assert_eq!(out.row(0), h.data());
    assert_eq!(cache.len(), 1);
}

#[test]
fn unroll_zero_gru_outputs_zero() {
    let layer = RecurrentParams::zeros(CellKind::Gru, 2, 3);
    let mut rng = substream(4, "zero");
    let (out, _) = unroll_forward(&layer, &random_tensor(&mut rng, &[6, 2]), None, None).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn unroll_matches_chained_scalar_oracle() {
    let mut rng = substream(6, "chain");
    let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (wz, wr, wh) = ([w[0], w[1]], [w[2], w[3]], [w[4], w[5]]);
    let layer = RecurrentParams::Gru(scalar_gru(wz, wr, wh));
    let xs = [0.3, -1.2, 0.8];
    let inputs = Tensor::new(&[3, 1], xs.to_vec()).unwrap();
    let (out, _) = unroll_forward(&layer, &inputs, Some(&Tensor::vector(vec![0.1])), None).unwrap();
    let mut h = 0.1;
    for (t, &x) in xs.iter().enumerate() {
        h = gru_scalar(wz, wr, wh, h, x);
        assert!((out.row(t)[0] - h).abs() < 1e-14);
    }
}

#[test]
fn unroll_rejects_empty_and_bad_width() {
    let layer = RecurrentParams::zeros(CellKind::Lstm, 2, 3);
    assert!(matches!(
        unroll_forward(&layer, &Tensor::zeros(&[4]), None, None),
        Err(Error::EmptySequence)
    ));
    assert!(unroll_forward(&layer, &Tensor::zeros(&[4, 3]), None, None).is_err());
}

#[test]
fn bptt_zero_upstream_gives_zero_grads() {
    let mut rng = substream(7, "zero-grad");
    for kind in [CellKind::Gru, CellKind::Lstm] {
        let layer = RecurrentParams::init(&mut rng, kind, 2, 3);
        let (_, cache) = unroll_forward(&layer, &random_tensor(&mut rng, &[5, 2]), None, None).unwrap();
        let g = bptt_backward(&layer, &cache, &Tensor::zeros(&[5, 3])).unwrap();
        assert!(g.params.flat_values().iter().all(|&v| v == 0.0));
        assert!(g.inputs.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn bptt_rejects_length_mismatch() {
    let layer = RecurrentParams::zeros(CellKind::Gru, 1, 1);
    let (_, cache) = unroll_forward(&layer, &Tensor::zeros(&[3, 1]), None, None).unwrap();
    assert!(matches!(
        bptt_backward(&layer, &cache, &Tensor::zeros(&[2, 1])),
        Err(Error::CacheMismatch(_))
    ));
}

#[test]
fn scalar_gru_gradient_matches_finite_difference() {
    let layer = RecurrentParams::Gru(scalar_gru([0.5, 0.5], [0.5, 0.5], [0.5, 0.5]));
    let inputs = Tensor::new(&[1, 1], vec![1.0]).unwrap();
    let (_, cache) = unroll_forward(&layer, &inputs, None, None).unwrap();
    let grads = bptt_backward(&layer, &cache, &Tensor::filled(&[1, 1], 1.0)).unwrap();
    let objective = |p: &RecurrentParams| unroll_forward(p, &inputs, None, None).unwrap().0.data()[0];
    let report = gradient_check(
        objective,
        &layer,
        &grads.params,
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-6,
        },
    )
    .unwrap();
    let wz = report.params.iter().find(|p| p.name == "w_z").unwrap();
    assert!(wz.max_element_rel_error < 1e-6, "{wz:?}");
}

fn stack_objective(stack: &RecurrentStack, inputs: &Tensor, weights: &Tensor) -> f64 {
    let (out, _) = stack.forward(inputs).unwrap();
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

fn check_stack(kinds: &[CellKind], t: usize, d: usize, h: usize, seed: u64) {
    let mut rng = substream(seed, "stack-check");
    let stack = RecurrentStack::init(&mut rng, kinds, d, h);
    let inputs = random_tensor(&mut rng, &[t, d]);
    let weights = random_tensor(&mut rng, &[t, h]);
    let (_, cache) = stack.forward(&inputs).unwrap();
    let (grads, d_inputs) = stack.backward(&cache, &weights).unwrap();
    let report = gradient_check(
        |s: &RecurrentStack| stack_objective(s, &inputs, &weights),
        &stack,
        &grads,
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());

    let eps = 1e-5;
    for i in 0..inputs.len() {
        let mut plus = inputs.clone();
        plus.data_mut()[i] += eps;
        let mut minus = inputs.clone();
        minus.data_mut()[i] -= eps;
        let numeric =
            (stack_objective(&stack, &plus, &weights) - stack_objective(&stack, &minus, &weights)) / (2.0 * eps);
        let err = relative_error(d_inputs.data()[i], numeric);
        assert!(err < 1e-4, "input {i}: {} vs {numeric}", d_inputs.data()[i]);
    }
}

#[test]
fn two_layer_stacks_match_finite_differences() {
    check_stack(&[CellKind::Gru, CellKind::Gru], 4, 2, 3, 1);
    check_stack(&[CellKind::Lstm, CellKind::Lstm], 4, 2, 3, 2);
    check_stack(&[CellKind::Lstm, CellKind::Gru], 4, 2, 3, 3);
}

#[test]
fn literal_gru_gradients_match_finite_differences() {
    let mut rng = substream(9, "literal");
    let mut p = GruParams::init(&mut rng, 2, 3);
    p.form = CandidateForm::Literal;
    let stack = RecurrentStack {
        layers: vec![RecurrentParams::Gru(p)],
    };
    let inputs = random_tensor(&mut rng, &[4, 2]);
    let weights = random_tensor(&mut rng, &[4, 3]);
    let (_, cache) = stack.forward(&inputs).unwrap();
    let (grads, _) = stack.backward(&cache, &weights).unwrap();
    let report = gradient_check(
        |s: &RecurrentStack| stack_objective(s, &inputs, &weights),
        &stack,
        &grads,
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed());
    let w_r = report.params.iter().find(|c| c.name == "0.w_r").unwrap();
    assert_eq!(w_r.worst_analytic, 0.0);
}

#[test]
fn lstm_initial_state_gradients() {
    let mut rng = substream(10, "h0");
    let layer = RecurrentParams::init(&mut rng, CellKind::Lstm, 2, 3);
    let inputs = random_tensor(&mut rng, &[3, 2]);
    let h0 = random_tensor(&mut rng, &[3]);
    let c0 = random_tensor(&mut rng, &[3]);
    let weights = random_tensor(&mut rng, &[3, 3]);
    let f = |h0: &Tensor, c0: &Tensor| -> f64 {
        let (out, _) = unroll_forward(&layer, &inputs, Some(h0), Some(c0)).unwrap();
        out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = unroll_forward(&layer, &inputs, Some(&h0), Some(&c0)).unwrap();
    let g = bptt_backward(&layer, &cache, &weights).unwrap();
    let eps = 1e-5;
    for i in 0..3 {
        let (mut hp, mut hm) = (h0.clone(), h0.clone());
        hp.data_mut()[i] += eps;
        hm.data_mut()[i] -= eps;
        let n = (f(&hp, &c0) - f(&hm, &c0)) / (2.0 * eps);
        assert!(relative_error(g.h0.data()[i], n) < 1e-6);
        let (mut cp, mut cm) = (c0.clone(), c0.clone());
        cp.data_mut()[i] += eps;
        cm.data_mut()[i] -= eps;
        let n = (f(&h0, &cp) - f(&h0, &cm)) / (2.0 * eps);
        assert!(relative_error(g.c0.as_ref().unwrap().data()[i], n) < 1e-6);
    }
}

#[test]
fn stack_chain_audit() {
    let mut stack = RecurrentStack::zeros(&[CellKind::Lstm, CellKind::Gru], 4, 3);
    stack.validate().unwrap();
    stack.layers[1] = RecurrentParams::zeros(CellKind::Gru, 5, 3);
    assert!(stack.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gru_state_stays_in_unit_box(seed in any::<u64>(), t in 1usize..12) {
        let mut rng = substream(seed, "bound");
        let mut layer = GruParams::init(&mut rng, 3, 4);
        layer.w_h.scale(5.0);
        let layer = RecurrentParams::Gru(layer);
        let inputs = random_tensor(&mut rng, &[t, 3]).map(|v| v * 10.0);
        let (out, _) = unroll_forward(&layer, &inputs, None, None).unwrap();
        prop_assert!(out.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn forward_is_bit_deterministic(seed in any::<u64>()) {
        let mut rng = substream(seed, "det");
        let stack = RecurrentStack::init(&mut rng, &[CellKind::Lstm, CellKind::Gru], 3, 4);
        let inputs = random_tensor(&mut rng, &[5, 3]);
        let (a, _) = stack.forward(&inputs).unwrap();
        let (b, _) = stack.forward(&inputs).unwrap();
        prop_assert_eq!(a, b);
    }
}
