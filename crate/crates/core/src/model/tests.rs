use rand::Rng;

use super::*;
use crate::featurestreams::FeatureSource;
use crate::linalg::log_sum_exp;
use crate::recurrent::{gradient_check, gru_step, lstm_step, GradCheckConfig, RecurrentParams};

fn random(rng: &mut StageRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn toy_inputs(cfg: &ThreeStreamConfig, seed: u64) -> (Tensor, Tensor) {
    let mut rng = substream(seed, "inputs");
    let g = cfg.geometry;
    let frames = random(&mut rng, &[cfg.frames, g.height, g.width, g.channels], 0.0, 1.0);
    let kp = random(&mut rng, &[cfg.frames, KEYPOINT_WIDTH], 0.0, 1.0);
    (frames, kp)
}

fn precomputed(frames: usize) -> ThreeStreamConfig {
    ThreeStreamConfig {
        frames,
        anchors: (0..frames).step_by(2).collect(),
        feature_source: FeatureSource::Precomputed,
        feature_width_1: 3,
        feature_width_2: 4,
        hidden: 3,
        dense_width: 2,
        ..ThreeStreamConfig::default()
    }
}

fn input<'a>(frames: &'a Tensor, kp: &'a Tensor) -> ModelInput<'a> {
    ModelInput {
        frames: Some(frames),
        features: None,
        keypoints: Some(kp),
    }
}

fn loss_and_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[label];
    let mut g = softmax_slice(logits);
    g[label] -= 1.0;
    (loss, g)
}

#[test]
fn zero_model_gives_zero_stream_outputs() {
    let cfg = ThreeStreamConfig::toy();
    let model = ThreeStreamModel::zeros(cfg.clone()).unwrap();
    let features = Tensor::zeros(&[cfg.frames, cfg.feature_width_1]);
    let s1 = model.stream1_forward(&features).unwrap();
    assert_eq!(s1.len(), cfg.dense_width + cfg.hidden);
    assert!(s1.iter().all(|&v| v == 0.0));
    let s3 = model.stream3_forward(&Tensor::zeros(&[cfg.frames, KEYPOINT_WIDTH])).unwrap();
    assert_eq!(s3.len(), cfg.hidden);
    assert!(s3.iter().all(|&v| v == 0.0));
}

#[test]
fn probabilities_are_normalised_and_uniform_for_zero_head() {
    let cfg = ThreeStreamConfig::toy();
    let mut model = ThreeStreamModel::init(cfg.clone(), 3).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 1);
    let p = model.predict(&input(&frames, &kp)).unwrap();
    assert_eq!(p.len(), 10);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.iter().all(|&v| v >= 0.0));
    model.params_mut().head.zero();
    let p = model.predict(&input(&frames, &kp)).unwrap();
    assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
}

#[test]
fn gather_branches_ignore_non_anchor_frames() {
    let cfg = ThreeStreamConfig {
        frames: 30,
        anchors: DEFAULT_ANCHORS.to_vec(),
        ..ThreeStreamConfig::toy()
    };
    let model = ThreeStreamModel::init(cfg.clone(), 5).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 2);
    let mut perturbed = frames.clone();
    let mut rng = substream(9, "perturb");
    for t in (0..30).filter(|t| !DEFAULT_ANCHORS.contains(t)) {
        for v in perturbed.row_mut(t) {
            *v = rng.random_range(0.0..1.0);
        }
    }
    let a = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    let b = model.forward(&input(&perturbed, &kp), Phase::Inference).unwrap();
    for ((s, x), (_, y)) in a.stream_outputs.iter().zip(&b.stream_outputs).take(2) {
        assert_eq!(x[cfg.dense_width..], y[cfg.dense_width..], "stream {s} gather branch");
        assert_ne!(x[..cfg.dense_width], y[..cfg.dense_width]);
    }
}

#[test]
fn dropout_contract() {
    let cfg = ThreeStreamConfig {
        branch_activation: Activation::Identity,
        dropout: 0.3,
        ..precomputed(4)
    };
    let model = ThreeStreamModel::init(cfg.clone(), 2).unwrap();
    let mut rng = substream(4, "features");
    let f = random(&mut rng, &[4, cfg.feature_width_2], -1.0, 1.0);
    let clean = model.stream2_forward(&f, Phase::Inference).unwrap();
    assert_eq!(clean, model.stream2_forward(&f, Phase::Inference).unwrap());

    let mut drop_rng = substream(0, "dropout");
    let n = 10_000;
    let mut mean = vec![0.0; clean.len()];
    for _ in 0..n {
        let out = model.stream2_forward(&f, Phase::Train(&mut drop_rng)).unwrap();
        for (m, v) in mean.iter_mut().zip(out) {
            *m += v / n as f64;
        }
    }
    let norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = mean.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(diff / norm < 0.02, "relative deviation {}", diff / norm);

    let no_drop = ThreeStreamModel::from_params(ThreeStreamConfig { dropout: 0.0, ..cfg }, model.params().clone()).unwrap();
    let mut r = substream(1, "dropout");
    assert_eq!(no_drop.stream2_forward(&f, Phase::Train(&mut r)).unwrap(), clean);
}

#[test]
fn scalar_keypoint_stack_matches_chained_cells() {
    let cfg = ThreeStreamConfig {
        frames: 2,
        anchors: vec![0, 1],
        hidden: 1,
        streams: vec![3],
        ..ThreeStreamConfig::toy()
    };
    let model = ThreeStreamModel::init(cfg.clone(), 8).unwrap();
    let mut rng = substream(3, "kp");
    let kp = random(&mut rng, &[2, KEYPOINT_WIDTH], 0.0, 1.0);
    let out = model.stream3_forward(&kp).unwrap();

    let mut seq: Vec<Tensor> = (0..2).map(|t| Tensor::vector(kp.row(t).to_vec())).collect();
    for layer in &model.params().stream3.layers {
        let mut h = Tensor::zeros(&[1]);
        let mut c = Tensor::zeros(&[1]);
        let mut next = Vec::new();
        for x in &seq {
            match layer {
                RecurrentParams::Lstm(p) => {
                    let (h2, c2, _) = lstm_step(p, &h, &c, x).unwrap();
                    h = h2;
                    c = c2;
                }
                RecurrentParams::Gru(p) => h = gru_step(p, &h, x).unwrap().0,
            }
            next.push(h.clone());
        }
        seq = next;
    }
    assert!((out[0] - seq[1].data()[0]).abs() < 1e-14);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let cfg = ThreeStreamConfig::toy();
    let model = ThreeStreamModel::init(cfg.clone(), 1).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 1);
    let out = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    let grads = model.backward(&out.cache, &[0.0; 10]).unwrap();
    assert!(grads.flat_values().iter().all(|&v| v == 0.0));
}

#[test]
fn disabled_stream_gets_exactly_zero_gradients() {
    let cfg = ThreeStreamConfig {
        streams: vec![1, 3],
        ..ThreeStreamConfig::toy()
    };
    let model = ThreeStreamModel::init(cfg.clone(), 1).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 1);
    let out = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    let (_, g) = loss_and_grad(&out.logits, 3);
    let grads = model.backward(&out.cache, &g).unwrap();
    for s in 1..=3 {
        let prefix = ModelParams::stream_prefix(s);
        let nonzero = grads
            .named_tensors()
            .iter()
            .filter(|(n, _)| n.starts_with(&prefix))
            .any(|(_, t)| t.data().iter().any(|&v| v != 0.0));
        assert_eq!(nonzero, s != 2, "stream {s}");
    }
}

#[test]
fn stale_cache_is_rejected() {
    let cfg = ThreeStreamConfig::toy();
    let mut model = ThreeStreamModel::init(cfg.clone(), 1).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 1);
    let out = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    model.params_mut().head.b.data_mut()[0] += 1.0;
    assert!(matches!(
        model.backward(&out.cache, &[0.0; 10]),
        Err(Error::StaleCache { cached: 0, current: 1 })
    ));
}

#[test]
fn missing_modalities_and_wrong_lengths() {
    let cfg = ThreeStreamConfig::toy();
    let model = ThreeStreamModel::init(cfg.clone(), 1).unwrap();
    let (frames, _) = toy_inputs(&cfg, 1);
    let no_kp = ModelInput {
        frames: Some(&frames),
        ..ModelInput::default()
    };
    assert!(matches!(model.predict(&no_kp), Err(Error::MissingModality(_))));
    let short = Tensor::zeros(&[3, 16, 16, 1]);
    let kp = Tensor::zeros(&[3, KEYPOINT_WIDTH]);
    assert!(matches!(model.predict(&input(&short, &kp)), Err(Error::Shape { .. })));
}

#[test]
fn ablation_widths_and_identity() {
    let cfg = ThreeStreamConfig::toy();
    let all = ablate(&cfg, &[3, 1, 2]).unwrap();
    assert_eq!(all, cfg);
    let (frames, kp) = toy_inputs(&cfg, 1);
    let a = ThreeStreamModel::init(cfg.clone(), 6).unwrap();
    let b = ThreeStreamModel::init(all, 6).unwrap();
    assert_eq!(a.predict(&input(&frames, &kp)).unwrap(), b.predict(&input(&frames, &kp)).unwrap());

    let only3 = ablate(&cfg, &[3]).unwrap();
    assert_eq!(only3.fusion_width(), cfg.hidden);
    let m = ThreeStreamModel::init(only3, 1).unwrap();
    assert_eq!(m.params().head.input_width(), cfg.hidden);
    let kp_only = ModelInput {
        keypoints: Some(&kp),
        ..ModelInput::default()
    };
    assert!(m.predict(&kp_only).is_ok());
    assert!(ablate(&cfg, &[]).is_err());
    assert!(ablate(&cfg, &[4]).is_err());
}

#[test]
fn audit_catches_bad_head() {
    let cfg = ThreeStreamConfig::toy();
    let mut params = ThreeStreamModel::zeros(cfg.clone()).unwrap().params().clone();
    params.head = Dense::zeros(cfg.fusion_width() + 1, cfg.classes, Activation::Identity);
    assert!(ThreeStreamModel::from_params(cfg, params).is_err());
}

#[test]
fn config_validation() {
    let bad = |f: fn(&mut ThreeStreamConfig)| {
        let mut c = ThreeStreamConfig::default();
        f(&mut c);
        c.validate().is_err()
    };
    assert!(bad(|c| c.anchors = vec![0, 7, 7]));
    assert!(bad(|c| c.anchors = vec![0, 30]));
    assert!(bad(|c| c.classes = 1));
    assert!(bad(|c| c.dropout = 1.0));
    assert!(bad(|c| c.geometry = FrameGeometry::square(30, 1)));
    assert!(ThreeStreamConfig::default().validate().is_ok());
}

#[test]
fn forward_is_bit_deterministic() {
    let cfg = ThreeStreamConfig::toy();
    let model = ThreeStreamModel::init(cfg.clone(), 1).unwrap();
    let (frames, kp) = toy_inputs(&cfg, 1);
    let a = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    let b = model.forward(&input(&frames, &kp), Phase::Inference).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let cfg = ThreeStreamConfig::toy();
    let model = ThreeStreamModel::init(cfg, 11).unwrap();
    let text = encode_checkpoint(&model, 7).unwrap();
    let back = decode_checkpoint(&text).unwrap();
    assert_eq!(back.epoch, 7);
    assert_eq!(back.model.params(), model.params());
    assert_eq!(back.model.config(), model.config());
    assert_eq!(encode_checkpoint(&back.model, 7).unwrap(), text);

    let truncated = &text[..text.len() / 2];
    assert!(decode_checkpoint(truncated).is_err());
    assert!(decode_checkpoint(&text.replace("TRISTREAM-CKPT v1", "TRISTREAM-CKPT v2")).is_err());
}

#[test]
fn precomputed_mode_gradients_match_finite_differences() {
    let cfg = ThreeStreamConfig {
        dropout: 0.3,
        ..precomputed(4)
    };
    let mut params = ThreeStreamModel::zeros(cfg.clone()).unwrap().params().clone();
    let mut rng = substream(5, "features");
    crate::checks::randomize(&mut params, &mut rng, crate::checks::PARAM_SCALE);
    let model = ThreeStreamModel::from_params(cfg.clone(), params).unwrap();
    let f1 = random(&mut rng, &[4, 3], -1.0, 1.0);
    let f2 = random(&mut rng, &[4, 4], -1.0, 1.0);
    let kp = random(&mut rng, &[4, KEYPOINT_WIDTH], 0.0, 1.0);
    let inp = ModelInput {
        frames: None,
        features: Some((&f1, &f2)),
        keypoints: Some(&kp),
    };
    let label = 4;
    let run = |m: &ThreeStreamModel| {
        let mut r = substream(77, "dropout");
        m.forward(&inp, Phase::Train(&mut r)).unwrap()
    };
    let out = run(&model);
    let (_, g) = loss_and_grad(&out.logits, label);
    let analytic = model.backward(&out.cache, &g).unwrap();
    let objective = |p: &ModelParams| {
        let m = ThreeStreamModel::from_params(cfg.clone(), p.clone()).unwrap();
        loss_and_grad(&run(&m).logits, label).0
    };
    let report = gradient_check(objective, model.params(), &analytic, GradCheckConfig::default()).unwrap();
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
}
