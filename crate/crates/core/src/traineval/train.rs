//! Mini-batch training, evaluation and the per-epoch history.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy_logits;
use super::metrics::{argmax, ConfusionMatrix};
use super::optim::{Optimizer, OptimizerKind};
use crate::dataio::GestureSample;
use crate::error::{Error, Result};
use crate::model::{ModelInput, ModelParams, Phase, ThreeStreamModel};
use crate::params::ParamSet;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: Option<usize>,
    /// Stop once the epoch's training accuracy (percent) reaches this value.
    pub target_train_accuracy: Option<f64>,
    /// Return the parameters of the best validation epoch instead of the last.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerKind::adam(),
            patience: Some(10),
            target_train_accuracy: None,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive when set".into()));
        }
        if let Some(t) = self.target_train_accuracy {
            if !(0.0..=100.0).contains(&t) {
                return Err(Error::Config(format!("target_train_accuracy must be a percentage, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent, measured on the training-mode passes of the epoch.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

const HISTORY_HEADER: &str = "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc";

impl TrainHistory {
    /// Tab-separated, one line per epoch; missing validation values are `-`.
    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                opt(r.val_loss),
                opt(r.val_accuracy)
            )
            .expect("write to string");
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::format("training history", reason);
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(bad("missing header".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                if f.len() != 5 {
                    return Err(bad(format!("expected 5 fields, found {}", f.len())));
                }
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| bad(format!("bad epoch {:?}", f[0])))?,
                    train_loss: num(f[1])?,
                    train_accuracy: num(f[2])?,
                    val_loss: opt(f[3])?,
                    val_accuracy: opt(f[4])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainHistory { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    TargetReached,
    EarlyStopped,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ThreeStreamModel,
    pub history: TrainHistory,
    pub stop: StopReason,
    /// Epoch whose parameters were returned when the best validation epoch was restored.
    pub best_epoch: Option<usize>,
    pub optimizer_steps: u64,
}

/// Mean loss and confusion matrix of an inference pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub mean_loss: f64,
}

fn evaluate_chunk(model: &ThreeStreamModel, samples: &[GestureSample]) -> Result<Vec<(usize, f64)>> {
    samples
        .iter()
        .map(|s| {
            let out = model.forward(&ModelInput::from_sample(s), Phase::Inference)?;
            let (loss, _) = cross_entropy_logits(&out.logits, s.label)?;
            Ok((argmax(&out.probabilities), loss))
        })
        .collect()
}

/// Inference over `samples`, split across the available cores; results are merged in sample order.
pub fn evaluate_with_loss(model: &ThreeStreamModel, samples: &[GestureSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty set".into()));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(samples.len());
    let chunk = samples.len().div_ceil(workers);
    let results: Vec<(usize, f64)> = if workers <= 1 {
        evaluate_chunk(model, samples)?
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = samples
                .chunks(chunk)
                .map(|part| scope.spawn(move || evaluate_chunk(model, part)))
                .collect();
            let mut all = Vec::with_capacity(samples.len());
            for h in handles {
                all.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let mut confusion = ConfusionMatrix::new(model.config().classes);
    let mut total_loss = 0.0;
    for (s, (pred, loss)) in samples.iter().zip(&results) {
        confusion.record(s.label, *pred)?;
        total_loss += loss;
    }
    Ok(Evaluation {
        confusion,
        mean_loss: total_loss / samples.len() as f64,
    })
}

/// Confusion matrix of argmax predictions (ties toward the lower class index).
pub fn evaluate(model: &ThreeStreamModel, samples: &[GestureSample]) -> Result<ConfusionMatrix> {
    Ok(evaluate_with_loss(model, samples)?.confusion)
}

pub fn train(model: ThreeStreamModel, train: &[GestureSample], val: &[GestureSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train, val, cfg, 0, |_| {})
}

/// Trains for up to `cfg.epochs` epochs numbered from `first_epoch + 1`, calling `on_epoch` after each.
pub fn train_with(
    mut model: ThreeStreamModel,
    train: &[GestureSample],
    val: &[GestureSample],
    cfg: &TrainConfig,
    first_epoch: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let classes = model.config().classes;
    if let Some(s) = train.iter().chain(val).find(|s| s.label >= classes) {
        return Err(Error::LabelOutOfRange { label: s.label, classes });
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut dropout_rng = substream(cfg.seed, "dropout");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;
    let mut stop = StopReason::EpochLimit;
    let mut step = 0usize;

    for e in 1..=cfg.epochs {
        let epoch = first_epoch + e;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let mut grads = model.zero_grads();
            for &i in batch {
                let sample = &train[i];
                let out = match model.forward(&ModelInput::from_sample(sample), Phase::Train(&mut dropout_rng)) {
                    Err(Error::NonFinite(_)) => return Err(Error::Divergence { epoch, step, loss: f64::NAN }),
                    other => other?,
                };
                let (loss, g) = cross_entropy_logits(&out.logits, sample.label)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, step, loss });
                }
                loss_sum += loss;
                correct += usize::from(argmax(&out.logits) == sample.label);
                model.backward_into(&out.cache, &g, &mut grads)?;
            }
            grads.scale_all(1.0 / batch.len() as f64);
            if !grads.all_finite() {
                return Err(Error::Divergence { epoch, step, loss: f64::NAN });
            }
            optimizer.step(model.params_mut(), &grads)?;
            if !model.params().all_finite() {
                return Err(Error::Divergence { epoch, step, loss: f64::NAN });
            }
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let ev = evaluate_with_loss(&model, val)?;
            (Some(ev.mean_loss), ev.confusion.accuracy())
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: 100.0 * correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        history.records.push(record.clone());

        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        if cfg.target_train_accuracy.is_some_and(|t| record.train_accuracy >= t) {
            stop = StopReason::TargetReached;
            break;
        }
        if cfg.patience.is_some_and(|p| stale >= p) {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    let mut best_epoch = None;
    if cfg.restore_best {
        if let Some((_, epoch, params)) = best {
            if epoch != history.records.last().map_or(0, |r| r.epoch) {
                *model.params_mut() = params;
            }
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        stop,
        best_epoch,
        optimizer_steps: optimizer.steps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synthesize_gestures, SynthConfig};
    use crate::featurestreams::FrameGeometry;
    use crate::model::ThreeStreamConfig;

    fn tiny_data(n_per_class: usize, seed: u64) -> Vec<GestureSample> {
        let cfg = SynthConfig {
            classes: 3,
            n_per_class,
            frames: 4,
            size: 16,
            seed,
            ..SynthConfig::default()
        };
        synthesize_gestures(&cfg).unwrap().samples
    }

    fn tiny_model(seed: u64) -> ThreeStreamModel {
        let cfg = ThreeStreamConfig {
            classes: 3,
            geometry: FrameGeometry::square(16, 1),
            ..ThreeStreamConfig::toy()
        };
        ThreeStreamModel::init(cfg, seed).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            patience: None,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn step_count_is_ceil_n_over_batch() {
        let data = tiny_data(3, 0);
        let out = train(tiny_model(0), &data, &[], &quick(1)).unwrap();
        assert_eq!(out.optimizer_steps, data.len().div_ceil(4) as u64);
        assert_eq!(out.history.records.len(), 1);
        assert_eq!(out.stop, StopReason::EpochLimit);
    }

    #[test]
    fn fixed_seed_reproduces_history_bitwise() {
        let data = tiny_data(2, 1);
        let a = train(tiny_model(3), &data, &data, &quick(2)).unwrap();
        let b = train(tiny_model(3), &data, &data, &quick(2)).unwrap();
        assert_eq!(a.history.to_tsv(), b.history.to_tsv());
        assert_eq!(a.model.params(), b.model.params());
    }

    #[test]
    fn single_sample_sgd_loss_does_not_increase() {
        let data = tiny_data(1, 2);
        let one = vec![data[0].clone()];
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 1,
            optimizer: OptimizerKind::Sgd,
            patience: None,
            ..TrainConfig::default()
        };
        let mut model_cfg = tiny_model(4).config().clone();
        model_cfg.dropout = 0.0;
        let model = ThreeStreamModel::init(model_cfg, 4).unwrap();
        let out = train(model, &one, &[], &cfg).unwrap();
        let losses: Vec<f64> = out.history.records.iter().map(|r| r.train_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
    }

    #[test]
    fn target_accuracy_stops_early() {
        let data = tiny_data(2, 5);
        let cfg = TrainConfig {
            target_train_accuracy: Some(0.0),
            ..quick(10)
        };
        let out = train(tiny_model(1), &data, &[], &cfg).unwrap();
        assert_eq!(out.stop, StopReason::TargetReached);
        assert_eq!(out.history.records.len(), 1);
    }

    #[test]
    fn patience_stops_and_restores_best() {
        let data = tiny_data(2, 6);
        let cfg = TrainConfig {
            patience: Some(1),
            learning_rate: 1e-9,
            ..quick(20)
        };
        let out = train(tiny_model(2), &data, &data, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::EarlyStopped);
        assert!(out.history.records.len() < 20);
        assert!(out.best_epoch.is_some());
    }

    #[test]
    fn divergence_is_reported() {
        let data = tiny_data(2, 7);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            optimizer: OptimizerKind::Sgd,
            ..quick(3)
        };
        let err = train(tiny_model(5), &data, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn history_round_trip() {
        let h = TrainHistory {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 2.3025850929940455,
                    train_accuracy: 10.0,
                    val_loss: None,
                    val_accuracy: None,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.1,
                    train_accuracy: 100.0 / 3.0,
                    val_loss: Some(1e-17),
                    val_accuracy: Some(50.0),
                },
            ],
        };
        assert_eq!(TrainHistory::parse_tsv(&h.to_tsv()).unwrap(), h);
        assert!(TrainHistory::parse_tsv("nope\n").is_err());
    }

    #[test]
    fn evaluation_counts_every_sample() {
        let data = tiny_data(2, 8);
        let cm = evaluate(&tiny_model(6), &data).unwrap();
        assert_eq!(cm.total(), data.len() as u64);
        assert!(evaluate(&tiny_model(6), &[]).is_err());
    }

    #[test]
    fn bad_config_is_rejected() {
        for cfg in [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
            TrainConfig { patience: Some(0), ..TrainConfig::default() },
            TrainConfig { target_train_accuracy: Some(120.0), ..TrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
