//! Flat run configuration: one TOML table, every key overridable with `--set key=value`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tristream_core::dataio::{AugmentConfig, SplitMode, SplitSpec};
use tristream_core::featurestreams::{FrameGeometry, DEFAULT_ANCHORS};
use tristream_core::model::ThreeStreamConfig;
use tristream_core::traineval::{OptimizerKind, TrainConfig};

use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset root holding `manifest.tsv`.
    pub data: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,

    pub frames: usize,
    pub image_size: usize,
    pub channels: usize,
    pub anchors: Vec<usize>,
    pub feature_width_1: usize,
    pub feature_width_2: usize,
    pub hidden: usize,
    pub dense_width: usize,
    pub dropout: f64,
    pub streams: Vec<usize>,

    pub split_train: f64,
    pub split_val: f64,
    pub split_test: f64,
    pub split_mode: SplitMode,

    pub flip: bool,
    pub rotate: bool,
    pub brightness: bool,
    pub mirror_labels: bool,
    pub rotation_degrees: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,

    pub optimizer: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// 0 disables early stopping.
    pub patience: usize,
    /// Percent; 0 disables the target stop.
    pub target_train_accuracy: f64,
    pub restore_best: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ThreeStreamConfig::default();
        let train = TrainConfig::default();
        let aug = AugmentConfig::default();
        let split = SplitSpec::default();
        let OptimizerKind::Adam { beta1, beta2, epsilon } = OptimizerKind::adam() else {
            unreachable!()
        };
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            data: None,
            resume: None,
            frames: model.frames,
            image_size: model.geometry.height,
            channels: model.geometry.channels,
            anchors: DEFAULT_ANCHORS.to_vec(),
            feature_width_1: model.feature_width_1,
            feature_width_2: model.feature_width_2,
            hidden: model.hidden,
            dense_width: model.dense_width,
            dropout: model.dropout,
            streams: model.streams,
            split_train: split.train,
            split_val: split.val,
            split_test: split.test,
            split_mode: split.mode,
            flip: aug.flip,
            rotate: aug.rotate,
            brightness: aug.brightness,
            mirror_labels: aug.mirror_labels,
            rotation_degrees: aug.rotation_degrees,
            brightness_min: aug.brightness_range.0,
            brightness_max: aug.brightness_range.1,
            optimizer: "adam".into(),
            learning_rate: train.learning_rate,
            beta1,
            beta2,
            epsilon,
            epochs: train.epochs,
            batch_size: train.batch_size,
            patience: train.patience.unwrap_or(0),
            target_train_accuracy: train.target_train_accuracy.unwrap_or(0.0),
            restore_best: train.restore_best,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Defaults, then the file at `path`, then each `key=value` override in order.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            table.insert(key.clone(), parse_value(raw));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        cfg.model_config(2)?;
        cfg.train_config()?;
        cfg.split_spec().validate()?;
        cfg.augment_config().validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved config into `dir`.
    pub fn echo(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::square(self.image_size, self.channels)
    }

    pub fn model_config(&self, classes: usize) -> CliResult<ThreeStreamConfig> {
        let cfg = ThreeStreamConfig {
            frames: self.frames,
            anchors: self.anchors.clone(),
            geometry: self.geometry(),
            feature_width_1: self.feature_width_1,
            feature_width_2: self.feature_width_2,
            hidden: self.hidden,
            dense_width: self.dense_width,
            dropout: self.dropout,
            classes,
            streams: self.streams.clone(),
            ..ThreeStreamConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            "sgd" => OptimizerKind::Sgd,
            other => return Err(CliError::Usage(format!("optimizer must be \"adam\" or \"sgd\", got {other:?}"))),
        };
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer,
            patience: (self.patience > 0).then_some(self.patience),
            target_train_accuracy: (self.target_train_accuracy > 0.0).then_some(self.target_train_accuracy),
            restore_best: self.restore_best,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.split_train,
            val: self.split_val,
            test: self.split_test,
            seed: self.seed,
            mode: self.split_mode,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            flip: self.flip,
            rotate: self.rotate,
            brightness: self.brightness,
            mirror_labels: self.mirror_labels,
            rotation_degrees: self.rotation_degrees,
            brightness_range: (self.brightness_min, self.brightness_max),
        }
    }
}
