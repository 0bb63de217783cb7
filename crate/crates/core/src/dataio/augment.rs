//! Dataset-level augmentation: flip the whole set, split, then rotate and
//! brighten the training split only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{check_no_leakage, split_dataset, SplitSpec};
use super::transforms::{adjust_brightness, horizontal_flip, rotate, BRIGHTNESS_LIMITS};
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::item_stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip: bool,
    pub rotate: bool,
    pub brightness: bool,
    /// Flipped `Left` samples become `Right` and vice versa.
    pub mirror_labels: bool,
    pub rotation_degrees: f64,
    pub brightness_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip: true,
            rotate: true,
            brightness: true,
            mirror_labels: true,
            rotation_degrees: 10.0,
            brightness_range: (0.7, 1.3),
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            flip: false,
            rotate: false,
            brightness: false,
            ..AugmentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.brightness_range;
        let (min, max) = BRIGHTNESS_LIMITS;
        if !(min <= lo && lo <= hi && hi <= max) {
            return Err(Error::Config(format!(
                "brightness range ({lo}, {hi}) must lie within [{min}, {max}]"
            )));
        }
        if !self.rotation_degrees.is_finite() {
            return Err(Error::Config("rotation angle must be finite".into()));
        }
        Ok(())
    }
}

/// Originals followed by one mirrored copy each (when enabled).
pub fn flip_dataset(ds: &Dataset, cfg: &AugmentConfig) -> Dataset {
    if !cfg.flip {
        return ds.clone();
    }
    let map = ds.mirror_label_map();
    let mut samples = ds.samples.clone();
    samples.extend(ds.samples.iter().map(|s| {
        let mut f = horizontal_flip(s);
        if cfg.mirror_labels {
            f.label = map[s.label];
        }
        f
    }));
    ds.with_samples(samples)
}

/// Each training sample is kept and, per enabled transform, joined by one rotated and one brightened copy.
///
/// Brightness factors come from a per-sample stream keyed by position, so the
/// result does not depend on processing order.
pub fn augment_training_set(train: &Dataset, cfg: &AugmentConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(train.len() * 3);
    for (i, s) in train.samples.iter().enumerate() {
        samples.push(s.clone());
        if cfg.rotate {
            samples.push(rotate(s, cfg.rotation_degrees));
        }
        if cfg.brightness {
            let (lo, hi) = cfg.brightness_range;
            let factor = if lo < hi {
                item_stream(seed, "augment", i as u64).random_range(lo..=hi)
            } else {
                lo
            };
            samples.push(adjust_brightness(s, factor)?);
        }
    }
    Ok(train.with_samples(samples))
}

/// Realized sample counts at each pipeline stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub originals: usize,
    pub after_flip: usize,
    pub train_before_augment: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug)]
pub struct PreparedSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub counts: SplitCounts,
}

/// flip (whole set) → split → rotate/brighten (train only), with a lineage leakage check.
pub fn prepare_splits(ds: &Dataset, split: &SplitSpec, cfg: &AugmentConfig, seed: u64) -> Result<PreparedSplits> {
    cfg.validate()?;
    let flipped = flip_dataset(ds, cfg);
    let (train, val, test) = split_dataset(&flipped, split)?;
    let train_before_augment = train.len();
    let train = augment_training_set(&train, cfg, seed)?;
    check_no_leakage(&train, &val, &test)?;
    let counts = SplitCounts {
        originals: ds.len(),
        after_flip: flipped.len(),
        train_before_augment,
        train: train.len(),
        val: val.len(),
        test: test.len(),
    };
    Ok(PreparedSplits { train, val, test, counts })
}
