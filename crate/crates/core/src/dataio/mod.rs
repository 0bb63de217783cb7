//! Gesture datasets: sample types, preprocessing, augmentation, splitting,
//! synthetic generation and the on-disk layout.

mod augment;
mod disk;
mod split;
mod synth;
mod transforms;

pub use augment::{augment_training_set, flip_dataset, prepare_splits, AugmentConfig, PreparedSplits, SplitCounts};
pub use disk::{
    class_dir_name, load_dataset, load_sample_dir, read_manifest, write_dataset, write_sample_dir, MANIFEST_FILE,
    CLASSES_FILE, KEYPOINT_FILE,
};
pub use split::{check_no_leakage, split_dataset, split_indices, split_manifest, SplitIndices, SplitKey, SplitMode, SplitSpec};
pub use synth::{synthesize_gestures, SynthConfig};
pub use transforms::{adjust_brightness, horizontal_flip, resize_normalize, rotate, rotate10, RawFrame, BRIGHTNESS_LIMITS};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestreams::{FrameGeometry, KeypointSequence};
use crate::linalg::Tensor;

/// Class names in label order.
pub const GESTURE_CLASSES: [&str; 10] = [
    "Left",
    "Right",
    "Up",
    "Down",
    "Hi",
    "Bye",
    "Open",
    "Close",
    "Thumbs up",
    "Thumbs down",
];

pub fn default_class_names() -> Vec<String> {
    GESTURE_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// How a sample came to exist. Derived samples record the last transform applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Flipped,
    Rotated,
    Brightened,
    Synthetic,
}

/// One gesture recording: `T×H×W×C` frames in `[0, 1]` plus optional keypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct GestureSample {
    pub id: String,
    pub frames: Tensor,
    pub keypoints: Option<KeypointSequence>,
    pub label: usize,
    pub subject: String,
    pub provenance: Provenance,
    /// Id of the original sample every derivative traces back to.
    pub lineage: String,
}

impl GestureSample {
    pub fn new(
        id: impl Into<String>,
        frames: Tensor,
        keypoints: Option<KeypointSequence>,
        label: usize,
        subject: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        let id = id.into();
        if frames.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: frames.shape().to_vec(),
                reason: "frames must be T×H×W×C".into(),
            });
        }
        if frames.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        if let Some(v) = frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Range(format!("sample {id}: pixel value {v} outside [0, 1]")));
        }
        if let Some(kp) = &keypoints {
            if kp.len() != frames.rows() {
                return Err(Error::Dataset(format!(
                    "sample {id}: {} keypoint rows for {} frames",
                    kp.len(),
                    frames.rows()
                )));
            }
        }
        Ok(GestureSample {
            lineage: id.clone(),
            id,
            frames,
            keypoints,
            label,
            subject: subject.into(),
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn geometry(&self) -> FrameGeometry {
        let s = self.frames.shape();
        FrameGeometry {
            height: s[1],
            width: s[2],
            channels: s[3],
        }
    }

    /// Sample derived from this one: same lineage, new id and provenance.
    pub(crate) fn derive(&self, suffix: &str, provenance: Provenance, frames: Tensor, keypoints: Option<KeypointSequence>) -> Self {
        GestureSample {
            id: format!("{}~{suffix}", self.id),
            frames,
            keypoints,
            label: self.label,
            subject: self.subject.clone(),
            provenance,
            lineage: self.lineage.clone(),
        }
    }
}

/// In-memory dataset with a fixed class list, sequence length and frame geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub samples: Vec<GestureSample>,
}

impl Dataset {
    pub fn new(class_names: Vec<String>, samples: Vec<GestureSample>) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", class_names.len())));
        }
        let ds = Dataset { class_names, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.class_names.len();
        let first = self.samples.first();
        for s in &self.samples {
            if s.label >= k {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes: k,
                });
            }
            if let Some(f) = first {
                if s.frames.shape() != f.frames.shape() {
                    return Err(Error::Dataset(format!(
                        "sample {} has frames {:?}, sample {} has {:?}",
                        s.id,
                        s.frames.shape(),
                        f.id,
                        f.frames.shape()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frames_per_sample(&self) -> Option<usize> {
        self.samples.first().map(GestureSample::len)
    }

    pub fn geometry(&self) -> Option<FrameGeometry> {
        self.samples.first().map(GestureSample::geometry)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Errors unless every class has at least one sample.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(Error::Dataset(format!("class {} ({}) has no samples", c, self.class_names[c]))),
            None => Ok(()),
        }
    }

    /// Label of each class after a horizontal mirror: `Left` and `Right` swap, the rest map to themselves.
    pub fn mirror_label_map(&self) -> Vec<usize> {
        let find = |name: &str| self.class_names.iter().position(|c| c.eq_ignore_ascii_case(name));
        let mut map: Vec<usize> = (0..self.num_classes()).collect();
        if let (Some(l), Some(r)) = (find("left"), find("right")) {
            map.swap(l, r);
        }
        map
    }

    pub(crate) fn with_samples(&self, samples: Vec<GestureSample>) -> Dataset {
        Dataset {
            class_names: self.class_names.clone(),
            samples,
        }
    }
}

/// Sample descriptor as listed in `manifest.tsv`. `path` is relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub path: PathBuf,
    pub label: usize,
    pub subject: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub entries: Vec<SampleDescriptor>,
}

impl DatasetManifest {
    /// Labels in range and every class represented.
    pub fn validate(&self) -> Result<()> {
        let k = self.class_names.len();
        let mut seen = vec![false; k];
        for e in &self.entries {
            if e.label >= k {
                return Err(Error::LabelOutOfRange { label: e.label, classes: k });
            }
            seen[e.label] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(c) => Err(Error::Dataset(format!("class {} ({}) has no samples", c, self.class_names[c]))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
