//! Per-frame nearest-centroid baseline and stream ablation.

use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::train::{evaluate, train, TrainConfig};
use crate::dataio::GestureSample;
use crate::error::{Error, Result};
use crate::linalg::kernels;
use crate::model::{ablate, ThreeStreamConfig, ThreeStreamModel};

/// Class means of single-frame vectors (pixels followed by keypoints, when present).
#[derive(Clone, Debug, PartialEq)]
pub struct NearestCentroid {
    centroids: Vec<Vec<f64>>,
}

fn frame_vectors(sample: &GestureSample) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..sample.len()).map(move |t| {
        let mut v = sample.frames.row(t).to_vec();
        if let Some(k) = &sample.keypoints {
            v.extend_from_slice(k.points().row(t));
        }
        v
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NearestCentroid {
    /// Every frame of a sample is a training point labelled with the sample's class.
    pub fn fit(samples: &[GestureSample], classes: usize) -> Result<Self> {
        let mut sums: Vec<Option<Vec<f64>>> = vec![None; classes];
        let mut counts = vec![0usize; classes];
        for s in samples {
            if s.label >= classes {
                return Err(Error::LabelOutOfRange { label: s.label, classes });
            }
            for v in frame_vectors(s) {
                let sum = sums[s.label].get_or_insert_with(|| vec![0.0; v.len()]);
                if sum.len() != v.len() {
                    return Err(Error::Dataset("frames differ in size".into()));
                }
                kernels::axpy(sum, 1.0, &v);
                counts[s.label] += 1;
            }
        }
        let centroids = sums
            .into_iter()
            .zip(&counts)
            .enumerate()
            .map(|(c, (sum, &n))| {
                let mut sum = sum.ok_or(Error::InsufficientSamples { class: c, count: 0, needed: 1 })?;
                sum.iter_mut().for_each(|x| *x /= n as f64);
                Ok(sum)
            })
            .collect::<Result<_>>()?;
        Ok(NearestCentroid { centroids })
    }

    /// Nearest class for one frame vector; ties go to the lower index.
    pub fn classify(&self, v: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = squared_distance(v, centroid);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    /// Confusion matrix over individual frames.
    pub fn evaluate_frames(&self, samples: &[GestureSample]) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::new(self.centroids.len());
        for s in samples {
            for v in frame_vectors(s) {
                cm.record(s.label, self.classify(&v))?;
            }
        }
        Ok(cm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub streams: Vec<usize>,
    /// Test accuracy, percent.
    pub accuracy: f64,
}

/// Stream subsets reported by default.
pub const ABLATION_SUBSETS: [&[usize]; 4] = [&[1], &[2], &[3], &[1, 2, 3]];

/// Trains one model per stream subset from the same initialisation seed and scores it on `test`.
pub fn run_ablation(
    base: &ThreeStreamConfig,
    model_seed: u64,
    train_set: &[GestureSample],
    val: &[GestureSample],
    test: &[GestureSample],
    cfg: &TrainConfig,
    subsets: &[&[usize]],
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    subsets
        .iter()
        .map(|streams| {
            let config = ablate(base, streams)?;
            let model = ThreeStreamModel::init(config, model_seed)?;
            let outcome = train(model, train_set, val, cfg)?;
            let accuracy = evaluate(&outcome.model, test)?.accuracy().unwrap_or(0.0);
            let row = AblationRow {
                streams: streams.to_vec(),
                accuracy,
            };
            on_row(&row);
            Ok(row)
        })
        .collect()
}

/// Fused accuracy minus the best single-stream accuracy, when both are present.
pub fn fusion_margin(rows: &[AblationRow]) -> Option<f64> {
    let fused = rows.iter().find(|r| r.streams.len() > 1)?.accuracy;
    let best_single = rows
        .iter()
        .filter(|r| r.streams.len() == 1)
        .map(|r| r.accuracy)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))))?;
    Some(fused - best_single)
}
