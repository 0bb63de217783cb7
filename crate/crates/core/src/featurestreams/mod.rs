//! Per-frame feature producers for the three streams.

mod features_io;
mod keypoints;
mod tinycnn;

pub use features_io::{encode_features, load_precomputed_features, parse_features, save_features, FeatureEncoding};
pub use keypoints::{
    load_keypoints, mirror_pose_index, parse_keypoints, save_keypoints, snap_mirror_exact, validate_keypoints,
    write_keypoints, KeypointSequence, HAND_POINTS, HAND_WIDTH, KEYPOINT_WIDTH, LEFT_HAND_OFFSET, POSE_POINTS,
    POSE_WIDTH, RIGHT_HAND_OFFSET,
};
pub use tinycnn::{
    tinycnn_backward, tinycnn_backward_params, tinycnn_features, tinycnn_forward, FrameGeometry, TinyCnnCache,
    TinyCnnParams, CONV1_CHANNELS, CONV2_CHANNELS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor;

/// Frames sampled for the gather branches of a 30-frame sequence.
pub const DEFAULT_ANCHORS: [usize; 5] = [0, 7, 15, 22, 29];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    TinyCnn,
    Precomputed,
}

/// `T×D` per-frame features.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatureSequence {
    pub features: Tensor,
    pub source: FeatureSource,
}

impl FrameFeatureSequence {
    pub fn new(features: Tensor, source: FeatureSource) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::InvalidShape {
                shape: features.shape().to_vec(),
                reason: "feature sequence must be T×D".into(),
            });
        }
        if let Some(i) = features.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature element {i}")));
        }
        Ok(FrameFeatureSequence { features, source })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.shape()[1]
    }
}

/// Selects rows `indices` (in the given order) along the leading axis.
pub fn subsample_frames(seq: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if indices.is_empty() {
        return Err(Error::EmptySequence);
    }
    let len = seq.rows();
    let mut data = Vec::with_capacity(indices.len() * seq.row_len());
    for &i in indices {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        data.extend_from_slice(seq.row(i));
    }
    let mut shape = seq.shape().to_vec();
    shape[0] = indices.len();
    Tensor::new(&shape, data)
}

/// Adds the rows of `grad[k×…]` back into row `indices[k]` of `target`.
pub(crate) fn scatter_rows(target: &mut Tensor, indices: &[usize], grad: &Tensor) {
    for (k, &i) in indices.iter().enumerate() {
        for (t, g) in target.row_mut(i).iter_mut().zip(grad.row(k)) {
            *t += g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_from_identity_sequence() {
        let seq = Tensor::new(&[30, 1], (0..30).map(f64::from).collect()).unwrap();
        let out = subsample_frames(&seq, &DEFAULT_ANCHORS).unwrap();
        assert_eq!(out.data(), &[0.0, 7.0, 15.0, 22.0, 29.0]);
    }

    #[test]
    fn constant_sequence_stays_constant() {
        let seq = Tensor::filled(&[30, 3], 0.25);
        let out = subsample_frames(&seq, &DEFAULT_ANCHORS).unwrap();
        assert_eq!(out.shape(), &[5, 3]);
        assert!(out.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn short_sequence_is_a_range_error() {
        let seq = Tensor::zeros(&[20, 2]);
        assert!(matches!(
            subsample_frames(&seq, &DEFAULT_ANCHORS),
            Err(Error::IndexOutOfRange { index: 22, len: 20 })
        ));
    }

    #[test]
    fn works_on_frame_tensors() {
        let frames = Tensor::new(&[30, 2, 2, 1], (0..120).map(f64::from).collect()).unwrap();
        let out = subsample_frames(&frames, &DEFAULT_ANCHORS).unwrap();
        assert_eq!(out.shape(), &[5, 2, 2, 1]);
        assert_eq!(out.row(1), frames.row(7));
    }
}
