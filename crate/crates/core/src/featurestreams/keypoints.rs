//! Skeleton keypoint layout: 258 values per frame.
//!
//! | block      | offset | points | values per point       |
//! |------------|--------|--------|------------------------|
//! | pose       | 0      | 33     | x, y, z, visibility    |
//! | left hand  | 132    | 21     | x, y, z                |
//! | right hand | 195    | 21     | x, y, z                |
//!
//! `x` and `y` are normalized image coordinates in `[0, 1]`; `z` is an
//! unbounded relative depth. Visibility is kept as a plain feature.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Tensor;

pub const POSE_POINTS: usize = 33;
pub const HAND_POINTS: usize = 21;
pub const POSE_WIDTH: usize = POSE_POINTS * 4;
pub const HAND_WIDTH: usize = HAND_POINTS * 3;
pub const LEFT_HAND_OFFSET: usize = POSE_WIDTH;
pub const RIGHT_HAND_OFFSET: usize = LEFT_HAND_OFFSET + HAND_WIDTH;
pub const KEYPOINT_WIDTH: usize = RIGHT_HAND_OFFSET + HAND_WIDTH;

const MAGIC: &str = "TRISTREAM-KP";

/// Left/right partner of a pose landmark (nose and other midline points map to themselves).
pub fn mirror_pose_index(i: usize) -> usize {
    match i {
        0 => 0,
        1..=3 => i + 3,
        4..=6 => i - 3,
        // ears, mouth corners, and the paired limb points from the shoulders down alternate left/right
        7..=32 if i % 2 == 1 => i + 1,
        8..=32 => i - 1,
        _ => panic!("pose index {i} out of range"),
    }
}

/// Moves `x ∈ [0, 1]` onto the grid where `x ↦ 1 − x` is exact in both directions.
///
/// The change is below one ulp of 1.0; afterwards mirroring twice returns the
/// original bits.
#[inline]
pub fn snap_mirror_exact(x: f64) -> f64 {
    1.0 - (1.0 - x)
}

/// Layout-checked `T×258` keypoint sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSequence {
    points: Tensor,
}

fn check_unit(value: f64, what: &str, t: usize, point: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Range(format!(
            "frame {t}, {what} of point {point} is {value}, expected [0, 1]"
        )));
    }
    Ok(())
}

/// Checks width, finiteness and coordinate ranges of a raw `T×258` array.
pub fn validate_keypoints(raw: Tensor) -> Result<KeypointSequence> {
    if raw.rank() != 2 || raw.shape()[1] != KEYPOINT_WIDTH {
        return Err(Error::Layout(format!(
            "expected T×{KEYPOINT_WIDTH} (pose {POSE_WIDTH} + left hand {HAND_WIDTH} + right hand {HAND_WIDTH}), got {:?}",
            raw.shape()
        )));
    }
    let mut points = raw;
    for t in 0..points.rows() {
        let row = points.row_mut(t);
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("keypoint frame {t}, column {i}")));
        }
        for p in 0..POSE_POINTS {
            let base = p * 4;
            check_unit(row[base], "pose x", t, p)?;
            check_unit(row[base + 1], "pose y", t, p)?;
            check_unit(row[base + 3], "visibility", t, p)?;
            row[base] = snap_mirror_exact(row[base]);
        }
        for offset in [LEFT_HAND_OFFSET, RIGHT_HAND_OFFSET] {
            for p in 0..HAND_POINTS {
                let base = offset + p * 3;
                check_unit(row[base], "hand x", t, p)?;
                check_unit(row[base + 1], "hand y", t, p)?;
                row[base] = snap_mirror_exact(row[base]);
            }
        }
    }
    Ok(KeypointSequence { points })
}

impl KeypointSequence {
    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn into_tensor(self) -> Tensor {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Offsets of the `(pose, left hand, right hand)` blocks.
    pub fn block_offsets() -> (usize, usize, usize) {
        (0, LEFT_HAND_OFFSET, RIGHT_HAND_OFFSET)
    }

    /// `(x, y, z, visibility)` of pose landmark `i` in frame `t`.
    pub fn pose_point(&self, t: usize, i: usize) -> [f64; 4] {
        let r = &self.points.row(t)[i * 4..i * 4 + 4];
        [r[0], r[1], r[2], r[3]]
    }

    /// `(x, y, z)` of hand landmark `i`; `right` selects the right-hand block.
    pub fn hand_point(&self, t: usize, right: bool, i: usize) -> [f64; 3] {
        let base = if right { RIGHT_HAND_OFFSET } else { LEFT_HAND_OFFSET } + i * 3;
        let r = &self.points.row(t)[base..base + 3];
        [r[0], r[1], r[2]]
    }

    /// Mirror across the vertical axis: `x → 1 − x`, hands swapped, pose left/right partners swapped.
    pub fn mirrored(&self) -> KeypointSequence {
        let mut out = self.points.clone();
        for t in 0..self.points.rows() {
            let src = self.points.row(t);
            let dst = out.row_mut(t);
            for p in 0..POSE_POINTS {
                let q = mirror_pose_index(p);
                dst[q * 4..q * 4 + 4].copy_from_slice(&src[p * 4..p * 4 + 4]);
                dst[q * 4] = 1.0 - src[p * 4];
            }
            for (from, to) in [(LEFT_HAND_OFFSET, RIGHT_HAND_OFFSET), (RIGHT_HAND_OFFSET, LEFT_HAND_OFFSET)] {
                for p in 0..HAND_POINTS {
                    let (s, d) = (from + p * 3, to + p * 3);
                    dst[d..d + 3].copy_from_slice(&src[s..s + 3]);
                    dst[d] = 1.0 - src[s];
                }
            }
        }
        KeypointSequence { points: out }
    }

    /// Applies `f(x, y) -> (x', y')` to every landmark, clamping the result into the unit square.
    pub fn map_xy(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> KeypointSequence {
        let mut out = self.points.clone();
        for t in 0..out.rows() {
            let row = out.row_mut(t);
            let bases = (0..POSE_POINTS)
                .map(|p| p * 4)
                .chain((0..HAND_POINTS).map(|p| LEFT_HAND_OFFSET + p * 3))
                .chain((0..HAND_POINTS).map(|p| RIGHT_HAND_OFFSET + p * 3));
            for b in bases {
                let (x, y) = f(row[b], row[b + 1]);
                row[b] = snap_mirror_exact(x.clamp(0.0, 1.0));
                row[b + 1] = y.clamp(0.0, 1.0);
            }
        }
        KeypointSequence { points: out }
    }
}

pub fn parse_keypoints(text: &str) -> Result<KeypointSequence> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format("keypoint file", "missing header"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) || tokens.next() != Some("v1") {
        return Err(Error::format("keypoint header", format!("expected '{MAGIC} v1', found {header:?}")));
    }
    let t: usize = tokens
        .next()
        .and_then(|tok| tok.strip_prefix("T="))
        .and_then(|v| v.parse().ok())
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::format("keypoint header", format!("expected T=<positive int> in {header:?}")))?;
    let mut values = Vec::with_capacity(t * KEYPOINT_WIDTH);
    let mut rows = 0;
    for (r, line) in lines.enumerate() {
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::format("keypoint file", format!("row {r}: bad number {tok:?}")))?,
            );
        }
        let width = values.len() - before;
        if width != KEYPOINT_WIDTH {
            return Err(Error::Layout(format!("row {r} has {width} values, expected {KEYPOINT_WIDTH}")));
        }
        rows += 1;
    }
    if rows != t {
        return Err(Error::RowCount { expected: t, found: rows });
    }
    validate_keypoints(Tensor::new(&[t, KEYPOINT_WIDTH], values)?)
}

pub fn write_keypoints(seq: &KeypointSequence) -> String {
    let mut out = format!("{MAGIC} v1 T={}\n", seq.len());
    for t in 0..seq.len() {
        for (i, v) in seq.points.row(t).iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn load_keypoints(path: impl AsRef<Path>) -> Result<KeypointSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(&text)
}

pub fn save_keypoints(path: impl AsRef<Path>, seq: &KeypointSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_keypoints(seq)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_constants() {
        assert_eq!(POSE_WIDTH, 132);
        assert_eq!(HAND_WIDTH, 63);
        assert_eq!(KEYPOINT_WIDTH, 258);
        assert_eq!(KeypointSequence::block_offsets(), (0, 132, 195));
    }

    #[test]
    fn accepts_258_rejects_257() {
        let ok = validate_keypoints(Tensor::filled(&[3, 258], 0.5)).unwrap();
        assert_eq!(ok.len(), 3);
        assert!(matches!(
            validate_keypoints(Tensor::filled(&[3, 257], 0.5)),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn visibility_out_of_range_is_rejected() {
        let mut raw = Tensor::filled(&[1, 258], 0.5);
        raw.data_mut()[3] = 1.5;
        assert!(matches!(validate_keypoints(raw), Err(Error::Range(_))));
    }

    #[test]
    fn depth_is_unbounded() {
        let mut raw = Tensor::filled(&[1, 258], 0.5);
        raw.data_mut()[2] = -7.0;
        raw.data_mut()[RIGHT_HAND_OFFSET + 2] = 12.0;
        assert!(validate_keypoints(raw).is_ok());
    }

    #[test]
    fn mirror_index_is_an_involution() {
        for i in 0..POSE_POINTS {
            assert_eq!(mirror_pose_index(mirror_pose_index(i)), i);
        }
        assert_eq!(mirror_pose_index(11), 12);
        assert_eq!(mirror_pose_index(2), 5);
        assert_eq!(mirror_pose_index(0), 0);
    }

    #[test]
    fn mirrored_moves_left_hand_to_right_block() {
        let mut raw = Tensor::filled(&[1, 258], 0.5);
        raw.data_mut()[LEFT_HAND_OFFSET] = 0.25;
        let seq = validate_keypoints(raw).unwrap();
        let m = seq.mirrored();
        assert_eq!(m.points().data()[RIGHT_HAND_OFFSET], 0.75);
        assert_eq!(m.hand_point(0, true, 0)[0], 0.75);
    }

    #[test]
    fn file_round_trip() {
        let raw = Tensor::new(&[2, 258], (0..516).map(|i| (i % 100) as f64 / 99.0).collect()).unwrap();
        let seq = validate_keypoints(raw).unwrap();
        assert_eq!(parse_keypoints(&write_keypoints(&seq)).unwrap(), seq);
        assert!(parse_keypoints("TRISTREAM-KP v1 T=3\n").is_err());
    }

    proptest! {
        #[test]
        fn mirroring_twice_is_bit_exact(values in proptest::collection::vec(0.0f64..=1.0, 258 * 2)) {
            let seq = validate_keypoints(Tensor::new(&[2, 258], values).unwrap()).unwrap();
            prop_assert_eq!(seq.mirrored().mirrored(), seq);
        }
    }
}
