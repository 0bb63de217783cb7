//! Procedural gesture generator.
//!
//! A Gaussian blob plays the hand and follows a class-specific trajectory; a
//! matching 258-value keypoint track is emitted alongside. Classes come in
//! pairs that differ only in temporal order or tempo (Left/Right, Up/Down,
//! Open/Close, Thumbs up/down are time reversals of each other, Hi and Bye
//! wave at different rates over the same region), so any single frame is
//! ambiguous while the sequence is not.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::disk::class_dir_name;
use super::{Dataset, GestureSample, Provenance, GESTURE_CLASSES};
use crate::error::{Error, Result};
use crate::featurestreams::{
    mirror_pose_index, validate_keypoints, FrameGeometry, HAND_POINTS, KEYPOINT_WIDTH, LEFT_HAND_OFFSET, POSE_POINTS,
    RIGHT_HAND_OFFSET,
};
use crate::linalg::Tensor;
use crate::rng::item_stream;

const SUBJECTS: usize = 17;
const CHANNEL_TINT: [f64; 3] = [1.0, 0.85, 0.7];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// First `classes` entries of the gesture list (2..=10).
    pub classes: usize,
    pub n_per_class: usize,
    pub frames: usize,
    pub size: usize,
    pub channels: usize,
    pub seed: u64,
    pub pixel_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: GESTURE_CLASSES.len(),
            n_per_class: 20,
            frames: 30,
            size: 128,
            channels: 1,
            seed: 0,
            pixel_noise: 0.03,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=GESTURE_CLASSES.len()).contains(&self.classes) {
            return Err(Error::Config(format!("classes must be in 2..=10, got {}", self.classes)));
        }
        if self.n_per_class == 0 {
            return Err(Error::Config("n_per_class must be at least 1".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config("need at least 2 frames per sequence".into()));
        }
        if self.size < 4 || !(self.channels == 1 || self.channels == 3) {
            return Err(Error::Config(format!(
                "frame size {} with {} channels is not supported",
                self.size, self.channels
            )));
        }
        if !(0.0..1.0).contains(&self.pixel_noise) {
            return Err(Error::Config(format!("pixel noise {} out of range", self.pixel_noise)));
        }
        Ok(())
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::square(self.size, self.channels)
    }
}

/// Hand state in normalized image coordinates.
#[derive(Clone, Copy, Debug)]
struct HandPose {
    x: f64,
    y: f64,
    radius: f64,
    /// Thumb direction when extended as a spike.
    spike: Option<f64>,
}

struct Style {
    amp: f64,
    background: f64,
    /// +1 or -1: which hand, and which side a thumb sweeps through.
    side: f64,
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn trajectory<R: Rng>(class: usize, rng: &mut R, side: f64, t_len: usize) -> Vec<HandPose> {
    let gamma = rng.random_range(0.85..1.15);
    let radius = rng.random_range(0.065..0.085);
    let cx = 0.5 + rng.random_range(-0.1..0.1);
    let cy = rng.random_range(0.4..0.6);
    let (start, end) = (rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
    let wave_y = rng.random_range(0.2..0.3);
    let wave_amp = rng.random_range(0.12..0.16);
    let phase = if rng.random::<bool>() { 0.0 } else { PI };
    (0..t_len)
        .map(|t| {
            let u = t as f64 / (t_len - 1) as f64;
            let p = u.powf(gamma);
            let jx = rng.random_range(-0.003..0.003);
            let jy = rng.random_range(-0.003..0.003);
            let mut h = HandPose {
                x: cx,
                y: cy,
                radius,
                spike: None,
            };
            match class {
                0 => h.x = lerp(0.8 + start, 0.2 + end, p),
                1 => h.x = lerp(0.2 + start, 0.8 + end, p),
                2 => h.y = lerp(0.8 + start, 0.2 + end, p),
                3 => h.y = lerp(0.2 + start, 0.8 + end, p),
                4 | 5 => {
                    let cycles = if class == 4 { 2.0 } else { 1.0 };
                    h.y = wave_y;
                    h.x = cx + wave_amp * (2.0 * PI * cycles * p + phase).sin();
                }
                6 => h.radius = lerp(0.035, 0.11, p),
                7 => h.radius = lerp(0.11, 0.035, p),
                _ => {
                    let q = if class == 8 { p } else { 1.0 - p };
                    // pointing down (pi/2, y grows downward) to pointing up, through the chosen side
                    let angle = if side > 0.0 { lerp(FRAC_PI_2, -FRAC_PI_2, q) } else { lerp(FRAC_PI_2, 3.0 * FRAC_PI_2, q) };
                    h.spike = Some(angle);
                }
            }
            h.x += jx;
            h.y += jy;
            h
        })
        .collect()
}

fn segment_distance_sq(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (vx, vy) = (bx - ax, by - ay);
    let len_sq = vx * vx + vy * vy;
    let s = if len_sq > 0.0 {
        (((px - ax) * vx + (py - ay) * vy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (px - ax - s * vx, py - ay - s * vy);
    dx * dx + dy * dy
}

fn render_frame<R: Rng>(h: &HandPose, style: &Style, g: FrameGeometry, noise: Option<&Normal<f64>>, rng: &mut R, out: &mut Vec<f64>) {
    let two_r2 = 2.0 * h.radius * h.radius;
    let spike = h.spike.map(|a| {
        let len = 2.4 * h.radius;
        let w = 0.35 * h.radius;
        (h.x + len * a.cos(), h.y + len * a.sin(), 2.0 * w * w)
    });
    for y in 0..g.height {
        let ny = (y as f64 + 0.5) / g.height as f64;
        for x in 0..g.width {
            let nx = (x as f64 + 0.5) / g.width as f64;
            let d2 = (nx - h.x).powi(2) + (ny - h.y).powi(2);
            let mut m = (-d2 / two_r2).exp();
            if let Some((tx, ty, two_w2)) = spike {
                m = m.max((-segment_distance_sq(nx, ny, h.x, h.y, tx, ty) / two_w2).exp());
            }
            for c in 0..g.channels {
                let tint = if g.channels == 1 { 1.0 } else { CHANNEL_TINT[c] };
                let mut v = style.background + style.amp * m * tint;
                if let Some(n) = noise {
                    v += n.sample(rng);
                }
                out.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
            }
        }
    }
}

/// `(dx, y)` of subject-left pose landmarks; right partners mirror across x = 0.5.
const POSE_TEMPLATE: [(usize, f64, f64); 17] = [
    (0, 0.0, 0.22),
    (1, 0.012, 0.2),
    (2, 0.02, 0.2),
    (3, 0.028, 0.2),
    (7, 0.045, 0.21),
    (9, 0.015, 0.26),
    (11, 0.1, 0.36),
    (13, 0.14, 0.52),
    (15, 0.15, 0.66),
    (17, 0.16, 0.69),
    (19, 0.155, 0.7),
    (21, 0.145, 0.68),
    (23, 0.07, 0.75),
    (25, 0.075, 0.9),
    (27, 0.075, 0.98),
    (29, 0.07, 0.99),
    (31, 0.085, 1.0),
];

fn pose_template() -> [(f64, f64); POSE_POINTS] {
    let mut out = [(0.0, 0.0); POSE_POINTS];
    for &(i, dx, y) in &POSE_TEMPLATE {
        out[i] = (0.5 + dx, y);
        out[mirror_pose_index(i)] = (0.5 - dx, y);
    }
    out
}

/// Finger angle offsets from "up" for thumb, index, middle, ring, pinky.
const FINGER_SPREAD: [f64; 5] = [1.1, 0.4, 0.0, -0.35, -0.7];

fn write_hand<R: Rng>(row: &mut [f64], offset: usize, h: &HandPose, side: f64, rng: &mut R) {
    let jitter = Normal::new(0.0, 0.003).expect("valid sigma");
    let mut put = |point: usize, x: f64, y: f64, z: f64, rng: &mut R| {
        let b = offset + point * 3;
        row[b] = (x + jitter.sample(rng)).clamp(0.0, 1.0);
        row[b + 1] = (y + jitter.sample(rng)).clamp(0.0, 1.0);
        row[b + 2] = z + jitter.sample(rng);
    };
    put(0, h.x, h.y + 1.2 * h.radius, 0.0, rng);
    for (f, spread) in FINGER_SPREAD.iter().enumerate() {
        let (angle, reach) = match (f, h.spike) {
            (0, Some(a)) => (a, 0.6),
            (_, Some(_)) => (-FRAC_PI_2 + side * spread, 0.12),
            _ => (-FRAC_PI_2 + side * spread, 0.45),
        };
        let (s, c) = angle.sin_cos();
        for k in 1..=4 {
            let dist = h.radius * if h.spike.is_some() && f == 0 { reach * k as f64 } else { 0.5 + reach * k as f64 };
            put(1 + f * 4 + (k - 1), h.x + dist * c, h.y + dist * s, -0.01 * k as f64, rng);
        }
    }
}

fn keypoint_track<R: Rng>(class: usize, track: &[HandPose], side: f64, rng: &mut R) -> Result<Tensor> {
    let template = pose_template();
    let (sx, sy) = (rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
    let pose_noise = Normal::new(0.0, 0.002).expect("valid sigma");
    let hand_block = match class {
        0 => RIGHT_HAND_OFFSET,
        1 => LEFT_HAND_OFFSET,
        _ if side > 0.0 => RIGHT_HAND_OFFSET,
        _ => LEFT_HAND_OFFSET,
    };
    let mut data = vec![0.0; track.len() * KEYPOINT_WIDTH];
    for (t, h) in track.iter().enumerate() {
        let row = &mut data[t * KEYPOINT_WIDTH..(t + 1) * KEYPOINT_WIDTH];
        for (p, &(x, y)) in template.iter().enumerate() {
            row[p * 4] = (x + sx + pose_noise.sample(rng)).clamp(0.0, 1.0);
            row[p * 4 + 1] = (y + sy + pose_noise.sample(rng)).clamp(0.0, 1.0);
            row[p * 4 + 2] = 0.05 * pose_noise.sample(rng);
            row[p * 4 + 3] = rng.random_range(0.9..=1.0);
        }
        write_hand(row, hand_block, h, side, rng);
    }
    debug_assert_eq!(HAND_POINTS, 21);
    Tensor::new(&[track.len(), KEYPOINT_WIDTH], data)
}

/// Generates `classes × n_per_class` samples; output is a pure function of the config.
pub fn synthesize_gestures(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let g = cfg.geometry();
    let noise = (cfg.pixel_noise > 0.0).then(|| Normal::new(0.0, cfg.pixel_noise).expect("valid sigma"));
    let class_names: Vec<String> = GESTURE_CLASSES[..cfg.classes].iter().map(|s| s.to_string()).collect();
    let mut samples = Vec::with_capacity(cfg.classes * cfg.n_per_class);
    for (class, name) in class_names.iter().enumerate() {
        let slug = class_dir_name(name);
        for i in 0..cfg.n_per_class {
            let mut rng = item_stream(cfg.seed, "synth", (class * cfg.n_per_class + i) as u64);
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let style = Style {
                amp: rng.random_range(0.75..0.95),
                background: rng.random_range(0.05..0.15),
                side,
            };
            let track = trajectory(class, &mut rng, style.side, cfg.frames);
            let mut pixels = Vec::with_capacity(cfg.frames * g.pixels());
            for h in &track {
                render_frame(h, &style, g, noise.as_ref(), &mut rng, &mut pixels);
            }
            let frames = Tensor::new(&[cfg.frames, g.height, g.width, g.channels], pixels)?;
            let keypoints = validate_keypoints(keypoint_track(class, &track, side, &mut rng)?)?;
            samples.push(GestureSample::new(
                format!("{slug}_{i:03}"),
                frames,
                Some(keypoints),
                class,
                format!("s{:02}", i % SUBJECTS),
                Provenance::Synthetic,
            )?);
        }
    }
    Dataset::new(class_names, samples)
}
