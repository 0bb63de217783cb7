//! Small trainable per-frame CNN used in place of a pretrained backbone.
//!
//! Per frame: 3×3 "same" convolution to 8 channels, 2×2 max-pool, relu,
//! 3×3 convolution to 16 channels, 2×2 max-pool, relu, flatten, dense map to
//! `D` features. The same map is applied to every frame of a sequence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSource, FrameFeatureSequence};
use crate::error::{Error, Result};
use crate::linalg::Tensor;
use crate::params::{join, xavier_uniform, Activation, Dense, DenseCache, ParamSet};

pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
pub const MAX_CHANNELS: usize = 4;
const KERNEL: usize = 3;

/// Spatial layout of the frames a network accepts (row-major `H×W×C`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FrameGeometry {
    pub fn square(size: usize, channels: usize) -> Self {
        FrameGeometry {
            height: size,
            width: size,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 || !self.height.is_multiple_of(4) || !self.width.is_multiple_of(4) || !(1..=MAX_CHANNELS).contains(&self.channels) {
            return Err(Error::Config(format!(
                "frame geometry {}x{}x{} must have sides divisible by 4 and 1 to 4 channels",
                self.height, self.width, self.channels
            )));
        }
        Ok(())
    }

    /// Width of the flattened map entering the dense layer.
    pub fn flat_width(&self) -> usize {
        (self.height / 4) * (self.width / 4) * CONV2_CHANNELS
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TinyCnnParams {
    /// `[8 × 9C]`, columns ordered `(ky, kx, c)`.
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    /// `[16 × 72]`
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub dense: Dense,
    pub geometry: FrameGeometry,
}

impl TinyCnnParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, geometry: FrameGeometry, features: usize) -> Result<Self> {
        geometry.validate()?;
        let k1 = KERNEL * KERNEL * geometry.channels;
        let k2 = KERNEL * KERNEL * CONV1_CHANNELS;
        Ok(TinyCnnParams {
            conv1_w: xavier_uniform(rng, CONV1_CHANNELS, k1),
            conv1_b: Tensor::zeros(&[CONV1_CHANNELS]),
            conv2_w: xavier_uniform(rng, CONV2_CHANNELS, k2),
            conv2_b: Tensor::zeros(&[CONV2_CHANNELS]),
            dense: Dense::init(rng, geometry.flat_width(), features, Activation::Identity),
            geometry,
        })
    }

    pub fn zeros(geometry: FrameGeometry, features: usize) -> Result<Self> {
        geometry.validate()?;
        Ok(TinyCnnParams {
            conv1_w: Tensor::zeros(&[CONV1_CHANNELS, KERNEL * KERNEL * geometry.channels]),
            conv1_b: Tensor::zeros(&[CONV1_CHANNELS]),
            conv2_w: Tensor::zeros(&[CONV2_CHANNELS, KERNEL * KERNEL * CONV1_CHANNELS]),
            conv2_b: Tensor::zeros(&[CONV2_CHANNELS]),
            dense: Dense::zeros(geometry.flat_width(), features, Activation::Identity),
            geometry,
        })
    }

    pub fn feature_width(&self) -> usize {
        self.dense.output_width()
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero();
        g
    }
}

impl ParamSet for TinyCnnParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "conv1_w"), &self.conv1_w);
        f(join(prefix, "conv1_b"), &self.conv1_b);
        f(join(prefix, "conv2_w"), &self.conv2_w);
        f(join(prefix, "conv2_b"), &self.conv2_b);
        self.dense.visit(&join(prefix, "dense"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "conv1_w"), &mut self.conv1_w);
        f(join(prefix, "conv1_b"), &mut self.conv1_b);
        f(join(prefix, "conv2_w"), &mut self.conv2_w);
        f(join(prefix, "conv2_b"), &mut self.conv2_b);
        self.dense.visit_mut(&join(prefix, "dense"), f);
    }
}

/// `[9C][OC]` transpose of `weights[OC × 9C]`.
fn transpose_kernel<const OC: usize>(weights: &Tensor) -> Vec<[f64; OC]> {
    let k = weights.len() / OC;
    let mut wt = vec![[0.0; OC]; k];
    for (o, wrow) in weights.data().chunks_exact(k).enumerate() {
        for (kk, &v) in wrow.iter().enumerate() {
            wt[kk][o] = v;
        }
    }
    wt
}

/// Visits the in-bounds 3×3 neighbours of `(y, x)` as `(input pixel, tap)`.
#[inline(always)]
fn for_each_tap(y: usize, x: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize)) {
    for ky in 0..KERNEL {
        let sy = y + ky;
        if sy == 0 || sy > h {
            continue;
        }
        for kx in 0..KERNEL {
            let sx = x + kx;
            if sx == 0 || sx > w {
                continue;
            }
            f((sy - 1) * w + sx - 1, ky * KERNEL + kx);
        }
    }
}

/// 3×3 "same" convolution of an `h×w×C` map to `OC` channels, zero padded.
fn conv_forward_fixed<const C: usize, const OC: usize>(input: &[f64], h: usize, w: usize, weights: &Tensor, bias: &Tensor) -> Vec<f64> {
    let wt = transpose_kernel::<OC>(weights);
    let mut out = Vec::with_capacity(h * w * OC);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; OC];
            for_each_tap(y, x, h, w, |pixel, tap| {
                let v: &[f64; C] = input[pixel * C..(pixel + 1) * C].try_into().expect("C values");
                let taps: &[[f64; OC]] = &wt[tap * C..(tap + 1) * C];
                for ci in 0..C {
                    for o in 0..OC {
                        acc[o] += v[ci] * taps[ci][o];
                    }
                }
            });
            for (a, b) in acc.iter_mut().zip(bias.data()) {
                *a += b;
            }
            out.extend_from_slice(&acc);
        }
    }
    out
}

/// Gradients of [`conv_forward_fixed`]: accumulates into `d_weights`/`d_bias` and, when given, `d_input`.
#[allow(clippy::too_many_arguments)]
fn conv_backward_fixed<const C: usize, const OC: usize>(
    input: &[f64],
    h: usize,
    w: usize,
    d_out: &[f64],
    weights: &Tensor,
    d_weights: &mut Tensor,
    d_bias: &mut Tensor,
    mut d_input: Option<&mut [f64]>,
) {
    let wt = transpose_kernel::<OC>(weights);
    let mut dwt = vec![[0.0; OC]; wt.len()];
    let mut db = [0.0; OC];
    for y in 0..h {
        for x in 0..w {
            let g: &[f64; OC] = d_out[(y * w + x) * OC..(y * w + x + 1) * OC].try_into().expect("OC values");
            // pooling leaves most positions with zero gradient
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            for o in 0..OC {
                db[o] += g[o];
            }
            for_each_tap(y, x, h, w, |pixel, tap| {
                let v: &[f64; C] = input[pixel * C..(pixel + 1) * C].try_into().expect("C values");
                for ci in 0..C {
                    let dw = &mut dwt[tap * C + ci];
                    for o in 0..OC {
                        dw[o] += v[ci] * g[o];
                    }
                }
                if let Some(di) = d_input.as_deref_mut() {
                    for ci in 0..C {
                        let wcol = &wt[tap * C + ci];
                        let mut s = 0.0;
                        for o in 0..OC {
                            s += wcol[o] * g[o];
                        }
                        di[pixel * C + ci] += s;
                    }
                }
            });
        }
    }
    let k = wt.len();
    let dw = d_weights.data_mut();
    for (kk, col) in dwt.iter().enumerate() {
        for o in 0..OC {
            dw[o * k + kk] += col[o];
        }
    }
    for (b, g) in d_bias.data_mut().iter_mut().zip(db) {
        *b += g;
    }
}

/// Instantiates `$f::<C, $oc>` for the supported input channel counts.
macro_rules! by_channels {
    ($c:expr, $f:ident, $oc:expr, $($arg:expr),*) => {
        match $c {
            1 => $f::<1, $oc>($($arg),*),
            2 => $f::<2, $oc>($($arg),*),
            3 => $f::<3, $oc>($($arg),*),
            4 => $f::<4, $oc>($($arg),*),
            8 => $f::<8, $oc>($($arg),*),
            c => unreachable!("unsupported channel count {c}"),
        }
    };
}

/// 2×2 stride-2 max-pool of an `h×w×c` map; returns values and the flat argmax index of each.
fn max_pool(input: &[f64], h: usize, w: usize, c: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    let mut arg = vec![0u32; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                        // strict '>' keeps the first maximum, so ties route to one position
                        if input[i] > best {
                            best = input[i];
                            best_i = i;
                        }
                    }
                }
                let o = (y * ow + x) * c + ch;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

/// Per-frame activations needed by the backward pass.
#[derive(Clone, Debug)]
struct FrameCache {
    frame: Vec<f64>,
    arg1: Vec<u32>,
    relu1: Vec<f64>,
    arg2: Vec<u32>,
    relu2: Vec<f64>,
    dense: DenseCache,
}

#[derive(Clone, Debug)]
pub struct TinyCnnCache {
    geometry: FrameGeometry,
    feature_width: usize,
    frames: Vec<FrameCache>,
}

impl TinyCnnCache {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl TinyCnnParams {
    fn frame_forward(&self, frame: &[f64]) -> Result<(Vec<f64>, FrameCache)> {
        let g = self.geometry;
        let (h, w, c) = (g.height, g.width, g.channels);
        let a1 = by_channels!(c, conv_forward_fixed, CONV1_CHANNELS, frame, h, w, &self.conv1_w, &self.conv1_b);
        let (mut relu1, arg1) = max_pool(&a1, h, w, CONV1_CHANNELS);
        relu1.iter_mut().for_each(|v| *v = v.max(0.0));

        let (h2, w2) = (h / 2, w / 2);
        let a2 = conv_forward_fixed::<CONV1_CHANNELS, CONV2_CHANNELS>(&relu1, h2, w2, &self.conv2_w, &self.conv2_b);
        let (mut relu2, arg2) = max_pool(&a2, h2, w2, CONV2_CHANNELS);
        relu2.iter_mut().for_each(|v| *v = v.max(0.0));

        let (features, dense) = self.dense.forward(&relu2)?;
        Ok((
            features,
            FrameCache {
                frame: frame.to_vec(),
                arg1,
                relu1,
                arg2,
                relu2,
                dense,
            },
        ))
    }

    /// Accumulates gradients for one frame; returns the frame gradient when requested.
    fn frame_backward(
        &self,
        cache: &FrameCache,
        grad_features: &[f64],
        grads: &mut TinyCnnParams,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let g = self.geometry;
        let (h, w, c) = (g.height, g.width, g.channels);
        let (h2, w2) = (h / 2, w / 2);

        let mut d_relu2 = self.dense.backward(&cache.dense, grad_features, &mut grads.dense)?;
        for (d, v) in d_relu2.iter_mut().zip(&cache.relu2) {
            if *v <= 0.0 {
                *d = 0.0;
            }
        }
        let mut d_a2 = vec![0.0; h2 * w2 * CONV2_CHANNELS];
        for (d, &i) in d_relu2.iter().zip(&cache.arg2) {
            d_a2[i as usize] += d;
        }

        let mut d_relu1 = vec![0.0; cache.relu1.len()];
        conv_backward_fixed::<CONV1_CHANNELS, CONV2_CHANNELS>(
            &cache.relu1,
            h2,
            w2,
            &d_a2,
            &self.conv2_w,
            &mut grads.conv2_w,
            &mut grads.conv2_b,
            Some(&mut d_relu1),
        );
        for (d, v) in d_relu1.iter_mut().zip(&cache.relu1) {
            if *v <= 0.0 {
                *d = 0.0;
            }
        }
        let mut d_a1 = vec![0.0; h * w * CONV1_CHANNELS];
        for (d, &i) in d_relu1.iter().zip(&cache.arg1) {
            d_a1[i as usize] += d;
        }

        let mut d_frame = want_input.then(|| vec![0.0; cache.frame.len()]);
        by_channels!(
            c,
            conv_backward_fixed,
            CONV1_CHANNELS,
            &cache.frame,
            h,
            w,
            &d_a1,
            &self.conv1_w,
            &mut grads.conv1_w,
            &mut grads.conv1_b,
            d_frame.as_deref_mut()
        );
        Ok(d_frame)
    }
}

fn check_frames(params: &TinyCnnParams, frames: &Tensor) -> Result<usize> {
    let g = params.geometry;
    let expected = [g.height, g.width, g.channels];
    if frames.rank() != 4 || frames.shape()[1..] != expected {
        return Err(Error::Shape {
            op: "tinycnn_forward frames",
            left: vec![0, g.height, g.width, g.channels],
            right: frames.shape().to_vec(),
        });
    }
    Ok(frames.rows())
}

/// Applies the per-frame network to every frame of `frames[T×H×W×C]`.
pub fn tinycnn_forward(params: &TinyCnnParams, frames: &Tensor) -> Result<(FrameFeatureSequence, TinyCnnCache)> {
    let t_len = check_frames(params, frames)?;
    let d = params.feature_width();
    let mut features = Vec::with_capacity(t_len * d);
    let mut caches = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (f, cache) = params.frame_forward(frames.row(t))?;
        features.extend_from_slice(&f);
        caches.push(cache);
    }
    let seq = FrameFeatureSequence::new(Tensor::new(&[t_len, d], features)?, FeatureSource::TinyCnn)?;
    Ok((
        seq,
        TinyCnnCache {
            geometry: params.geometry,
            feature_width: d,
            frames: caches,
        },
    ))
}

/// Forward pass without keeping activations.
pub fn tinycnn_features(params: &TinyCnnParams, frames: &Tensor) -> Result<FrameFeatureSequence> {
    let t_len = check_frames(params, frames)?;
    let d = params.feature_width();
    let mut features = Vec::with_capacity(t_len * d);
    for t in 0..t_len {
        features.extend_from_slice(&params.frame_forward(frames.row(t))?.0);
    }
    FrameFeatureSequence::new(Tensor::new(&[t_len, d], features)?, FeatureSource::TinyCnn)
}

fn check_cache(params: &TinyCnnParams, cache: &TinyCnnCache, grad_features: &Tensor) -> Result<()> {
    if cache.geometry != params.geometry || cache.feature_width != params.feature_width() {
        return Err(Error::CacheMismatch("cache was produced by a different network".into()));
    }
    if grad_features.shape() != [cache.frames.len(), cache.feature_width] {
        return Err(Error::CacheMismatch(format!(
            "cache holds {} frames of width {}, gradient has shape {:?}",
            cache.frames.len(),
            cache.feature_width,
            grad_features.shape()
        )));
    }
    Ok(())
}

/// Parameter gradients and frame gradients `[T×H×W×C]`.
pub fn tinycnn_backward(
    params: &TinyCnnParams,
    cache: &TinyCnnCache,
    grad_features: &Tensor,
) -> Result<(TinyCnnParams, Tensor)> {
    check_cache(params, cache, grad_features)?;
    let mut grads = params.zeros_like();
    let g = params.geometry;
    let mut d_frames = Vec::with_capacity(cache.frames.len() * g.pixels());
    for (t, fc) in cache.frames.iter().enumerate() {
        let d = params.frame_backward(fc, grad_features.row(t), &mut grads, true)?;
        d_frames.extend(d.expect("input gradient requested"));
    }
    let frames = Tensor::new(&[cache.frames.len(), g.height, g.width, g.channels], d_frames)?;
    Ok((grads, frames))
}

/// Like [`tinycnn_backward`] but accumulates into `grads` and skips the frame gradient.
pub fn tinycnn_backward_params(
    params: &TinyCnnParams,
    cache: &TinyCnnCache,
    grad_features: &Tensor,
    grads: &mut TinyCnnParams,
) -> Result<()> {
    check_cache(params, cache, grad_features)?;
    for (t, fc) in cache.frames.iter().enumerate() {
        let row = grad_features.row(t);
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        params.frame_backward(fc, row, grads, false)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrent::{gradient_check, GradCheckConfig};
    use crate::rng::substream;

    fn random_frames<R: Rng>(rng: &mut R, t: usize, g: FrameGeometry) -> Tensor {
        let n = t * g.pixels();
        Tensor::new(&[t, g.height, g.width, g.channels], (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    /// Direct sliding-window convolution, no patch matrix.
    fn naive_conv(input: &[f64], h: usize, w: usize, c: usize, weights: &Tensor, bias: &Tensor) -> Vec<f64> {
        let oc = bias.len();
        let mut out = vec![0.0; h * w * oc];
        for y in 0..h as isize {
            for x in 0..w as isize {
                for o in 0..oc {
                    let mut s = bias.data()[o];
                    for ky in -1..=1isize {
                        for kx in -1..=1isize {
                            let (sy, sx) = (y + ky, x + kx);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for ch in 0..c {
                                let wi = o * 9 * c + (((ky + 1) * 3 + kx + 1) as usize) * c + ch;
                                s += weights.data()[wi] * input[(sy as usize * w + sx as usize) * c + ch];
                            }
                        }
                    }
                    out[(y as usize * w + x as usize) * oc + o] = s;
                }
            }
        }
        out
    }

    #[test]
    fn zero_frames_give_zero_features() {
        let mut rng = substream(1, "cnn");
        let g = FrameGeometry::square(16, 1);
        let p = TinyCnnParams::init(&mut rng, g, 6).unwrap();
        let frames = Tensor::zeros(&[3, 16, 16, 1]);
        let (seq, _) = tinycnn_forward(&p, &frames).unwrap();
        assert!(seq.features.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let mut rng = substream(2, "cnn");
        for c in [1, 3] {
            let g = FrameGeometry::square(12, c);
            let mut p = TinyCnnParams::init(&mut rng, g, 4).unwrap();
            p.conv1_b.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            let frame = random_frames(&mut rng, 1, g);
            let fast = by_channels!(c, conv_forward_fixed, CONV1_CHANNELS, frame.data(), 12, 12, &p.conv1_w, &p.conv1_b);
            let slow = naive_conv(frame.data(), 12, 12, c, &p.conv1_w, &p.conv1_b);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn frames_are_processed_independently() {
        let mut rng = substream(3, "cnn");
        let g = FrameGeometry::square(8, 2);
        let p = TinyCnnParams::init(&mut rng, g, 5).unwrap();
        let frames = random_frames(&mut rng, 4, g);
        let perm = [2usize, 0, 3, 1];
        let mut permuted = Vec::new();
        for &i in &perm {
            permuted.extend_from_slice(frames.row(i));
        }
        let permuted = Tensor::new(frames.shape(), permuted).unwrap();
        let a = tinycnn_features(&p, &frames).unwrap().features;
        let b = tinycnn_features(&p, &permuted).unwrap().features;
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b.row(k), a.row(i));
        }
    }

    #[test]
    fn wrong_spatial_size_is_rejected() {
        let mut rng = substream(4, "cnn");
        let p = TinyCnnParams::init(&mut rng, FrameGeometry::square(8, 1), 3).unwrap();
        assert!(tinycnn_forward(&p, &Tensor::zeros(&[2, 12, 12, 1])).is_err());
        assert!(FrameGeometry::square(10, 1).validate().is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = substream(5, "cnn");
        let g = FrameGeometry::square(8, 1);
        let p = TinyCnnParams::init(&mut rng, g, 3).unwrap();
        let (_, cache) = tinycnn_forward(&p, &random_frames(&mut rng, 2, g)).unwrap();
        let (grads, d_frames) = tinycnn_backward(&p, &cache, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(grads.flat_values().iter().all(|&v| v == 0.0));
        assert!(d_frames.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pooling_routes_gradient_to_argmax() {
        let input = [1.0, 5.0, 2.0, 3.0];
        let (out, arg) = max_pool(&input, 2, 2, 1);
        assert_eq!(out, vec![5.0]);
        assert_eq!(arg, vec![1]);
    }

    #[test]
    fn toy_network_matches_finite_differences() {
        let mut rng = substream(6, "cnn-fd");
        let g = FrameGeometry::square(8, 1);
        let mut p = TinyCnnParams::init(&mut rng, g, 4).unwrap();
        p.conv1_b.data_mut().iter_mut().for_each(|b| *b = rng.random_range(0.0..0.2));
        p.conv2_b.data_mut().iter_mut().for_each(|b| *b = rng.random_range(0.0..0.2));
        let frames = random_frames(&mut rng, 2, g);
        let weights = Tensor::new(&[2, 4], (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let objective = |q: &TinyCnnParams| -> f64 {
            let f = tinycnn_features(q, &frames).unwrap().features;
            f.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = tinycnn_forward(&p, &frames).unwrap();
        let (grads, d_frames) = tinycnn_backward(&p, &cache, &weights).unwrap();
        let report = gradient_check(objective, &p, &grads, GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());

        let mut params_only = p.zeros_like();
        tinycnn_backward_params(&p, &cache, &weights, &mut params_only).unwrap();
        assert_eq!(params_only.flat_values(), grads.flat_values());

        let eps = 1e-5;
        let f_at = |fr: &Tensor| -> f64 {
            let f = tinycnn_features(&p, fr).unwrap().features;
            f.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };
        for i in (0..frames.len()).step_by(7) {
            let (mut a, mut b) = (frames.clone(), frames.clone());
            a.data_mut()[i] += eps;
            b.data_mut()[i] -= eps;
            let numeric = (f_at(&a) - f_at(&b)) / (2.0 * eps);
            let err = crate::recurrent::relative_error(d_frames.data()[i], numeric);
            assert!(err < 1e-4, "pixel {i}: {} vs {numeric}", d_frames.data()[i]);
        }
    }
}
