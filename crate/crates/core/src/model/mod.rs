//! Three-stream hybrid classifier.
//!
//! ```text
//! stream 1: frames ─ TinyCNN ─┬─ LSTM → GRU → last step → dense ──────────┐
//!                             └─ gather anchors → LSTM×3 → last step ─────┤
//! stream 2: frames ─ TinyCNN ─┬─ GRU → GRU → last step → dropout → dense ─┤→ concat → dense → softmax
//!                             └─ gather anchors → LSTM×3 → last step ─────┤
//! stream 3: keypoints ── LSTM×3 → GRU×2 → last step ──────────────────────┘
//! ```

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::GestureSample;
use crate::error::{Error, Result};
use crate::featurestreams::{
    scatter_rows, subsample_frames, tinycnn_backward_params, tinycnn_forward, FeatureSource, FrameGeometry,
    TinyCnnCache, TinyCnnParams, DEFAULT_ANCHORS, KEYPOINT_WIDTH,
};
use crate::linalg::{softmax_slice, Tensor};
use crate::params::{join, Activation, Dense, DenseCache, ParamSet};
use crate::recurrent::{last_step, last_step_grad, CellKind, RecurrentStack, StackCache};
use crate::rng::{substream, StageRng};

const STREAM1_BRANCH1: [CellKind; 2] = [CellKind::Lstm, CellKind::Gru];
const STREAM2_BRANCH1: [CellKind; 2] = [CellKind::Gru, CellKind::Gru];
const GATHER_BRANCH: [CellKind; 3] = [CellKind::Lstm; 3];
const STREAM3: [CellKind; 5] = [CellKind::Lstm, CellKind::Lstm, CellKind::Lstm, CellKind::Gru, CellKind::Gru];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeStreamConfig {
    pub frames: usize,
    pub anchors: Vec<usize>,
    pub geometry: FrameGeometry,
    /// `tiny_cnn` learns per-frame features from pixels; `precomputed` reads them from the input.
    pub feature_source: FeatureSource,
    pub feature_width_1: usize,
    pub feature_width_2: usize,
    pub hidden: usize,
    pub dense_width: usize,
    pub branch_activation: Activation,
    pub dropout: f64,
    pub classes: usize,
    /// Enabled streams, a subset of {1, 2, 3}.
    pub streams: Vec<usize>,
}

impl Default for ThreeStreamConfig {
    fn default() -> Self {
        ThreeStreamConfig {
            frames: 30,
            anchors: DEFAULT_ANCHORS.to_vec(),
            geometry: FrameGeometry::square(128, 1),
            feature_source: FeatureSource::TinyCnn,
            feature_width_1: 64,
            feature_width_2: 64,
            hidden: 64,
            dense_width: 64,
            branch_activation: Activation::Relu,
            dropout: 0.3,
            classes: 10,
            streams: vec![1, 2, 3],
        }
    }
}

impl ThreeStreamConfig {
    /// Small configuration used for finite-difference checks: 4 frames of 16×16, width 8 everywhere.
    pub fn toy() -> Self {
        ThreeStreamConfig {
            frames: 4,
            anchors: vec![0, 2, 3],
            geometry: FrameGeometry::square(16, 1),
            feature_width_1: 8,
            feature_width_2: 8,
            hidden: 8,
            dense_width: 8,
            ..ThreeStreamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        if self.anchors.is_empty() {
            return Err(Error::Config("anchor list is empty".into()));
        }
        if self.anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("anchors {:?} must be strictly increasing", self.anchors)));
        }
        if let Some(&a) = self.anchors.iter().find(|&&a| a >= self.frames) {
            return Err(Error::Config(format!("anchor {a} is not below frame count {}", self.frames)));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        let widths = [self.feature_width_1, self.feature_width_2, self.hidden, self.dense_width];
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        if self.streams.is_empty() {
            return Err(Error::Config("at least one stream must be enabled".into()));
        }
        if self.streams.iter().any(|s| !(1..=3).contains(s)) || self.streams.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "streams {:?} must be an increasing subset of [1, 2, 3]",
                self.streams
            )));
        }
        if self.feature_source == FeatureSource::TinyCnn && self.uses_pixels() {
            self.geometry.validate()?;
        }
        Ok(())
    }

    pub fn has_stream(&self, s: usize) -> bool {
        self.streams.contains(&s)
    }

    fn uses_pixels(&self) -> bool {
        self.has_stream(1) || self.has_stream(2)
    }

    /// Output width of stream `s` (1-based).
    pub fn stream_width(&self, s: usize) -> usize {
        match s {
            1 | 2 => self.dense_width + self.hidden,
            _ => self.hidden,
        }
    }

    /// Width of the concatenated summaries of the enabled streams.
    pub fn fusion_width(&self) -> usize {
        self.streams.iter().map(|&s| self.stream_width(s)).sum()
    }
}

/// Variant of `config` with only `streams` enabled.
pub fn ablate(config: &ThreeStreamConfig, streams: &[usize]) -> Result<ThreeStreamConfig> {
    if streams.is_empty() {
        return Err(Error::Config("ablation needs at least one stream".into()));
    }
    let mut set = streams.to_vec();
    set.sort_unstable();
    set.dedup();
    let cfg = ThreeStreamConfig {
        streams: set,
        ..config.clone()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parameters of one pixel stream.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelStream {
    pub backbone: Option<TinyCnnParams>,
    pub branch1: RecurrentStack,
    pub dense: Dense,
    pub branch2: RecurrentStack,
}

impl ParamSet for PixelStream {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.backbone.visit(&join(prefix, "backbone"), f);
        self.branch1.visit(&join(prefix, "branch1"), f);
        self.dense.visit(&join(prefix, "dense"), f);
        self.branch2.visit(&join(prefix, "branch2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        self.backbone.visit_mut(&join(prefix, "backbone"), f);
        self.branch1.visit_mut(&join(prefix, "branch1"), f);
        self.dense.visit_mut(&join(prefix, "dense"), f);
        self.branch2.visit_mut(&join(prefix, "branch2"), f);
    }
}

impl PixelStream {
    fn zeros_like(&self) -> Self {
        PixelStream {
            backbone: self.backbone.as_ref().map(TinyCnnParams::zeros_like),
            branch1: self.branch1.zeros_like(),
            dense: Dense::zeros(self.dense.input_width(), self.dense.output_width(), self.dense.activation),
            branch2: self.branch2.zeros_like(),
        }
    }

    fn audit(&self, d: usize, name: &str) -> Result<()> {
        let chain = |left: usize, right: usize, what: &'static str| {
            if left == right {
                Ok(())
            } else {
                Err(Error::Shape {
                    op: what,
                    left: vec![left],
                    right: vec![right],
                })
            }
        };
        if let Some(b) = &self.backbone {
            chain(b.feature_width(), d, "backbone → branches")?;
        }
        self.branch1.validate()?;
        self.branch2.validate()?;
        chain(self.branch1.input_width(), d, "features → branch 1")?;
        chain(self.branch2.input_width(), d, "features → branch 2")?;
        chain(self.branch1.output_width(), self.dense.input_width(), "branch 1 → dense")
            .map_err(|e| Error::Config(format!("{name}: {e}")))
    }
}

/// All trainable tensors. Disabled streams keep their parameters and receive zero gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub stream1: PixelStream,
    pub stream2: PixelStream,
    pub stream3: RecurrentStack,
    pub head: Dense,
}

impl ParamSet for ModelParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.stream1.visit(&join(prefix, "stream1"), f);
        self.stream2.visit(&join(prefix, "stream2"), f);
        self.stream3.visit(&join(prefix, "stream3"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        self.stream1.visit_mut(&join(prefix, "stream1"), f);
        self.stream2.visit_mut(&join(prefix, "stream2"), f);
        self.stream3.visit_mut(&join(prefix, "stream3"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

impl ModelParams {
    fn build<R: Rng + ?Sized>(cfg: &ThreeStreamConfig, mut rng: Option<&mut R>) -> Result<Self> {
        let h = cfg.hidden;
        let stack = |kinds: &[CellKind], input: usize, rng: &mut Option<&mut R>| match rng {
            Some(r) => RecurrentStack::init(*r, kinds, input, h),
            None => RecurrentStack::zeros(kinds, input, h),
        };
        let dense = |input: usize, output: usize, act: Activation, rng: &mut Option<&mut R>| match rng {
            Some(r) => Dense::init(*r, input, output, act),
            None => Dense::zeros(input, output, act),
        };
        let backbone = |d: usize, rng: &mut Option<&mut R>| -> Result<Option<TinyCnnParams>> {
            if cfg.feature_source != FeatureSource::TinyCnn {
                return Ok(None);
            }
            Ok(Some(match rng {
                Some(r) => TinyCnnParams::init(*r, cfg.geometry, d)?,
                None => TinyCnnParams::zeros(cfg.geometry, d)?,
            }))
        };
        let (d1, d2) = (cfg.feature_width_1, cfg.feature_width_2);
        let stream1 = PixelStream {
            backbone: backbone(d1, &mut rng)?,
            branch1: stack(&STREAM1_BRANCH1, d1, &mut rng),
            dense: dense(h, cfg.dense_width, cfg.branch_activation, &mut rng),
            branch2: stack(&GATHER_BRANCH, d1, &mut rng),
        };
        let stream2 = PixelStream {
            backbone: backbone(d2, &mut rng)?,
            branch1: stack(&STREAM2_BRANCH1, d2, &mut rng),
            dense: dense(h, cfg.dense_width, cfg.branch_activation, &mut rng),
            branch2: stack(&GATHER_BRANCH, d2, &mut rng),
        };
        let stream3 = stack(&STREAM3, KEYPOINT_WIDTH, &mut rng);
        let head = dense(cfg.fusion_width(), cfg.classes, Activation::Identity, &mut rng);
        Ok(ModelParams {
            stream1,
            stream2,
            stream3,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            stream1: self.stream1.zeros_like(),
            stream2: self.stream2.zeros_like(),
            stream3: self.stream3.zeros_like(),
            head: Dense::zeros(self.head.input_width(), self.head.output_width(), self.head.activation),
        }
    }

    /// Prefix of every tensor name belonging to stream `s`.
    pub fn stream_prefix(s: usize) -> String {
        format!("stream{s}.")
    }
}

/// Inputs for one sample. Pixel streams read `frames` (TinyCNN mode) or `features` (precomputed mode).
#[derive(Clone, Copy, Debug, Default)]
pub struct ModelInput<'a> {
    pub frames: Option<&'a Tensor>,
    pub features: Option<(&'a Tensor, &'a Tensor)>,
    pub keypoints: Option<&'a Tensor>,
}

impl<'a> ModelInput<'a> {
    pub fn from_sample(sample: &'a GestureSample) -> Self {
        ModelInput {
            frames: Some(&sample.frames),
            features: None,
            keypoints: sample.keypoints.as_ref().map(|k| k.points()),
        }
    }
}

/// Training draws dropout masks from the given stream; inference disables dropout.
pub enum Phase<'r> {
    Inference,
    Train(&'r mut StageRng),
}

#[derive(Clone, Debug)]
struct PixelCache {
    cnn: Option<TinyCnnCache>,
    steps: usize,
    branch1: StackCache,
    dense: DenseCache,
    mask: Option<Vec<f64>>,
    branch2: StackCache,
    anchors: usize,
}

#[derive(Clone, Debug)]
struct KeypointCache {
    steps: usize,
    stack: StackCache,
}

/// Activations kept for the backward pass, tagged with the parameter generation that produced them.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    stream1: Option<PixelCache>,
    stream2: Option<PixelCache>,
    stream3: Option<KeypointCache>,
    head: DenseCache,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Summary of each enabled stream, in stream order: `(stream, vector)`.
    pub stream_outputs: Vec<(usize, Vec<f64>)>,
    pub cache: ForwardCache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeStreamModel {
    config: ThreeStreamConfig,
    params: ModelParams,
    generation: u64,
}

fn check_rows(t: &Tensor, rows: usize, width: Option<usize>, what: &'static str) -> Result<()> {
    let ok = t.rank() >= 2 && t.rows() == rows && width.is_none_or(|w| t.rank() == 2 && t.shape()[1] == w);
    if ok {
        Ok(())
    } else {
        let mut expected = vec![rows];
        expected.extend(width);
        Err(Error::Shape {
            op: what,
            left: expected,
            right: t.shape().to_vec(),
        })
    }
}

impl ThreeStreamModel {
    /// Randomly initialised model (stream `"init"` of `seed`).
    pub fn init(config: ThreeStreamConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, "init");
        let params = ModelParams::build(&config, Some(&mut rng))?;
        Self::from_params(config, params)
    }

    /// Every parameter zero.
    pub fn zeros(config: ThreeStreamConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::build::<StageRng>(&config, None)?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters after checking that every interface width chains.
    pub fn from_params(config: ThreeStreamConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let model = ThreeStreamModel {
            config,
            params,
            generation: 0,
        };
        model.audit()?;
        Ok(model)
    }

    /// Shape-chain audit over every stream, branch and the head.
    pub fn audit(&self) -> Result<()> {
        let c = &self.config;
        let p = &self.params;
        p.stream1.audit(c.feature_width_1, "stream 1")?;
        p.stream2.audit(c.feature_width_2, "stream 2")?;
        p.stream3.validate()?;
        if p.stream3.input_width() != KEYPOINT_WIDTH {
            return Err(Error::Shape {
                op: "keypoints → stream 3",
                left: vec![KEYPOINT_WIDTH],
                right: vec![p.stream3.input_width()],
            });
        }
        for (s, width) in [
            (1, p.stream1.dense.output_width() + p.stream1.branch2.output_width()),
            (2, p.stream2.dense.output_width() + p.stream2.branch2.output_width()),
            (3, p.stream3.output_width()),
        ] {
            if width != c.stream_width(s) {
                return Err(Error::Config(format!(
                    "stream {s} produces {width} values, configuration expects {}",
                    c.stream_width(s)
                )));
            }
        }
        if p.head.input_width() != c.fusion_width() || p.head.output_width() != c.classes {
            return Err(Error::Shape {
                op: "fusion → head",
                left: vec![c.fusion_width(), c.classes],
                right: vec![p.head.input_width(), p.head.output_width()],
            });
        }
        Ok(())
    }

    pub fn config(&self) -> &ThreeStreamConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Mutable parameters. Invalidates every forward cache produced so far.
    pub fn params_mut(&mut self) -> &mut ModelParams {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn pixel_features(
        &self,
        stream: &PixelStream,
        input: &ModelInput,
        which: usize,
    ) -> Result<(Tensor, Option<TinyCnnCache>)> {
        let c = &self.config;
        match (&stream.backbone, c.feature_source) {
            (Some(backbone), FeatureSource::TinyCnn) => {
                let frames = input
                    .frames
                    .ok_or_else(|| Error::MissingModality(format!("stream {which} needs frames")))?;
                check_rows(frames, c.frames, None, "frames")?;
                let (seq, cache) = tinycnn_forward(backbone, frames)?;
                Ok((seq.features, Some(cache)))
            }
            _ => {
                let (a, b) = input
                    .features
                    .ok_or_else(|| Error::MissingModality(format!("stream {which} needs precomputed features")))?;
                let (f, d) = if which == 1 { (a, c.feature_width_1) } else { (b, c.feature_width_2) };
                check_rows(f, c.frames, Some(d), "precomputed features")?;
                Ok((f.clone(), None))
            }
        }
    }

    fn pixel_forward(
        &self,
        stream: &PixelStream,
        features: &Tensor,
        dropout: Option<&mut StageRng>,
    ) -> Result<(Vec<f64>, PixelCache)> {
        let (seq1, branch1) = stream.branch1.forward(features)?;
        let mut summary = last_step(&seq1);
        let mask = match dropout {
            Some(rng) if self.config.dropout > 0.0 => {
                let rate = self.config.dropout;
                let keep = 1.0 / (1.0 - rate);
                let m: Vec<f64> = (0..summary.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                for (s, k) in summary.iter_mut().zip(&m) {
                    *s *= k;
                }
                Some(m)
            }
            _ => None,
        };
        let (mut out, dense) = stream.dense.forward(&summary)?;
        let gathered = subsample_frames(features, &self.config.anchors)?;
        let (seq2, branch2) = stream.branch2.forward(&gathered)?;
        out.extend(last_step(&seq2));
        Ok((
            out,
            PixelCache {
                cnn: None,
                steps: features.rows(),
                branch1,
                dense,
                mask,
                branch2,
                anchors: gathered.rows(),
            },
        ))
    }

    fn pixel_backward(&self, stream: &PixelStream, cache: &PixelCache, grad: &[f64], grads: &mut PixelStream) -> Result<()> {
        let dw = stream.dense.output_width();
        let mut d_summary = stream.dense.backward(&cache.dense, &grad[..dw], &mut grads.dense)?;
        if let Some(m) = &cache.mask {
            for (g, k) in d_summary.iter_mut().zip(m) {
                *g *= k;
            }
        }
        let (g1, mut d_features) = stream.branch1.backward(&cache.branch1, &last_step_grad(cache.steps, &d_summary))?;
        grads.branch1.accumulate(&g1)?;
        let (g2, d_gathered) = stream
            .branch2
            .backward(&cache.branch2, &last_step_grad(cache.anchors, &grad[dw..]))?;
        grads.branch2.accumulate(&g2)?;
        scatter_rows(&mut d_features, &self.config.anchors, &d_gathered);
        if let (Some(backbone), Some(cnn), Some(gb)) = (&stream.backbone, &cache.cnn, grads.backbone.as_mut()) {
            tinycnn_backward_params(backbone, cnn, &d_features, gb)?;
        }
        Ok(())
    }

    /// Stream 1 summary `[dense_width + hidden]` for per-frame features `T×D1`.
    pub fn stream1_forward(&self, features: &Tensor) -> Result<Vec<f64>> {
        check_rows(features, self.config.frames, Some(self.config.feature_width_1), "stream 1 features")?;
        Ok(self.pixel_forward(&self.params.stream1, features, None)?.0)
    }

    /// Stream 2 summary `[dense_width + hidden]`; dropout is active only in the training phase.
    pub fn stream2_forward(&self, features: &Tensor, phase: Phase) -> Result<Vec<f64>> {
        check_rows(features, self.config.frames, Some(self.config.feature_width_2), "stream 2 features")?;
        let rng = match phase {
            Phase::Train(r) => Some(r),
            Phase::Inference => None,
        };
        Ok(self.pixel_forward(&self.params.stream2, features, rng)?.0)
    }

    /// Stream 3 summary `[hidden]` for keypoints `T×258`.
    pub fn stream3_forward(&self, keypoints: &Tensor) -> Result<Vec<f64>> {
        check_rows(keypoints, self.config.frames, Some(KEYPOINT_WIDTH), "keypoints")?;
        let (seq, _) = self.params.stream3.forward(keypoints)?;
        Ok(last_step(&seq))
    }

    pub fn forward(&self, input: &ModelInput, phase: Phase) -> Result<ForwardOutput> {
        let c = &self.config;
        let mut dropout_rng = match phase {
            Phase::Train(r) => Some(r),
            Phase::Inference => None,
        };
        let mut fusion = Vec::with_capacity(c.fusion_width());
        let mut stream_outputs = Vec::with_capacity(3);
        let mut caches: [Option<PixelCache>; 2] = [None, None];
        for (i, stream) in [&self.params.stream1, &self.params.stream2].into_iter().enumerate() {
            let s = i + 1;
            if !c.has_stream(s) {
                continue;
            }
            let (features, cnn) = self.pixel_features(stream, input, s)?;
            let rng = if s == 2 { dropout_rng.as_deref_mut() } else { None };
            let (out, mut cache) = self.pixel_forward(stream, &features, rng)?;
            cache.cnn = cnn;
            fusion.extend_from_slice(&out);
            stream_outputs.push((s, out));
            caches[i] = Some(cache);
        }
        let stream3 = if c.has_stream(3) {
            let kp = input
                .keypoints
                .ok_or_else(|| Error::MissingModality("stream 3 needs keypoints".into()))?;
            check_rows(kp, c.frames, Some(KEYPOINT_WIDTH), "keypoints")?;
            let (seq, stack) = self.params.stream3.forward(kp)?;
            let out = last_step(&seq);
            fusion.extend_from_slice(&out);
            stream_outputs.push((3, out));
            Some(KeypointCache { steps: kp.rows(), stack })
        } else {
            None
        };
        let (logits, head) = self.params.head.forward(&fusion)?;
        let probabilities = softmax_slice(&logits);
        let [stream1, stream2] = caches;
        Ok(ForwardOutput {
            logits,
            probabilities,
            stream_outputs,
            cache: ForwardCache {
                generation: self.generation,
                stream1,
                stream2,
                stream3,
                head,
            },
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        Ok(self.forward(input, Phase::Inference)?.probabilities)
    }

    /// Zero gradients shaped like the parameters.
    pub fn zero_grads(&self) -> ModelParams {
        self.params.zeros_like()
    }

    /// Adds the gradient of `Σ grad_logits · logits` with respect to every parameter into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_logits: &[f64], grads: &mut ModelParams) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache {
                cached: cache.generation,
                current: self.generation,
            });
        }
        if grad_logits.len() != self.config.classes {
            return Err(Error::Shape {
                op: "backward logits",
                left: vec![self.config.classes],
                right: vec![grad_logits.len()],
            });
        }
        let d_fusion = self.params.head.backward(&cache.head, grad_logits, &mut grads.head)?;
        let mut offset = 0;
        for s in self.config.streams.clone() {
            let width = self.config.stream_width(s);
            let g = &d_fusion[offset..offset + width];
            offset += width;
            match s {
                1 => {
                    let c = cache.stream1.as_ref().ok_or_else(|| Error::CacheMismatch("no stream 1 cache".into()))?;
                    self.pixel_backward(&self.params.stream1, c, g, &mut grads.stream1)?;
                }
                2 => {
                    let c = cache.stream2.as_ref().ok_or_else(|| Error::CacheMismatch("no stream 2 cache".into()))?;
                    self.pixel_backward(&self.params.stream2, c, g, &mut grads.stream2)?;
                }
                _ => {
                    let c = cache.stream3.as_ref().ok_or_else(|| Error::CacheMismatch("no stream 3 cache".into()))?;
                    let (g3, _) = self.params.stream3.backward(&c.stack, &last_step_grad(c.steps, g))?;
                    grads.stream3.accumulate(&g3)?;
                }
            }
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: &[f64]) -> Result<ModelParams> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, grad_logits, &mut grads)?;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests;
