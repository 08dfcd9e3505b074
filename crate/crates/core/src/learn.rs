//! Trainable detectors with hand-written backpropagation.
//!
//! * [`LogRegModel`]: standardized logistic regression over cue vectors,
//!   full-batch gradient descent.
//! * [`SetNetModel`]: permutation-invariant set classifier over line segments.
//!   A shared per-segment MLP (`phi`), an element-wise max over the set and an
//!   MLP head producing one logit.
//! * [`GridModel`]: MLP over a flattened perspective-field grid.
//!
//! All scores are the probability that the input is real. Training is plain
//! SGD with L2 weight decay, deterministic for a given seed. Examples are
//! weighted by `n / (2·n_class)` so both classes carry equal total weight.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::fmt_f64;
use crate::lsd::LineSegment;
use crate::vpfield::PerspectiveFieldGrid;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-segment input width of the set classifier.
pub const SEGMENT_FEATURES: usize = 5;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data has a single class")]
    SingleClass,
    #[error("need at least 2 examples per class (real {real}, generated {generated})")]
    TooFewExamples { real: usize, generated: usize },
    #[error("non-finite feature value in example {0}")]
    NonFinite(usize),
    #[error("{features} features per example but {expected} expected")]
    FeatureCount { features: usize, expected: usize },
    #[error("labels ({labels}) and examples ({examples}) differ in length")]
    LabelCount { labels: usize, examples: usize },
    #[error("empty segment set")]
    EmptySet,
    #[error("field grid {got_w}x{got_h} does not match model grid {want_w}x{want_h}")]
    GridMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("tensor `{name}`: expected {expected} values, found {found}")]
    Tensor {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("model file holds a `{found}` model, `{expected}` required")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, LearnError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Probability the input is real.
    pub score: f64,
    pub logit: f64,
}

impl Prediction {
    pub fn from_logit(logit: f64) -> Self {
        Self {
            score: sigmoid(logit),
            logit,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, numerically stable.
pub fn log_loss(logit: f64, real: bool) -> f64 {
    let y = if real { 1.0 } else { 0.0 };
    logit.max(0.0) - y * logit + (-logit.abs()).exp().ln_1p()
}

fn y_of(real: bool) -> f64 {
    if real {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch: usize,
    pub final_loss: f64,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 0,
            lr: 0.0,
            l2: 0.0,
            batch: 0,
            final_loss: f64::NAN,
        }
    }
}

fn class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let real = labels.iter().filter(|l| **l).count();
    let generated = labels.len() - real;
    if real == 0 || generated == 0 {
        return Err(LearnError::SingleClass);
    }
    if real < 2 || generated < 2 {
        return Err(LearnError::TooFewExamples { real, generated });
    }
    let n = labels.len() as f64;
    if real == generated {
        return Ok((1.0, 1.0));
    }
    Ok((n / (2.0 * real as f64), n / (2.0 * generated as f64)))
}

// ---------------------------------------------------------------------------
// Dense layers

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.bias[o]);
        }
    }
}

/// Stack of dense layers with rectifiers after every layer except possibly
/// the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

struct MlpTrace {
    /// `acts[0]` is the input; `acts[i+1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(widths: &[usize], relu_last: bool, rng: &mut ChaCha8Rng) -> Self {
        let layers = widths.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers, relu_last }
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            relu_last: self.relu_last,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers.first().map_or(0, |l| l.inputs)];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    fn relu_at(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.relu_last
    }

    fn trace(&self, x: &[f64]) -> MlpTrace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().expect("input"), &mut out);
            if self.relu_at(i) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        MlpTrace { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if self.relu_at(i) {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Accumulates `scale · ∂/∂params` into `grads` and returns the input gradient.
    fn backward(&self, trace: &MlpTrace, grad_out: &[f64], scale: f64, grads: Option<&mut Mlp>) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        let mut grads = grads;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let out = &trace.acts[i + 1];
            let inp = &trace.acts[i];
            if self.relu_at(i) {
                for (gv, o) in g.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            if let Some(gr) = grads.as_deref_mut() {
                let gl = &mut gr.layers[i];
                for o in 0..layer.outputs {
                    let go = g[o] * scale;
                    if go == 0.0 {
                        continue;
                    }
                    gl.bias[o] += go;
                    let row = &mut gl.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, x) in row.iter_mut().zip(inp) {
                        *w += go * x;
                    }
                }
            }
            let mut gin = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                if g[o] == 0.0 {
                    continue;
                }
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += g[o] * w;
                }
            }
            g = gin;
        }
        g
    }

    fn params_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
    }

    fn set_params_from(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        k
    }

    /// `self -= lr · (grad / norm + l2 · weight)`; biases are not decayed.
    fn sgd_step(&mut self, grad: &Mlp, lr: f64, norm: f64, l2: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, gw) in l.weight.iter_mut().zip(&g.weight) {
                *w -= lr * (gw / norm + l2 * *w);
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb / norm;
            }
        }
    }

    fn l2_norm_sq(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weight).map(|w| w * w).sum()
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegParams {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            l2: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    /// Zero-variance features get std 1 and a weight frozen at 0.
    pub feature_stds: Vec<f64>,
    pub frozen: Vec<bool>,
    pub train_meta: TrainMeta,
}

impl LogRegModel {
    /// Zero weights, identity standardization.
    pub fn zeros(features: Vec<String>) -> Self {
        let n = features.len();
        Self {
            features,
            weights: vec![0.0; n],
            bias: 0.0,
            feature_means: vec![0.0; n],
            feature_stds: vec![1.0; n],
            frozen: vec![false; n],
            train_meta: TrainMeta::default(),
        }
    }

    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_means)
            .zip(&self.feature_stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.weights.len() {
            return Err(LearnError::FeatureCount {
                features: x.len(),
                expected: self.weights.len(),
            });
        }
        let z = self.standardized(x);
        let logit = self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        Ok(Prediction::from_logit(logit))
    }

    /// Loss `ℓ(x, y) + (l2/2)‖w‖²` and its gradient `[∂w..., ∂b]`.
    pub fn loss_and_grad(&self, x: &[f64], real: bool, l2: f64) -> (f64, Vec<f64>) {
        let z = self.standardized(x);
        let logit = self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        let loss = log_loss(logit, real) + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let d = sigmoid(logit) - y_of(real);
        let mut g: Vec<f64> = z.iter().zip(&self.weights).map(|(zi, w)| d * zi + l2 * w).collect();
        g.push(d);
        (loss, g)
    }

    /// One gradient-descent step on a single raw example.
    pub fn gradient_step(&mut self, x: &[f64], real: bool, lr: f64, l2: f64) {
        let (_, g) = self.loss_and_grad(x, real, l2);
        for (i, w) in self.weights.iter_mut().enumerate() {
            if !self.frozen[i] {
                *w -= lr * g[i];
            }
        }
        self.bias -= lr * g[g.len() - 1];
    }
}

/// Full-batch gradient descent from zero weights on standardized features.
pub fn train_logreg(
    features: Vec<String>,
    x: &[Vec<f64>],
    labels: &[bool],
    params: &LogRegParams,
) -> Result<LogRegModel> {
    if x.len() != labels.len() {
        return Err(LearnError::LabelCount {
            labels: labels.len(),
            examples: x.len(),
        });
    }
    let (w_real, w_gen) = class_weights(labels)?;
    let d = features.len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(LearnError::FeatureCount {
                features: row.len(),
                expected: d,
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite(i));
        }
    }
    let n = x.len() as f64;
    let mut model = LogRegModel::zeros(features);
    for j in 0..d {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        model.feature_means[j] = mean;
        // relative threshold keeps the fit invariant to per-feature scaling
        if std > 1e-12 * mean.abs().max(f64::MIN_POSITIVE) && std > 0.0 {
            model.feature_stds[j] = std;
        } else {
            model.feature_stds[j] = 1.0;
            model.frozen[j] = true;
        }
    }
    let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardized(r)).collect();
    let weights: Vec<f64> = labels.iter().map(|&l| if l { w_real } else { w_gen }).collect();
    let wsum: f64 = weights.iter().sum();

    let loss_of = |m: &LogRegModel| -> f64 {
        let data: f64 = z
            .iter()
            .zip(labels)
            .zip(&weights)
            .map(|((zi, &y), c)| {
                let logit = m.bias + zi.iter().zip(&m.weights).map(|(a, b)| a * b).sum::<f64>();
                c * log_loss(logit, y)
            })
            .sum();
        data / wsum + 0.5 * params.l2 * m.weights.iter().map(|w| w * w).sum::<f64>()
    };

    for _ in 0..params.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for ((zi, &y), c) in z.iter().zip(labels).zip(&weights) {
            let logit = model.bias + zi.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
            let r = c * (sigmoid(logit) - y_of(y));
            gb += r;
            for (g, v) in gw.iter_mut().zip(zi) {
                *g += r * v;
            }
        }
        for j in 0..d {
            if !model.frozen[j] {
                model.weights[j] -= params.lr * (gw[j] / wsum + params.l2 * model.weights[j]);
            }
        }
        model.bias -= params.lr * gb / wsum;
    }
    model.train_meta = TrainMeta {
        seed: params.seed,
        epochs: params.epochs,
        lr: params.lr,
        l2: params.l2,
        batch: x.len(),
        final_loss: loss_of(&model),
    };
    Ok(model)
}

// ---------------------------------------------------------------------------
// Set classifier

pub type SegmentFeatures = [f64; SEGMENT_FEATURES];

/// Encodes segments as `(x1/w, y1/h, x2/w, y2/h, length/diag)` with the
/// lexicographically smaller endpoint first, keeping at most `cap` elements
/// (longest first; ties broken by the encoded values so the choice does not
/// depend on input order).
pub fn encode_segments(segments: &[LineSegment], dims: (usize, usize), cap: usize) -> Vec<SegmentFeatures> {
    encode_indexed(segments, dims, cap).into_iter().map(|(_, e)| e).collect()
}

/// As [`encode_segments`], paired with each element's index in `segments`.
pub fn encode_indexed(segments: &[LineSegment], dims: (usize, usize), cap: usize) -> Vec<(usize, SegmentFeatures)> {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let diag = w.hypot(h);
    let mut enc: Vec<(usize, SegmentFeatures)> = segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.length() > 0.0)
        .map(|(i, s)| {
            let c = s.canonical();
            (i, [c.x1 / w, c.y1 / h, c.x2 / w, c.y2 / h, c.length() / diag])
        })
        .collect();
    if enc.len() > cap {
        enc.sort_by(|(_, a), (_, b)| {
            b[4].total_cmp(&a[4])
                .then_with(|| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
        });
        enc.truncate(cap);
    }
    enc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetNetConfig {
    pub phi_hidden: [usize; 2],
    pub head_hidden: usize,
    pub max_elements: usize,
}

impl Default for SetNetConfig {
    fn default() -> Self {
        Self {
            phi_hidden: [64, 64],
            head_hidden: 32,
            max_elements: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetNetModel {
    pub phi: Mlp,
    pub head: Mlp,
    pub max_elements: usize,
    pub train_meta: TrainMeta,
}

struct SetPass {
    traces: Vec<MlpTrace>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    head: MlpTrace,
}

impl SetNetModel {
    pub fn new(config: &SetNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [h1, h2] = config.phi_hidden;
        Self {
            phi: Mlp::new(&[SEGMENT_FEATURES, h1, h2], true, &mut rng),
            head: Mlp::new(&[h2, config.head_hidden, 1], false, &mut rng),
            max_elements: config.max_elements,
            train_meta: TrainMeta::default(),
        }
    }

    fn pool_width(&self) -> usize {
        self.phi.layers.last().map_or(0, |l| l.outputs)
    }

    fn pass(&self, elements: &[SegmentFeatures]) -> SetPass {
        let traces: Vec<MlpTrace> = elements.iter().map(|e| self.phi.trace(e)).collect();
        let k = self.pool_width();
        let mut pooled = vec![f64::NEG_INFINITY; k];
        let mut argmax = vec![0usize; k];
        for (i, t) in traces.iter().enumerate() {
            let out = t.acts.last().expect("output");
            for c in 0..k {
                // strict: ties stay with the lowest index
                if out[c] > pooled[c] {
                    pooled[c] = out[c];
                    argmax[c] = i;
                }
            }
        }
        let head = self.head.trace(&pooled);
        SetPass {
            traces,
            pooled,
            argmax,
            head,
        }
    }

    /// Logit on pre-encoded elements.
    pub fn forward_encoded(&self, elements: &[SegmentFeatures]) -> Result<Prediction> {
        if elements.is_empty() {
            return Err(LearnError::EmptySet);
        }
        let k = self.pool_width();
        let mut pooled = vec![f64::NEG_INFINITY; k];
        for e in elements {
            for (p, v) in pooled.iter_mut().zip(self.phi.forward(e)) {
                if v > *p {
                    *p = v;
                }
            }
        }
        Ok(Prediction::from_logit(self.head.forward(&pooled)[0]))
    }

    /// Pooled feature vector (max over per-element `phi` outputs).
    pub fn pooled(&self, elements: &[SegmentFeatures]) -> Vec<f64> {
        self.pass(elements).pooled
    }

    pub fn phi_output(&self, element: &SegmentFeatures) -> Vec<f64> {
        self.phi.forward(element)
    }

    /// Loss on one set and the flat parameter gradient (phi then head).
    pub fn loss_and_grad(&self, elements: &[SegmentFeatures], real: bool) -> (f64, Vec<f64>) {
        let mut gphi = self.phi.zeros_like();
        let mut ghead = self.head.zeros_like();
        let loss = self.accumulate(elements, real, 1.0, &mut gphi, &mut ghead);
        let mut flat = Vec::new();
        gphi.params_into(&mut flat);
        ghead.params_into(&mut flat);
        (loss, flat)
    }

    fn accumulate(&self, elements: &[SegmentFeatures], real: bool, weight: f64, gphi: &mut Mlp, ghead: &mut Mlp) -> f64 {
        let p = self.pass(elements);
        let logit = p.head.acts.last().expect("logit")[0];
        let dz = sigmoid(logit) - y_of(real);
        let gpool = self.head.backward(&p.head, &[dz], weight, Some(ghead));
        self.route(&p, &gpool, |i, g| {
            self.phi.backward(&p.traces[i], g, weight, Some(gphi));
        });
        weight * log_loss(logit, real)
    }

    /// Sends each pooled channel's gradient to its argmax element.
    fn route(&self, p: &SetPass, gpool: &[f64], mut f: impl FnMut(usize, &[f64])) {
        let k = gpool.len();
        let mut per: Vec<Option<Vec<f64>>> = vec![None; p.traces.len()];
        for c in 0..k {
            let e = p.argmax[c];
            per[e].get_or_insert_with(|| vec![0.0; k])[c] = gpool[c];
        }
        for (i, g) in per.iter().enumerate() {
            if let Some(g) = g {
                f(i, g);
            }
        }
    }

    /// `|∂logit/∂features|₁` per element; elements winning no pooled channel get 0.
    pub fn saliency_encoded(&self, elements: &[SegmentFeatures]) -> Vec<f64> {
        let mut out = vec![0.0; elements.len()];
        if elements.is_empty() {
            return out;
        }
        let p = self.pass(elements);
        let gpool = self.head.backward(&p.head, &[1.0], 1.0, None);
        self.route(&p, &gpool, |i, g| {
            let gin = self.phi.backward(&p.traces[i], g, 1.0, None);
            out[i] = gin.iter().map(|v| v.abs()).sum();
        });
        out
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.phi.params_into(&mut v);
        self.head.params_into(&mut v);
        v
    }

    pub fn set_params(&mut self, src: &[f64]) {
        let k = self.phi.set_params_from(src);
        self.head.set_params_from(&src[k..]);
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.phi.l2_norm_sq() + self.head.l2_norm_sq()
    }
}

/// Attribution per input segment. Segments dropped by the element cap or of
/// zero length get 0.
pub fn saliency_set(model: &SetNetModel, segments: &[LineSegment], dims: (usize, usize)) -> Vec<f64> {
    let enc = encode_indexed(segments, dims, model.max_elements);
    let feats: Vec<SegmentFeatures> = enc.iter().map(|(_, e)| *e).collect();
    let sal = model.saliency_encoded(&feats);
    let mut out = vec![0.0; segments.len()];
    for ((i, _), a) in enc.iter().zip(sal) {
        out[*i] = a;
    }
    out
}

/// Prediction for a segment set; normalization by image dimensions.
pub fn forward_set(model: &SetNetModel, segments: &[LineSegment], dims: (usize, usize)) -> Result<Prediction> {
    let enc = encode_segments(segments, dims, model.max_elements);
    model.forward_encoded(&enc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch: usize,
    pub seed: u64,
    /// Set learner only: train each example on a random nonempty subset of
    /// its elements, redrawn every epoch.
    pub subset_sampling: bool,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            l2: 1e-4,
            batch: 32,
            seed: 42,
            subset_sampling: false,
        }
    }
}

/// Weighted mean data loss plus `(l2/2)·‖W‖²`.
fn dataset_loss<X>(
    data: &[X],
    labels: &[bool],
    cw: (f64, f64),
    l2: f64,
    l2_norm_sq: f64,
    logit: impl Fn(&X) -> f64,
) -> f64 {
    let (mut tot, mut wsum) = (0.0, 0.0);
    for (x, &y) in data.iter().zip(labels) {
        let c = if y { cw.0 } else { cw.1 };
        tot += c * log_loss(logit(x), y);
        wsum += c;
    }
    tot / wsum + 0.5 * l2 * l2_norm_sq
}

/// Result of SGD training: the model and the dataset loss before training
/// and after every epoch.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub loss_history: Vec<f64>,
}

/// Subset of uniformly random size in `1..=n`, elements kept in input order.
fn random_subset(set: &[SegmentFeatures], rng: &mut ChaCha8Rng) -> Vec<SegmentFeatures> {
    let k = rng.random_range(1..=set.len());
    let mut idx = rand::seq::index::sample(rng, set.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| set[i]).collect()
}

/// Mini-batch SGD for the set classifier.
///
/// Batch composition is fixed by `params.seed`: one shuffle per epoch.
pub fn train_set(
    init: SetNetModel,
    sets: &[Vec<SegmentFeatures>],
    labels: &[bool],
    params: &SgdParams,
) -> Result<Trained<SetNetModel>> {
    if sets.len() != labels.len() {
        return Err(LearnError::LabelCount {
            labels: labels.len(),
            examples: sets.len(),
        });
    }
    let cw = class_weights(labels)?;
    if sets.iter().any(Vec::is_empty) {
        return Err(LearnError::EmptySet);
    }
    if let Some(i) = sets.iter().position(|s| s.iter().flatten().any(|v| !v.is_finite())) {
        return Err(LearnError::NonFinite(i));
    }
    let mut model = init;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..sets.len()).collect();
    let loss = |m: &SetNetModel| {
        dataset_loss(sets, labels, cw, params.l2, m.l2_norm_sq(), |s| {
            m.forward_encoded(s).expect("nonempty").logit
        })
    };
    let mut history = vec![loss(&model)];
    let batch = params.batch.max(1);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut gphi = model.phi.zeros_like();
            let mut ghead = model.head.zeros_like();
            let mut wsum = 0.0;
            for &i in chunk {
                let c = if labels[i] { cw.0 } else { cw.1 };
                if params.subset_sampling {
                    let sub = random_subset(&sets[i], &mut rng);
                    model.accumulate(&sub, labels[i], c, &mut gphi, &mut ghead);
                } else {
                    model.accumulate(&sets[i], labels[i], c, &mut gphi, &mut ghead);
                }
                wsum += c;
            }
            model.phi.sgd_step(&gphi, params.lr, wsum, params.l2);
            model.head.sgd_step(&ghead, params.lr, wsum, params.l2);
        }
        history.push(loss(&model));
    }
    model.train_meta = TrainMeta {
        seed: params.seed,
        epochs: params.epochs,
        lr: params.lr,
        l2: params.l2,
        batch,
        final_loss: *history.last().expect("initial loss"),
    };
    Ok(Trained {
        model,
        loss_history: history,
    })
}

// ---------------------------------------------------------------------------
// Grid classifier

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Input standardization fitted on the training fields.
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub mlp: Mlp,
    pub train_meta: TrainMeta,
}

/// Cell-major `(ux, uy, latitude)` triples.
pub fn flatten_field(field: &PerspectiveFieldGrid) -> Vec<f64> {
    field
        .up
        .iter()
        .zip(&field.latitude)
        .flat_map(|(u, l)| [u[0], u[1], *l])
        .collect()
}

impl GridModel {
    pub fn new(grid: (usize, usize), hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * grid.0 * grid.1;
        Self {
            grid_w: grid.0,
            grid_h: grid.1,
            input_mean: vec![0.0; n],
            input_std: vec![1.0; n],
            mlp: Mlp::new(&[n, hidden, 1], false, &mut rng),
            train_meta: TrainMeta::default(),
        }
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn check(&self, field: &PerspectiveFieldGrid) -> Result<()> {
        if field.grid_w != self.grid_w || field.grid_h != self.grid_h {
            return Err(LearnError::GridMismatch {
                got_w: field.grid_w,
                got_h: field.grid_h,
                want_w: self.grid_w,
                want_h: self.grid_h,
            });
        }
        Ok(())
    }

    pub fn forward_flat(&self, x: &[f64]) -> Prediction {
        Prediction::from_logit(self.mlp.forward(&self.standardize(x))[0])
    }

    /// Loss on one flattened field and the flat MLP parameter gradient.
    pub fn loss_and_grad(&self, x: &[f64], real: bool) -> (f64, Vec<f64>) {
        let mut g = self.mlp.zeros_like();
        let t = self.mlp.trace(&self.standardize(x));
        let logit = t.acts.last().expect("logit")[0];
        self.mlp.backward(&t, &[sigmoid(logit) - y_of(real)], 1.0, Some(&mut g));
        let mut flat = Vec::new();
        g.params_into(&mut flat);
        (log_loss(logit, real), flat)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.mlp.params_into(&mut v);
        v
    }

    pub fn set_params(&mut self, src: &[f64]) {
        self.mlp.set_params_from(src);
    }

    /// `|∂logit/∂(ux, uy, lat)|₁` per cell, with respect to the raw field values.
    pub fn saliency_flat(&self, x: &[f64]) -> Vec<f64> {
        let t = self.mlp.trace(&self.standardize(x));
        let g = self.mlp.backward(&t, &[1.0], 1.0, None);
        g.chunks(3)
            .zip(self.input_std.chunks(3))
            .map(|(gc, sc)| gc.iter().zip(sc).map(|(a, s)| (a / s).abs()).sum())
            .collect()
    }
}

/// Attribution per field cell, cell-major.
pub fn saliency_grid(model: &GridModel, field: &PerspectiveFieldGrid) -> Result<Vec<f64>> {
    model.check(field)?;
    Ok(model.saliency_flat(&flatten_field(field)))
}

pub fn forward_grid(model: &GridModel, field: &PerspectiveFieldGrid) -> Result<Prediction> {
    model.check(field)?;
    Ok(model.forward_flat(&flatten_field(field)))
}

/// Fits input standardization on `fields`, then runs mini-batch SGD.
pub fn train_grid(
    init: GridModel,
    fields: &[Vec<f64>],
    labels: &[bool],
    params: &SgdParams,
) -> Result<Trained<GridModel>> {
    if fields.len() != labels.len() {
        return Err(LearnError::LabelCount {
            labels: labels.len(),
            examples: fields.len(),
        });
    }
    let cw = class_weights(labels)?;
    let mut model = init;
    let d = model.input_mean.len();
    for (i, f) in fields.iter().enumerate() {
        if f.len() != d {
            return Err(LearnError::FeatureCount {
                features: f.len(),
                expected: d,
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite(i));
        }
    }
    let n = fields.len() as f64;
    for j in 0..d {
        let m = fields.iter().map(|f| f[j]).sum::<f64>() / n;
        let s = (fields.iter().map(|f| (f[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        model.input_mean[j] = m;
        model.input_std[j] = if s > 1e-9 { s } else { 1.0 };
    }
    let z: Vec<Vec<f64>> = fields.iter().map(|f| model.standardize(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..fields.len()).collect();
    let loss = |m: &GridModel| {
        dataset_loss(&z, labels, cw, params.l2, m.mlp.l2_norm_sq(), |x| m.mlp.forward(x)[0])
    };
    let mut history = vec![loss(&model)];
    let batch = params.batch.max(1);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut g = model.mlp.zeros_like();
            let mut wsum = 0.0;
            for &i in chunk {
                let c = if labels[i] { cw.0 } else { cw.1 };
                let t = model.mlp.trace(&z[i]);
                let logit = t.acts.last().expect("logit")[0];
                model.mlp.backward(&t, &[sigmoid(logit) - y_of(labels[i])], c, Some(&mut g));
                wsum += c;
            }
            model.mlp.sgd_step(&g, params.lr, wsum, params.l2);
        }
        history.push(loss(&model));
    }
    model.train_meta = TrainMeta {
        seed: params.seed,
        epochs: params.epochs,
        lr: params.lr,
        l2: params.l2,
        batch,
        final_loss: *history.last().expect("initial loss"),
    };
    Ok(Trained {
        model,
        loss_history: history,
    })
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Max relative error between an analytic gradient and central differences.
///
/// Relative error is `|a − n| / max(|a|, |n|, floor)`; `floor` keeps
/// components that are numerically zero from dominating.
pub fn gradient_check(
    params: &[f64],
    analytic: &[f64],
    eps: f64,
    floor: f64,
    mut loss_at: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let plus = loss_at(&p);
        p[i] = orig - eps;
        let minus = loss_at(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

// ---------------------------------------------------------------------------
// Model files

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LogReg(LogRegModel),
    Set(SetNetModel),
    Grid(GridModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::LogReg(_) => "logreg",
            Model::Set(_) => "set",
            Model::Grid(_) => "grid",
        }
    }
}

fn write_tensor(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "tensor {name} {}", values.len());
    let body: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
    out.push_str(&body.join(" "));
    out.push('\n');
}

fn widths_str(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn write_mlp(out: &mut String, prefix: &str, mlp: &Mlp) {
    for (i, l) in mlp.layers.iter().enumerate() {
        write_tensor(out, &format!("{prefix}.{i}.weight"), &l.weight);
        write_tensor(out, &format!("{prefix}.{i}.bias"), &l.bias);
    }
}

pub fn model_to_text(model: &Model) -> String {
    let meta = match model {
        Model::LogReg(m) => &m.train_meta,
        Model::Set(m) => &m.train_meta,
        Model::Grid(m) => &m.train_meta,
    };
    let mut out = format!("geoforensics-model {MODEL_FORMAT_VERSION}\nkind {}\n", model.kind());
    let _ = writeln!(
        out,
        "meta seed={} epochs={} lr={} l2={} batch={} final_loss={}",
        meta.seed,
        meta.epochs,
        fmt_f64(meta.lr),
        fmt_f64(meta.l2),
        meta.batch,
        fmt_f64(meta.final_loss)
    );
    match model {
        Model::LogReg(m) => {
            let _ = writeln!(out, "arch features={}", m.features.join(","));
            write_tensor(&mut out, "weights", &m.weights);
            write_tensor(&mut out, "bias", &[m.bias]);
            write_tensor(&mut out, "feature_means", &m.feature_means);
            write_tensor(&mut out, "feature_stds", &m.feature_stds);
            let frozen: Vec<f64> = m.frozen.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect();
            write_tensor(&mut out, "frozen", &frozen);
        }
        Model::Set(m) => {
            let _ = writeln!(
                out,
                "arch phi={} head={} max_elements={}",
                widths_str(&m.phi.widths()),
                widths_str(&m.head.widths()),
                m.max_elements
            );
            write_mlp(&mut out, "phi", &m.phi);
            write_mlp(&mut out, "head", &m.head);
        }
        Model::Grid(m) => {
            let _ = writeln!(
                out,
                "arch grid={}x{} mlp={}",
                m.grid_w,
                m.grid_h,
                widths_str(&m.mlp.widths())
            );
            write_tensor(&mut out, "input_mean", &m.input_mean);
            write_tensor(&mut out, "input_std", &m.input_std);
            write_mlp(&mut out, "mlp", &m.mlp);
        }
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Reader<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| LearnError::Format {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
    }

    fn keyword(&mut self, kw: &str) -> Result<(usize, &'a str)> {
        let (line, text) = self.next_line(kw)?;
        let rest = text
            .strip_prefix(kw)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| LearnError::Format {
                line,
                msg: format!("expected `{kw}`"),
            })?;
        Ok((line, rest))
    }

    fn tensor(&mut self, name: &str, expected: usize) -> Result<Vec<f64>> {
        let missing = || LearnError::Tensor {
            name: name.to_string(),
            expected,
            found: 0,
        };
        let (line, rest) = self.keyword("tensor").map_err(|_| missing())?;
        let mut parts = rest.split_whitespace();
        let got_name = parts.next().unwrap_or_default();
        if got_name != name {
            return Err(LearnError::Format {
                line,
                msg: format!("expected tensor `{name}`, found `{got_name}`"),
            });
        }
        let declared: usize = parts.next().and_then(|s| s.parse().ok()).ok_or(LearnError::Format {
            line,
            msg: format!("tensor `{name}` lacks a length"),
        })?;
        if declared != expected {
            return Err(LearnError::Tensor {
                name: name.to_string(),
                expected,
                found: declared,
            });
        }
        let body = match self.lines.peek() {
            Some((_, l)) if !l.starts_with("tensor ") => self.next_line(name)?.1,
            _ => "",
        };
        let values = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| LearnError::Format {
                    line: line + 1,
                    msg: format!("tensor `{name}`: bad number `{t}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != expected {
            return Err(LearnError::Tensor {
                name: name.to_string(),
                expected,
                found: values.len(),
            });
        }
        Ok(values)
    }

    fn mlp(&mut self, prefix: &str, widths: &[usize], relu_last: bool) -> Result<Mlp> {
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            let weight = self.tensor(&format!("{prefix}.{i}.weight"), w[0] * w[1])?;
            let bias = self.tensor(&format!("{prefix}.{i}.bias"), w[1])?;
            layers.push(Dense {
                inputs: w[0],
                outputs: w[1],
                weight,
                bias,
            });
        }
        Ok(Mlp { layers, relu_last })
    }
}

fn kv<'a>(rest: &'a str, key: &str, line: usize) -> Result<&'a str> {
    rest.split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| LearnError::Format {
            line,
            msg: format!("missing `{key}=`"),
        })
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| LearnError::Format {
        line,
        msg: format!("bad value `{s}`"),
    })
}

fn parse_widths(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split(',').map(|t| parse_num(t, line)).collect()
}

fn arch_err(msg: impl Into<String>) -> LearnError {
    LearnError::Architecture(msg.into())
}

pub fn model_from_text(text: &str) -> Result<Model> {
    let mut r = Reader {
        lines: text.lines().enumerate().peekable(),
    };
    let (line, v) = r.keyword("geoforensics-model")?;
    let version: u32 = parse_num(v.trim(), line)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(LearnError::Version(version));
    }
    let (_, kind) = r.keyword("kind")?;
    let kind = kind.trim().to_string();
    let (ml, meta) = r.keyword("meta")?;
    let train_meta = TrainMeta {
        seed: parse_num(kv(meta, "seed", ml)?, ml)?,
        epochs: parse_num(kv(meta, "epochs", ml)?, ml)?,
        lr: parse_num(kv(meta, "lr", ml)?, ml)?,
        l2: parse_num(kv(meta, "l2", ml)?, ml)?,
        batch: parse_num(kv(meta, "batch", ml)?, ml)?,
        final_loss: parse_num(kv(meta, "final_loss", ml)?, ml)?,
    };
    let (al, arch) = r.keyword("arch")?;
    let model = match kind.as_str() {
        "logreg" => {
            let list = kv(arch, "features", al)?;
            let features: Vec<String> = list.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
            let n = features.len();
            let weights = r.tensor("weights", n)?;
            let bias = r.tensor("bias", 1)?[0];
            let feature_means = r.tensor("feature_means", n)?;
            let feature_stds = r.tensor("feature_stds", n)?;
            if feature_stds.iter().any(|s| !(*s > 0.0)) {
                return Err(arch_err("feature_stds must be positive"));
            }
            let frozen = r.tensor("frozen", n)?.iter().map(|v| *v != 0.0).collect();
            Model::LogReg(LogRegModel {
                features,
                weights,
                bias,
                feature_means,
                feature_stds,
                frozen,
                train_meta,
            })
        }
        "set" => {
            let phi_w = parse_widths(kv(arch, "phi", al)?, al)?;
            let head_w = parse_widths(kv(arch, "head", al)?, al)?;
            let max_elements = parse_num(kv(arch, "max_elements", al)?, al)?;
            if phi_w.len() < 2 || phi_w[0] != SEGMENT_FEATURES {
                return Err(arch_err(format!("phi must start at {SEGMENT_FEATURES} inputs")));
            }
            if head_w.len() < 2 || head_w[0] != *phi_w.last().expect("len>=2") || *head_w.last().expect("len>=2") != 1 {
                return Err(arch_err("head must map the pooled width to one logit"));
            }
            let phi = r.mlp("phi", &phi_w, true)?;
            let head = r.mlp("head", &head_w, false)?;
            Model::Set(SetNetModel {
                phi,
                head,
                max_elements,
                train_meta,
            })
        }
        "grid" => {
            let grid = kv(arch, "grid", al)?;
            let (gw, gh) = grid.split_once('x').ok_or_else(|| arch_err("grid must be WxH"))?;
            let (gw, gh): (usize, usize) = (parse_num(gw, al)?, parse_num(gh, al)?);
            let widths = parse_widths(kv(arch, "mlp", al)?, al)?;
            if widths.len() < 2 || widths[0] != 3 * gw * gh || *widths.last().expect("len>=2") != 1 {
                return Err(arch_err("grid mlp must map 3*gw*gh inputs to one logit"));
            }
            let input_mean = r.tensor("input_mean", widths[0])?;
            let input_std = r.tensor("input_std", widths[0])?;
            let mlp = r.mlp("mlp", &widths, false)?;
            Model::Grid(GridModel {
                grid_w: gw,
                grid_h: gh,
                input_mean,
                input_std,
                mlp,
                train_meta,
            })
        }
        other => {
            return Err(LearnError::Format {
                line: 2,
                msg: format!("unknown model kind `{other}`"),
            })
        }
    };
    if let Some((i, l)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(LearnError::Format {
            line: i + 1,
            msg: format!("unexpected trailing content `{}`", l.chars().take(40).collect::<String>()),
        });
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model_to_text(model)).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_text(&text)
}

fn kind_err(expected: &'static str, m: &Model) -> LearnError {
    LearnError::KindMismatch {
        expected,
        found: m.kind(),
    }
}

pub fn load_set_model(path: &Path) -> Result<SetNetModel> {
    match load_model(path)? {
        Model::Set(m) => Ok(m),
        other => Err(kind_err("set", &other)),
    }
}

pub fn load_grid_model(path: &Path) -> Result<GridModel> {
    match load_model(path)? {
        Model::Grid(m) => Ok(m),
        other => Err(kind_err("grid", &other)),
    }
}

pub fn load_logreg_model(path: &Path) -> Result<LogRegModel> {
    match load_model(path)? {
        Model::LogReg(m) => Ok(m),
        other => Err(kind_err("logreg", &other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<SegmentFeatures> {
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
            .collect()
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogRegModel::zeros(vec!["a".into(), "b".into()]);
        assert_eq!(m.predict(&[3.0, -7.0]).unwrap().score, 0.5);
    }

    #[test]
    fn single_logistic_step() {
        let mut m = LogRegModel::zeros(vec!["x".into()]);
        m.gradient_step(&[1.0], true, 0.1, 0.0);
        assert!((m.weights[0] - 0.05).abs() < 1e-15);
        assert!((m.bias - 0.05).abs() < 1e-15);
    }

    #[test]
    fn logreg_rejects_bad_data() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert!(matches!(
            train_logreg(vec!["a".into()], &x, &[true, true, true], &LogRegParams::default()),
            Err(LearnError::SingleClass)
        ));
        assert!(matches!(
            train_logreg(vec!["a".into()], &x, &[true, true, false], &LogRegParams::default()),
            Err(LearnError::TooFewExamples { .. })
        ));
        let x = vec![vec![1.0], vec![f64::NAN], vec![3.0], vec![4.0]];
        assert!(matches!(
            train_logreg(vec!["a".into()], &x, &[true, true, false, false], &LogRegParams::default()),
            Err(LearnError::NonFinite(1))
        ));
    }

    #[test]
    fn constant_feature_is_frozen() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![5.0, i as f64]).collect();
        let y: Vec<bool> = (0..8).map(|i| i >= 4).collect();
        let m = train_logreg(vec!["c".into(), "v".into()], &x, &y, &LogRegParams::default()).unwrap();
        assert!(m.frozen[0]);
        assert_eq!(m.weights[0], 0.0);
        assert_eq!(m.feature_stds[0], 1.0);
        assert!(m.weights[1] > 0.0);
    }

    #[test]
    fn singleton_pool_equals_phi() {
        let m = SetNetModel::new(&SetNetConfig::default(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_set(&mut rng, 1);
        assert_eq!(m.pooled(&s), m.phi_output(&s[0]));
    }

    #[test]
    fn empty_set_is_an_error() {
        let m = SetNetModel::new(&SetNetConfig::default(), 3);
        assert!(matches!(forward_set(&m, &[], (10, 10)), Err(LearnError::EmptySet)));
    }

    #[test]
    fn canonical_encoding() {
        let a = LineSegment::new(10.0, 5.0, 2.0, 7.0);
        let e = encode_segments(&[a], (20, 10), 512);
        assert_eq!(e[0][0], 0.1);
        assert_eq!(e[0][1], 0.7);
        assert_eq!(e[0][2], 0.5);
    }

    #[test]
    fn cap_is_order_independent() {
        let segs: Vec<LineSegment> = (0..20)
            .map(|i| LineSegment::new(0.0, i as f64, 10.0 + (i % 4) as f64, i as f64))
            .collect();
        let mut rev = segs.clone();
        rev.reverse();
        let mut a = encode_segments(&segs, (64, 64), 7);
        let mut b = encode_segments(&rev, (64, 64), 7);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn saliency_routes_through_winners() {
        let m = SetNetModel::new(&SetNetConfig::default(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_set(&mut rng, 1);
        let a = m.saliency_encoded(&s);
        assert!(a[0] > 0.0);
        // an element dominated in every channel receives nothing
        let big = s[0];
        let small: SegmentFeatures = [0.0; 5];
        let pooled_big = m.phi_output(&big);
        let pooled_small = m.phi_output(&small);
        if pooled_big.iter().zip(&pooled_small).all(|(b, s)| b > s) {
            let a = m.saliency_encoded(&[big, small]);
            assert_eq!(a[1], 0.0);
        }
    }

    #[test]
    fn model_text_round_trip() {
        let round = |m: &Model| {
            let text = model_to_text(m);
            assert_eq!(model_to_text(&model_from_text(&text).unwrap()), text);
        };
        let set = Model::Set(SetNetModel::new(&SetNetConfig::default(), 2));
        round(&set);
        if let Model::Set(back) = model_from_text(&model_to_text(&set)).unwrap() {
            let Model::Set(orig) = &set else { unreachable!() };
            assert_eq!(back.params(), orig.params());
        }
        round(&Model::Grid(GridModel::new((4, 3), 8, 2)));
        let mut lr = LogRegModel::zeros(vec!["a".into(), "b".into()]);
        lr.weights = vec![0.1, -1.0 / 3.0];
        lr.train_meta.final_loss = 0.25;
        let lr = Model::LogReg(lr);
        assert_eq!(model_from_text(&model_to_text(&lr)).unwrap(), lr);
    }

    #[test]
    fn truncated_tensor_is_named() {
        let m = Model::Grid(GridModel::new((2, 2), 4, 2));
        let text = model_to_text(&m);
        let cut: Vec<&str> = text.lines().collect();
        // drop half of the values of the first weight tensor
        let mut lines: Vec<String> = cut.iter().map(|s| s.to_string()).collect();
        let idx = lines.iter().position(|l| l.starts_with("tensor mlp.0.weight")).unwrap() + 1;
        let vals: Vec<&str> = lines[idx].split(' ').collect();
        lines[idx] = vals[..vals.len() / 2].join(" ");
        let err = model_from_text(&lines.join("\n")).unwrap_err();
        match err {
            LearnError::Tensor { name, .. } => assert_eq!(name, "mlp.0.weight"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn version_and_kind_checks() {
        let m = Model::Set(SetNetModel::new(&SetNetConfig::default(), 2));
        let text = model_to_text(&m).replacen("geoforensics-model 1", "geoforensics-model 7", 1);
        assert!(matches!(model_from_text(&text), Err(LearnError::Version(7))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        save_model(&p, &m).unwrap();
        let err = load_grid_model(&p).unwrap_err();
        assert!(matches!(err, LearnError::KindMismatch { expected: "grid", found: "set" }));
        assert!(load_set_model(&p).is_ok());
    }

    #[test]
    fn initial_loss_near_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sets: Vec<_> = (0..40).map(|_| random_set(&mut rng, 6)).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let m = SetNetModel::new(&SetNetConfig::default(), 4);
        let t = train_set(m, &sets, &labels, &SgdParams { epochs: 0, ..SgdParams::default() }).unwrap();
        assert!((t.loss_history[0] - 2f64.ln()).abs() < 0.1, "{}", t.loss_history[0]);
    }
}
