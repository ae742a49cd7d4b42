//! Scene-image pathway: a fixed 1024-d image descriptor, a trainable
//! 1024 -> 68 ReLU bottleneck with a 2-way softmax head, and the direct
//! classifier built on it.
//!
//! Output index 0 of the softmax is the probability of `Sensitive`.

use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SceneParams;
use crate::dataset::{label_from_level, PrivacyClass, Recording};
use crate::error::{Error, Result};

pub const DESCRIPTOR_DIM: usize = 1024;
pub const EMBEDDING_DIM: usize = 68;
pub const CLASSES: usize = 2;

const GRID: usize = 4;
const COLOR_BINS: usize = 48;
const ORIENTATION_BINS: usize = 16;
const CELL_DIM: usize = COLOR_BINS + ORIENTATION_BINS;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescriptor(Vec<f64>);

impl SceneDescriptor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != DESCRIPTOR_DIM {
            return Err(Error::Data(format!(
                "scene descriptor has {} values, expected {DESCRIPTOR_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("scene descriptor contains non-finite values".into()));
        }
        Ok(SceneDescriptor(values))
    }

    pub fn zeros() -> Self {
        SceneDescriptor(vec![0.0; DESCRIPTOR_DIM])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding68(pub [f64; EMBEDDING_DIM]);

/// 4x4 grid of cells; each cell contributes a 48-bin joint RGB histogram
/// (4 red x 4 green x 3 blue levels) and a 16-bin gradient orientation
/// histogram weighted by magnitude. Both halves are normalized to unit mass,
/// then the 64-value cell block is L1-normalized.
pub fn base_descriptor(img: &RgbImage) -> SceneDescriptor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |x: usize, y: usize| {
        let p = img.get_pixel(x as u32, y as u32).0;
        0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
    };
    let mut out = vec![0.0; DESCRIPTOR_DIM];
    for cy in 0..GRID {
        for cx in 0..GRID {
            let (x0, x1) = (cx * w / GRID, (cx + 1) * w / GRID);
            let (y0, y1) = (cy * h / GRID, (cy + 1) * h / GRID);
            let mut color = [0.0; COLOR_BINS];
            let mut orient = [0.0; ORIENTATION_BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    let [r, g, b] = img.get_pixel(x as u32, y as u32).0;
                    let bin = (r as usize * 4 / 256 * 4 + g as usize * 4 / 256) * 3 + b as usize * 3 / 256;
                    color[bin] += 1.0;
                    let gx = luma((x + 1).min(w - 1), y) - luma(x.saturating_sub(1), y);
                    let gy = luma(x, (y + 1).min(h - 1)) - luma(x, y.saturating_sub(1));
                    let mag = gx.hypot(gy);
                    if mag > 0.0 {
                        let theta = gy.atan2(gx) + std::f64::consts::PI;
                        let bin = ((theta / std::f64::consts::TAU) * ORIENTATION_BINS as f64) as usize;
                        orient[bin.min(ORIENTATION_BINS - 1)] += mag;
                    }
                }
            }
            let block = &mut out[(cy * GRID + cx) * CELL_DIM..(cy * GRID + cx + 1) * CELL_DIM];
            normalize_into(&color, &mut block[..COLOR_BINS]);
            normalize_into(&orient, &mut block[COLOR_BINS..]);
            let total: f64 = block.iter().sum();
            if total > 0.0 {
                block.iter_mut().for_each(|v| *v /= total);
            }
        }
    }
    SceneDescriptor(out)
}

fn normalize_into(hist: &[f64], out: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        for (o, h) in out.iter_mut().zip(hist) {
            *o = h / total;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_loss: f64,
}

/// Bottleneck (`w1`: 68x1024 row-major, `b1`: 68) and softmax head
/// (`w2`: 2x68 row-major, `b2`: 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Gradient of the mean cross-entropy, laid out like [`SceneModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutput {
    pub embedding: Embedding68,
    pub probabilities: [f64; CLASSES],
}

fn class_index(c: PrivacyClass) -> usize {
    match c {
        PrivacyClass::Sensitive => 0,
        PrivacyClass::NonSensitive => 1,
    }
}

fn softmax(z: [f64; CLASSES]) -> [f64; CLASSES] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

const MODEL_FORMAT: &str = "gazeshutter-scene-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SceneModelFile {
    format: String,
    version: u32,
    /// `[descriptor_dim, embedding_dim, classes]`
    shape: [usize; 3],
    model: SceneModel,
}

impl SceneModel {
    pub fn zeros() -> Self {
        SceneModel {
            w1: vec![0.0; EMBEDDING_DIM * DESCRIPTOR_DIM],
            b1: vec![0.0; EMBEDDING_DIM],
            w2: vec![0.0; CLASSES * EMBEDDING_DIM],
            b2: vec![0.0; CLASSES],
            meta: TrainingMeta {
                epochs: 0,
                learning_rate: 0.0,
                seed: 0,
                final_loss: std::f64::consts::LN_2,
            },
        }
    }

    /// Parameters drawn from uniform(-scale, scale).
    pub fn random(seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros();
        for v in m.w1.iter_mut().chain(&mut m.b1).chain(&mut m.w2).chain(&mut m.b2) {
            *v = rng.random_range(-scale..scale);
        }
        m.meta.seed = seed;
        m
    }

    fn pre_activation(&self, d: &[f64]) -> [f64; EMBEDDING_DIM] {
        let mut pre = [0.0; EMBEDDING_DIM];
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &self.w1[j * DESCRIPTOR_DIM..(j + 1) * DESCRIPTOR_DIM];
            *p = row.iter().zip(d).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
        }
        pre
    }

    fn logits(&self, h: &[f64; EMBEDDING_DIM]) -> [f64; CLASSES] {
        let mut z = [0.0; CLASSES];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.w2[c * EMBEDDING_DIM..(c + 1) * EMBEDDING_DIM];
            *zc = row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.b2[c];
        }
        z
    }

    pub fn forward(&self, descriptor: &SceneDescriptor) -> SceneOutput {
        let mut h = self.pre_activation(descriptor.values());
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        let probabilities = softmax(self.logits(&h));
        SceneOutput {
            embedding: Embedding68(h),
            probabilities,
        }
    }

    pub fn embed(&self, descriptor: &SceneDescriptor) -> Embedding68 {
        self.forward(descriptor).embedding
    }

    /// Mean cross-entropy over `samples`.
    pub fn loss(&self, samples: &[(SceneDescriptor, PrivacyClass)]) -> f64 {
        samples
            .iter()
            .map(|(d, c)| -self.forward(d).probabilities[class_index(*c)].ln())
            .sum::<f64>()
            / samples.len() as f64
    }

    /// Mean cross-entropy and its exact gradient by backpropagation.
    pub fn loss_and_gradient(&self, samples: &[(SceneDescriptor, PrivacyClass)]) -> (f64, SceneGradient) {
        let mut g = SceneGradient {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; EMBEDDING_DIM],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; CLASSES],
        };
        let scale = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        for (d, c) in samples {
            let d = d.values();
            let pre = self.pre_activation(d);
            let h = pre.map(|v| v.max(0.0));
            let p = softmax(self.logits(&h));
            let y = class_index(*c);
            loss -= p[y].ln();
            let mut dz = p;
            dz[y] -= 1.0;
            let mut dh = [0.0; EMBEDDING_DIM];
            for cls in 0..CLASSES {
                let dzc = dz[cls] * scale;
                g.b2[cls] += dzc;
                for j in 0..EMBEDDING_DIM {
                    g.w2[cls * EMBEDDING_DIM + j] += dzc * h[j];
                    dh[j] += self.w2[cls * EMBEDDING_DIM + j] * dzc;
                }
            }
            for j in 0..EMBEDDING_DIM {
                if pre[j] <= 0.0 {
                    continue;
                }
                g.b1[j] += dh[j];
                let row = &mut g.w1[j * DESCRIPTOR_DIM..(j + 1) * DESCRIPTOR_DIM];
                for (gw, x) in row.iter_mut().zip(d) {
                    *gw += dh[j] * x;
                }
            }
        }
        (loss * scale, g)
    }

    fn stepped(&self, g: &SceneGradient, lr: f64) -> SceneModel {
        let step = |p: &[f64], d: &[f64]| p.iter().zip(d).map(|(p, d)| p - lr * d).collect();
        SceneModel {
            w1: step(&self.w1, &g.w1),
            b1: step(&self.b1, &g.b1),
            w2: step(&self.w2, &g.w2),
            b2: step(&self.b2, &g.b2),
            meta: self.meta.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SceneModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            shape: [DESCRIPTOR_DIM, EMBEDDING_DIM, CLASSES],
            model: self.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneModelFile =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("scene model: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported scene model format {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        let expected = [
            EMBEDDING_DIM * DESCRIPTOR_DIM,
            EMBEDDING_DIM,
            CLASSES * EMBEDDING_DIM,
            CLASSES,
        ];
        let got = [m.w1.len(), m.b1.len(), m.w2.len(), m.b2.len()];
        if file.shape != [DESCRIPTOR_DIM, EMBEDDING_DIM, CLASSES] || got != expected {
            return Err(Error::Data(format!(
                "scene model shape mismatch: blocks {got:?}, expected {expected:?}"
            )));
        }
        if m.w1.iter().chain(&m.b1).chain(&m.w2).chain(&m.b2).any(|v| !v.is_finite()) {
            return Err(Error::Data("scene model has non-finite parameters".into()));
        }
        Ok(m)
    }
}

/// Outcome of training: the model plus the loss after every epoch.
#[derive(Debug, Clone)]
pub struct SceneTraining {
    pub model: SceneModel,
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent on the mean cross-entropy. A step that raises
/// the loss by more than 1e-6 is rejected and the learning rate halved.
pub fn train_scene_model(samples: &[(SceneDescriptor, PrivacyClass)], params: &SceneParams) -> Result<SceneTraining> {
    let has = |c| samples.iter().any(|s| s.1 == c);
    if !has(PrivacyClass::Sensitive) || !has(PrivacyClass::NonSensitive) {
        return Err(Error::Training("scene model needs samples of both classes".into()));
    }
    let mut model = SceneModel::random(params.seed, 0.01);
    let mut lr = params.learning_rate;
    let (mut loss, mut grad) = model.loss_and_gradient(samples);
    let mut history = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        let candidate = model.stepped(&grad, lr);
        let (c_loss, c_grad) = candidate.loss_and_gradient(samples);
        if c_loss <= loss + 1e-6 && c_loss.is_finite() {
            model = candidate;
            loss = c_loss;
            grad = c_grad;
        } else {
            lr *= 0.5;
        }
        history.push(loss);
    }
    model.meta = TrainingMeta {
        epochs: params.epochs,
        learning_rate: params.learning_rate,
        seed: params.seed,
        final_loss: loss,
    };
    Ok(SceneTraining {
        model,
        loss_history: history,
    })
}

/// Score is the probability of `Sensitive`; a tie at 0.5 counts as sensitive.
pub fn cnn_direct_classify(model: &SceneModel, descriptor: &SceneDescriptor) -> (PrivacyClass, f64) {
    classify_probabilities(model.forward(descriptor).probabilities)
}

pub fn classify_probabilities(p: [f64; CLASSES]) -> (PrivacyClass, f64) {
    let score = p[0];
    let class = if score >= 0.5 {
        PrivacyClass::Sensitive
    } else {
        PrivacyClass::NonSensitive
    };
    (class, score)
}

/// One training image drawn from a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentImage {
    pub t: f64,
    pub descriptor: SceneDescriptor,
    pub class: PrivacyClass,
}

/// Deterministic per-recording seed so a recording contributes the same
/// images to every fold it trains.
pub fn recording_seed(seed: u64, recording: &Recording) -> u64 {
    // FNV-1a over the key, mixed with the caller's seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in recording
        .person_id
        .bytes()
        .chain(recording.recording_id.to_le_bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One uniformly chosen scene frame per maximal run of annotation segments
/// sharing environment, activity and privacy level. Runs without any frame
/// are skipped with a warning.
pub fn sample_segment_images(recording: &Recording, cutoff: u8, seed: u64) -> Result<Vec<SegmentImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(recording_seed(seed, recording));
    let mut out = Vec::new();
    let anns = &recording.annotations;
    let mut i = 0;
    while i < anns.len() {
        let mut j = i;
        while j + 1 < anns.len()
            && anns[j + 1].environment == anns[i].environment
            && anns[j + 1].activity == anns[i].activity
            && anns[j + 1].privacy_level == anns[i].privacy_level
        {
            j += 1;
        }
        let (start, end) = (anns[i].start, anns[j].end);
        let lo = recording.scene.partition_point(|f| f.t < start);
        let hi = recording.scene.partition_point(|f| f.t < end);
        if lo == hi {
            log::warn!(
                "{}: segment [{start}, {end}) has no scene frames, skipped",
                recording.key()
            );
        } else {
            let frame = &recording.scene[rng.random_range(lo..hi)];
            out.push(SegmentImage {
                t: frame.t,
                descriptor: frame.descriptor.clone(),
                class: label_from_level(anns[i].privacy_level, cutoff)?,
            });
        }
        i = j + 1;
    }
    Ok(out)
}
