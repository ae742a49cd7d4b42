//! Per-fold training and per-recording simulation of every detection method.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset::{Dataset, PrivacyClass, Recording, RecordingKey, labels_per_second};
use crate::error::{Error, Result};
use crate::eval::folds::{Fold, majority_baseline};
use crate::features::{FeatureVector52, extract_features};
use crate::scene::{SceneDescriptor, SceneModel, cnn_direct_classify, sample_segment_images, train_scene_model};
use crate::shutter::{FnDetector, Metrics, ShutterTrace, run_simulation};
use crate::svm::{SvmModel, concat_features, svm_predict};

/// A detection method as run inside the shutter loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Scene classifier while open, eye SVM while closed.
    CnnSvm,
    /// Combined SVM while open, eye SVM while closed.
    SvmSvm,
    /// Eye SVM in both states.
    SvmEye,
    /// Upper bound: scene classifier in both states.
    CnnDirect,
    /// Upper bound: combined SVM in both states.
    SvmCombined,
    /// Constant training-majority class.
    Majority,
    /// Perfect predictor; isolates the effect of the closing time.
    GroundTruth,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CnnSvm,
        Method::SvmSvm,
        Method::SvmEye,
        Method::CnnDirect,
        Method::SvmCombined,
        Method::Majority,
        Method::GroundTruth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CnnSvm => "cnn-svm",
            Method::SvmSvm => "svm-svm",
            Method::SvmEye => "svm-eye",
            Method::CnnDirect => "cnn-direct",
            Method::SvmCombined => "svm-combined",
            Method::Majority => "majority",
            Method::GroundTruth => "ground-truth",
        }
    }

    pub fn is_upper_bound(self) -> bool {
        matches!(self, Method::CnnDirect | Method::SvmCombined)
    }

    /// Methods whose predictions come from models fit on the training folds.
    pub fn is_trained(self) -> bool {
        !matches!(self, Method::Majority | Method::GroundTruth)
    }

    /// The upper-bound counterpart of a shutter method: its open-state
    /// classifier applied at every second.
    pub fn upper_bound(self) -> Method {
        match self {
            Method::CnnSvm => Method::CnnDirect,
            Method::SvmSvm => Method::SvmCombined,
            m => m,
        }
    }

    fn detectors(self) -> (Source, Source) {
        match self {
            Method::CnnSvm => (Source::Cnn, Source::Eye),
            Method::SvmSvm => (Source::Combined, Source::Eye),
            Method::SvmEye => (Source::Eye, Source::Eye),
            Method::CnnDirect => (Source::Cnn, Source::Cnn),
            Method::SvmCombined => (Source::Combined, Source::Combined),
            Method::Majority => (Source::Majority, Source::Majority),
            Method::GroundTruth => (Source::Truth, Source::Truth),
        }
    }

    fn needs(self) -> Needs {
        let (a, b) = self.detectors();
        let mut n = Needs::default();
        for s in [a, b] {
            match s {
                Source::Eye => n.eye = true,
                Source::Cnn => n.scene = true,
                Source::Combined => {
                    n.scene = true;
                    n.combined = true;
                }
                Source::Majority | Source::Truth => {}
            }
        }
        n
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::InvalidArgument(format!("unknown method `{s}` ({})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Eye,
    Cnn,
    Combined,
    Majority,
    Truth,
}

impl Source {
    fn name(self) -> &'static str {
        match self {
            Source::Eye => "svm-eye",
            Source::Cnn => "cnn-direct",
            Source::Combined => "svm-combined",
            Source::Majority => "majority",
            Source::Truth => "ground-truth",
        }
    }
}

/// Which models a set of methods requires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Needs {
    pub eye: bool,
    pub scene: bool,
    pub combined: bool,
}

impl Needs {
    pub fn of(methods: &[Method]) -> Needs {
        methods.iter().fold(Needs::default(), |acc, m| {
            let n = m.needs();
            Needs {
                eye: acc.eye || n.eye,
                scene: acc.scene || n.scene,
                combined: acc.combined || n.combined,
            }
        })
    }
}

/// The per-second streams of one recording, aligned on whole seconds: one
/// ground-truth label, one eye feature vector (window ending at that second)
/// and the latest scene frame at or before it.
#[derive(Debug, Clone)]
pub struct PreparedRecording {
    pub key: RecordingKey,
    pub seconds: Vec<(i64, PrivacyClass)>,
    pub eye: Vec<FeatureVector52>,
    pub frames: Vec<SceneDescriptor>,
    /// One-per-segment training images for the scene model.
    pub segment_images: Vec<(SceneDescriptor, PrivacyClass)>,
}

impl PreparedRecording {
    pub fn new(recording: &Recording, config: &Config) -> Result<Self> {
        let key = recording.key();
        let labels: BTreeMap<i64, PrivacyClass> =
            labels_per_second(&recording.annotations, config.eval.cutoff)?.into_iter().collect();
        let (_, rows) = extract_features(recording, &config.events, &config.window);
        let mut seconds = Vec::new();
        let mut eye = Vec::new();
        let mut frames = Vec::new();
        for row in rows {
            let s = row.t_end.round();
            if (row.t_end - s).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "{key}: misaligned streams, feature window ends at t={} (not a whole second)",
                    row.t_end
                )));
            }
            let s = s as i64;
            let Some(&label) = labels.get(&s) else {
                continue;
            };
            let frame = recording.frame_at(s as f64).ok_or_else(|| {
                Error::Data(format!("{key}: misaligned streams, no scene frame at or before t={s}"))
            })?;
            seconds.push((s, label));
            eye.push(row.features);
            frames.push(frame.descriptor.clone());
        }
        if seconds.is_empty() {
            return Err(Error::Data(format!(
                "{key}: misaligned streams, no labeled second has a complete feature window"
            )));
        }
        if seconds.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
            return Err(Error::Data(format!(
                "{key}: misaligned streams, labeled feature seconds are not consecutive"
            )));
        }
        let segment_images = sample_segment_images(recording, config.eval.cutoff, config.eval.sample_seed)?
            .into_iter()
            .map(|s| (s.descriptor, s.class))
            .collect();
        Ok(PreparedRecording {
            key,
            seconds,
            eye,
            frames,
            segment_images,
        })
    }

    pub fn len(&self) -> usize {
        self.seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seconds.is_empty()
    }

    pub fn truth(&self) -> Vec<PrivacyClass> {
        self.seconds.iter().map(|s| s.1).collect()
    }
}

/// Prepares every recording of a dataset in parallel, keyed for lookup.
pub fn prepare_dataset(dataset: &Dataset, config: &Config) -> Result<BTreeMap<RecordingKey, PreparedRecording>> {
    dataset
        .recordings
        .par_iter()
        .map(|r| PreparedRecording::new(r, config).map(|p| (p.key.clone(), p)))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().collect())
}

fn lookup<'a>(
    prepared: &'a BTreeMap<RecordingKey, PreparedRecording>,
    keys: &[RecordingKey],
) -> Result<Vec<&'a PreparedRecording>> {
    keys.iter()
        .map(|k| {
            prepared
                .get(k)
                .ok_or_else(|| Error::Data(format!("recording {k} is not in the dataset")))
        })
        .collect()
}

/// 64-bit FNV-1a, used to fingerprint training inputs.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    pub fn bytes(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn row(&mut self, values: &[f64], label: PrivacyClass) {
        for v in values {
            self.bytes(&v.to_bits().to_le_bytes());
        }
        self.bytes(&[label as u8]);
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Fingerprint of every training input a fold can see: eye rows with their
/// labels, then the segment images. Depends only on the listed recordings.
pub fn training_fingerprint(recordings: &[&PreparedRecording]) -> u64 {
    let mut fp = Fingerprint::default();
    for r in recordings {
        for (x, (_, y)) in r.eye.iter().zip(&r.seconds) {
            fp.row(x.values(), *y);
        }
        for (d, y) in &r.segment_images {
            fp.row(d.values(), *y);
        }
    }
    fp.value()
}

/// Models fit on one fold's training recordings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldModels {
    pub trained_on: Vec<RecordingKey>,
    pub fingerprint: u64,
    pub majority: PrivacyClass,
    pub svm_eye: Option<SvmModel>,
    pub scene: Option<SceneModel>,
    pub svm_combined: Option<SvmModel>,
}

const EYE_FILE: &str = "svm_eye.json";
const SCENE_FILE: &str = "scene.json";
const COMBINED_FILE: &str = "svm_combined.json";
const FOLD_FILE: &str = "fold.json";

#[derive(Serialize, Deserialize)]
struct FoldInfo {
    trained_on: Vec<RecordingKey>,
    fingerprint: u64,
    majority: PrivacyClass,
}

impl FoldModels {
    pub fn train(train: &[&PreparedRecording], needs: Needs, config: &Config) -> Result<Self> {
        let labels: Vec<PrivacyClass> = train.iter().flat_map(|r| r.truth()).collect();
        let majority = majority_baseline(&labels)?;
        let eye_rows = || -> Vec<Vec<f64>> {
            train.iter().flat_map(|r| r.eye.iter().map(|f| f.values().to_vec())).collect()
        };
        let svm_eye = if needs.eye {
            Some(SvmModel::train(&eye_rows(), &labels, &config.svm).map_err(as_training("eye svm"))?)
        } else {
            None
        };
        let scene = if needs.scene || needs.combined {
            let samples: Vec<_> = train.iter().flat_map(|r| r.segment_images.iter().cloned()).collect();
            Some(train_scene_model(&samples, &config.scene)?.model)
        } else {
            None
        };
        let svm_combined = match (&scene, needs.combined) {
            (Some(model), true) => {
                let rows: Vec<Vec<f64>> = train
                    .iter()
                    .flat_map(|r| r.eye.iter().zip(&r.frames).map(|(f, d)| concat_features(f, &model.embed(d))))
                    .collect();
                Some(SvmModel::train(&rows, &labels, &config.svm).map_err(as_training("combined svm"))?)
            }
            _ => None,
        };
        Ok(FoldModels {
            trained_on: train.iter().map(|r| r.key.clone()).collect(),
            fingerprint: training_fingerprint(train),
            majority,
            svm_eye,
            scene,
            svm_combined,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let info = FoldInfo {
            trained_on: self.trained_on.clone(),
            fingerprint: self.fingerprint,
            majority: self.majority,
        };
        let path = dir.join(FOLD_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&info).expect("fold info serializes"))
            .map_err(|e| Error::io(&path, e))?;
        if let Some(m) = &self.svm_eye {
            m.save(&dir.join(EYE_FILE))?;
        }
        if let Some(m) = &self.scene {
            m.save(&dir.join(SCENE_FILE))?;
        }
        if let Some(m) = &self.svm_combined {
            m.save(&dir.join(COMBINED_FILE))?;
        }
        Ok(())
    }

    /// Loads whatever models are present in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(FOLD_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let info: FoldInfo =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Ok(FoldModels {
            trained_on: info.trained_on,
            fingerprint: info.fingerprint,
            majority: info.majority,
            svm_eye: opt(EYE_FILE).map(|p| SvmModel::load(&p)).transpose()?,
            scene: opt(SCENE_FILE).map(|p| SceneModel::load(&p)).transpose()?,
            svm_combined: opt(COMBINED_FILE).map(|p| SvmModel::load(&p)).transpose()?,
        })
    }

    /// Per-second predictions of every available model on one recording.
    pub fn predict(&self, rec: &PreparedRecording) -> Result<Predictions> {
        let eye = self
            .svm_eye
            .as_ref()
            .map(|m| rec.eye.iter().map(|f| svm_predict(m, f.values()).map(|p| p.0)).collect())
            .transpose()?;
        let cnn = self
            .scene
            .as_ref()
            .map(|m| rec.frames.iter().map(|d| cnn_direct_classify(m, d).0).collect());
        let combined = match (&self.scene, &self.svm_combined) {
            (Some(scene), Some(svm)) => Some(
                rec.eye
                    .iter()
                    .zip(&rec.frames)
                    .map(|(f, d)| svm_predict(svm, &concat_features(f, &scene.embed(d))).map(|p| p.0))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        Ok(Predictions {
            truth: rec.truth(),
            majority: self.majority,
            eye,
            cnn,
            combined,
        })
    }
}

fn as_training(what: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Training(m) => Error::Training(format!("{what}: {m}")),
        Error::InvalidArgument(m) | Error::Data(m) => Error::Training(format!("{what}: {m}")),
        other => other,
    }
}

/// Precomputed per-second predictions on one test recording.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub truth: Vec<PrivacyClass>,
    pub majority: PrivacyClass,
    pub eye: Option<Vec<PrivacyClass>>,
    pub cnn: Option<Vec<PrivacyClass>>,
    pub combined: Option<Vec<PrivacyClass>>,
}

impl Predictions {
    fn stream(&self, source: Source) -> Result<Vec<PrivacyClass>> {
        let missing = || Error::InvalidArgument(format!("no {} model available", source.name()));
        Ok(match source {
            Source::Eye => self.eye.clone().ok_or_else(missing)?,
            Source::Cnn => self.cnn.clone().ok_or_else(missing)?,
            Source::Combined => self.combined.clone().ok_or_else(missing)?,
            Source::Majority => vec![self.majority; self.truth.len()],
            Source::Truth => self.truth.clone(),
        })
    }
}

/// Runs one method on one prepared recording with closing time `t`.
pub fn simulate(
    rec: &PreparedRecording,
    predictions: &Predictions,
    method: Method,
    closing_time: u32,
) -> Result<(ShutterTrace, Metrics)> {
    let (open_src, closed_src) = method.detectors();
    let open_stream = predictions.stream(open_src)?;
    let closed_stream = predictions.stream(closed_src)?;
    let mut open = FnDetector::new(open_src.name(), |i: usize| Ok(open_stream[i]));
    let mut closed = FnDetector::new(closed_src.name(), |i: usize| Ok(closed_stream[i]));
    run_simulation(&rec.seconds, closing_time, &mut open, &mut closed)
}

/// Trains the models needed by `methods` for one fold, refusing any overlap
/// between training and test recordings.
pub fn train_fold(
    fold: &Fold,
    prepared: &BTreeMap<RecordingKey, PreparedRecording>,
    methods: &[Method],
    config: &Config,
) -> Result<FoldModels> {
    if fold.train.iter().any(|k| fold.test.contains(k)) {
        return Err(Error::Contract(format!("fold {} trains on a test recording", fold.id)));
    }
    let train = lookup(prepared, &fold.train)?;
    FoldModels::train(&train, Needs::of(methods), config).map_err(|e| match e {
        Error::Training(m) => Error::Training(format!("{} fold {} ({}): {m}", fold.scheme, fold.id, fold.test_person)),
        other => other,
    })
}

/// Checks that loaded models were fit on exactly this fold's training set.
pub fn check_fold_models(
    fold: &Fold,
    models: &FoldModels,
    prepared: &BTreeMap<RecordingKey, PreparedRecording>,
) -> Result<()> {
    let train = lookup(prepared, &fold.train)?;
    if models.trained_on != fold.train || models.fingerprint != training_fingerprint(&train) {
        return Err(Error::Data(format!(
            "models do not match the training set of {} fold {}",
            fold.scheme, fold.id
        )));
    }
    Ok(())
}

/// Test-set predictions of one fold, recording by recording.
pub fn fold_predictions<'a>(
    fold: &Fold,
    models: &FoldModels,
    prepared: &'a BTreeMap<RecordingKey, PreparedRecording>,
) -> Result<Vec<(&'a PreparedRecording, Predictions)>> {
    lookup(prepared, &fold.test)?
        .into_iter()
        .map(|r| models.predict(r).map(|p| (r, p)))
        .collect()
}
