//! On-disk recording format and per-second ground truth.
//!
//! A recording directory holds a `manifest.json` pointing at three CSV files:
//! gaze samples, annotation segments, and the scene stream. The scene stream is
//! either a descriptor table (`t,d0,...,d1023`) or an image list
//! (`t,relative_path`) whose images are turned into descriptors on load.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{base_descriptor, SceneDescriptor, DESCRIPTOR_DIM};

pub const GAZE_HEADER: [&str; 5] = ["t", "x", "y", "pupil_diameter", "confidence"];
pub const ANNOTATION_HEADER: [&str; 5] = ["start", "end", "environment", "activity", "privacy_level"];
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub pupil_diameter: f64,
    pub confidence: f64,
}

impl GazeSample {
    pub fn is_valid(&self, validity_threshold: f64) -> bool {
        self.confidence >= validity_threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSegment {
    pub start: f64,
    pub end: f64,
    pub environment: String,
    pub activity: String,
    pub privacy_level: u8,
}

impl AnnotationSegment {
    /// Half-open membership: `[start, end)`.
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub t: f64,
    pub descriptor: SceneDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyClass {
    Sensitive,
    NonSensitive,
}

impl PrivacyClass {
    /// SVM label convention: Sensitive is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            PrivacyClass::Sensitive => 1.0,
            PrivacyClass::NonSensitive => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            PrivacyClass::Sensitive => PrivacyClass::NonSensitive,
            PrivacyClass::NonSensitive => PrivacyClass::Sensitive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyClass::Sensitive => "sensitive",
            PrivacyClass::NonSensitive => "non_sensitive",
        }
    }
}

impl fmt::Display for PrivacyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Collapses a 1..=7 privacy rating into the binary class. Levels at or
/// below `cutoff` are sensitive.
pub fn label_from_level(level: u8, cutoff: u8) -> Result<PrivacyClass> {
    if !(1..=7).contains(&level) || !(1..=7).contains(&cutoff) {
        return Err(Error::InvalidArgument(format!(
            "privacy level {level} and cutoff {cutoff} must both be in 1..=7"
        )));
    }
    Ok(if level <= cutoff {
        PrivacyClass::Sensitive
    } else {
        PrivacyClass::NonSensitive
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub person_id: String,
    pub recording_id: u32,
    pub samples: Vec<GazeSample>,
    pub scene: Vec<SceneFrame>,
    pub annotations: Vec<AnnotationSegment>,
}

/// Identifies one recording inside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordingKey {
    pub person_id: String,
    pub recording_id: u32,
}

impl fmt::Display for RecordingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_r{}", self.person_id, self.recording_id)
    }
}

impl Recording {
    pub fn key(&self) -> RecordingKey {
        RecordingKey {
            person_id: self.person_id.clone(),
            recording_id: self.recording_id,
        }
    }

    /// Latest scene frame at or before `t`.
    pub fn frame_at(&self, t: f64) -> Option<&SceneFrame> {
        let idx = self.scene.partition_point(|f| f.t <= t);
        idx.checked_sub(1).map(|i| &self.scene[i])
    }

    /// Cross-stream checks: annotations must overlap the gaze time range and
    /// scene frames must be time-ordered.
    pub fn validate(&self) -> Result<()> {
        validate_segments(&self.annotations)?;
        if let (Some(first), Some(last)) = (self.samples.first(), self.samples.last()) {
            let (a0, a1) = (self.annotations[0].start, self.annotations.last().unwrap().end);
            // One second of slack: the final annotation usually ends where the
            // last frame interval ends, slightly after the last sample.
            if a0 < first.t - 1.0 || a1 > last.t + 1.0 {
                return Err(Error::Data(format!(
                    "{}: annotations [{a0}, {a1}) exceed gaze range [{}, {}]",
                    self.key(),
                    first.t,
                    last.t
                )));
            }
        }
        if self.scene.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Data(format!("{}: scene frames not strictly increasing", self.key())));
        }
        Ok(())
    }
}

/// One ground-truth label per integer second covered by the annotations.
/// Second `s` takes the class of the segment with `start <= s < end`.
pub fn labels_per_second(annotations: &[AnnotationSegment], cutoff: u8) -> Result<Vec<(i64, PrivacyClass)>> {
    let (Some(first), Some(last)) = (annotations.first(), annotations.last()) else {
        return Ok(Vec::new());
    };
    let first_second = first.start.ceil() as i64;
    let mut out = Vec::new();
    let mut seg = 0usize;
    let mut s = first_second;
    while (s as f64) < last.end {
        let t = s as f64;
        while seg < annotations.len() && annotations[seg].end <= t {
            seg += 1;
        }
        match annotations.get(seg) {
            Some(a) if a.contains(t) => out.push((s, label_from_level(a.privacy_level, cutoff)?)),
            _ => return Err(Error::Data(format!("second {s} is not covered by any annotation"))),
        }
        s += 1;
    }
    Ok(out)
}

fn validate_segments(segments: &[AnnotationSegment]) -> Result<()> {
    if segments.is_empty() {
        return Err(Error::Data("recording has no annotations".into()));
    }
    for (i, s) in segments.iter().enumerate() {
        if !(s.start.is_finite() && s.end.is_finite()) || s.start >= s.end {
            return Err(Error::Data(format!("segment {i}: start {} must be < end {}", s.start, s.end)));
        }
        if !(1..=7).contains(&s.privacy_level) {
            return Err(Error::Data(format!(
                "segment {i}: privacy_level {} outside 1..7",
                s.privacy_level
            )));
        }
        if i > 0 {
            let prev = &segments[i - 1];
            if s.start < prev.end {
                return Err(Error::Data(format!("overlap at t={}", s.start)));
            }
            if s.start > prev.end {
                return Err(Error::Data(format!("gap between t={} and t={}", prev.end, s.start)));
            }
        }
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for name in expected {
        if !headers.iter().any(|h| h == *name) {
            return Err(Error::parse(path, 1, format!("missing column `{name}`")));
        }
    }
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != *e) {
        return Err(Error::parse(
            path,
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn field_f64(path: &Path, line: u64, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing field `{name}`")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(path, line, format!("`{name}` is not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("`{name}` is not finite")));
    }
    Ok(v)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_gaze_csv(path: &Path, validity_threshold: f64) -> Result<Vec<GazeSample>> {
    read_gaze_csv(open(path)?, path, validity_threshold)
}

/// `origin` is only used in error messages.
pub fn read_gaze_csv<R: Read>(reader: R, origin: &Path, validity_threshold: f64) -> Result<Vec<GazeSample>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    check_header(origin, &headers, &GAZE_HEADER)?;
    let mut samples: Vec<GazeSample> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record_line(&record);
        let f = |i: usize| field_f64(origin, line, &record, i, GAZE_HEADER[i]);
        let s = GazeSample {
            t: f(0)?,
            x: f(1)?,
            y: f(2)?,
            pupil_diameter: f(3)?,
            confidence: f(4)?,
        };
        if !(0.0..=1.0).contains(&s.confidence) {
            return Err(Error::parse(origin, line, format!("confidence out of range, line {line}")));
        }
        if s.is_valid(validity_threshold)
            && (!(0.0..=1.0).contains(&s.x) || !(0.0..=1.0).contains(&s.y) || s.pupil_diameter <= 0.0)
        {
            return Err(Error::parse(
                origin,
                line,
                "valid sample needs position in [0,1]^2 and positive pupil diameter",
            ));
        }
        if let Some(prev) = samples.last() {
            if s.t <= prev.t {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("timestamp {} not strictly after {}", s.t, prev.t),
                ));
            }
        }
        samples.push(s);
    }
    Ok(samples)
}

pub fn parse_annotations(path: &Path) -> Result<Vec<AnnotationSegment>> {
    read_annotations(open(path)?, path)
}

pub fn read_annotations<R: Read>(reader: R, origin: &Path) -> Result<Vec<AnnotationSegment>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    check_header(origin, &headers, &ANNOTATION_HEADER)?;
    let mut segments = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record_line(&record);
        let level_raw = record.get(4).unwrap_or_default();
        let privacy_level: u8 = level_raw
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("privacy_level is not an integer: {level_raw:?}")))?;
        segments.push(AnnotationSegment {
            start: field_f64(origin, line, &record, 0, "start")?,
            end: field_f64(origin, line, &record, 1, "end")?,
            environment: record.get(2).unwrap_or_default().to_string(),
            activity: record.get(3).unwrap_or_default().to_string(),
            privacy_level,
        });
    }
    validate_segments(&segments)?;
    Ok(segments)
}

pub fn parse_scene_descriptors(path: &Path) -> Result<Vec<SceneFrame>> {
    read_scene_descriptors(open(path)?, path)
}

pub fn read_scene_descriptors<R: Read>(reader: R, origin: &Path) -> Result<Vec<SceneFrame>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let expected = descriptor_header();
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    check_header(origin, &headers, &expected)?;
    let mut frames: Vec<SceneFrame> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record_line(&record);
        let t = field_f64(origin, line, &record, 0, "t")?;
        let values = (1..=DESCRIPTOR_DIM)
            .map(|i| field_f64(origin, line, &record, i, expected[i]))
            .collect::<Result<Vec<_>>>()?;
        if frames.last().is_some_and(|p| t <= p.t) {
            return Err(Error::parse(origin, line, "scene timestamps not strictly increasing"));
        }
        frames.push(SceneFrame {
            t,
            descriptor: SceneDescriptor::new(values)?,
        });
    }
    Ok(frames)
}

/// Reads a `t,relative_path` image list and computes a descriptor per image.
pub fn parse_scene_images(path: &Path) -> Result<Vec<SceneFrame>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &["t", "relative_path"])?;
    let mut frames: Vec<SceneFrame> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record_line(&record);
        let t = field_f64(path, line, &record, 0, "t")?;
        let rel = record.get(1).unwrap_or_default();
        let img_path = base.join(rel);
        let img = image::open(&img_path)
            .map_err(|e| Error::parse(path, line, format!("cannot decode {}: {e}", img_path.display())))?;
        if frames.last().is_some_and(|p| t <= p.t) {
            return Err(Error::parse(path, line, "scene timestamps not strictly increasing"));
        }
        frames.push(SceneFrame {
            t,
            descriptor: base_descriptor(&img.to_rgb8()),
        });
    }
    Ok(frames)
}

/// Dispatches on the header of a scene file: descriptor table or image list.
pub fn parse_scene(path: &Path) -> Result<Vec<SceneFrame>> {
    let mut first_line = String::new();
    {
        use std::io::BufRead;
        let mut r = std::io::BufReader::new(open(path)?);
        r.read_line(&mut first_line).map_err(|e| Error::io(path, e))?;
    }
    if first_line.trim_end().starts_with("t,relative_path") {
        parse_scene_images(path)
    } else {
        parse_scene_descriptors(path)
    }
}

fn descriptor_header() -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..DESCRIPTOR_DIM).map(|i| format!("d{i}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub person_id: String,
    pub recording_id: u32,
    pub gaze: PathBuf,
    pub annotations: PathBuf,
    pub scene: PathBuf,
}

/// Loads a recording from its manifest; relative paths resolve against the
/// manifest's directory.
pub fn load_recording(manifest_path: &Path, validity_threshold: f64) -> Result<Recording> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(manifest_path, e.line() as u64, e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let recording = Recording {
        person_id: manifest.person_id,
        recording_id: manifest.recording_id,
        samples: parse_gaze_csv(&base.join(&manifest.gaze), validity_threshold)?,
        scene: parse_scene(&base.join(&manifest.scene))?,
        annotations: parse_annotations(&base.join(&manifest.annotations))?,
    };
    recording.validate()?;
    Ok(recording)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json`, `gaze.csv`, `annotations.csv` and `scene.csv`
/// into `dir`. Floats use the shortest representation that parses back to
/// the same bits.
pub fn write_recording(dir: &Path, recording: &Recording) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p.clone(), e)
    };

    let gaze = dir.join("gaze.csv");
    let mut w = create(&gaze)?;
    writeln!(w, "{}", GAZE_HEADER.join(",")).map_err(io(&gaze))?;
    for s in &recording.samples {
        writeln!(w, "{},{},{},{},{}", s.t, s.x, s.y, s.pupil_diameter, s.confidence).map_err(io(&gaze))?;
    }
    w.flush().map_err(io(&gaze))?;

    let ann = dir.join("annotations.csv");
    let mut w = create(&ann)?;
    writeln!(w, "{}", ANNOTATION_HEADER.join(",")).map_err(io(&ann))?;
    for a in &recording.annotations {
        writeln!(
            w,
            "{},{},{},{},{}",
            a.start, a.end, a.environment, a.activity, a.privacy_level
        )
        .map_err(io(&ann))?;
    }
    w.flush().map_err(io(&ann))?;

    let scene = dir.join("scene.csv");
    let mut w = create(&scene)?;
    writeln!(w, "{}", descriptor_header().join(",")).map_err(io(&scene))?;
    let mut line = String::new();
    for f in &recording.scene {
        use std::fmt::Write as _;
        line.clear();
        write!(line, "{}", f.t).unwrap();
        for v in f.descriptor.values() {
            write!(line, ",{v}").unwrap();
        }
        writeln!(w, "{line}").map_err(io(&scene))?;
    }
    w.flush().map_err(io(&scene))?;

    let manifest = Manifest {
        person_id: recording.person_id.clone(),
        recording_id: recording.recording_id,
        gaze: "gaze.csv".into(),
        annotations: "annotations.csv".into(),
        scene: "scene.csv".into(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json + "\n").map_err(io(&manifest_path))?;
    Ok(manifest_path)
}

/// A set of recordings, ordered by (person, recording).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn new(mut recordings: Vec<Recording>) -> Self {
        recordings.sort_by_key(Recording::key);
        Dataset { recordings }
    }

    /// Loads every `*/manifest.json` directly below `dir`.
    pub fn load_dir(dir: &Path, validity_threshold: f64) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifests = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let m = entry.path().join(MANIFEST_FILE);
            if m.is_file() {
                manifests.push(m);
            }
        }
        manifests.sort();
        if manifests.is_empty() {
            return Err(Error::Data(format!("no recordings found in {}", dir.display())));
        }
        let recordings = manifests
            .iter()
            .map(|m| load_recording(m, validity_threshold))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(recordings))
    }

    /// Writes one sub-directory per recording, named `<person>_r<id>`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for r in &self.recordings {
            write_recording(&dir.join(r.key().to_string()), r)?;
        }
        Ok(())
    }

    /// Distinct person ids in dataset order.
    pub fn persons(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.recordings {
            if ids.last() != Some(&r.person_id) && !ids.contains(&r.person_id) {
                ids.push(r.person_id.clone());
            }
        }
        ids
    }

    pub fn get(&self, key: &RecordingKey) -> Option<&Recording> {
        self.recordings
            .iter()
            .find(|r| r.person_id == key.person_id && r.recording_id == key.recording_id)
    }
}
