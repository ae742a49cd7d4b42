//! Per-second shutter state machine and the metrics computed from its trace.
//!
//! At each second the detector matching the *previous* shutter position is
//! consulted: the open-shutter detector (which may use scene imagery) while
//! open, the eye-only detector while closed. A closing holds for at least
//! the minimum closing time before the eye detector is asked whether to
//! reopen.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::PrivacyClass;
use crate::error::{Error, Result};

pub const MIN_CLOSING_TIME: u32 = 1;
pub const MAX_CLOSING_TIME: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShutterStatus {
    Open,
    Closed,
}

impl ShutterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ShutterStatus::Open => "open",
            ShutterStatus::Closed => "closed",
        }
    }
}

/// Which detector produced a second's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consulted {
    Open,
    Closed,
    /// Still inside the minimum closing interval; nothing consulted.
    Forced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShutterState {
    status: ShutterStatus,
    closed_since: Option<i64>,
    min_close: u32,
}

impl ShutterState {
    /// Starts open.
    pub fn new(min_close: u32) -> Result<Self> {
        if !(MIN_CLOSING_TIME..=MAX_CLOSING_TIME).contains(&min_close) {
            return Err(Error::InvalidArgument(format!(
                "closing time {min_close} outside {MIN_CLOSING_TIME}..={MAX_CLOSING_TIME}"
            )));
        }
        Ok(ShutterState {
            status: ShutterStatus::Open,
            closed_since: None,
            min_close,
        })
    }

    pub fn status(&self) -> ShutterStatus {
        self.status
    }

    pub fn closed_since(&self) -> Option<i64> {
        self.closed_since
    }

    pub fn min_close(&self) -> u32 {
        self.min_close
    }

    /// Whether a call to [`step`](Self::step) at `t` will consult the eye detector.
    pub fn wants_eye_prediction(&self, t: i64) -> bool {
        matches!(self.closed_since, Some(s) if t - s >= self.min_close as i64)
    }

    /// Advances one second. `open_prediction` must be given exactly when the
    /// shutter is open; `eye_prediction` is only evaluated once a closing has
    /// lasted `min_close` seconds. Returns the predicted class implied by the
    /// updated state.
    pub fn step(
        &mut self,
        t: i64,
        open_prediction: Option<PrivacyClass>,
        eye_prediction: impl FnOnce() -> PrivacyClass,
    ) -> Result<(PrivacyClass, Consulted)> {
        match (self.status, open_prediction) {
            (ShutterStatus::Open, Some(p)) => {
                if p == PrivacyClass::Sensitive {
                    self.status = ShutterStatus::Closed;
                    self.closed_since = Some(t);
                }
                Ok((p, Consulted::Open))
            }
            (ShutterStatus::Open, None) => Err(Error::Contract(format!(
                "t={t}: shutter is open but no open-shutter prediction was given"
            ))),
            (ShutterStatus::Closed, Some(_)) => Err(Error::Contract(format!(
                "t={t}: scene-based prediction supplied while the shutter is closed"
            ))),
            (ShutterStatus::Closed, None) => {
                if !self.wants_eye_prediction(t) {
                    return Ok((PrivacyClass::Sensitive, Consulted::Forced));
                }
                let p = eye_prediction();
                if p == PrivacyClass::NonSensitive {
                    self.status = ShutterStatus::Open;
                    self.closed_since = None;
                }
                Ok((p, Consulted::Closed))
            }
        }
    }
}

/// A per-second detector. `index` addresses the aligned per-second streams of
/// the recording under simulation.
pub trait Detector {
    fn name(&self) -> &str;
    fn predict(&mut self, index: usize) -> Result<PrivacyClass>;
}

/// Wraps a closure as a [`Detector`].
pub struct FnDetector<F> {
    name: String,
    f: F,
}

impl<F: FnMut(usize) -> Result<PrivacyClass>> FnDetector<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnDetector { name: name.into(), f }
    }
}

impl<F: FnMut(usize) -> Result<PrivacyClass>> Detector for FnDetector<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&mut self, index: usize) -> Result<PrivacyClass> {
        (self.f)(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: i64,
    pub status: ShutterStatus,
    pub predicted: PrivacyClass,
    pub truth: PrivacyClass,
    pub classifier: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShutterTrace {
    pub records: Vec<TraceRecord>,
}

impl ShutterTrace {
    pub fn predicted(&self) -> Vec<PrivacyClass> {
        self.records.iter().map(|r| r.predicted).collect()
    }

    pub fn truth(&self) -> Vec<PrivacyClass> {
        self.records.iter().map(|r| r.truth).collect()
    }

    /// Seconds at which the shutter went from open to closed. The state
    /// before the first record is open.
    pub fn closing_times(&self) -> Vec<i64> {
        let mut prev = ShutterStatus::Open;
        let mut out = Vec::new();
        for r in &self.records {
            if prev == ShutterStatus::Open && r.status == ShutterStatus::Closed {
                out.push(r.t);
            }
            prev = r.status;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,status,predicted,truth,classifier\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.t,
                r.status.as_str(),
                r.predicted,
                r.truth,
                r.classifier
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TP + TN) / (TP + FP + TN + FN)`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub closings: u64,
    pub mean_gap_minutes: Option<f64>,
}

/// Sample-based confusion counts with `Sensitive` as the positive class.
pub fn confusion(predicted: &[PrivacyClass], truth: &[PrivacyClass]) -> Result<Confusion> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (PrivacyClass::Sensitive, PrivacyClass::Sensitive) => c.tp += 1,
            (PrivacyClass::Sensitive, PrivacyClass::NonSensitive) => c.fp += 1,
            (PrivacyClass::NonSensitive, PrivacyClass::NonSensitive) => c.tn += 1,
            (PrivacyClass::NonSensitive, PrivacyClass::Sensitive) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Mean time between consecutive closings in minutes; `None` with fewer than
/// two closings.
pub fn mean_time_between_closings(trace: &ShutterTrace) -> Option<f64> {
    let closings = trace.closing_times();
    if closings.len() < 2 {
        return None;
    }
    let gaps: i64 = closings.windows(2).map(|w| w[1] - w[0]).sum();
    Some(gaps as f64 / (closings.len() - 1) as f64 / 60.0)
}

pub fn metrics(trace: &ShutterTrace) -> Metrics {
    let c = confusion(&trace.predicted(), &trace.truth()).expect("trace columns have equal length");
    Metrics {
        accuracy: c.accuracy(),
        confusion: c,
        closings: trace.closing_times().len() as u64,
        mean_gap_minutes: mean_time_between_closings(trace),
    }
}

/// Runs the state machine over consecutive seconds `truth[i].0`. The open
/// detector sees index `i` only while the shutter is open; the closed
/// detector only after the minimum closing interval.
pub fn run_simulation(
    truth: &[(i64, PrivacyClass)],
    closing_time: u32,
    open: &mut dyn Detector,
    closed: &mut dyn Detector,
) -> Result<(ShutterTrace, Metrics)> {
    if truth.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
        return Err(Error::Data("simulation seconds must be consecutive".into()));
    }
    let mut state = ShutterState::new(closing_time)?;
    let mut trace = ShutterTrace::default();
    for (i, &(t, label)) in truth.iter().enumerate() {
        let open_prediction = match state.status() {
            ShutterStatus::Open => Some(open.predict(i)?),
            ShutterStatus::Closed => None,
        };
        let mut eye_error = None;
        let (predicted, consulted) = state.step(t, open_prediction, || match closed.predict(i) {
            Ok(p) => p,
            Err(e) => {
                eye_error = Some(e);
                PrivacyClass::Sensitive
            }
        })?;
        if let Some(e) = eye_error {
            return Err(e);
        }
        let classifier = match consulted {
            Consulted::Open => open.name().to_string(),
            Consulted::Closed => closed.name().to_string(),
            Consulted::Forced => "forced".to_string(),
        };
        trace.records.push(TraceRecord {
            t,
            status: state.status(),
            predicted,
            truth: label,
            classifier,
        });
    }
    let m = metrics(&trace);
    Ok((trace, m))
}
