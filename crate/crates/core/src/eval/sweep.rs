//! Cross-validated closing-time sweeps and their aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset::{Dataset, RecordingKey};
use crate::error::{Error, Result};
use crate::eval::folds::{Fold, Scheme, split};
use crate::eval::pipeline::{Method, fold_predictions, prepare_dataset, simulate, train_fold};
use crate::shutter::{Confusion, MAX_CLOSING_TIME, MIN_CLOSING_TIME};
use crate::stats;

/// One (scheme, method, closing time, fold) cell. Test recordings of a fold
/// are simulated separately and pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub scheme: Scheme,
    pub method: Method,
    pub closing_time: u32,
    pub fold: usize,
    pub test_person: String,
    /// `;`-separated recording keys.
    pub test_recordings: String,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub closings: u64,
    /// Sum and count of seconds between consecutive closings, within recordings.
    pub gap_sum_s: i64,
    pub gap_count: u64,
    pub mean_gap_minutes: Option<f64>,
    /// Sum of per-recording mean gaps (minutes) and the number of recordings
    /// with at least two closings.
    pub recording_gap_minutes_sum: f64,
    pub recordings_with_gap: u64,
}

impl FoldRow {
    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }
}

/// Majority-baseline accuracy of one fold, the horizontal reference in plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub scheme: Scheme,
    pub fold: usize,
    pub test_person: String,
    pub accuracy: f64,
}

/// Aggregate over the folds of one (scheme, method, closing time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub method: Method,
    pub closing_time: u32,
    pub folds: usize,
    /// Mean over persons of the mean over each person's folds.
    pub accuracy_mean: f64,
    /// Population standard deviation of fold accuracies.
    pub accuracy_std: f64,
    /// Plain mean over folds.
    pub accuracy_flat: f64,
    /// Total gap seconds over total gaps, in minutes.
    pub gap_minutes_global: Option<f64>,
    /// Mean of per-recording mean gaps, in minutes.
    pub gap_minutes_per_recording: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub folds: Vec<FoldRow>,
    pub baseline: Vec<BaselineRow>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub schemes: Vec<Scheme>,
    pub methods: Vec<Method>,
    pub closing_times: Vec<u32>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.methods.is_empty() || self.closing_times.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one scheme, method and closing time".into()));
        }
        if let Some(t) = self
            .closing_times
            .iter()
            .find(|t| !(MIN_CLOSING_TIME..=MAX_CLOSING_TIME).contains(t))
        {
            return Err(Error::InvalidArgument(format!(
                "closing time {t} outside [{MIN_CLOSING_TIME}, {MAX_CLOSING_TIME}]"
            )));
        }
        Ok(())
    }
}

fn recording_list(keys: &[RecordingKey]) -> String {
    keys.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";")
}

fn evaluate_fold(
    fold: &Fold,
    prepared: &BTreeMap<RecordingKey, crate::eval::pipeline::PreparedRecording>,
    plan: &SweepPlan,
    config: &Config,
) -> Result<(Vec<FoldRow>, BaselineRow)> {
    let models = train_fold(fold, prepared, &plan.methods, config)?;
    let tests = fold_predictions(fold, &models, prepared)?;
    let mut rows = Vec::new();
    for &method in &plan.methods {
        for &t in &plan.closing_times {
            let mut confusion = Confusion::default();
            let (mut closings, mut gap_sum_s, mut gap_count) = (0u64, 0i64, 0u64);
            let (mut rec_gap_sum, mut rec_with_gap) = (0.0, 0u64);
            for (rec, preds) in &tests {
                let (trace, metrics) = simulate(rec, preds, method, t)?;
                confusion.add(&metrics.confusion);
                let times = trace.closing_times();
                closings += times.len() as u64;
                if times.len() >= 2 {
                    gap_sum_s += times.last().unwrap() - times[0];
                    gap_count += times.len() as u64 - 1;
                }
                if let Some(g) = metrics.mean_gap_minutes {
                    rec_gap_sum += g;
                    rec_with_gap += 1;
                }
            }
            rows.push(FoldRow {
                scheme: fold.scheme,
                method,
                closing_time: t,
                fold: fold.id,
                test_person: fold.test_person.clone(),
                test_recordings: recording_list(&fold.test),
                tp: confusion.tp,
                fp: confusion.fp,
                tn: confusion.tn,
                fn_: confusion.fn_,
                accuracy: confusion.accuracy(),
                closings,
                gap_sum_s,
                gap_count,
                mean_gap_minutes: (gap_count > 0).then(|| gap_sum_s as f64 / gap_count as f64 / 60.0),
                recording_gap_minutes_sum: rec_gap_sum,
                recordings_with_gap: rec_with_gap,
            });
        }
    }
    let mut base = Confusion::default();
    for (rec, preds) in &tests {
        base.add(&simulate(rec, preds, Method::Majority, MIN_CLOSING_TIME)?.1.confusion);
    }
    let baseline = BaselineRow {
        scheme: fold.scheme,
        fold: fold.id,
        test_person: fold.test_person.clone(),
        accuracy: base.accuracy(),
    };
    Ok((rows, baseline))
}

/// Evaluates the full (scheme × method × closing time) cross-product. Folds
/// run in parallel; the output order is fixed: scheme, method, closing time,
/// fold.
pub fn sweep_closing_times(dataset: &Dataset, config: &Config, plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let prepared = prepare_dataset(dataset, config)?;
    let keys: Vec<RecordingKey> = prepared.keys().cloned().collect();
    let mut folds = Vec::new();
    for &scheme in &plan.schemes {
        folds.extend(split(scheme, &keys)?);
    }
    let results = folds
        .par_iter()
        .map(|f| evaluate_fold(f, &prepared, plan, config))
        .collect::<Vec<_>>();
    let mut out = SweepResult::default();
    for r in results {
        let (rows, base) = r?;
        out.folds.extend(rows);
        out.baseline.push(base);
    }
    let method_rank = |m: Method| plan.methods.iter().position(|x| *x == m);
    let scheme_rank = |s: Scheme| plan.schemes.iter().position(|x| *x == s);
    out.folds
        .sort_by_key(|r| (scheme_rank(r.scheme), method_rank(r.method), r.closing_time, r.fold));
    out.baseline.sort_by_key(|r| (scheme_rank(r.scheme), r.fold));
    Ok(out)
}

/// Mean over persons of the per-person mean.
pub fn two_level_mean<'a>(items: impl IntoIterator<Item = (&'a str, f64)>) -> f64 {
    let mut per_person: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (p, v) in items {
        per_person.entry(p).or_default().push(v);
    }
    let means: Vec<f64> = per_person.values().map(|v| stats::mean(v)).collect();
    stats::mean(&means)
}

/// Groups fold rows by (scheme, method, closing time) in first-seen order.
pub fn summarize(rows: &[FoldRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(Scheme, Method, u32)> = Vec::new();
    let mut groups: BTreeMap<(Scheme, Method, u32), Vec<&FoldRow>> = BTreeMap::new();
    for r in rows {
        let k = (r.scheme, r.method, r.closing_time);
        if !groups.contains_key(&k) {
            order.push(k);
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let acc: Vec<f64> = g.iter().map(|r| r.accuracy).collect();
            let gap_sum: i64 = g.iter().map(|r| r.gap_sum_s).sum();
            let gap_count: u64 = g.iter().map(|r| r.gap_count).sum();
            let rec_sum: f64 = g.iter().map(|r| r.recording_gap_minutes_sum).sum();
            let rec_count: u64 = g.iter().map(|r| r.recordings_with_gap).sum();
            SummaryRow {
                scheme: k.0,
                method: k.1,
                closing_time: k.2,
                folds: g.len(),
                accuracy_mean: two_level_mean(g.iter().map(|r| (r.test_person.as_str(), r.accuracy))),
                accuracy_std: stats::variance(&acc).sqrt(),
                accuracy_flat: stats::mean(&acc),
                gap_minutes_global: (gap_count > 0).then(|| gap_sum as f64 / gap_count as f64 / 60.0),
                gap_minutes_per_recording: (rec_count > 0).then(|| rec_sum / rec_count as f64),
            }
        })
        .collect()
}

/// Majority reference accuracy per scheme, averaged like `accuracy_mean`.
pub fn baseline_by_scheme(rows: &[BaselineRow]) -> BTreeMap<Scheme, f64> {
    let mut by: BTreeMap<Scheme, Vec<&BaselineRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.scheme).or_default().push(r);
    }
    by.into_iter()
        .map(|(s, g)| (s, two_level_mean(g.iter().map(|r| (r.test_person.as_str(), r.accuracy)))))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(header)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, i as u64 + 2, e.to_string())))
        .collect()
}

pub const FOLDS_HEADER: [&str; 17] = [
    "scheme",
    "method",
    "closing_time",
    "fold",
    "test_person",
    "test_recordings",
    "tp",
    "fp",
    "tn",
    "fn",
    "accuracy",
    "closings",
    "gap_sum_s",
    "gap_count",
    "mean_gap_minutes",
    "recording_gap_minutes_sum",
    "recordings_with_gap",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "scheme",
    "method",
    "closing_time",
    "folds",
    "accuracy_mean",
    "accuracy_std",
    "accuracy_flat",
    "gap_minutes_global",
    "gap_minutes_per_recording",
];

pub const BASELINE_HEADER: [&str; 4] = ["scheme", "fold", "test_person", "accuracy"];
