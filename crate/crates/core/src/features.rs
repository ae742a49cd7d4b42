//! The 52 eye-movement features computed over sliding windows.
//!
//! Layout of a [`FeatureVector52`]:
//!
//! | range   | block     | contents                                                   |
//! |---------|-----------|------------------------------------------------------------|
//! | 0..8    | fixation  | rate, mean/max/var duration, mean/var of position means, mean/var of position variances |
//! | 8..20   | saccade   | rate, rates small/large/right/left, ratios small/large/right/left, mean/max/var amplitude |
//! | 20      | combined  | saccades per fixation                                      |
//! | 21..45  | wordbook  | per n in 1..=4: distinct, max, min, max-min, mean, var of n-gram counts |
//! | 45..48  | blink     | rate, mean/var duration                                    |
//! | 48..52  | pupil     | mean/var of fixation pupil means, mean/var of fixation pupil variances |
//!
//! Rates are per second of window. Variances are population variances. An
//! empty block yields zeros.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::{EventParams, WindowParams};
use crate::dataset::Recording;
use crate::events::{detect_events, Blink, EventStream, Fixation, Saccade};
use crate::stats::{max, mean, min, variance};

pub const EYE_FEATURES: usize = 52;
pub const FIXATION_FEATURES: usize = 8;
pub const SACCADE_FEATURES: usize = 12;
pub const WORDBOOK_FEATURES: usize = 24;
pub const BLINK_FEATURES: usize = 3;
pub const PUPIL_FEATURES: usize = 4;
pub const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector52(pub [f64; EYE_FEATURES]);

impl FeatureVector52 {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Events intersecting `[t_end - duration, t_end)`.
#[derive(Debug, Clone, Copy)]
pub struct EyeWindow<'a> {
    pub t_end: f64,
    pub duration: f64,
    pub fixations: &'a [Fixation],
    pub saccades: &'a [Saccade],
    pub blinks: &'a [Blink],
}

impl EyeWindow<'_> {
    pub fn span(&self) -> (f64, f64) {
        (self.t_end - self.duration, self.t_end)
    }
}

/// Sub-slice of time-ordered, non-overlapping intervals touching `[a, b)`.
fn intersecting<T>(items: &[T], a: f64, b: f64, interval: impl Fn(&T) -> (f64, f64)) -> &[T] {
    let lo = items.partition_point(|it| interval(it).1 < a);
    let hi = items.partition_point(|it| interval(it).0 < b);
    if lo >= hi {
        &items[0..0]
    } else {
        &items[lo..hi]
    }
}

/// Windows ending at `start + duration + k * step` for every end time not
/// after `end`. Nothing is emitted when the stream is shorter than `duration`.
pub fn sliding_windows(events: &EventStream, start: f64, end: f64, duration: f64, step: f64) -> Vec<EyeWindow<'_>> {
    assert!(duration > 0.0 && step > 0.0, "window duration and step must be positive");
    let mut out = Vec::new();
    if end - start < duration {
        return out;
    }
    let count = ((end - start - duration) / step + 1e-9).floor() as usize + 1;
    for k in 0..count {
        let t_end = start + duration + k as f64 * step;
        let a = t_end - duration;
        out.push(EyeWindow {
            t_end,
            duration,
            fixations: intersecting(&events.fixations, a, t_end, |f| (f.start, f.end)),
            saccades: intersecting(&events.saccades, a, t_end, |s| (s.start, s.end)),
            blinks: intersecting(&events.blinks, a, t_end, |b| (b.start, b.end)),
        });
    }
    out
}

pub fn fixation_features(window: &EyeWindow) -> [f64; FIXATION_FEATURES] {
    let f = window.fixations;
    if f.is_empty() {
        return [0.0; FIXATION_FEATURES];
    }
    let durations: Vec<f64> = f.iter().map(Fixation::duration).collect();
    // Per-axis statistics across fixations, then averaged over the two axes.
    let axis_avg = |pick: &dyn Fn(&Fixation, usize) -> f64, agg: fn(&[f64]) -> f64| {
        (0..2)
            .map(|axis| agg(&f.iter().map(|fx| pick(fx, axis)).collect::<Vec<_>>()))
            .sum::<f64>()
            / 2.0
    };
    let pos_mean = |fx: &Fixation, a: usize| fx.position_mean[a];
    let pos_var = |fx: &Fixation, a: usize| fx.position_var[a];
    [
        f.len() as f64 / window.duration,
        mean(&durations),
        max(&durations),
        variance(&durations),
        axis_avg(&pos_mean, mean),
        axis_avg(&pos_mean, variance),
        axis_avg(&pos_var, mean),
        axis_avg(&pos_var, variance),
    ]
}

fn is_large(symbol: char) -> bool {
    symbol.is_ascii_uppercase()
}

pub fn saccade_features(window: &EyeWindow) -> [f64; SACCADE_FEATURES] {
    let s = window.saccades;
    if s.is_empty() {
        return [0.0; SACCADE_FEATURES];
    }
    let n = s.len() as f64;
    let count = |pred: &dyn Fn(char) -> bool| s.iter().filter(|sc| pred(sc.symbol)).count() as f64;
    let classes = [
        count(&|c| !is_large(c)),
        count(&|c| is_large(c)),
        count(&|c| c.eq_ignore_ascii_case(&'r')),
        count(&|c| c.eq_ignore_ascii_case(&'l')),
    ];
    let amplitudes: Vec<f64> = s.iter().map(|sc| sc.amplitude).collect();
    let mut out = [0.0; SACCADE_FEATURES];
    out[0] = n / window.duration;
    for (i, c) in classes.iter().enumerate() {
        out[1 + i] = c / window.duration;
        out[5 + i] = c / n;
    }
    out[9] = mean(&amplitudes);
    out[10] = max(&amplitudes);
    out[11] = variance(&amplitudes);
    out
}

/// Six statistics of the n-gram count table for each n in 1..=4.
pub fn wordbook_features(symbols: &[char]) -> [f64; WORDBOOK_FEATURES] {
    let mut out = [0.0; WORDBOOK_FEATURES];
    for n in 1..=MAX_NGRAM {
        if symbols.len() < n {
            continue;
        }
        let mut table: BTreeMap<&[char], usize> = BTreeMap::new();
        for gram in symbols.windows(n) {
            *table.entry(gram).or_default() += 1;
        }
        let counts: Vec<f64> = table.values().map(|&c| c as f64).collect();
        let (hi, lo) = (max(&counts), min(&counts));
        let block = &mut out[(n - 1) * 6..n * 6];
        block.copy_from_slice(&[counts.len() as f64, hi, lo, hi - lo, mean(&counts), variance(&counts)]);
    }
    out
}

pub fn blink_features(window: &EyeWindow) -> [f64; BLINK_FEATURES] {
    let durations: Vec<f64> = window.blinks.iter().map(Blink::duration).collect();
    if durations.is_empty() {
        return [0.0; BLINK_FEATURES];
    }
    [durations.len() as f64 / window.duration, mean(&durations), variance(&durations)]
}

pub fn pupil_features(window: &EyeWindow) -> [f64; PUPIL_FEATURES] {
    let means: Vec<f64> = window.fixations.iter().map(|f| f.pupil_mean).collect();
    let vars: Vec<f64> = window.fixations.iter().map(|f| f.pupil_var).collect();
    [mean(&means), variance(&means), mean(&vars), variance(&vars)]
}

pub fn assemble_vector(window: &EyeWindow) -> FeatureVector52 {
    let symbols: Vec<char> = window.saccades.iter().map(|s| s.symbol).collect();
    let ratio = if window.fixations.is_empty() {
        0.0
    } else {
        window.saccades.len() as f64 / window.fixations.len() as f64
    };
    let mut v = [0.0; EYE_FEATURES];
    let parts: [&[f64]; 6] = [
        &fixation_features(window),
        &saccade_features(window),
        &[ratio],
        &wordbook_features(&symbols),
        &blink_features(window),
        &pupil_features(window),
    ];
    let mut at = 0;
    for p in parts {
        v[at..at + p.len()].copy_from_slice(p);
        at += p.len();
    }
    debug_assert_eq!(at, EYE_FEATURES);
    FeatureVector52(v)
}

/// One row of the per-second eye feature stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub t_end: f64,
    pub features: FeatureVector52,
}

/// Detects events and evaluates every window of a recording. Windows start
/// at the first whole second of the gaze stream so rows align with the
/// per-second labels.
pub fn extract_features(recording: &Recording, events: &EventParams, window: &WindowParams) -> (EventStream, Vec<FeatureRow>) {
    let stream = detect_events(&recording.samples, events);
    let rows = match (recording.samples.first(), recording.samples.last()) {
        (Some(first), Some(last)) => sliding_windows(&stream, first.t.ceil(), last.t, window.duration, window.step)
            .iter()
            .map(|w| FeatureRow {
                t_end: w.t_end,
                features: assemble_vector(w),
            })
            .collect(),
        _ => Vec::new(),
    };
    (stream, rows)
}

pub fn features_csv(rows: &[FeatureRow]) -> String {
    let mut out = String::from("t_end");
    for i in 0..EYE_FEATURES {
        write!(out, ",f{i}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{}", r.t_end).unwrap();
        for v in r.features.values() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses the output of [`features_csv`].
pub fn parse_features_csv(text: &str) -> Result<Vec<FeatureRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty feature file")?;
    if header.split(',').count() != EYE_FEATURES + 1 || !header.starts_with("t_end,") {
        return Err(format!("bad feature header: {header}"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2)))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != EYE_FEATURES + 1 {
                return Err(format!("line {}: expected {} columns", i + 2, EYE_FEATURES + 1));
            }
            let mut f = [0.0; EYE_FEATURES];
            f.copy_from_slice(&vals[1..]);
            Ok(FeatureRow {
                t_end: vals[0],
                features: FeatureVector52(f),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(start: f64, dur: f64, pupil: f64) -> Fixation {
        Fixation {
            start,
            end: start + dur,
            centroid: (0.5, 0.5),
            position_mean: [0.5, 0.5],
            position_var: [0.0, 0.0],
            pupil_mean: pupil,
            pupil_var: 0.0,
            sample_count: 3,
        }
    }

    fn sac(start: f64, amp: f64, symbol: char) -> Saccade {
        Saccade {
            start,
            end: start + 0.03,
            displacement: (amp, 0.0),
            amplitude: amp,
            direction: 0.0,
            symbol,
        }
    }

    fn window<'a>(f: &'a [Fixation], s: &'a [Saccade], b: &'a [Blink]) -> EyeWindow<'a> {
        EyeWindow {
            t_end: 30.0,
            duration: 30.0,
            fixations: f,
            saccades: s,
            blinks: b,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn window_counts() {
        let ev = EventStream::default();
        assert_eq!(sliding_windows(&ev, 0.0, 60.0, 30.0, 1.0).len(), 31);
        assert_eq!(sliding_windows(&ev, 0.0, 30.0, 30.0, 1.0).len(), 1);
        assert_eq!(sliding_windows(&ev, 0.0, 95.4, 30.0, 1.0).len(), 66);
        assert!(sliding_windows(&ev, 0.0, 29.9, 30.0, 1.0).is_empty());
        let w = sliding_windows(&ev, 0.0, 60.0, 30.0, 1.0);
        assert_eq!(w[0].t_end, 30.0);
        assert_eq!(w[30].t_end, 60.0);
    }

    #[test]
    fn windows_select_intersecting_events() {
        let ev = EventStream {
            fixations: vec![fix(0.5, 0.2, 40.0), fix(29.9, 0.3, 40.0), fix(30.5, 0.2, 40.0)],
            saccades: vec![],
            blinks: vec![],
        };
        let w = sliding_windows(&ev, 0.0, 31.0, 30.0, 1.0);
        assert_eq!(w[0].fixations.len(), 2);
        // [1, 31): the first fixation ended before 1 s.
        assert_eq!(w[1].fixations.len(), 2);
        assert_eq!(w[1].fixations[0].start, 29.9);
    }

    #[test]
    fn fixation_examples() {
        let f = [fix(1.0, 0.2, 40.0), fix(2.0, 0.3, 40.0), fix(3.0, 0.4, 40.0)];
        let v = fixation_features(&window(&f, &[], &[]));
        assert!(close(v[0], 0.1));
        assert!(close(v[1], 0.3));
        assert!(close(v[2], 0.4));
        assert!((v[3] - 0.006667).abs() < 1e-6);
        assert_eq!(fixation_features(&window(&[], &[], &[])), [0.0; 8]);
    }

    #[test]
    fn fixation_position_stats_average_axes() {
        let mut a = fix(0.0, 0.2, 40.0);
        a.position_mean = [0.2, 0.4];
        a.position_var = [0.01, 0.03];
        let mut b = fix(1.0, 0.2, 40.0);
        b.position_mean = [0.4, 0.4];
        b.position_var = [0.03, 0.03];
        let v = fixation_features(&window(&[a, b], &[], &[]));
        // x means {0.2, 0.4}: mean 0.3, var 0.01; y means {0.4, 0.4}: mean 0.4, var 0.
        assert!(close(v[4], 0.35));
        assert!(close(v[5], 0.005));
        // x vars {0.01, 0.03}: mean 0.02, var 1e-4; y vars {0.03, 0.03}.
        assert!(close(v[6], 0.025));
        assert!(close(v[7], 0.5e-4));
    }

    #[test]
    fn saccade_hand_count() {
        let s = [sac(1.0, 0.05, 'r'), sac(2.0, 0.05, 'r'), sac(3.0, 0.3, 'L'), sac(4.0, 0.05, 'l')];
        let v = saccade_features(&window(&[], &s, &[]));
        assert!(close(v[0], 4.0 / 30.0));
        assert!(close(v[1], 3.0 / 30.0)); // small
        assert!(close(v[2], 1.0 / 30.0)); // large
        assert!(close(v[3], 2.0 / 30.0)); // right
        assert!(close(v[4], 2.0 / 30.0)); // left
        assert!(close(v[5], 0.75));
        assert!(close(v[6], 0.25));
        assert!(close(v[7], 0.5));
        assert!(close(v[8], 0.5));
        assert!(close(v[9], 0.1125));
        assert!(close(v[10], 0.3));
    }

    #[test]
    fn vertical_saccades_only_count_overall() {
        let s = [sac(1.0, 0.05, 'u'), sac(2.0, 0.3, 'D')];
        let v = saccade_features(&window(&[], &s, &[]));
        assert!(close(v[0], 2.0 / 30.0));
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.0);
        assert!(close(v[5] + v[6], 1.0));
    }

    #[test]
    fn saccade_degenerate_cases() {
        assert_eq!(saccade_features(&window(&[], &[], &[])), [0.0; 12]);
        let s = [sac(1.0, 0.2, 'R'), sac(2.0, 0.2, 'R'), sac(3.0, 0.2, 'R')];
        let v = saccade_features(&window(&[], &s, &[]));
        assert!(close(v[9], 0.2) && close(v[10], 0.2));
        assert!(v[11].abs() < 1e-15);
    }

    #[test]
    fn wordbook_examples() {
        let w = wordbook_features(&['r', 'r', 'L', 'r']);
        assert_eq!(&w[0..6], &[2.0, 3.0, 1.0, 2.0, 2.0, 1.0]);
        assert_eq!(&w[18..24], &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(wordbook_features(&[]), [0.0; 24]);
        // Shorter than n: that block stays zero.
        let w = wordbook_features(&['r', 'u']);
        assert_eq!(&w[12..24], &[0.0; 12]);
    }

    #[test]
    fn blink_examples() {
        let b = [Blink { start: 1.0, end: 1.1 }, Blink { start: 5.0, end: 5.3 }];
        let v = blink_features(&window(&[], &[], &b));
        assert!((v[0] - 0.0667).abs() < 1e-4);
        assert!(close(v[1], 0.2));
        assert!(close(v[2], 0.01));
        assert_eq!(blink_features(&window(&[], &[], &[])), [0.0; 3]);
        let v = blink_features(&window(&[], &[], &b[1..]));
        assert!(close(v[0], 1.0 / 30.0) && close(v[1], 0.3) && v[2] == 0.0);
    }

    #[test]
    fn pupil_examples() {
        let f = [fix(1.0, 0.2, 40.0), fix(2.0, 0.2, 44.0)];
        assert_eq!(pupil_features(&window(&f, &[], &[])), [42.0, 4.0, 0.0, 0.0]);
        let f = [fix(1.0, 0.2, 37.5), fix(2.0, 0.3, 37.5), fix(3.0, 0.2, 37.5)];
        assert_eq!(pupil_features(&window(&f, &[], &[])), [37.5, 0.0, 0.0, 0.0]);
        assert_eq!(pupil_features(&window(&[], &[], &[])), [0.0; 4]);
    }

    #[test]
    fn assembled_layout() {
        let empty = assemble_vector(&window(&[], &[], &[]));
        assert_eq!(empty.0, [0.0; 52]);

        let f = [fix(1.0, 0.2, 40.0), fix(2.0, 0.3, 44.0)];
        let s = [sac(1.2, 0.3, 'R')];
        let b = [Blink { start: 5.0, end: 5.2 }];
        let v = assemble_vector(&window(&f, &s, &b)).0;
        assert_eq!(v.len(), 52);
        assert!(close(v[0], 2.0 / 30.0));
        assert!(close(v[8], 1.0 / 30.0));
        assert_eq!(v[20], 0.5);
        assert_eq!(&v[21..27], &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(close(v[45], 1.0 / 30.0));
        assert_eq!(v[48], 42.0);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![FeatureRow {
            t_end: 30.0,
            features: FeatureVector52([0.1; 52]),
        }];
        let text = features_csv(&rows);
        assert!(text.starts_with("t_end,f0,f1,"));
        assert_eq!(parse_features_csv(&text).unwrap(), rows);
    }
}
