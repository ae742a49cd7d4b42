//! Fixation, saccade and blink segmentation of a raw gaze stream.
//!
//! Fixations come from dispersion-threshold identification (I-DT) run over
//! maximal runs of valid samples, so a fixation never spans an invalid sample.
//! Saccades are the transitions between consecutive fixations. Blinks are
//! bounded runs of low-confidence samples.

use std::fmt::Write as _;

use crate::config::EventParams;
use crate::dataset::GazeSample;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct Fixation {
    /// Time of the first member sample.
    pub start: f64,
    /// Time of the last member sample.
    pub end: f64,
    pub centroid: (f64, f64),
    /// Per-axis mean of member positions; equals `centroid`.
    pub position_mean: [f64; 2],
    /// Per-axis population variance of member positions.
    pub position_var: [f64; 2],
    pub pupil_mean: f64,
    pub pupil_var: f64,
    pub sample_count: usize,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Saccade {
    pub start: f64,
    pub end: f64,
    /// Centroid displacement `(dx, dy)` from the previous fixation.
    pub displacement: (f64, f64),
    pub amplitude: f64,
    /// `atan2(dy, dx)` in radians.
    pub direction: f64,
    pub symbol: char,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blink {
    pub start: f64,
    pub end: f64,
}

impl Blink {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// All events of one recording, each list time-ordered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStream {
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
    pub blinks: Vec<Blink>,
}

pub fn detect_events(samples: &[GazeSample], params: &EventParams) -> EventStream {
    let fixations = detect_fixations(
        samples,
        params.validity_threshold,
        params.dispersion_threshold,
        params.min_fixation_duration,
    );
    let saccades = detect_saccades(&fixations, params.large_saccade_threshold);
    let blinks = detect_blinks(samples, params.validity_threshold, params.min_blink, params.max_blink);
    EventStream {
        fixations,
        saccades,
        blinks,
    }
}

#[derive(Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn of(s: &GazeSample) -> Self {
        Bounds {
            min_x: s.x,
            max_x: s.x,
            min_y: s.y,
            max_y: s.y,
        }
    }

    fn with(mut self, s: &GazeSample) -> Self {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
        self
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Greedy I-DT. A candidate window starts as the shortest run lasting at
/// least `min_duration`; if its dispersion is within the threshold it is
/// extended sample by sample until the next sample would exceed it.
pub fn detect_fixations(
    samples: &[GazeSample],
    validity_threshold: f64,
    dispersion_threshold: f64,
    min_duration: f64,
) -> Vec<Fixation> {
    let mut out = Vec::new();
    for run in samples
        .split(|s| !s.is_valid(validity_threshold))
        .filter(|r| !r.is_empty())
    {
        idt_run(run, dispersion_threshold, min_duration, &mut out);
    }
    out
}

fn idt_run(run: &[GazeSample], threshold: f64, min_duration: f64, out: &mut Vec<Fixation>) {
    let n = run.len();
    let mut i = 0;
    while i < n {
        // Smallest j with t[j] - t[i] >= min_duration.
        let j = i + run[i..].partition_point(|s| s.t - run[i].t < min_duration);
        if j >= n {
            break;
        }
        let mut bounds = run[i + 1..=j].iter().fold(Bounds::of(&run[i]), Bounds::with);
        if bounds.dispersion() > threshold {
            i += 1;
            continue;
        }
        let mut end = j;
        while end + 1 < n {
            let next = bounds.with(&run[end + 1]);
            if next.dispersion() > threshold {
                break;
            }
            bounds = next;
            end += 1;
        }
        out.push(fixation_from(&run[i..=end]));
        i = end + 1;
    }
}

fn fixation_from(members: &[GazeSample]) -> Fixation {
    let xs: Vec<f64> = members.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = members.iter().map(|s| s.y).collect();
    let pupils: Vec<f64> = members.iter().map(|s| s.pupil_diameter).collect();
    let position_mean = [stats::mean(&xs), stats::mean(&ys)];
    Fixation {
        start: members[0].t,
        end: members[members.len() - 1].t,
        centroid: (position_mean[0], position_mean[1]),
        position_mean,
        position_var: [stats::variance(&xs), stats::variance(&ys)],
        pupil_mean: stats::mean(&pupils),
        pupil_var: stats::variance(&pupils),
        sample_count: members.len(),
    }
}

/// A blink spans from its first low-confidence sample to the next valid one.
/// Runs not closed by a valid sample on both sides are truncated by the
/// stream edge and ignored, as are runs outside `[min_blink, max_blink]`.
pub fn detect_blinks(samples: &[GazeSample], confidence_threshold: f64, min_blink: f64, max_blink: f64) -> Vec<Blink> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        if samples[i].is_valid(confidence_threshold) {
            i += 1;
            continue;
        }
        let start = i;
        while i < samples.len() && !samples[i].is_valid(confidence_threshold) {
            i += 1;
        }
        if start == 0 || i == samples.len() {
            continue;
        }
        let blink = Blink {
            start: samples[start].t,
            end: samples[i].t,
        };
        if (min_blink..=max_blink).contains(&blink.duration()) {
            out.push(blink);
        }
    }
    out
}

pub fn detect_saccades(fixations: &[Fixation], large_threshold: f64) -> Vec<Saccade> {
    fixations
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let dx = b.centroid.0 - a.centroid.0;
            let dy = b.centroid.1 - a.centroid.1;
            let amplitude = dx.hypot(dy);
            Saccade {
                start: a.end,
                end: b.start,
                displacement: (dx, dy),
                amplitude,
                direction: dy.atan2(dx),
                symbol: encode_saccade_char((dx, dy), amplitude, large_threshold),
            }
        })
        .collect()
}

/// Maps a displacement onto `{l, r, u, d}` by dominant axis (ties go
/// horizontal), uppercased when `amplitude >= large_threshold`. Positive `dy`
/// is up.
pub fn encode_saccade_char(displacement: (f64, f64), amplitude: f64, large_threshold: f64) -> char {
    let (dx, dy) = displacement;
    let base = if dx.abs() >= dy.abs() {
        if dx >= 0.0 {
            'r'
        } else {
            'l'
        }
    } else if dy > 0.0 {
        'u'
    } else {
        'd'
    };
    if amplitude >= large_threshold {
        base.to_ascii_uppercase()
    } else {
        base
    }
}

pub const SACCADE_ALPHABET: [char; 8] = ['l', 'L', 'r', 'R', 'u', 'U', 'd', 'D'];

/// Debug dump: `kind,start,end,amplitude,symbol`, events in time order.
pub fn events_csv(events: &EventStream) -> String {
    let mut rows: Vec<(f64, String)> = Vec::new();
    for f in &events.fixations {
        rows.push((f.start, format!("fixation,{},{},,", f.start, f.end)));
    }
    for s in &events.saccades {
        rows.push((s.start, format!("saccade,{},{},{},{}", s.start, s.end, s.amplitude, s.symbol)));
    }
    for b in &events.blinks {
        rows.push((b.start, format!("blink,{},{},,", b.start, b.end)));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from("kind,start,end,amplitude,symbol\n");
    for (_, row) in rows {
        writeln!(out, "{row}").unwrap();
    }
    out
}
