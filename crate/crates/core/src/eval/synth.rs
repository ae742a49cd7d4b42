//! Seeded synthetic recordings.
//!
//! Each recording is a random partition into annotated segments. Gaze is
//! simulated frame by frame as alternating fixations and saccades, with
//! blinks overlaid; every statistic is drawn from the parameters of the
//! class of the segment currently playing. Sensitive parameters are
//! interpolated between the non-sensitive ones (`separation = 0`) and the
//! configured sensitive ones (`separation = 1`) and beyond. Scene descriptors
//! come from two Gaussian clusters along a random direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSegment, Dataset, GazeSample, PrivacyClass, Recording, SceneFrame};
use crate::error::{Error, Result};
use crate::scene::{SceneDescriptor, DESCRIPTOR_DIM};

/// Class-conditional eye-movement statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyeParams {
    /// Mean fixation duration, seconds.
    pub fixation_duration: f64,
    /// Mean saccade amplitude, normalized units; must exceed the 0.06 floor.
    pub saccade_amplitude: f64,
    /// Probability that a saccade is mainly horizontal.
    pub horizontal_prob: f64,
    /// Probability that a horizontal saccade goes right.
    pub right_prob: f64,
    /// Blinks per second.
    pub blink_rate: f64,
    /// Mean pupil diameter, pixels.
    pub pupil_mean: f64,
}

impl Default for EyeParams {
    fn default() -> Self {
        EyeParams {
            fixation_duration: 0.30,
            saccade_amplitude: 0.16,
            horizontal_prob: 0.55,
            right_prob: 0.5,
            blink_rate: 0.30,
            pupil_mean: 45.0,
        }
    }
}

impl EyeParams {
    fn sensitive_default() -> Self {
        EyeParams {
            fixation_duration: 0.55,
            saccade_amplitude: 0.09,
            horizontal_prob: 0.80,
            right_prob: 0.70,
            blink_rate: 0.12,
            pupil_mean: 38.0,
        }
    }

    fn lerp(&self, other: &EyeParams, w: f64) -> EyeParams {
        let l = |a: f64, b: f64| a + w * (b - a);
        EyeParams {
            fixation_duration: l(self.fixation_duration, other.fixation_duration),
            saccade_amplitude: l(self.saccade_amplitude, other.saccade_amplitude),
            horizontal_prob: l(self.horizontal_prob, other.horizontal_prob),
            right_prob: l(self.right_prob, other.right_prob),
            blink_rate: l(self.blink_rate, other.blink_rate),
            pupil_mean: l(self.pupil_mean, other.pupil_mean),
        }
    }

    /// Keeps interpolated or offset parameters physically meaningful.
    fn clamped(mut self) -> EyeParams {
        self.fixation_duration = self.fixation_duration.max(MIN_FIXATION);
        self.saccade_amplitude = self.saccade_amplitude.max(MIN_AMPLITUDE + 0.005);
        self.horizontal_prob = self.horizontal_prob.clamp(0.0, 1.0);
        self.right_prob = self.right_prob.clamp(0.0, 1.0);
        self.blink_rate = self.blink_rate.max(0.0);
        self.pupil_mean = self.pupil_mean.max(5.0);
        self
    }

    fn validate(&self, which: &str) -> Result<()> {
        let ok = self.fixation_duration >= MIN_FIXATION
            && self.saccade_amplitude > MIN_AMPLITUDE
            && (0.0..=1.0).contains(&self.horizontal_prob)
            && (0.0..=1.0).contains(&self.right_prob)
            && self.blink_rate >= 0.0
            && self.pupil_mean > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "synth.{which}: need fixation_duration >= {MIN_FIXATION}, saccade_amplitude > {MIN_AMPLITUDE}, probabilities in [0,1], blink_rate >= 0, pupil_mean > 0"
            )))
        }
    }
}

const MIN_FIXATION: f64 = 0.15;
/// Saccades shorter than the default I-DT dispersion bound would merge fixations.
const MIN_AMPLITUDE: f64 = 0.06;
const SACCADE_FRAMES: usize = 2;
const FIXATION_JITTER: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub persons: usize,
    pub recordings_per_person: usize,
    /// Seconds per recording.
    pub duration: f64,
    pub gaze_rate: f64,
    pub scene_rate: f64,
    /// Segment lengths are whole seconds drawn uniformly from this range.
    pub segment_min: u32,
    pub segment_max: u32,
    /// Probability that a segment is sensitive (levels 1-2).
    pub sensitive_prior: f64,
    /// 0 makes both classes statistically identical.
    pub separation: f64,
    /// Distance between the two descriptor cluster centers.
    pub descriptor_separation: f64,
    /// Per-dimension standard deviation of descriptor noise.
    pub descriptor_noise: f64,
    /// Scale of per-person parameter offsets; 0 disables them.
    pub person_offsets: f64,
    pub non_sensitive: EyeParams,
    pub sensitive: EyeParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            persons: 5,
            recordings_per_person: 3,
            duration: 600.0,
            gaze_rate: 30.0,
            scene_rate: 1.0,
            segment_min: 40,
            segment_max: 120,
            sensitive_prior: 0.4,
            separation: 1.0,
            descriptor_separation: 12.0,
            descriptor_noise: 1.0,
            person_offsets: 0.0,
            non_sensitive: EyeParams::default(),
            sensitive: EyeParams::sensitive_default(),
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.persons == 0 || self.recordings_per_person == 0 {
            return bad("persons and recordings_per_person must be >= 1");
        }
        if !(self.duration > 0.0 && self.gaze_rate > 0.0 && self.scene_rate > 0.0) {
            return bad("duration, gaze_rate and scene_rate must be > 0");
        }
        if self.segment_min == 0 || self.segment_max < self.segment_min {
            return bad("need 1 <= segment_min <= segment_max");
        }
        if !(self.sensitive_prior > 0.0 && self.sensitive_prior < 1.0) {
            return bad("sensitive_prior must be in (0, 1)");
        }
        if self.separation < 0.0 || self.descriptor_separation < 0.0 || self.person_offsets < 0.0 {
            return bad("separation, descriptor_separation and person_offsets must be >= 0");
        }
        if self.descriptor_noise <= 0.0 {
            return bad("descriptor_noise must be > 0");
        }
        self.non_sensitive.validate("non_sensitive")?;
        self.sensitive.validate("sensitive")
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rounds to `10^-digits`, landing on the double nearest the decimal.
fn quantize(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (v * scale).round() / scale
}

fn unit_normal_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    let v: Vec<f64> = (0..DESCRIPTOR_DIM).map(|_| n.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Everything that differs between persons.
struct Person {
    non_sensitive: EyeParams,
    sensitive: EyeParams,
    descriptor_offset: Vec<f64>,
    descriptor_direction: Vec<f64>,
}

fn person_profile(config: &SynthConfig, index: usize, shared_direction: &[f64]) -> Person {
    let s = config.person_offsets;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, index as u64 + 1, 0xFFFF));
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut z = || n.sample(&mut rng);
    let base = config.non_sensitive.clone();
    let target = config.non_sensitive.lerp(&config.sensitive, config.separation);

    // Baseline shifts move both classes together; the effect gain changes how
    // strongly (and, for large offsets, in which direction) a person's eye
    // movements react to sensitive situations.
    let shift = EyeParams {
        fixation_duration: (0.25 * s * z()).exp(),
        saccade_amplitude: (0.25 * s * z()).exp(),
        horizontal_prob: 0.1 * s * z(),
        right_prob: 0.1 * s * z(),
        blink_rate: (0.3 * s * z()).exp(),
        pupil_mean: 5.0 * s * z(),
    };
    let gain = 1.0 + s * z();
    let apply = |p: &EyeParams| EyeParams {
        fixation_duration: p.fixation_duration * shift.fixation_duration,
        saccade_amplitude: MIN_AMPLITUDE + (p.saccade_amplitude - MIN_AMPLITUDE) * shift.saccade_amplitude,
        horizontal_prob: p.horizontal_prob + shift.horizontal_prob,
        right_prob: p.right_prob + shift.right_prob,
        blink_rate: p.blink_rate * shift.blink_rate,
        pupil_mean: p.pupil_mean + shift.pupil_mean,
    };
    let non_sensitive = apply(&base).clamped();
    let sensitive = apply(&base.lerp(&target, gain)).clamped();

    let descriptor_offset = (0..DESCRIPTOR_DIM).map(|_| 0.5 * s * z()).collect();
    let own = unit_normal_vector(&mut rng);
    let mut direction: Vec<f64> = shared_direction
        .iter()
        .zip(&own)
        .map(|(a, b)| a + s * b)
        .collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);
    Person {
        non_sensitive,
        sensitive,
        descriptor_offset,
        descriptor_direction: direction,
    }
}

const ENVIRONMENTS: [&str; 6] = ["office", "home", "street", "shop", "restaurant", "transit"];
const ACTIVITIES: [&str; 6] = ["working", "reading", "chatting", "walking", "eating", "computer"];

fn sample_segments(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(AnnotationSegment, PrivacyClass)> {
    let total = config.duration.floor() as u32;
    let mut out = Vec::new();
    let mut t = 0u32;
    while t < total {
        let mut len = rng.random_range(config.segment_min..=config.segment_max);
        if total - t < len + config.segment_min {
            len = total - t;
        }
        let class = if rng.random_bool(config.sensitive_prior) {
            PrivacyClass::Sensitive
        } else {
            PrivacyClass::NonSensitive
        };
        out.push((
            AnnotationSegment {
                start: t as f64,
                end: (t + len) as f64,
                environment: ENVIRONMENTS[rng.random_range(0..ENVIRONMENTS.len())].into(),
                activity: ACTIVITIES[rng.random_range(0..ACTIVITIES.len())].into(),
                privacy_level: 0,
            },
            class,
        ));
        t += len;
    }
    // Both classes in every recording that has room for two segments.
    if out.len() >= 2 && out.iter().all(|s| s.1 == out[0].1) {
        let k = rng.random_range(0..out.len());
        out[k].1 = out[k].1.flip();
    }
    for (seg, class) in &mut out {
        seg.privacy_level = match class {
            PrivacyClass::Sensitive => rng.random_range(1..=2),
            PrivacyClass::NonSensitive => rng.random_range(3..=7),
        };
    }
    out
}

enum Phase {
    Fixation { until: f64, center: (f64, f64), pupil: f64 },
    Saccade { from: (f64, f64), to: (f64, f64), frame: usize },
}

fn class_at(segments: &[(AnnotationSegment, PrivacyClass)], t: f64) -> PrivacyClass {
    segments
        .iter()
        .find(|(s, _)| s.contains(t))
        .or(segments.last())
        .map_or(PrivacyClass::NonSensitive, |s| s.1)
}

fn saccade_target(from: (f64, f64), p: &EyeParams, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let excess = Exp::new(1.0 / (p.saccade_amplitude - MIN_AMPLITUDE)).unwrap();
    let amp = (MIN_AMPLITUDE + excess.sample(rng)).min(0.6);
    let off = Normal::new(0.0, 0.15 * amp).unwrap().sample(rng);
    let (mut dx, mut dy) = if rng.random_bool(p.horizontal_prob) {
        let sign = if rng.random_bool(p.right_prob) { 1.0 } else { -1.0 };
        (sign * amp, off)
    } else {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        (off, sign * amp)
    };
    // Reflect off the borders of the [0.05, 0.95] field.
    if !(0.05..=0.95).contains(&(from.0 + dx)) {
        dx = -dx;
    }
    if !(0.05..=0.95).contains(&(from.1 + dy)) {
        dy = -dy;
    }
    ((from.0 + dx).clamp(0.05, 0.95), (from.1 + dy).clamp(0.05, 0.95))
}

fn blink_intervals(
    config: &SynthConfig,
    segments: &[(AnnotationSegment, PrivacyClass)],
    person: &Person,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    // Thinning against the larger of the two class rates.
    let max_rate = person.sensitive.blink_rate.max(person.non_sensitive.blink_rate);
    let mut out = Vec::new();
    if max_rate <= 0.0 {
        return out;
    }
    let gap = Exp::new(max_rate).unwrap();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= config.duration - 1.0 {
            break;
        }
        let rate = match class_at(segments, t) {
            PrivacyClass::Sensitive => person.sensitive.blink_rate,
            PrivacyClass::NonSensitive => person.non_sensitive.blink_rate,
        };
        if rng.random::<f64>() * max_rate > rate {
            continue;
        }
        let len = rng.random_range(0.1..0.3);
        if out.last().is_some_and(|&(_, e): &(f64, f64)| t < e + 0.3) {
            continue;
        }
        out.push((t, t + len));
        t += len;
    }
    out
}

fn generate_recording(config: &SynthConfig, person: &Person, person_index: usize, rec_index: usize) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, person_index as u64 + 1, rec_index as u64 + 1));
    let segments = sample_segments(config, &mut rng);
    let blinks = blink_intervals(config, &segments, person, &mut rng);
    let jitter = Normal::new(0.0, FIXATION_JITTER).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let params_at = |t: f64| match class_at(&segments, t) {
        PrivacyClass::Sensitive => &person.sensitive,
        PrivacyClass::NonSensitive => &person.non_sensitive,
    };

    let frames = (config.duration * config.gaze_rate).round() as usize;
    let mut samples = Vec::with_capacity(frames);
    let mut position = (0.5, 0.5);
    let mut phase = Phase::Saccade {
        from: position,
        to: position,
        frame: SACCADE_FRAMES,
    };
    let mut blink_idx = 0;
    for k in 0..frames {
        let t = k as f64 / config.gaze_rate;
        let p = params_at(t);
        let next = match &phase {
            Phase::Fixation { until, .. } if t >= *until => Some(Phase::Saccade {
                from: position,
                to: saccade_target(position, p, &mut rng),
                frame: 0,
            }),
            Phase::Saccade { to, frame, .. } if *frame >= SACCADE_FRAMES => {
                let d = p.fixation_duration * (0.35 * unit.sample(&mut rng) - 0.06125f64).exp();
                Some(Phase::Fixation {
                    until: t + d.max(MIN_FIXATION),
                    center: *to,
                    pupil: p.pupil_mean + 1.5 * unit.sample(&mut rng),
                })
            }
            _ => None,
        };
        if let Some(n) = next {
            phase = n;
        }
        let (x, y, pupil) = match &mut phase {
            Phase::Fixation { center, pupil, .. } => (
                center.0 + jitter.sample(&mut rng),
                center.1 + jitter.sample(&mut rng),
                *pupil + 0.3 * unit.sample(&mut rng),
            ),
            Phase::Saccade { from, to, frame } => {
                *frame += 1;
                let w = *frame as f64 / (SACCADE_FRAMES + 1) as f64;
                (
                    from.0 + w * (to.0 - from.0),
                    from.1 + w * (to.1 - from.1),
                    p.pupil_mean + 0.3 * unit.sample(&mut rng),
                )
            }
        };
        position = (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0));
        while blink_idx < blinks.len() && blinks[blink_idx].1 <= t {
            blink_idx += 1;
        }
        let in_blink = blinks.get(blink_idx).is_some_and(|&(s, e)| s <= t && t < e);
        let confidence = if in_blink {
            0.05
        } else {
            quantize(rng.random_range(0.9..1.0), 3)
        };
        samples.push(GazeSample {
            t,
            x: quantize(position.0, 6),
            y: quantize(position.1, 6),
            pupil_diameter: if in_blink { 0.0 } else { quantize(pupil.max(1.0), 3) },
            confidence,
        });
    }

    let scene_frames = (config.duration * config.scene_rate).round() as usize;
    let noise = Normal::new(0.0, config.descriptor_noise).unwrap();
    let half = config.descriptor_separation / 2.0;
    let scene = (0..scene_frames)
        .map(|k| {
            let t = k as f64 / config.scene_rate;
            let sign = class_at(&segments, t).sign();
            let values = person
                .descriptor_offset
                .iter()
                .zip(&person.descriptor_direction)
                .map(|(o, u)| quantize(o + sign * half * u + noise.sample(&mut rng), 4))
                .collect();
            SceneFrame {
                t,
                descriptor: SceneDescriptor::new(values).expect("finite descriptor"),
            }
        })
        .collect();

    Recording {
        person_id: format!("p{:02}", person_index + 1),
        recording_id: rec_index as u32 + 1,
        samples,
        scene,
        annotations: segments.into_iter().map(|s| s.0).collect(),
    }
}

/// Generates the whole dataset; identical configs give identical datasets.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0, 0xABCD));
    let shared = unit_normal_vector(&mut rng);
    let jobs: Vec<(usize, usize)> = (0..config.persons)
        .flat_map(|p| (0..config.recordings_per_person).map(move |r| (p, r)))
        .collect();
    let persons: Vec<Person> = (0..config.persons)
        .map(|p| person_profile(config, p, &shared))
        .collect();
    use rayon::prelude::*;
    let recordings = jobs
        .par_iter()
        .map(|&(p, r)| generate_recording(config, &persons[p], p, r))
        .collect();
    Ok(Dataset::new(recordings))
}
