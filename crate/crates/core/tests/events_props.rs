use gazeshutter::dataset::GazeSample;
use gazeshutter::events::{detect_blinks, detect_fixations, detect_saccades, encode_saccade_char, SACCADE_ALPHABET};
use proptest::prelude::*;

const HZ: f64 = 30.0;
const THR: f64 = 0.8;

#[derive(Debug, Clone)]
enum Piece {
    /// Frames dwelling near a point.
    Dwell { x: f64, y: f64, frames: usize, jitter: f64 },
    /// A run of low-confidence frames.
    Dropout { frames: usize },
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        4 => (0.05f64..0.95, 0.05f64..0.95, 1usize..40, 0.0f64..0.02)
            .prop_map(|(x, y, frames, jitter)| Piece::Dwell { x, y, frames, jitter }),
        1 => (1usize..25).prop_map(|frames| Piece::Dropout { frames }),
    ]
}

fn render(pieces: &[Piece], t0_frame: usize, seed: u64) -> Vec<GazeSample> {
    let mut out = Vec::new();
    let mut i = t0_frame;
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut noise = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for p in pieces {
        match *p {
            Piece::Dwell { x, y, frames, jitter } => {
                for _ in 0..frames {
                    out.push(GazeSample {
                        t: i as f64 / HZ,
                        x: x + jitter * noise(),
                        y: y + jitter * noise(),
                        pupil_diameter: 40.0 + noise(),
                        confidence: 0.95,
                    });
                    i += 1;
                }
            }
            Piece::Dropout { frames } => {
                for _ in 0..frames {
                    out.push(GazeSample {
                        t: i as f64 / HZ,
                        x: 0.0,
                        y: 0.0,
                        pupil_diameter: 0.0,
                        confidence: 0.1,
                    });
                    i += 1;
                }
            }
        }
    }
    out
}

fn dispersion(samples: &[&GazeSample]) -> f64 {
    let fold = |f: fn(&GazeSample) -> f64| {
        let lo = samples.iter().map(|s| f(s)).fold(f64::INFINITY, f64::min);
        let hi = samples.iter().map(|s| f(s)).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    fold(|s| s.x) + fold(|s| s.y)
}

/// Same rule table written as an explicit case analysis.
fn symbol_oracle(dx: f64, dy: f64, amplitude: f64, large: f64) -> char {
    let base = if dx.abs() >= dy.abs() {
        if dx >= 0.0 { 'r' } else { 'l' }
    } else if dy > 0.0 {
        'u'
    } else {
        'd'
    };
    if amplitude >= large { base.to_ascii_uppercase() } else { base }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn events_are_ordered_disjoint_and_within_thresholds(
        pieces in prop::collection::vec(piece(), 1..30),
        seed in any::<u64>(),
    ) {
        let samples = render(&pieces, 0, seed);
        let fix = detect_fixations(&samples, THR, 0.05, 0.1);
        let blinks = detect_blinks(&samples, THR, 0.05, 0.5);
        for w in fix.windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
        for w in blinks.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for f in &fix {
            prop_assert!(f.duration() >= 0.1 - 1e-12);
            let members: Vec<&GazeSample> =
                samples.iter().filter(|s| s.t >= f.start && s.t <= f.end).collect();
            prop_assert!(members.iter().all(|s| s.confidence >= THR));
            prop_assert!(dispersion(&members) <= 0.05 + 1e-12);
            for b in &blinks {
                prop_assert!(b.end <= f.start || b.start > f.end, "blink {:?} overlaps fixation", b);
            }
        }
        for b in &blinks {
            prop_assert!(b.duration() >= 0.05 && b.duration() <= 0.5);
        }
        let sac = detect_saccades(&fix, 0.1);
        prop_assert_eq!(sac.len(), fix.len().saturating_sub(1));
        for s in &sac {
            prop_assert!(s.amplitude >= 0.0);
            prop_assert!(SACCADE_ALPHABET.contains(&s.symbol));
        }
    }

    #[test]
    fn fixations_cannot_be_extended(
        pieces in prop::collection::vec(piece(), 1..20),
        seed in any::<u64>(),
    ) {
        let samples = render(&pieces, 0, seed);
        for f in detect_fixations(&samples, THR, 0.05, 0.1) {
            let last = samples.iter().position(|s| s.t == f.end).unwrap();
            if let Some(next) = samples.get(last + 1) {
                if next.confidence >= THR {
                    let mut members: Vec<&GazeSample> =
                        samples.iter().filter(|s| s.t >= f.start && s.t <= f.end).collect();
                    members.push(next);
                    prop_assert!(dispersion(&members) > 0.05);
                }
            }
        }
    }

    #[test]
    fn segmentation_is_scale_covariant(
        pieces in prop::collection::vec(piece(), 1..25),
        seed in any::<u64>(),
        exp in -3i32..3,
    ) {
        let k = 2f64.powi(exp);
        let samples = render(&pieces, 0, seed);
        let scaled: Vec<GazeSample> = samples
            .iter()
            .map(|s| GazeSample { x: s.x * k, y: s.y * k, ..*s })
            .collect();
        let a = detect_fixations(&samples, THR, 0.05, 0.1);
        let b = detect_fixations(&scaled, THR, 0.05 * k, 0.1);
        prop_assert_eq!(a.len(), b.len());
        for (fa, fb) in a.iter().zip(&b) {
            prop_assert_eq!((fa.start, fa.end), (fb.start, fb.end));
        }
        let sa: Vec<char> = detect_saccades(&a, 0.1).iter().map(|s| s.symbol).collect();
        let sb: Vec<char> = detect_saccades(&b, 0.1 * k).iter().map(|s| s.symbol).collect();
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn streams_separated_by_a_long_dropout_segment_independently(
        first in prop::collection::vec(piece(), 1..15),
        second in prop::collection::vec(piece(), 1..15),
        gap_frames in 16usize..60,
        seed in any::<u64>(),
    ) {
        let a = render(&first, 0, seed);
        let b_offset = a.len() + gap_frames;
        let b = render(&second, b_offset, seed ^ 1);
        let gap = render(&[Piece::Dropout { frames: gap_frames }], a.len(), 0);
        let joined: Vec<GazeSample> = a.iter().chain(&gap).chain(&b).cloned().collect();

        let fix = |s: &[GazeSample]| detect_fixations(s, THR, 0.05, 0.1);
        let blink = |s: &[GazeSample]| detect_blinks(s, THR, 0.05, 0.5);
        let mut want_f = fix(&a);
        want_f.extend(fix(&b));
        prop_assert_eq!(fix(&joined), want_f);
        let mut want_b = blink(&a);
        want_b.extend(blink(&b));
        prop_assert_eq!(blink(&joined), want_b);
    }

    #[test]
    fn saccade_symbols_follow_the_rule_table(
        dx in -0.6f64..0.6,
        dy in -0.6f64..0.6,
        large in 0.01f64..0.4,
    ) {
        let amp = dx.hypot(dy);
        prop_assert_eq!(encode_saccade_char((dx, dy), amp, large), symbol_oracle(dx, dy, amp, large));
    }

    #[test]
    fn injected_blinks_are_recovered(
        lengths in prop::collection::vec(2usize..=14, 7),
        dwell in prop::collection::vec(10usize..60, 8),
    ) {
        let mut pieces = Vec::new();
        for i in 0..8 {
            pieces.push(Piece::Dwell { x: 0.5, y: 0.5, frames: dwell[i], jitter: 0.0 });
            if i < 7 {
                pieces.push(Piece::Dropout { frames: lengths[i] });
            }
        }
        let samples = render(&pieces, 0, 0);
        let blinks = detect_blinks(&samples, THR, 0.05, 0.5);
        prop_assert_eq!(blinks.len(), 7);
        let mut frame = 0;
        for i in 0..7 {
            frame += dwell[i];
            let b = blinks[i];
            prop_assert_eq!(b.start, frame as f64 / HZ);
            frame += lengths[i];
            prop_assert_eq!(b.end, frame as f64 / HZ);
        }
    }
}

#[test]
fn collinear_fixations_give_equal_saccades() {
    let mut samples = Vec::new();
    for k in 0..5 {
        for j in 0..10 {
            samples.push(GazeSample {
                t: (k * 10 + j) as f64 / HZ,
                x: 0.1 + 0.1 * k as f64,
                y: 0.5,
                pupil_diameter: 40.0,
                confidence: 1.0,
            });
        }
    }
    let fix = detect_fixations(&samples, THR, 0.05, 0.1);
    assert_eq!(fix.len(), 5);
    let sac = detect_saccades(&fix, 0.2);
    assert_eq!(sac.len(), 4);
    for s in sac {
        assert!((s.amplitude - 0.1).abs() < 1e-12);
        assert_eq!(s.symbol, 'r');
    }
}
