//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gazeshutter::config::{EventParams, SvmParams, WindowParams};
use gazeshutter::dataset::{labels_per_second, load_recording, PrivacyClass};
use gazeshutter::eval::folds::Scheme;
use gazeshutter::eval::pipeline::Method;
use gazeshutter::eval::sweep::{baseline_by_scheme, summarize, sweep_closing_times, SummaryRow, SweepPlan};
use gazeshutter::eval::synth::{generate_synthetic, SynthConfig};
use gazeshutter::events::SACCADE_ALPHABET;
use gazeshutter::features::{extract_features, parse_features_csv, wordbook_features, EYE_FEATURES};
use gazeshutter::scene::{SceneDescriptor, SceneModel, DESCRIPTOR_DIM};
use gazeshutter::shutter::{
    mean_time_between_closings, metrics, run_simulation, FnDetector, ShutterStatus, ShutterTrace, TraceRecord,
};
use gazeshutter::svm::{rbf_kernel, train_svm, Standardizer, SvmModel};
use gazeshutter::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use PrivacyClass::{NonSensitive as N, Sensitive as S};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pvar(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

fn feature_contract() -> Outcome {
    let start = Instant::now();
    let rec = load_recording(&fixture("p01_r1/manifest.json"), 0.8).map_err(|e| e.to_string())?;
    let (_, rows) = extract_features(&rec, &EventParams::default(), &WindowParams::default());
    let text = std::fs::read_to_string(fixture("features.csv")).map_err(|e| e.to_string())?;
    let expected = parse_features_csv(&text)?;
    check(rows.len() == expected.len() && !rows.is_empty(), "row count differs")?;
    let mut worst: f64 = 0.0;
    for (i, (got, want)) in rows.iter().zip(&expected).enumerate() {
        check(got.features.0.len() == EYE_FEATURES, format!("row {i} has {} columns", got.features.0.len()))?;
        check(got.t_end == 30.0 + i as f64, format!("row {i} at t={}", got.t_end))?;
        for (g, w) in got.features.0.iter().zip(want.features.0.iter()) {
            check(g.is_finite(), format!("row {i} has a non-finite value"))?;
            worst = worst.max((g - w).abs());
        }
    }
    check(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("{} rows x 52, max deviation {worst:e}, {secs:.2}s", rows.len()))
}

/// Sorts all n-grams and counts equal runs; statistics over the counts in
/// lexicographic gram order.
fn brute_wordbook(symbols: &[char]) -> Vec<f64> {
    let mut out = Vec::new();
    for n in 1..=4 {
        if symbols.len() < n {
            out.extend([0.0; 6]);
            continue;
        }
        let mut grams: Vec<&[char]> = (0..=symbols.len() - n).map(|i| &symbols[i..i + n]).collect();
        grams.sort();
        let mut counts: Vec<f64> = Vec::new();
        let mut i = 0;
        while i < grams.len() {
            let mut j = i;
            while j < grams.len() && grams[j] == grams[i] {
                j += 1;
            }
            counts.push((j - i) as f64);
            i = j;
        }
        let hi = counts.iter().cloned().fold(f64::MIN, f64::max);
        let lo = counts.iter().cloned().fold(f64::MAX, f64::min);
        out.extend([counts.len() as f64, hi, lo, hi - lo, mean(&counts), pvar(&counts)]);
    }
    out
}

fn wordbook_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let len = rng.random_range(0..=50);
        let symbols: Vec<char> = (0..len).map(|_| SACCADE_ALPHABET[rng.random_range(0..8)]).collect();
        let got = wordbook_features(&symbols);
        let want = brute_wordbook(&symbols);
        check(got.as_slice() == want.as_slice(), format!("case {case} {:?}", symbols.iter().collect::<String>()))?;
    }
    Ok("1000 strings identical".into())
}

fn clouds(rng: &mut ChaCha8Rng, n: usize, d: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<PrivacyClass>) {
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { sep / 2.0 } else { -sep / 2.0 };
        x.push(dir.iter().map(|u| s * u / norm + 0.3 * Distribution::<f64>::sample(&StandardNormal, rng)).collect());
        y.push(if i % 2 == 0 { S } else { N });
    }
    (x, y)
}

fn smo_correctness() -> Outcome {
    let start = Instant::now();
    let params = SvmParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_kkt: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(4..=60);
        let d = rng.random_range(1..=10);
        let separable = case % 2 == 0;
        let (x, y) = clouds(&mut rng, n, d, if separable { 6.0 } else { 1.0 });
        let st = Standardizer::fit(&x).map_err(|e| e.to_string())?;
        let z: Vec<Vec<f64>> = x.iter().map(|r| st.transform(r)).collect();
        let sol = train_svm(&z, &y, &params).map_err(|e| e.to_string())?;
        let ys: Vec<f64> = y.iter().map(|c| if *c == S { 1.0 } else { -1.0 }).collect();
        let gamma = 1.0 / d as f64;
        check(sol.alphas.iter().all(|a| (0.0..=1.0).contains(a)), format!("case {case}: alpha outside [0, 1]"))?;
        let eq = sol.alphas.iter().zip(&ys).map(|(a, y)| a * y).sum::<f64>().abs();
        worst_eq = worst_eq.max(eq);
        check(eq <= 1e-8, format!("case {case}: |sum alpha y| = {eq:e}"))?;
        for i in 0..n {
            let f: f64 = (0..n)
                .map(|j| sol.alphas[j] * ys[j] * rbf_kernel(&z[i], &z[j], gamma).unwrap())
                .sum::<f64>()
                + sol.bias;
            let m = ys[i] * f;
            let a = sol.alphas[i];
            let v = if a <= 0.0 {
                (1.0 - m).max(0.0)
            } else if a >= params.c {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            };
            worst_kkt = worst_kkt.max(v);
        }
        check(worst_kkt < 1e-3, format!("case {case}: KKT violation {worst_kkt:e}"))?;
        if separable {
            let model = SvmModel::train(&x, &y, &params).map_err(|e| e.to_string())?;
            let correct = x
                .iter()
                .zip(&y)
                .filter(|(r, c)| gazeshutter::svm::svm_predict(&model, r).unwrap().0 == **c)
                .count();
            check(correct == n, format!("case {case}: separable accuracy {correct}/{n}"))?;
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let (a, b) = (i % 2 == 0, (i / 2) % 2 == 0);
        let cx = if a { 1.0 } else { -1.0 };
        let cy = if b { 1.0 } else { -1.0 };
        x.push(vec![cx + rng.random_range(-0.3..0.3), cy + rng.random_range(-0.3..0.3)]);
        y.push(if a == b { S } else { N });
    }
    let xor_params = SvmParams { gamma: Some(1.0), ..SvmParams::default() };
    let model = SvmModel::train(&x, &y, &xor_params).map_err(|e| e.to_string())?;
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(r, c)| gazeshutter::svm::svm_predict(&model, r).unwrap().0 == **c)
        .count();
    let xor = correct as f64 / 40.0;
    check(xor >= 0.95, format!("XOR accuracy {xor}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "max KKT violation {worst_kkt:.1e}, max |sum alpha y| {worst_eq:.1e}, XOR {xor:.3}, {secs:.2}s"
    ))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for inst in 0..5u64 {
        let model = SceneModel::random(100 + inst, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(inst);
        let data: Vec<(SceneDescriptor, PrivacyClass)> = (0..4)
            .map(|i| {
                let d = (0..DESCRIPTOR_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
                (SceneDescriptor::new(d).unwrap(), if i % 2 == 0 { S } else { N })
            })
            .collect();
        let (_, g) = model.loss_and_gradient(&data);
        let sizes = [model.w1.len(), model.b1.len(), model.w2.len(), model.b2.len()];
        let total: usize = sizes.iter().sum();
        for _ in 0..20 {
            let mut k = rng.random_range(0..total);
            let mut block = 0;
            while k >= sizes[block] {
                k -= sizes[block];
                block += 1;
            }
            let analytic = [&g.w1, &g.b1, &g.w2, &g.b2][block][k];
            let bump = |delta: f64| {
                let mut m = model.clone();
                [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2][block][k] += delta;
                m.loss(&data)
            };
            let numeric = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!("100 coordinates, max relative error {worst:.1e}"))
}

fn simulate(truth: &[(i64, PrivacyClass)], t: u32, open: &[PrivacyClass], eye: &[PrivacyClass]) -> ShutterTrace {
    let mut o = FnDetector::new("open", |i| Ok(open[i]));
    let mut c = FnDetector::new("eye", |i| Ok(eye[i]));
    run_simulation(truth, t, &mut o, &mut c).unwrap().0
}

fn state_machine() -> Outcome {
    let truth = [N, S, S, N, N, N, N, S, S, N, N, N];
    let open = [N, S, S, S, S, S, N, S, S, S, S, N];
    let eye = [S, S, S, S, S, N, S, S, S, S, N, S];
    let tl: Vec<(i64, PrivacyClass)> = truth.iter().enumerate().map(|(i, c)| (i as i64, *c)).collect();
    let trace = simulate(&tl, 3, &open, &eye);
    let status: String = trace
        .records
        .iter()
        .map(|r| if r.status == ShutterStatus::Closed { 'C' } else { 'O' })
        .collect();
    check(status == "OCCCCOOCCCOO", format!("script trace {status}"))?;
    let m = metrics(&trace);
    let c = m.confusion;
    check(
        m.accuracy == 0.75 && (c.tp, c.fp, c.tn, c.fn_) == (4, 3, 5, 0) && trace.closing_times() == [1, 7],
        format!("script metrics {m:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for r in 0..20u64 {
        let cfg = SynthConfig {
            persons: 1,
            recordings_per_person: 1,
            duration: rng.random_range(300.0..900.0f64).round(),
            segment_min: 5,
            segment_max: 90,
            scene_rate: 0.1,
            seed: 1000 + r,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
        let labels = labels_per_second(&ds.recordings[0].annotations, 2).map_err(|e| e.to_string())?;
        let oracle: Vec<PrivacyClass> = labels.iter().map(|l| l.1).collect();
        let noise: Vec<PrivacyClass> = (0..labels.len()).map(|_| if rng.random_bool(0.5) { S } else { N }).collect();
        let noise2: Vec<PrivacyClass> = (0..labels.len()).map(|_| if rng.random_bool(0.3) { S } else { N }).collect();
        let acc = metrics(&simulate(&labels, 1, &oracle, &oracle)).accuracy;
        check(acc == 1.0, format!("recording {r}: oracle accuracy {acc} at T=1"))?;
        let mut last = u64::MAX;
        for t in 1..=60 {
            let closings = metrics(&simulate(&labels, t, &oracle, &oracle)).closings;
            check(closings <= last, format!("recording {r}: closings rise at T={t}"))?;
            last = closings;
        }
        for t in [1u32, 5, 30, 60] {
            for (o, e) in [(&oracle, &oracle), (&noise, &noise2), (&noise2, &oracle)] {
                let trace = simulate(&labels, t, o, e);
                let mut run = 0usize;
                for (i, rec) in trace.records.iter().enumerate() {
                    if rec.status == ShutterStatus::Closed {
                        run += 1;
                    }
                    let ends = rec.status == ShutterStatus::Open || i + 1 == trace.records.len();
                    if ends && run > 0 {
                        let truncated = rec.status == ShutterStatus::Closed;
                        check(truncated || run >= t as usize, format!("recording {r}: closed run {run} < T={t}"))?;
                        run = 0;
                    }
                }
            }
        }
    }
    Ok("12-second script exact; 20 recordings: oracle 1.0 at T=1, runs >= T, closings monotone".into())
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let len = rng.random_range(1..=600);
        let p_close = rng.random_range(0.0..1.0);
        let t0: i64 = rng.random_range(-500..500);
        let records: Vec<TraceRecord> = (0..len)
            .map(|i| {
                let closed = rng.random_bool(p_close);
                TraceRecord {
                    t: t0 + i as i64,
                    status: if closed { ShutterStatus::Closed } else { ShutterStatus::Open },
                    predicted: if closed { S } else { N },
                    truth: if rng.random_bool(0.5) { S } else { N },
                    classifier: "x".into(),
                }
            })
            .collect();
        let trace = ShutterTrace { records };
        let hits = trace.records.iter().filter(|r| r.predicted == r.truth).count();
        let acc = hits as f64 / len as f64;
        let mut closings = Vec::new();
        let mut prev = ShutterStatus::Open;
        for r in &trace.records {
            if r.status == ShutterStatus::Closed && prev == ShutterStatus::Open {
                closings.push(r.t);
            }
            prev = r.status;
        }
        let gap = (closings.len() >= 2).then(|| {
            let s: i64 = closings.windows(2).map(|w| w[1] - w[0]).sum();
            s as f64 / (closings.len() - 1) as f64 / 60.0
        });
        let m = metrics(&trace);
        check(m.accuracy == acc, format!("trace {case}: accuracy {} vs {acc}", m.accuracy))?;
        check(
            mean_time_between_closings(&trace) == gap && m.mean_gap_minutes == gap,
            format!("trace {case}: gap {:?} vs {gap:?}", m.mean_gap_minutes),
        )?;
    }
    Ok("100 traces identical".into())
}

fn sweep(config: &Config, schemes: &[Scheme], methods: &[Method], ts: &[u32]) -> Result<(Vec<SummaryRow>, f64, f64), String> {
    let ds = generate_synthetic(&config.synth).map_err(|e| e.to_string())?;
    let plan = SweepPlan { schemes: schemes.to_vec(), methods: methods.to_vec(), closing_times: ts.to_vec() };
    let r = sweep_closing_times(&ds, config, &plan).map_err(|e| e.to_string())?;
    let base = baseline_by_scheme(&r.baseline);
    let get = |s| base.get(&s).copied().unwrap_or(f64::NAN);
    Ok((summarize(&r.folds), get(Scheme::LeaveOneRecordingOut), get(Scheme::LeaveOnePersonOut)))
}

fn accuracy(rows: &[SummaryRow], scheme: Scheme, method: Method, t: u32) -> f64 {
    rows.iter()
        .find(|r| r.scheme == scheme && r.method == method && r.closing_time == t)
        .map_or(f64::NAN, |r| r.accuracy_mean)
}

fn positive_control() -> Outcome {
    let start = Instant::now();
    let config = Config::default();
    let (rows, _, _) = sweep(&config, &[Scheme::LeaveOneRecordingOut], &[Method::SvmSvm, Method::CnnSvm], &[1])?;
    let ss = accuracy(&rows, Scheme::LeaveOneRecordingOut, Method::SvmSvm, 1);
    let cs = accuracy(&rows, Scheme::LeaveOneRecordingOut, Method::CnnSvm, 1);
    let secs = start.elapsed().as_secs_f64();
    check(ss >= 0.90 && cs >= 0.80 && secs < 300.0, format!("svm-svm {ss:.4}, cnn-svm {cs:.4}, {secs:.1}s"))?;
    Ok(format!("svm-svm {ss:.4}, cnn-svm {cs:.4}, {secs:.1}s"))
}

fn null_control() -> Outcome {
    let config = Config {
        synth: SynthConfig {
            persons: 10,
            duration: 1200.0,
            separation: 0.0,
            descriptor_separation: 0.0,
            sensitive_prior: 0.5,
            segment_min: 10,
            segment_max: 30,
            ..SynthConfig::default()
        },
        ..Config::default()
    };
    let trained = [Method::CnnSvm, Method::SvmSvm, Method::SvmEye, Method::CnnDirect, Method::SvmCombined];
    let ts = [1, 5, 10, 30, 60];
    let (rows, majority, _) = sweep(&config, &[Scheme::LeaveOneRecordingOut], &trained, &ts)?;
    let mut worst = (0.0f64, String::new());
    for r in &rows {
        let d = (r.accuracy_mean - majority).abs();
        if d >= worst.0 {
            worst = (d, format!("{} T={}", r.method, r.closing_time));
        }
    }
    check(rows.len() == trained.len() * ts.len(), "missing summary rows")?;
    let msg = format!("majority {majority:.4}, worst |diff| {:.4} ({})", worst.0, worst.1);
    check(worst.0 <= 0.05, msg.clone())?;
    Ok(msg)
}

fn generalization_gap() -> Outcome {
    let mut config = Config::default();
    config.synth.person_offsets = 1.0;
    let ts = [1, 5, 10, 30, 60];
    let (rows, _, _) = sweep(&config, &[Scheme::LeaveOneRecordingOut, Scheme::LeaveOnePersonOut], &[Method::SvmSvm], &ts)?;
    let mut parts = Vec::new();
    for t in ts {
        let loro = accuracy(&rows, Scheme::LeaveOneRecordingOut, Method::SvmSvm, t);
        let lopo = accuracy(&rows, Scheme::LeaveOnePersonOut, Method::SvmSvm, t);
        parts.push(format!("T={t} {lopo:.3}<={loro:.3}"));
        check(lopo <= loro, parts.join(", "))?;
    }
    Ok(parts.join(", "))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gazeshutter")).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[synth]\npersons = 3\nrecordings_per_person = 3\nduration = 180.0\nsegment_min = 20\nsegment_max = 40\nseed = 4\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let data = dir.path().join(format!("data{run}"));
        let out = dir.path().join(format!("sweep{run}"));
        cli(&["--config", &s(&cfg), "synth", "--out", &s(&data)])?;
        cli(&["--config", &s(&cfg), "sweep", "--data", &s(&data), "--t-list", "1,5,10,30,60", "--out", &s(&out)])?;
        outputs.push(csv_files(&out));
    }
    check(outputs[0].len() == 3, format!("{} CSV files", outputs[0].len()))?;
    check(outputs[0] == outputs[1], "CSV outputs differ")?;
    let bytes: usize = outputs[0].iter().map(|f| f.1.len()).sum();
    Ok(format!("3 CSV files ({bytes} bytes) identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("feature contract", feature_contract),
        ("wordbook oracle", wordbook_oracle),
        ("SMO correctness", smo_correctness),
        ("gradient check", gradient_check),
        ("state-machine semantics", state_machine),
        ("metric oracle", metric_oracle),
        ("positive control", positive_control),
        ("null control", null_control),
        ("generalization-gap direction", generalization_gap),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
