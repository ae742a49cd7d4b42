use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gazeshutter::dataset::{load_recording, Dataset};
use gazeshutter::eval::folds::{split, Scheme};
use gazeshutter::eval::pipeline::{check_fold_models, fold_predictions, prepare_dataset, simulate, train_fold, FoldModels, Method};
use gazeshutter::eval::report::{read_sweep, write_report};
use gazeshutter::eval::sweep::{summarize, sweep_closing_times, SweepPlan};
use gazeshutter::eval::synth::generate_synthetic;
use gazeshutter::events::events_csv;
use gazeshutter::features::{extract_features, features_csv};
use gazeshutter::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "gazeshutter", version, about = "Privacy-sensitive situation detection and shutter simulation")]
struct Cli {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `synth.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the per-second 52-feature stream of one recording.
    Extract {
        /// Path to a recording manifest.
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the detected events.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Train one detector per cross-validation fold.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        /// svm-eye, svm-combined or cnn-direct.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the shutter simulation on every test recording of every fold.
    Simulate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_scheme, default_value = "loro")]
        scheme: Scheme,
        /// cnn-svm, svm-svm or svm-eye (also majority, ground-truth).
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        closing_time: u32,
        /// Apply the open-shutter classifier at every second.
        #[arg(long)]
        upper_bound: bool,
        /// Directory written by `train`; models are trained on the fly otherwise.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate methods across closing times and write tables and plots.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated closing times; defaults to `eval.closing_times`.
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_scheme, default_value = "loro,lopo")]
        schemes: Vec<Scheme>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "cnn-svm,svm-svm,svm-eye")]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-aggregate a sweep directory and redraw its plots.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fold_dir(root: &Path, scheme: Scheme, fold: usize) -> PathBuf {
    root.join(format!("{scheme}_fold{fold:02}"))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let thr = config.events.validity_threshold;
    match cli.command {
        Command::Synth { out, seed } => {
            if let Some(s) = seed {
                config.synth.seed = s;
            }
            let ds = generate_synthetic(&config.synth)?;
            ds.write_dir(&out)?;
            println!("wrote {} recordings to {}", ds.recordings.len(), out.display());
        }
        Command::Extract { recording, out, events } => {
            let rec = load_recording(&recording, thr)?;
            let (stream, rows) = extract_features(&rec, &config.events, &config.window);
            write(&out, features_csv(&rows))?;
            if let Some(p) = events {
                write(&p, events_csv(&stream))?;
            }
            println!("{}: {} feature rows", rec.key(), rows.len());
        }
        Command::Train { data, scheme, method, out } => {
            if !matches!(method, Method::SvmEye | Method::SvmCombined | Method::CnnDirect) {
                return Err(Error::InvalidArgument(format!(
                    "train takes svm-eye, svm-combined or cnn-direct, not {method}"
                )));
            }
            let ds = Dataset::load_dir(&data, thr)?;
            let prepared = prepare_dataset(&ds, &config)?;
            let keys: Vec<_> = prepared.keys().cloned().collect();
            for fold in split(scheme, &keys)? {
                let models = train_fold(&fold, &prepared, &[method], &config)?;
                models.save(&fold_dir(&out, scheme, fold.id))?;
                println!("{scheme} fold {} ({}): trained {method}", fold.id, fold.test_person);
            }
        }
        Command::Simulate {
            data,
            scheme,
            method,
            closing_time,
            upper_bound,
            models,
            out,
        } => {
            let method = if upper_bound { method.upper_bound() } else { method };
            let ds = Dataset::load_dir(&data, thr)?;
            let prepared = prepare_dataset(&ds, &config)?;
            let keys: Vec<_> = prepared.keys().cloned().collect();
            for fold in split(scheme, &keys)? {
                let fm = match &models {
                    Some(dir) => {
                        let fm = FoldModels::load(&fold_dir(dir, scheme, fold.id))?;
                        check_fold_models(&fold, &fm, &prepared)?;
                        fm
                    }
                    None => train_fold(&fold, &prepared, &[method], &config)?,
                };
                for (rec, preds) in fold_predictions(&fold, &fm, &prepared)? {
                    let (trace, metrics) = simulate(rec, &preds, method, closing_time)?;
                    let stem = format!("{scheme}_fold{:02}_{}", fold.id, rec.key);
                    write(&out.join(format!("{stem}_trace.csv")), trace.to_csv())?;
                    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
                    write(&out.join(format!("{stem}_metrics.json")), json + "\n")?;
                    println!(
                        "{stem}: accuracy {:.4}, closings {}",
                        metrics.accuracy, metrics.closings
                    );
                }
            }
        }
        Command::Sweep {
            data,
            t_list,
            schemes,
            methods,
            out,
        } => {
            let ds = Dataset::load_dir(&data, thr)?;
            let plan = SweepPlan {
                schemes,
                methods,
                closing_times: t_list.unwrap_or_else(|| config.eval.closing_times.clone()),
            };
            let result = sweep_closing_times(&ds, &config, &plan)?;
            write_report(&result, &out)?;
            print_summary(&result.folds);
        }
        Command::Report { input, out } => {
            let result = read_sweep(&input)?;
            write_report(&result, &out)?;
            print_summary(&result.folds);
        }
    }
    Ok(())
}

fn print_summary(rows: &[gazeshutter::eval::sweep::FoldRow]) {
    println!("scheme method T folds accuracy gap_min");
    for s in summarize(rows) {
        let gap = s
            .gap_minutes_global
            .map_or_else(|| "-".to_string(), |g| format!("{g:.2}"));
        println!(
            "{} {} {} {} {:.4}±{:.4} {gap}",
            s.scheme, s.method, s.closing_time, s.folds, s.accuracy_mean, s.accuracy_std
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
