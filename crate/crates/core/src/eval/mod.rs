//! Cross-validation, baselines, closing-time sweeps, synthetic data and
//! reports.

pub mod folds;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod synth;

pub use folds::{Fold, Scheme, majority_baseline, split_leave_one_person_out, split_leave_one_recording_out};
pub use pipeline::{FoldModels, Method, PreparedRecording, Predictions, prepare_dataset};
pub use report::{read_sweep, write_report};
pub use sweep::{FoldRow, SummaryRow, SweepPlan, SweepResult, summarize, sweep_closing_times};
pub use synth::{EyeParams, SynthConfig, generate_synthetic};
