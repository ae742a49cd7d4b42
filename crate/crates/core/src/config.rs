//! Pipeline configuration. Loaded from a TOML key/value file; every key is
//! optional and falls back to the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventParams {
    /// Samples with confidence below this are invalid (blinks, dropouts).
    pub validity_threshold: f64,
    /// I-DT dispersion bound, `(max x - min x) + (max y - min y)`, normalized units.
    pub dispersion_threshold: f64,
    pub min_fixation_duration: f64,
    pub min_blink: f64,
    pub max_blink: f64,
    /// Saccades at or above this amplitude are encoded uppercase.
    pub large_saccade_threshold: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            validity_threshold: 0.8,
            dispersion_threshold: 0.05,
            min_fixation_duration: 0.1,
            min_blink: 0.05,
            max_blink: 0.5,
            large_saccade_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    pub duration: f64,
    pub step: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            duration: 30.0,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` means `1 / dimension`.
    pub gamma: Option<f64>,
    /// Stop when the maximal KKT violation gap drops below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Number of kernel rows kept in the solver cache.
    pub cache_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iter: 10_000_000,
            cache_rows: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            epochs: 300,
            learning_rate: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Highest privacy level still counted as sensitive.
    pub cutoff: u8,
    /// Seed for the one-image-per-segment sampling.
    pub sample_seed: u64,
    pub closing_times: Vec<u32>,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            cutoff: 2,
            sample_seed: 11,
            closing_times: vec![1, 5, 10, 30, 60],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub events: EventParams,
    pub window: WindowParams,
    pub svm: SvmParams,
    pub scene: SceneParams,
    pub eval: EvalParams,
    pub synth: SynthConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.events;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&e.validity_threshold) {
            return bad("events.validity_threshold must be in [0, 1]");
        }
        if e.dispersion_threshold <= 0.0 || e.min_fixation_duration < 0.0 {
            return bad("events.dispersion_threshold must be > 0 and min_fixation_duration >= 0");
        }
        if e.min_blink < 0.0 || e.max_blink < e.min_blink {
            return bad("events: need 0 <= min_blink <= max_blink");
        }
        if e.large_saccade_threshold < 0.0 {
            return bad("events.large_saccade_threshold must be >= 0");
        }
        if self.window.duration <= 0.0 || self.window.step <= 0.0 {
            return bad("window.duration and window.step must be > 0");
        }
        if self.svm.c <= 0.0 || self.svm.tolerance <= 0.0 || self.svm.gamma.is_some_and(|g| g <= 0.0) {
            return bad("svm.c, svm.tolerance and svm.gamma must be > 0");
        }
        if self.svm.cache_rows < 2 {
            return bad("svm.cache_rows must be >= 2");
        }
        if self.scene.learning_rate <= 0.0 {
            return bad("scene.learning_rate must be > 0");
        }
        if !(1..=7).contains(&self.eval.cutoff) {
            return bad("eval.cutoff must be in 1..=7");
        }
        if self.eval.closing_times.iter().any(|t| !(1..=60).contains(t)) {
            return bad("eval.closing_times must lie in 1..=60");
        }
        self.synth.validate()
    }
}
