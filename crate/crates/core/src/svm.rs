//! Standardization and an RBF-kernel C-SVM trained by sequential minimal
//! optimization.
//!
//! The solver works on the dual
//!
//! ```text
//! min  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! choosing the working pair with second-order information and keeping a
//! bounded LRU cache of kernel rows. `Sensitive` is the positive class.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SvmParams;
use crate::dataset::PrivacyClass;
use crate::error::{Error, Result};
use crate::features::{FeatureVector52, EYE_FEATURES};
use crate::scene::{Embedding68, EMBEDDING_DIM};

pub const COMBINED_FEATURES: usize = EYE_FEATURES + EMBEDDING_DIM;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Per-column mean and population standard deviation. Constant columns
    /// get a standard deviation of 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("standardizer needs at least 2 rows".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("rows have different dimensions".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "kernel dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Kernel rows computed on demand, least-recently-used rows evicted.
struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    last_used: Vec<u64>,
    cached: usize,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, capacity: usize) -> Self {
        KernelCache {
            x,
            gamma,
            rows: vec![None; x.len()],
            last_used: vec![0; x.len()],
            cached: 0,
            capacity: capacity.max(2),
            clock: 0,
        }
    }

    fn ensure(&mut self, i: usize) {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if self.rows[i].is_some() {
            return;
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&k| self.rows[k].is_some())
                .min_by_key(|&k| self.last_used[k])
                .expect("cache is non-empty");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let xi = &self.x[i];
        let row = self
            .x
            .iter()
            .map(|xt| (-self.gamma * squared_distance(xi, xt)).exp())
            .collect();
        self.rows[i] = Some(row);
        self.cached += 1;
    }

    fn row(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("row was ensured")
    }
}

/// Raw SMO output for a standardized training set.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    /// One coefficient per training row.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

pub fn resolve_gamma(params: &SvmParams, dim: usize) -> f64 {
    params.gamma.unwrap_or(1.0 / dim as f64)
}

/// SMO on already-standardized rows. Stops once the maximal violating pair
/// gap falls below `params.tolerance`; exceeding `params.max_iter` is an error.
pub fn train_svm(x: &[Vec<f64>], y: &[PrivacyClass], params: &SvmParams) -> Result<SvmSolution> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::InvalidArgument(format!("{n} rows but {} labels", y.len())));
    }
    if !y.contains(&PrivacyClass::Sensitive) || !y.contains(&PrivacyClass::NonSensitive) {
        return Err(Error::Training("SVM training data must contain both classes".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument("rows have different dimensions".into()));
    }
    let gamma = resolve_gamma(params, dim);
    let c = params.c;
    let ys: Vec<f64> = y.iter().map(|c| c.sign()).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelCache::new(x, gamma, params.cache_rows);
    // RBF diagonal.
    let qd = 1.0;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // First index: maximal -y G over I_up, lowest index on ties.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(alpha[t], ys[t]) {
                let v = -ys[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else { break };
        cache.ensure(i);
        let ki = cache.row(i);

        // Second index: maximal objective decrease over I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !in_low(alpha[t], ys[t]) {
                continue;
            }
            let yg = ys[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let grad_diff = gmax + yg;
            if grad_diff > 0.0 {
                let quad = (qd + qd - 2.0 * ki[t]).max(TAU);
                let obj = -(grad_diff * grad_diff) / quad;
                if obj < best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < params.tolerance {
            break;
        }
        let Some(j) = j_sel else { break };
        if iterations >= params.max_iter {
            return Err(Error::Training(format!(
                "SMO did not converge within {} iterations (gap {})",
                params.max_iter,
                gmax + gmax2
            )));
        }
        iterations += 1;

        cache.ensure(j);
        let ki = cache.row(i);
        let kij = ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (qd + qd - 2.0 * kij).max(TAU);
        if ys[i] != ys[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ki, kj) = (cache.row(i), cache.row(j));
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * ki[t] * di + ys[j] * kj[t] * dj);
        }
    }

    // Offset: average over free vectors, midpoint of the feasible interval otherwise.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(SvmSolution {
        alphas: alpha,
        bias: -rho,
        iterations,
    })
}

/// A trained classifier: standardizer plus the support vectors of the dual
/// solution (rows with a positive coefficient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub standardizer: Standardizer,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub alphas: Vec<f64>,
    /// +1 for sensitive, -1 for non-sensitive.
    pub labels: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub iterations: usize,
}

const MODEL_FORMAT: &str = "gazeshutter-svm-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SvmModelFile {
    format: String,
    version: u32,
    dimension: usize,
    model: SvmModel,
}

impl SvmModel {
    /// Fits the standardizer on `rows`, then runs SMO on the standardized rows.
    pub fn train(rows: &[Vec<f64>], labels: &[PrivacyClass], params: &SvmParams) -> Result<Self> {
        let standardizer = Standardizer::fit(rows)?;
        let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        Self::train_standardized(standardizer, z, labels, params)
    }

    pub fn train_standardized(
        standardizer: Standardizer,
        z: Vec<Vec<f64>>,
        labels: &[PrivacyClass],
        params: &SvmParams,
    ) -> Result<Self> {
        let solution = train_svm(&z, labels, params)?;
        let mut model = SvmModel {
            standardizer,
            support_vectors: Vec::new(),
            support_indices: Vec::new(),
            alphas: Vec::new(),
            labels: Vec::new(),
            bias: solution.bias,
            gamma: resolve_gamma(params, z[0].len()),
            c: params.c,
            iterations: solution.iterations,
        };
        for (idx, (row, a)) in z.into_iter().zip(&solution.alphas).enumerate() {
            if *a > 0.0 {
                model.support_vectors.push(row);
                model.support_indices.push(idx);
                model.alphas.push(*a);
                model.labels.push(labels[idx].sign());
            }
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Decision value on an already-standardized vector.
    pub fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y * (-self.gamma * squared_distance(sv, z)).exp())
            .sum::<f64>()
            + self.bias
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SvmModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dimension: self.dim(),
            model: self.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Accepts only eye-only (52) or combined (120) models.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SvmModelFile = serde_json::from_str(text).map_err(|e| Error::Data(format!("svm model: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported svm model format {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        let d = file.dimension;
        if d != EYE_FEATURES && d != COMBINED_FEATURES {
            return Err(Error::Data(format!("svm model dimension {d} not in {{52, 120}}")));
        }
        let k = m.alphas.len();
        let consistent = m.standardizer.mean.len() == d
            && m.standardizer.std.len() == d
            && m.support_vectors.iter().all(|sv| sv.len() == d)
            && m.support_vectors.len() == k
            && m.labels.len() == k
            && m.support_indices.len() == k;
        if !consistent {
            return Err(Error::Data("svm model blocks have inconsistent dimensions".into()));
        }
        Ok(m)
    }
}

/// Standardizes `x` and evaluates the decision function; ties (f = 0) are
/// sensitive.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(PrivacyClass, f64)> {
    if x.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "feature vector has {} values, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    let f = model.decision_standardized(&model.standardizer.transform(x));
    let class = if f >= 0.0 {
        PrivacyClass::Sensitive
    } else {
        PrivacyClass::NonSensitive
    };
    Ok((class, f))
}

/// `[eye | embedding]`, 120 values.
pub fn concat_features(eye: &FeatureVector52, embedding: &Embedding68) -> Vec<f64> {
    let mut v = Vec::with_capacity(COMBINED_FEATURES);
    v.extend_from_slice(eye.values());
    v.extend_from_slice(&embedding.0);
    v
}
