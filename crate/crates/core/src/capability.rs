//! Per-model success-probability estimation.
//!
//! Each backend model gets its own logistic regression over coarse request
//! features (language and length bucket, one-hot encoded, plus a bias).
//! Fitting is plain full-batch gradient descent: the feature space is tiny,
//! so anything fancier buys nothing and costs determinism.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::types::{LanguageClass, LengthBucket, RequestFeatures};

/// One-hot languages (4) + one-hot buckets (6) + bias.
pub const FEATURE_LEN: usize = LanguageClass::ALL.len() + LengthBucket::ALL.len() + 1;

/// File header written by [`save_model`]; bumped when the layout changes.
pub const LAYOUT_VERSION: &str = "v1";

/// Gradient infinity-norm below which fitting stops early.
const GRAD_TOLERANCE: f64 = 1e-8;

/// Encoded request features: exactly one language slot set, exactly one
/// bucket slot set, and a constant bias slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

/// Logistic-regression coefficients for one backend model.
#[derive(Clone, Debug, PartialEq)]
pub struct CapabilityModel {
    pub weights: [f64; FEATURE_LEN],
}

impl CapabilityModel {
    pub fn zeros() -> Self {
        CapabilityModel {
            weights: [0.0; FEATURE_LEN],
        }
    }

    pub fn from_weights(weights: [f64; FEATURE_LEN]) -> Self {
        CapabilityModel { weights }
    }
}

/// A labeled attempt used for offline fitting.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub features: RequestFeatures,
    pub success: bool,
}

/// Hyperparameters for [`fit`].
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty applied to every weight except the bias slot.
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 0.5,
            epochs: 5000,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CapabilityError {
    #[error("no training data")]
    NoTrainingData,
    #[error("capability file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "capability file {path}: unsupported layout version `{found}` (expected `{expected}`)"
    )]
    LayoutVersion {
        path: String,
        found: String,
        expected: &'static str,
    },
    #[error("capability file {path}: expected {expected} weights, found {found}")]
    WeightCount {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("capability file {path} line {line}: `{text}` is not a finite number")]
    BadWeight {
        path: String,
        line: usize,
        text: String,
    },
}

/// One-hot encodes request features. Slot order is fixed: languages in enum
/// order, then buckets in enum order, then the bias.
pub fn encode(features: &RequestFeatures) -> FeatureVector {
    let mut v = [0.0; FEATURE_LEN];
    v[features.language.slot()] = 1.0;
    v[LanguageClass::ALL.len() + features.bucket.slot()] = 1.0;
    v[FEATURE_LEN - 1] = 1.0;
    FeatureVector(v)
}

fn dot(weights: &[f64; FEATURE_LEN], x: &FeatureVector) -> f64 {
    weights.iter().zip(x.0.iter()).map(|(w, f)| w * f).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Predicted success probability Q(m, x), floored at `epsilon_q` so the
/// downstream cost ratio L/Q stays finite.
pub fn predict_q(model: &CapabilityModel, features: &RequestFeatures, epsilon_q: f64) -> f64 {
    debug_assert!(epsilon_q > 0.0 && epsilon_q < 1.0);
    sigmoid(dot(&model.weights, &encode(features))).max(epsilon_q)
}

/// Fits a capability model by full-batch gradient descent on the mean
/// logistic loss plus an L2 penalty (bias excluded). Weights start at zero
/// and the run is fully deterministic; it stops after `epochs` iterations
/// or once the gradient infinity-norm drops below 1e-8.
pub fn fit(
    examples: &[TrainingExample],
    options: &FitOptions,
) -> Result<CapabilityModel, CapabilityError> {
    fit_with_loss_trace(examples, options).map(|(model, _)| model)
}

/// Same as [`fit`] but also returns the penalized training loss at the
/// start of every epoch.
pub fn fit_with_loss_trace(
    examples: &[TrainingExample],
    options: &FitOptions,
) -> Result<(CapabilityModel, Vec<f64>), CapabilityError> {
    if examples.is_empty() {
        return Err(CapabilityError::NoTrainingData);
    }
    let encoded: Vec<(FeatureVector, f64)> = examples
        .iter()
        .map(|ex| (encode(&ex.features), if ex.success { 1.0 } else { 0.0 }))
        .collect();
    let n = encoded.len() as f64;

    let mut weights = [0.0; FEATURE_LEN];
    let mut trace = Vec::with_capacity(options.epochs);

    for _ in 0..options.epochs {
        let mut grad = [0.0; FEATURE_LEN];
        let mut loss = 0.0;
        for (x, y) in &encoded {
            let z = dot(&weights, x);
            let p = sigmoid(z);
            // softplus(-z) is -log(sigmoid(z)); softplus(z) is -log(1-sigmoid(z)).
            loss += if *y > 0.5 { softplus(-z) } else { softplus(z) };
            let err = p - y;
            for (g, f) in grad.iter_mut().zip(x.0.iter()) {
                *g += err * f;
            }
        }
        loss /= n;
        for g in grad.iter_mut() {
            *g /= n;
        }
        // L2 penalty on everything but the bias slot.
        for j in 0..FEATURE_LEN - 1 {
            loss += options.l2 * weights[j] * weights[j];
            grad[j] += 2.0 * options.l2 * weights[j];
        }
        trace.push(loss);

        let grad_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_inf < GRAD_TOLERANCE {
            break;
        }
        for (w, g) in weights.iter_mut().zip(grad.iter()) {
            *w -= options.learning_rate * g;
        }
    }

    Ok((CapabilityModel { weights }, trace))
}

/// Writes coefficients as plain text: a layout-version header followed by
/// one weight per line. Floats are printed in shortest round-trip form, so
/// save/load is bit-exact.
pub fn save_model(model: &CapabilityModel, path: &Path) -> Result<(), CapabilityError> {
    let io_err = |source| CapabilityError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    out.push_str(LAYOUT_VERSION);
    out.push('\n');
    for w in &model.weights {
        out.push_str(&w.to_string());
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(out.as_bytes()).map_err(io_err)
}

/// Reads a coefficient file written by [`save_model`], validating the
/// layout version, the weight count, and that every entry is finite.
pub fn load_model(path: &Path) -> Result<CapabilityModel, CapabilityError> {
    let text = fs::read_to_string(path).map_err(|source| CapabilityError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim();
    if header != LAYOUT_VERSION {
        return Err(CapabilityError::LayoutVersion {
            path: path_str,
            found: header.to_string(),
            expected: LAYOUT_VERSION,
        });
    }
    let mut weights = Vec::with_capacity(FEATURE_LEN);
    for (i, line) in lines.enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let w: f64 = trimmed.parse().map_err(|_| CapabilityError::BadWeight {
            path: path_str.clone(),
            line: i + 2,
            text: trimmed.to_string(),
        })?;
        if !w.is_finite() {
            return Err(CapabilityError::BadWeight {
                path: path_str.clone(),
                line: i + 2,
                text: trimmed.to_string(),
            });
        }
        weights.push(w);
    }
    let found = weights.len();
    let weights: [f64; FEATURE_LEN] =
        weights
            .try_into()
            .map_err(|_| CapabilityError::WeightCount {
                path: path_str,
                expected: FEATURE_LEN,
                found,
            })?;
    Ok(CapabilityModel { weights })
}
