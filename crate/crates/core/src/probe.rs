//! Binary logistic-regression probes on frozen embeddings.
//!
//! The training objective is
//!
//! ```text
//! 0.5 * |w|^2 + C * sum_i weight_i * log(1 + exp(-s_i * (x_i . w + b)))
//! ```
//!
//! with `s_i = 2 y_i - 1` and `weight_i` the class weight of `y_i`. The
//! intercept is not regularized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    /// `n / (2 n_c)` per class.
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Gradient-norm stopping tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Carried for provenance. Training starts from zero and is fully
    /// deterministic, so the seed does not change the fit.
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub label: String,
    pub model: String,
    pub w: Vec<f64>,
    pub b: f64,
    pub config: ProbeConfig,
    pub converged: bool,
    pub n_iter: usize,
    /// Class weights `[w0, w1]` used during training.
    pub class_weights: [f64; 2],
}

impl ProbeModel {
    pub fn named(mut self, model: &str, label: &str) -> Self {
        self.model = model.to_owned();
        self.label = label.to_owned();
        self
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = x.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn of(&self, label: u8) -> f64 {
        if label == 0 {
            self.w0
        } else {
            self.w1
        }
    }

    pub fn per_sample(&self, y: &[u8]) -> Vec<f64> {
        y.iter().map(|&v| self.of(v)).collect()
    }
}

/// Balanced weights `n / (2 n_c)`.
pub fn class_weights(y: &[u8]) -> Result<ClassWeights> {
    let (n0, n1) = class_counts(y)?;
    let n = y.len() as f64;
    Ok(ClassWeights {
        w0: n / (2.0 * n0 as f64),
        w1: n / (2.0 * n1 as f64),
    })
}

fn class_counts(y: &[u8]) -> Result<(usize, usize)> {
    let n1 = y.iter().filter(|&&v| v != 0).count();
    let n0 = y.len() - n1;
    match (n0, n1) {
        (_, 0) => Err(Error::DegenerateLabel { present: 0 }),
        (0, _) => Err(Error::DegenerateLabel { present: 1 }),
        _ => Ok((n0, n1)),
    }
}

fn weights_for(y: &[u8], weighting: ClassWeighting) -> Result<ClassWeights> {
    match weighting {
        ClassWeighting::Balanced => class_weights(y),
        ClassWeighting::Uniform => {
            class_counts(y)?;
            Ok(ClassWeights { w0: 1.0, w1: 1.0 })
        }
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn check_shapes(w: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>, y: &[u8], weights: &[f64]) {
    assert_eq!(x.ncols(), w.len(), "feature count must match weight length");
    assert_eq!(x.nrows(), y.len(), "one label per row");
    assert_eq!(x.nrows(), weights.len(), "one sample weight per row");
}

pub fn nll_objective(
    w: ArrayView1<'_, f64>,
    b: f64,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    weights: &[f64],
    c: f64,
) -> f64 {
    check_shapes(w, x, y, weights);
    let z = x.dot(&w);
    let data: f64 = z
        .iter()
        .zip(y)
        .zip(weights)
        .map(|((&zi, &yi), &om)| om * softplus(-sign(yi) * (zi + b)))
        .sum();
    0.5 * w.dot(&w) + c * data
}

/// Analytic gradient of [`nll_objective`] with respect to `(w, b)`.
pub fn nll_gradient(
    w: ArrayView1<'_, f64>,
    b: f64,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    weights: &[f64],
    c: f64,
) -> (Array1<f64>, f64) {
    check_shapes(w, x, y, weights);
    let z = x.dot(&w);
    let r = residuals(&z, b, y, weights, c);
    let grad_w = &w + &x.t().dot(&r);
    (grad_w, r.sum())
}

/// Per-sample derivative of the weighted data term with respect to z_i.
fn residuals(z: &Array1<f64>, b: f64, y: &[u8], weights: &[f64], c: f64) -> Array1<f64> {
    z.iter()
        .zip(y)
        .zip(weights)
        .map(|((&zi, &yi), &om)| {
            let s = sign(yi);
            -c * om * s * sigmoid(-s * (zi + b))
        })
        .collect()
}

#[inline]
fn sign(y: u8) -> f64 {
    if y == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Fits a probe on rows of `x` (expected to be l2-normalized by the caller).
pub fn train_probe(x: ArrayView2<'_, f64>, y: &[u8], config: &ProbeConfig) -> Result<ProbeModel> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let cw = weights_for(y, config.class_weighting)?;
    let weights = cw.per_sample(y);
    let d = x.ncols();
    let c = config.c;

    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let w = ArrayView1::from(&theta[..d]);
        let b = theta[d];
        let z = x.dot(&w);
        let mut data = 0.0;
        for ((&zi, &yi), &om) in z.iter().zip(y).zip(&weights) {
            data += om * softplus(-sign(yi) * (zi + b));
        }
        let r = residuals(&z, b, y, &weights, c);
        let gw = x.t().dot(&r);
        for j in 0..d {
            grad[j] = theta[j] + gw[j];
        }
        grad[d] = r.sum();
        0.5 * w.dot(&w) + c * data
    };

    let found = lbfgs::minimize(objective, vec![0.0; d + 1], config.tol, config.max_iter);
    if !found.converged {
        log::warn!(
            "probe did not converge after {} iterations (|grad| = {:.3e})",
            found.iterations,
            found.grad_norm
        );
    }
    let mut w = found.x;
    let b = w.pop().expect("intercept present");
    Ok(ProbeModel {
        label: String::new(),
        model: String::new(),
        w,
        b,
        config: config.clone(),
        converged: found.converged,
        n_iter: found.iterations,
        class_weights: [cw.w0, cw.w1],
    })
}

/// Positive-class probabilities `sigmoid(x_i . w + b)`.
pub fn predict_proba(model: &ProbeModel, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if x.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.ncols(),
        });
    }
    let w = ArrayView1::from(&model.w[..]);
    Ok(x.dot(&w).mapv(|z| sigmoid(z + model.b)))
}
