//! Stratified k-fold splitting, weighted F1, and the cross-validation runner
//! that fills the label x model F1 matrix.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AlignedDataset, LABEL_NAMES, NUM_LABELS};
use crate::error::{Error, Result};
use crate::probe::{predict_proba, train_probe, ProbeConfig};

/// Held-out predictions use `p > DECISION_THRESHOLD` as the positive class.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles each class with a seeded generator, then deals negatives followed
/// by positives round-robin across folds. Dealing both classes as one
/// continuous sequence keeps fold sizes and per-fold class counts within one
/// of each other.
pub fn stratified_kfold(y: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if k > y.len() {
        return Err(Error::TooManyFolds { k, n: y.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 0).collect();
    for (class, members) in [(0, &neg), (1, &pos)] {
        if members.len() < k {
            log::warn!(
                "class {class} has {} members for {k} folds; some folds will contain none",
                members.len()
            );
        }
    }
    neg.shuffle(&mut rng);
    pos.shuffle(&mut rng);

    let mut fold_of = vec![0; y.len()];
    for (slot, &i) in neg.iter().chain(pos.iter()).enumerate() {
        fold_of[i] = slot % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Support-weighted mean of the per-class F1 scores over both classes.
pub fn weighted_f1(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut tp = [0usize; 2];
    let mut pred = [0usize; 2];
    let mut support = [0usize; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (t, p) = (usize::from(t != 0), usize::from(p != 0));
        support[t] += 1;
        pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let n = y_true.len() as f64;
    let mut total = 0.0;
    for c in 0..2 {
        // F1 = 2 tp / (predicted + actual); zero when both are zero
        let denom = pred[c] + support[c];
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        total += support[c] as f64 / n * f1;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub weighted_f1: f64,
    /// Class weights `[w0, w1]` fitted on the training split.
    pub class_weights: [f64; 2],
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub model: String,
    pub label: String,
    pub mean_weighted_f1: f64,
    pub per_fold: Vec<f64>,
    pub folds: Vec<FoldResult>,
}

/// Trains on `train` rows and scores the `test` rows. Only training labels
/// reach the optimizer.
pub fn evaluate_split(
    x: &Array2<f64>,
    y: &[u8],
    train: &[usize],
    test: &[usize],
    config: &ProbeConfig,
) -> Result<(f64, [f64; 2])> {
    let x_train = x.select(Axis(0), train);
    let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let probe = train_probe(x_train.view(), &y_train, config)?;
    let x_test = x.select(Axis(0), test);
    let y_test: Vec<u8> = test.iter().map(|&i| y[i]).collect();
    let y_pred: Vec<u8> = predict_proba(&probe, x_test.view())?
        .iter()
        .map(|&p| u8::from(p > DECISION_THRESHOLD))
        .collect();
    Ok((weighted_f1(&y_test, &y_pred)?, probe.class_weights))
}

/// Stratified k-fold evaluation of one (model, label) pair.
pub fn cross_validate(
    dataset: &AlignedDataset,
    label: usize,
    k: usize,
    seed: u64,
    config: &ProbeConfig,
) -> Result<CvResult> {
    let label_name = LABEL_NAMES[label];
    let y = dataset.label_column(label);
    let folds = stratified_kfold(&y, k, seed)?;
    let mut results = Vec::with_capacity(k);
    for fold in 0..k {
        let train = folds.train_indices(fold);
        let test = folds.test_indices(fold);
        let (f1, cw) = match evaluate_split(&dataset.x, &y, &train, &test, config) {
            Err(Error::DegenerateLabel { .. }) => {
                return Err(Error::SingleClassFold {
                    fold,
                    label: label_name.into(),
                })
            }
            other => other?,
        };
        results.push(FoldResult {
            fold,
            weighted_f1: f1,
            class_weights: cw,
            train_size: train.len(),
            test_size: test.len(),
        });
    }
    let per_fold: Vec<f64> = results.iter().map(|r| r.weighted_f1).collect();
    Ok(CvResult {
        model: dataset.model.abbreviation.clone(),
        label: label_name.into(),
        mean_weighted_f1: per_fold.iter().sum::<f64>() / k as f64,
        per_fold,
        folds: results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMark {
    Best,
    RunnerUp,
    None,
}

/// Mean weighted F1 per (label, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Matrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// 1-based rank within each row.
    pub ranks: Vec<Vec<usize>>,
}

impl F1Matrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::Malformed("F1 matrix shape".into()));
        }
        if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Malformed("F1 value outside [0, 1]".into()));
        }
        let ranks = values.iter().map(|r| row_ranks(r)).collect();
        Ok(F1Matrix {
            rows,
            cols,
            values,
            ranks,
        })
    }

    pub fn mark(&self, row: usize, col: usize) -> RankMark {
        match self.ranks[row][col] {
            1 => RankMark::Best,
            2 | 3 => RankMark::RunnerUp,
            _ => RankMark::None,
        }
    }

    /// Side-by-side concatenation of two matrices over the same rows.
    /// Ranks are recomputed across the combined columns.
    pub fn concat(&self, other: &F1Matrix) -> Result<F1Matrix> {
        if self.rows != other.rows {
            return Err(Error::Malformed("row labels differ".into()));
        }
        let cols = self.cols.iter().chain(&other.cols).cloned().collect();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        F1Matrix::new(self.rows.clone(), cols, values)
    }
}

/// Descending ranks; equal values go to the earlier column first.
pub fn row_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (r, &c) in order.iter().enumerate() {
        ranks[c] = r + 1;
    }
    ranks
}

/// Cross-validates every (model, label) cell. Cells run in parallel on the
/// current rayon pool; assembly order is fixed.
pub fn build_f1_matrix(
    datasets: &[AlignedDataset],
    k: usize,
    seed: u64,
    config: &ProbeConfig,
) -> Result<F1Matrix> {
    let cells: Vec<(usize, usize)> = (0..NUM_LABELS)
        .flat_map(|l| (0..datasets.len()).map(move |m| (l, m)))
        .collect();
    let scores = cells
        .par_iter()
        .map(|&(l, m)| cross_validate(&datasets[m], l, k, seed, config).map(|r| r.mean_weighted_f1))
        .collect::<Result<Vec<f64>>>()?;
    let m = datasets.len();
    let values = (0..NUM_LABELS)
        .map(|l| scores[l * m..(l + 1) * m].to_vec())
        .collect();
    F1Matrix::new(
        LABEL_NAMES.iter().map(|s| s.to_string()).collect(),
        datasets
            .iter()
            .map(|d| d.model.abbreviation.clone())
            .collect(),
        values,
    )
}
