use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::store::check_unique;
use crate::error::{Error, Result};

/// The annotated quality dimensions, in file and table order.
pub const LABEL_NAMES: [&str; 15] = [
    "Fluency",
    "Conciseness",
    "Descriptiveness",
    "Novelty",
    "Completeness",
    "Referencing",
    "Formality",
    "Richness",
    "Attractiveness",
    "Technicality",
    "Popularity",
    "Subjectivity",
    "Positive Emotion",
    "Negative Emotion",
    "Quality",
];

pub const NUM_LABELS: usize = LABEL_NAMES.len();

/// Scores above this value are positive.
pub const DEFAULT_THRESHOLD: f64 = 2.0;

pub const ID_COLUMN: &str = "article_id";

pub fn label_index(name: &str) -> Option<usize> {
    LABEL_NAMES.iter().position(|l| *l == name)
}

/// Raw 1-5 annotations for complete rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    ids: Vec<String>,
    scores: Array2<f64>,
    /// Ids of rows dropped because at least one label cell was empty.
    dropped: Vec<String>,
}

impl LabelTable {
    pub fn new(ids: Vec<String>, scores: Array2<f64>) -> Result<Self> {
        if scores.ncols() != NUM_LABELS {
            return Err(Error::LabelColumns(format!(
                "found {} score columns",
                scores.ncols()
            )));
        }
        if ids.len() != scores.nrows() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: scores.nrows(),
            });
        }
        check_unique(&ids)?;
        for ((row, col), &v) in scores.indexed_iter() {
            if !(1.0..=5.0).contains(&v) {
                return Err(Error::ScoreOutOfRange {
                    id: ids[row].clone(),
                    label: LABEL_NAMES[col].into(),
                    value: v,
                });
            }
        }
        Ok(LabelTable {
            ids,
            scores,
            dropped: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(csv_err)?;

        let header = reader.headers().map_err(csv_err)?.clone();
        if header.len() != NUM_LABELS + 1 {
            return Err(Error::LabelColumns(format!(
                "found {} label columns in {}",
                header.len().saturating_sub(1),
                path.display()
            )));
        }
        if &header[0] != ID_COLUMN {
            return Err(Error::LabelColumns(format!(
                "first column must be {ID_COLUMN:?}, found {:?}",
                &header[0]
            )));
        }
        for (j, name) in LABEL_NAMES.iter().enumerate() {
            if header[j + 1].trim() != *name {
                return Err(Error::LabelColumns(format!(
                    "column {} must be {name:?}, found {:?}",
                    j + 1,
                    &header[j + 1]
                )));
            }
        }

        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut dropped = Vec::new();
        let mut row = [0.0f64; NUM_LABELS];
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let id = record.get(0).unwrap_or("").trim().to_owned();
            if record.len() != NUM_LABELS + 1 {
                return Err(Error::LabelColumns(format!(
                    "row {id:?} has {} label columns",
                    record.len().saturating_sub(1)
                )));
            }
            let mut complete = true;
            for (j, cell) in record.iter().skip(1).enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    complete = false;
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::BadNumber {
                    id: id.clone(),
                    label: LABEL_NAMES[j].into(),
                    text: cell.into(),
                })?;
                if !(1.0..=5.0).contains(&v) {
                    return Err(Error::ScoreOutOfRange {
                        id: id.clone(),
                        label: LABEL_NAMES[j].into(),
                        value: v,
                    });
                }
                row[j] = v;
            }
            if complete {
                ids.push(id);
                values.extend_from_slice(&row);
            } else {
                dropped.push(id);
            }
        }
        if !dropped.is_empty() {
            log::warn!(
                "{}: dropped {} rows with missing labels",
                path.display(),
                dropped.len()
            );
        }
        let scores = Array2::from_shape_vec((ids.len(), NUM_LABELS), values)
            .expect("rows have NUM_LABELS values");
        let mut table = LabelTable::new(ids, scores)?;
        table.dropped = dropped;
        Ok(table)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn binarized(&self) -> Array2<u8> {
        binarize(self.scores.view(), DEFAULT_THRESHOLD)
    }

    /// Writes the table in the label CSV format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec![ID_COLUMN];
        header.extend(LABEL_NAMES);
        w.write_record(&header).map_err(csv_err)?;
        for (id, row) in self.ids.iter().zip(self.scores.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// 1 where the score is strictly greater than `threshold`, else 0.
pub fn binarize(scores: ArrayView2<'_, f64>, threshold: f64) -> Array2<u8> {
    scores.mapv(|s| u8::from(s > threshold))
}
