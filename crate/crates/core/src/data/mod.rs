//! Corpus types: embedding stores, label tables, their alignment, and topic
//! corpora.

mod labels;
mod registry;
mod store;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use labels::{
    binarize, label_index, LabelTable, DEFAULT_THRESHOLD, ID_COLUMN, LABEL_NAMES, NUM_LABELS,
};
pub use registry::{ModelFamily, ModelSpec, Registry};
pub use store::{EmbeddingManifest, EmbeddingStore, DTYPE_F32LE};

use crate::error::{Error, Result};

/// Articles present in both an embedding store and a label table.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub model: ModelSpec,
    pub ids: Vec<String>,
    pub x: Array2<f64>,
    /// Binarized labels, one column per entry of [`LABEL_NAMES`].
    pub y: Array2<u8>,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn label_column(&self, label: usize) -> Vec<u8> {
        self.y.column(label).to_vec()
    }
}

/// Intersects `store` with `labels`, keeping the store's row order.
pub fn align(store: &EmbeddingStore, labels: &LabelTable) -> Result<AlignedDataset> {
    let by_id: HashMap<&str, usize> = labels
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut store_rows = Vec::new();
    let mut label_rows = Vec::new();
    for (i, id) in store.ids().iter().enumerate() {
        if let Some(&j) = by_id.get(id.as_str()) {
            store_rows.push(i);
            label_rows.push(j);
        }
    }
    if store_rows.is_empty() {
        return Err(Error::NoAlignedArticles {
            model: store.model.abbreviation.clone(),
        });
    }

    let ids = store_rows.iter().map(|&i| store.ids()[i].clone()).collect();
    let x = store.matrix().select(Axis(0), &store_rows);
    let scores = labels.scores().select(Axis(0), &label_rows);
    Ok(AlignedDataset {
        model: store.model.clone(),
        ids,
        x,
        y: binarize(scores.view(), DEFAULT_THRESHOLD),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Palestine,
    Us,
    China,
}

impl Topic {
    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Palestine => "palestine",
            Topic::Us => "us",
            Topic::China => "china",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// On-disk description of a topic corpus: the topic plus one embedding
/// manifest per scoring model, relative to this file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicManifest {
    pub topic: Topic,
    pub stores: Vec<PathBuf>,
}

/// One topic's articles embedded by every model that scores it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicCorpus {
    pub topic: Topic,
    stores: Vec<EmbeddingStore>,
}

impl TopicCorpus {
    pub fn new(topic: Topic, stores: Vec<EmbeddingStore>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidCorpus {
            topic: topic.to_string(),
            reason,
        };
        if let Some(first) = stores.first() {
            for s in &stores[1..] {
                if s.ids() != first.ids() {
                    return Err(invalid(format!(
                        "ids of {} differ from ids of {}",
                        s.model.abbreviation, first.model.abbreviation
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in &stores {
            if !seen.insert(s.model.abbreviation.as_str()) {
                return Err(invalid(format!(
                    "model {} appears twice",
                    s.model.abbreviation
                )));
            }
        }
        Ok(TopicCorpus { topic, stores })
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: TopicManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let stores = manifest
            .stores
            .iter()
            .map(|p| EmbeddingStore::load(&base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        TopicCorpus::new(manifest.topic, stores)
    }

    pub fn stores(&self) -> &[EmbeddingStore] {
        &self.stores
    }

    pub fn store_for(&self, abbreviation: &str) -> Option<&EmbeddingStore> {
        self.stores
            .iter()
            .find(|s| s.model.abbreviation == abbreviation)
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(TopicCorpus {
            topic: self.topic,
            stores: self
                .stores
                .iter()
                .map(EmbeddingStore::normalized)
                .collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub mean_words: f64,
    /// Population standard deviation.
    pub std_words: f64,
}

/// Word-count summary over whitespace-delimited tokens.
pub fn corpus_stats<S: AsRef<str>>(texts: &[S]) -> Result<CorpusStats> {
    if texts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts: Vec<f64> = texts
        .iter()
        .map(|t| t.as_ref().split_whitespace().count() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Ok(CorpusStats {
        count: counts.len(),
        mean_words: mean,
        std_words: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(dim: usize) -> ModelSpec {
        ModelSpec {
            name: "m".into(),
            abbreviation: "M".into(),
            family: ModelFamily::Western,
            dim,
            param_size: String::new(),
        }
    }

    fn store(ids: &[&str]) -> EmbeddingStore {
        let x = Array2::from_shape_fn((ids.len(), 2), |(i, j)| (i * 2 + j) as f64 + 1.0);
        EmbeddingStore::new(spec(2), ids.iter().map(|s| s.to_string()).collect(), x).unwrap()
    }

    fn labels(ids: &[&str]) -> LabelTable {
        let scores = Array2::from_shape_fn((ids.len(), NUM_LABELS), |(i, _)| 1.0 + i as f64);
        LabelTable::new(ids.iter().map(|s| s.to_string()).collect(), scores).unwrap()
    }

    #[test]
    fn align_intersects_in_store_order() {
        let d = align(&store(&["a", "b", "c"]), &labels(&["d", "c", "b"])).unwrap();
        assert_eq!(d.ids, ["b", "c"]);
        assert_eq!(d.x, array![[3.0, 4.0], [5.0, 6.0]]);
        // c has score 2.0 (not > 2), b has 3.0
        assert!(d.y.row(0).iter().all(|&v| v == 1));
        assert!(d.y.row(1).iter().all(|&v| v == 0));
    }

    #[test]
    fn align_disjoint_is_error() {
        let err = align(&store(&["a"]), &labels(&["z"])).unwrap_err();
        assert!(err.to_string().contains("no aligned articles"));
    }

    #[test]
    fn align_identical_keeps_count() {
        let ids = ["p", "q", "r", "s"];
        assert_eq!(align(&store(&ids), &labels(&ids)).unwrap().len(), 4);
    }

    #[test]
    fn corpus_stats_population_std() {
        let s = corpus_stats(&["a b", "a b c d"]).unwrap();
        assert_eq!(s.count, 2);
        assert_eq!(s.mean_words, 3.0);
        assert_eq!(s.std_words, 1.0);
        assert_eq!(corpus_stats(&["one two  three"]).unwrap().std_words, 0.0);
        assert!(matches!(corpus_stats::<&str>(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn topic_corpus_requires_shared_ids() {
        let mut other = store(&["a", "c"]);
        other.model.abbreviation = "N".into();
        assert!(TopicCorpus::new(Topic::China, vec![store(&["a", "b"]), other]).is_err());
    }
}
