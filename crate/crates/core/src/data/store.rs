//! Precomputed embedding matrices and their on-disk layout.
//!
//! A store is described by a JSON manifest that points at two sibling files:
//! a raw data file holding `count * dim` little-endian `f32` values in
//! row-major order (no header), and an ids file with one UTF-8 id per line.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::registry::{ModelFamily, ModelSpec};
use crate::error::{Error, Result};
use crate::probe::l2_normalize;

pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub model: String,
    pub abbreviation: String,
    pub family: ModelFamily,
    pub dim: usize,
    pub count: usize,
    pub dtype: String,
    pub data_file: PathBuf,
    pub ids_file: PathBuf,
}

/// One model's article vectors.
///
/// Values are held as `f64`; freshly loaded stores are exactly representable
/// in `f32`, which keeps [`EmbeddingStore::save`] lossless for them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub model: ModelSpec,
    ids: Vec<String>,
    matrix: Array2<f64>,
    normalized: bool,
}

impl EmbeddingStore {
    pub fn new(model: ModelSpec, ids: Vec<String>, matrix: Array2<f64>) -> Result<Self> {
        model.validate()?;
        if ids.len() != matrix.nrows() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: matrix.nrows(),
            });
        }
        if matrix.ncols() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                found: matrix.ncols(),
            });
        }
        check_unique(&ids)?;
        if let Some(((row, col), _)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(EmbeddingStore {
            model,
            ids,
            matrix,
            normalized: false,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Returns a copy with every row scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Result<Self> {
        Ok(EmbeddingStore {
            model: self.model.clone(),
            ids: self.ids.clone(),
            matrix: l2_normalize(&self.matrix)?,
            normalized: true,
        })
    }

    /// Reads a store from its JSON manifest. File paths inside the manifest
    /// are resolved against the manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: EmbeddingManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
        if manifest.dtype != DTYPE_F32LE {
            return Err(Error::InvalidModel(format!(
                "unsupported dtype {:?} in {}",
                manifest.dtype,
                manifest_path.display()
            )));
        }
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let model = ModelSpec {
            name: manifest.model.clone(),
            abbreviation: manifest.abbreviation.clone(),
            family: manifest.family,
            dim: manifest.dim,
            param_size: String::new(),
        };
        model.validate()?;

        let data_path = base.join(&manifest.data_file);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let expected = (manifest.count as u64) * (manifest.dim as u64) * 4;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                path: data_path,
                expected,
                found: bytes.len() as u64,
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();

        let ids_path = base.join(&manifest.ids_file);
        let ids_text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let ids: Vec<String> = ids_text.lines().map(str::to_owned).collect();
        if ids.len() != manifest.count {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: manifest.count,
            });
        }

        let matrix = Array2::from_shape_vec((manifest.count, manifest.dim), values)
            .expect("shape checked against byte length");
        EmbeddingStore::new(model, ids, matrix)
    }

    /// Writes `<stem>.json`, `<stem>.f32` and `<stem>.ids` into `dir` and
    /// returns the manifest path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let data_name = format!("{stem}.f32");
        let ids_name = format!("{stem}.ids");

        let mut bytes = Vec::with_capacity(self.matrix.len() * 4);
        for v in self.matrix.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let data_path = dir.join(&data_name);
        fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;

        let mut ids = String::new();
        for id in &self.ids {
            ids.push_str(id);
            ids.push('\n');
        }
        let ids_path = dir.join(&ids_name);
        fs::write(&ids_path, ids).map_err(|e| Error::io(&ids_path, e))?;

        let manifest = EmbeddingManifest {
            model: self.model.name.clone(),
            abbreviation: self.model.abbreviation.clone(),
            family: self.model.family,
            dim: self.model.dim,
            count: self.ids.len(),
            dtype: DTYPE_F32LE.into(),
            data_file: data_name.into(),
            ids_file: ids_name.into(),
        };
        let manifest_path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest_path)
    }
}

pub(crate) fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}
