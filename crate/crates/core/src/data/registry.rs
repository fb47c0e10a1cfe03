use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training origin of an embedding model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Chinese,
    Western,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Chinese => "chinese",
            ModelFamily::Western => "western",
        }
    }

    pub fn other(self) -> Self {
        match self {
            ModelFamily::Chinese => ModelFamily::Western,
            ModelFamily::Western => ModelFamily::Chinese,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub abbreviation: String,
    pub family: ModelFamily,
    pub dim: usize,
    /// Free-form size string such as "0.6B"; never interpreted.
    #[serde(default)]
    pub param_size: String,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidModel("empty model name".into()));
        }
        if self.abbreviation.trim().is_empty() {
            return Err(Error::InvalidModel(format!(
                "model {:?} has an empty abbreviation",
                self.name
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidModel(format!(
                "model {:?} has dim 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// Ordered list of models. Order defines table columns and aggregation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModelSpec>", into = "Vec<ModelSpec>")]
pub struct Registry {
    models: Vec<ModelSpec>,
}

impl TryFrom<Vec<ModelSpec>> for Registry {
    type Error = Error;

    fn try_from(models: Vec<ModelSpec>) -> Result<Self> {
        Registry::new(models)
    }
}

impl From<Registry> for Vec<ModelSpec> {
    fn from(r: Registry) -> Self {
        r.models
    }
}

impl Registry {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &models {
            m.validate()?;
            if !seen.insert(m.abbreviation.as_str()) {
                return Err(Error::InvalidModel(format!(
                    "abbreviation {:?} is not unique",
                    m.abbreviation
                )));
            }
        }
        Ok(Registry { models })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn get(&self, abbreviation: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.abbreviation == abbreviation)
    }

    pub fn family(&self, family: ModelFamily) -> impl Iterator<Item = &ModelSpec> {
        self.models.iter().filter(move |m| m.family == family)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
