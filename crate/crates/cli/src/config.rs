//! Run configuration: one JSON file, paths relative to that file, plus a
//! few command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use parallax_core::genprobe::{CorpusOptions, Country, RetryPolicy};
use parallax_core::probe::ProbeConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_k() -> usize {
    5
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub registry_path: PathBuf,
    /// Holds one `<ABBR>.json` embedding manifest per registered model.
    pub data_dir: PathBuf,
    pub labels_csv: PathBuf,
    #[serde(default)]
    pub topics: Vec<PathBuf>,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// JSON list of framing templates.
    pub templates: PathBuf,
    pub counts: BTreeMap<Country, usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_delay_ms")]
    pub base_delay_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Subdirectory of the output directory receiving the corpora.
    #[serde(default = "default_corpus_dir")]
    pub output_subdir: PathBuf,
}

fn default_temperature() -> f64 {
    parallax_core::genprobe::DEFAULT_TEMPERATURE
}

fn default_top_p() -> f64 {
    parallax_core::genprobe::DEFAULT_TOP_P
}

fn default_max_tokens() -> u32 {
    parallax_core::genprobe::DEFAULT_MAX_TOKENS
}

fn default_attempts() -> u32 {
    3
}

fn default_delay_ms() -> u64 {
    500
}

fn default_timeout() -> u64 {
    120
}

fn default_corpus_dir() -> PathBuf {
    PathBuf::from("corpora")
}

/// Flag values that replace the file's settings when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
}

impl RunConfig {
    /// Reads `path`, resolves relative paths against its directory and
    /// applies `overrides`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(p) = overrides.parallelism {
            cfg.parallelism = p;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.registry_path);
        join(&mut self.data_dir);
        join(&mut self.labels_csv);
        join(&mut self.output_dir);
        self.topics.iter_mut().for_each(join);
        if let Some(g) = &mut self.generation {
            join(&mut g.templates);
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.k < 2 {
            return Err(CliError::Config(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        self.probe
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn quality_manifest(&self, abbreviation: &str) -> PathBuf {
        self.data_dir.join(format!("{abbreviation}.json"))
    }

    pub fn results_dir(&self) -> PathBuf {
        self.output_dir.join("results")
    }
}

impl GenerationConfig {
    pub fn corpus_options(&self, seed: u64, parallelism: usize) -> CorpusOptions {
        CorpusOptions {
            seed,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            retry: RetryPolicy {
                max_attempts: self.max_attempts,
                base_delay: Duration::from_millis(self.base_delay_ms),
            },
            parallelism,
        }
    }

    pub fn count_list(&self) -> Vec<(Country, usize)> {
        self.counts.iter().map(|(&c, &n)| (c, n)).collect()
    }
}
