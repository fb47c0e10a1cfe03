use std::fs;
use std::path::Path;
use std::time::Duration;

use parallax_core::data::{
    align, AlignedDataset, EmbeddingStore, LabelTable, ModelFamily, ModelSpec, Registry,
    TopicCorpus, LABEL_NAMES,
};
use parallax_core::evaluation::{build_f1_matrix, F1Matrix};
use parallax_core::genprobe::{build_country_corpora, load_templates, GenError, HttpEndpoint};
use parallax_core::parallax::{
    assigned_topics, run_parallax_suite, score_corpora, train_deployment_probes, ParallaxReport,
    MEAN_LABEL,
};
use parallax_core::report::{write_delta_reports, write_f1_reports};
use parallax_core::Error;

use crate::config::RunConfig;
use crate::CliError;

const F1_CHINESE: &str = "f1_chinese.json";
const F1_WESTERN: &str = "f1_western.json";
const PARALLAX: &str = "parallax.json";

/// Outcome of one validation check.
#[derive(Debug, Clone)]
pub struct Check {
    pub subject: String,
    pub outcome: Result<(), String>,
}

impl Check {
    fn new(subject: impl Into<String>, outcome: Result<(), String>) -> Self {
        Check {
            subject: subject.into(),
            outcome,
        }
    }
}

/// Loads every input the configuration names and checks it.
pub fn validate(cfg: &RunConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let registry = match Registry::load(&cfg.registry_path) {
        Ok(r) if r.is_empty() => {
            checks.push(Check::new(
                cfg.registry_path.display().to_string(),
                Err("registry lists no models".into()),
            ));
            None
        }
        Ok(r) => {
            checks.push(Check::new(cfg.registry_path.display().to_string(), Ok(())));
            Some(r)
        }
        Err(e) => {
            checks.push(Check::new(
                cfg.registry_path.display().to_string(),
                Err(e.to_string()),
            ));
            None
        }
    };

    let labels = match LabelTable::load(&cfg.labels_csv) {
        Ok(t) => {
            if !t.dropped().is_empty() {
                log::warn!("{} incomplete label rows dropped", t.dropped().len());
            }
            checks.push(Check::new(cfg.labels_csv.display().to_string(), Ok(())));
            Some(t)
        }
        Err(e) => {
            checks.push(Check::new(
                cfg.labels_csv.display().to_string(),
                Err(e.to_string()),
            ));
            None
        }
    };

    let Some(registry) = registry else {
        return checks;
    };

    for spec in registry.models() {
        let path = cfg.quality_manifest(&spec.abbreviation);
        let outcome = EmbeddingStore::load(&path)
            .and_then(|s| check_store(spec, &s).map(|_| s))
            .map_err(|e| e.to_string())
            .and_then(|store| match &labels {
                Some(labels) => check_quality(&store, labels, cfg.k),
                None => Ok(()),
            });
        checks.push(Check::new(path.display().to_string(), outcome));
    }

    let mut corpora = Vec::new();
    for path in &cfg.topics {
        let outcome = TopicCorpus::load(path).and_then(|c| {
            for s in c.stores() {
                if let Some(spec) = registry.get(&s.model.abbreviation) {
                    check_store(spec, s)?;
                }
            }
            Ok(c)
        });
        match outcome {
            Ok(c) => {
                corpora.push(c);
                checks.push(Check::new(path.display().to_string(), Ok(())));
            }
            Err(e) => checks.push(Check::new(path.display().to_string(), Err(e.to_string()))),
        }
    }
    if !cfg.topics.is_empty() && corpora.len() == cfg.topics.len() {
        checks.push(Check::new(
            "topic coverage",
            check_coverage(&registry, &corpora),
        ));
    }
    checks
}

fn check_store(spec: &ModelSpec, store: &EmbeddingStore) -> parallax_core::Result<()> {
    let found = &store.model;
    if found.abbreviation != spec.abbreviation || found.family != spec.family {
        return Err(Error::InvalidModel(format!(
            "store declares {} ({}) but the registry expects {} ({})",
            found.abbreviation, found.family, spec.abbreviation, spec.family
        )));
    }
    if found.dim != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            found: found.dim,
        });
    }
    Ok(())
}

fn check_quality(store: &EmbeddingStore, labels: &LabelTable, k: usize) -> Result<(), String> {
    let data = align(&store.normalized().map_err(|e| e.to_string())?, labels)
        .map_err(|e| e.to_string())?;
    for (l, name) in LABEL_NAMES.iter().enumerate() {
        let positives = data.y.column(l).iter().filter(|&&v| v == 1).count();
        let smaller = positives.min(data.len() - positives);
        if smaller < 2 {
            return Err(format!(
                "label {name:?} has {smaller} examples of its minority class"
            ));
        }
        if smaller < k {
            log::warn!(
                "{}: label {name:?} has fewer minority examples ({smaller}) than folds ({k})",
                store.model.abbreviation
            );
        }
    }
    Ok(())
}

fn check_coverage(registry: &Registry, corpora: &[TopicCorpus]) -> Result<(), String> {
    for spec in registry.models() {
        for topic in assigned_topics(spec.family) {
            let present = corpora
                .iter()
                .find(|c| c.topic == topic)
                .and_then(|c| c.store_for(&spec.abbreviation))
                .is_some();
            if !present {
                return Err(format!(
                    "no {topic} corpus embedded by {} ({} family)",
                    spec.abbreviation, spec.family
                ));
            }
        }
    }
    Ok(())
}

struct QualityInputs {
    registry: Registry,
    datasets: Vec<AlignedDataset>,
}

fn load_quality(cfg: &RunConfig) -> Result<QualityInputs, CliError> {
    let registry = Registry::load(&cfg.registry_path)?;
    let labels = LabelTable::load(&cfg.labels_csv)?;
    let datasets = registry
        .models()
        .iter()
        .map(|spec| {
            let store = EmbeddingStore::load(&cfg.quality_manifest(&spec.abbreviation))?;
            check_store(spec, &store)?;
            align(&store.normalized()?, &labels)
        })
        .collect::<parallax_core::Result<Vec<_>>>()?;
    Ok(QualityInputs { registry, datasets })
}

fn load_corpora(cfg: &RunConfig) -> Result<Vec<TopicCorpus>, CliError> {
    if cfg.topics.is_empty() {
        return Err(CliError::Config("no topic manifests configured".into()));
    }
    Ok(cfg
        .topics
        .iter()
        .map(|p| TopicCorpus::load(p))
        .collect::<parallax_core::Result<Vec<_>>>()?)
}

fn family_datasets(inputs: &QualityInputs, family: ModelFamily) -> Vec<AlignedDataset> {
    inputs
        .datasets
        .iter()
        .filter(|d| d.model.family == family)
        .cloned()
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.into(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    write_file(path, &(text + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Data(Error::Json {
            path: path.into(),
            source: e,
        })
    })
}

/// Cross-validated F1 matrices per family.
pub fn cv(cfg: &RunConfig) -> Result<(F1Matrix, F1Matrix), CliError> {
    let inputs = load_quality(cfg)?;
    let chinese = build_f1_matrix(
        &family_datasets(&inputs, ModelFamily::Chinese),
        cfg.k,
        cfg.seed,
        &cfg.probe,
    )?;
    let western = build_f1_matrix(
        &family_datasets(&inputs, ModelFamily::Western),
        cfg.k,
        cfg.seed,
        &cfg.probe,
    )?;
    let results = cfg.results_dir();
    write_json(&results.join(F1_CHINESE), &chinese)?;
    write_json(&results.join(F1_WESTERN), &western)?;
    write_f1_reports(&cfg.output_dir, &chinese, &western)?;
    Ok((chinese, western))
}

/// Trains deployment probes and writes them with their per-topic scores.
pub fn score(cfg: &RunConfig) -> Result<usize, CliError> {
    let inputs = load_quality(cfg)?;
    let corpora = load_corpora(cfg)?
        .iter()
        .map(TopicCorpus::normalized)
        .collect::<parallax_core::Result<Vec<_>>>()?;
    let probes = train_deployment_probes(&inputs.datasets, &inputs.registry, &cfg.probe)?;
    let scores = score_corpora(&probes, &corpora, &inputs.registry)?;
    let results = cfg.results_dir();
    write_json(&results.join("probes.json"), &probes)?;
    let mut csv = String::from("model,family,topic,label,mean\n");
    for s in &scores {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.model, s.family, s.topic, s.label, s.mean
        ));
    }
    write_file(&results.join("model_scores.csv"), &csv)?;
    Ok(scores.len())
}

/// Full parallax suite plus delta reports.
pub fn parallax(cfg: &RunConfig) -> Result<ParallaxReport, CliError> {
    let inputs = load_quality(cfg)?;
    let corpora = load_corpora(cfg)?;
    let report = run_parallax_suite(&inputs.datasets, &corpora, &inputs.registry, &cfg.probe)?;
    write_json(&cfg.results_dir().join(PARALLAX), &report)?;
    write_delta_reports(&cfg.output_dir, &report.deltas)?;
    Ok(report)
}

/// Re-renders reports from stored results. Returns the names rendered.
pub fn report(cfg: &RunConfig) -> Result<Vec<&'static str>, CliError> {
    let results = cfg.results_dir();
    let mut rendered = Vec::new();
    let (zh, en) = (results.join(F1_CHINESE), results.join(F1_WESTERN));
    if zh.exists() && en.exists() {
        let chinese: F1Matrix = read_json(&zh)?;
        let western: F1Matrix = read_json(&en)?;
        let chinese = F1Matrix::new(chinese.rows, chinese.cols, chinese.values)?;
        let western = F1Matrix::new(western.rows, western.cols, western.values)?;
        write_f1_reports(&cfg.output_dir, &chinese, &western)?;
        rendered.push("f1");
    }
    let px = results.join(PARALLAX);
    if px.exists() {
        let stored: ParallaxReport = read_json(&px)?;
        write_delta_reports(&cfg.output_dir, &stored.deltas)?;
        rendered.push("deltas");
    }
    if rendered.is_empty() {
        return Err(CliError::Validation(format!(
            "no results under {}; run cv or parallax first",
            results.display()
        )));
    }
    Ok(rendered)
}

/// Generates the country corpora through the configured HTTP endpoint.
pub fn generate(cfg: &RunConfig) -> Result<String, CliError> {
    let gen = cfg
        .generation
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no \"generation\" section".into()))?;
    let templates = load_templates(&gen.templates)?;
    let endpoint =
        HttpEndpoint::from_env(Duration::from_secs(gen.timeout_secs)).map_err(|e| match e {
            GenError::NotConfigured => CliError::Config(e.to_string()),
            e => CliError::from(e),
        })?;
    let out = cfg.output_dir.join(&gen.output_subdir);
    let summary = build_country_corpora(
        &templates,
        &gen.count_list(),
        &endpoint,
        &gen.corpus_options(cfg.seed, cfg.parallelism),
        &out,
    )?;
    Ok(summary.to_markdown())
}

/// Plain-text delta listing for the terminal.
pub fn format_deltas(report: &ParallaxReport) -> String {
    let mut out = String::new();
    for d in &report.deltas {
        let marker = if d.label == MEAN_LABEL {
            "mean"
        } else {
            &d.label
        };
        out.push_str(&format!(
            "{:<18} {:<22} {:+.3}\n",
            d.pairing.as_str(),
            marker,
            d.delta
        ));
    }
    out
}
