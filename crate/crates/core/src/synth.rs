//! Seeded synthetic corpora with known structure.
//!
//! Every article has a latent unit vector with one coordinate per label plus
//! a slack coordinate. Label `l` is positive with probability
//! `sigmoid(slope * latent[l])`, so a linear probe can recover it. Each model
//! sees the latent vector plus its own noise, padded to the model dimension.
//! Topic articles sit near the slack axis, which makes every probe score them
//! at about 0.5 unless a shift is planted for the Chinese family.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{
    AlignedDataset, EmbeddingStore, LabelTable, ModelFamily, ModelSpec, Registry, Topic,
    TopicCorpus, TopicManifest, NUM_LABELS,
};
use crate::error::{Error, Result};
use crate::probe::l2_normalize;

/// Latent coordinates shared by all models: one per label plus slack.
pub const LATENT_DIM: usize = NUM_LABELS + 1;
const SLACK: usize = NUM_LABELS;
const TOPIC_SPREAD: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub models: Vec<ModelSpec>,
    pub n_quality: usize,
    /// Articles per topic corpus.
    pub n_topic: usize,
    /// Logit slope between a latent label coordinate and its probability.
    pub slope: f64,
    /// Std of per-model Gaussian noise on quality embeddings.
    pub model_noise: f64,
    /// `(label index, probability shift)` pairs planted into the Chinese
    /// family's view of every topic corpus.
    pub planted: Vec<(usize, f64)>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 7,
            models: demo_models(),
            n_quality: 400,
            n_topic: 40,
            slope: 4.0,
            model_noise: 0.05,
            planted: Vec::new(),
        }
    }
}

/// Two small models per family with distinct dimensions.
pub fn demo_models() -> Vec<ModelSpec> {
    let spec = |name: &str, abbr: &str, family, dim, size: &str| ModelSpec {
        name: name.into(),
        abbreviation: abbr.into(),
        family,
        dim,
        param_size: size.into(),
    };
    vec![
        spec("synth-zh-small", "ZS", ModelFamily::Chinese, 16, "0.1B"),
        spec("synth-zh-large", "ZL", ModelFamily::Chinese, 24, "0.3B"),
        spec("synth-en-small", "ES", ModelFamily::Western, 20, "0.1B"),
        spec("synth-en-large", "EL", ModelFamily::Western, 32, "0.3B"),
    ]
}

/// A single-model family pair sharing one model name, so both see identical
/// embeddings.
pub fn twin_models(dim: usize) -> Vec<ModelSpec> {
    [("TC", ModelFamily::Chinese), ("TW", ModelFamily::Western)]
        .into_iter()
        .map(|(abbr, family)| ModelSpec {
            name: "synth-twin".into(),
            abbreviation: abbr.into(),
            family,
            dim,
            param_size: String::new(),
        })
        .collect()
}

/// Latent shift that moves `sigmoid(slope * x)` from 0.5 to `0.5 + shift`.
pub fn planted_offset(slope: f64, shift: f64) -> f64 {
    let p = 0.5 + shift;
    (p / (1.0 - p)).ln() / slope
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub registry: Registry,
    /// Raw (unnormalized) quality embeddings, one store per model.
    pub quality: Vec<EmbeddingStore>,
    pub labels: LabelTable,
    pub corpora: Vec<TopicCorpus>,
}

/// Where [`SynthCorpus::write_tree`] put things.
#[derive(Debug, Clone)]
pub struct FixtureLayout {
    pub root: PathBuf,
    pub registry: PathBuf,
    pub labels: PathBuf,
    /// Holds `<ABBR>.json` quality manifests.
    pub data_dir: PathBuf,
    pub topics: Vec<PathBuf>,
}

impl SynthCorpus {
    pub fn generate(opts: &SynthOptions) -> Result<Self> {
        if opts.n_quality == 0 || opts.n_topic == 0 {
            return Err(Error::EmptyCorpus);
        }
        for m in &opts.models {
            if m.dim < LATENT_DIM {
                return Err(Error::InvalidModel(format!(
                    "synthetic model {} needs dim >= {LATENT_DIM}",
                    m.abbreviation
                )));
            }
        }
        for &(label, shift) in &opts.planted {
            if label >= NUM_LABELS || shift.abs() >= 0.5 {
                return Err(Error::InvalidConfig(format!(
                    "cannot plant shift {shift} on label {label}"
                )));
            }
        }
        let registry = Registry::new(opts.models.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

        let latent: Vec<Array1<f64>> = (0..opts.n_quality)
            .map(|_| unit_gaussian(&mut rng, LATENT_DIM))
            .collect();
        let quality_ids: Vec<String> = (0..opts.n_quality).map(|i| format!("q{i:05}")).collect();
        let mut scores = Array2::zeros((opts.n_quality, NUM_LABELS));
        for (i, x) in latent.iter().enumerate() {
            for l in 0..NUM_LABELS {
                let p = crate::probe::sigmoid(opts.slope * x[l]);
                let positive = rng.random_bool(p);
                scores[[i, l]] = raw_score(&mut rng, positive);
            }
        }
        let labels = LabelTable::new(quality_ids.clone(), scores)?;

        let quality = opts
            .models
            .iter()
            .map(|m| {
                let mut model_rng = ChaCha8Rng::seed_from_u64(model_seed(opts.seed, &m.name));
                let rows: Vec<Vec<f64>> = latent
                    .iter()
                    .map(|x| {
                        let scale = model_rng.random_range(0.5..2.0);
                        (0..m.dim)
                            .map(|j| {
                                let base = if j < LATENT_DIM { x[j] } else { 0.0 };
                                let noise: f64 = model_rng.sample(StandardNormal);
                                scale * (base + opts.model_noise * noise)
                            })
                            .collect()
                    })
                    .collect();
                EmbeddingStore::new(m.clone(), quality_ids.clone(), as_f32_matrix(&rows, m.dim))
            })
            .collect::<Result<Vec<_>>>()?;

        // One pool of topic articles serves all three topics, so cross-topic
        // comparisons only differ by what was planted.
        let topic_latent: Vec<Vec<f64>> = (0..opts.n_topic)
            .map(|_| {
                (0..NUM_LABELS)
                    .map(|_| TOPIC_SPREAD * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut chinese_latent = topic_latent.clone();
        for &(label, shift) in &opts.planted {
            let offset = planted_offset(opts.slope, shift);
            for x in &mut chinese_latent {
                x[label] += offset;
            }
        }

        let corpora = [Topic::Palestine, Topic::Us, Topic::China]
            .into_iter()
            .map(|topic| {
                let ids: Vec<String> = (0..opts.n_topic)
                    .map(|i| format!("{}-{i:04}", topic.as_str()))
                    .collect();
                let stores = opts
                    .models
                    .iter()
                    .map(|m| {
                        let source = match m.family {
                            ModelFamily::Chinese => &chinese_latent,
                            ModelFamily::Western => &topic_latent,
                        };
                        let rows: Vec<Vec<f64>> =
                            source.iter().map(|x| topic_row(x, m.dim)).collect();
                        EmbeddingStore::new(m.clone(), ids.clone(), as_f32_matrix(&rows, m.dim))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TopicCorpus::new(topic, stores)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(SynthCorpus {
            registry,
            quality,
            labels,
            corpora,
        })
    }

    /// Normalized quality embeddings aligned with the labels, in registry order.
    pub fn datasets(&self) -> Result<Vec<AlignedDataset>> {
        self.quality
            .iter()
            .map(|s| crate::data::align(&s.normalized()?, &self.labels))
            .collect()
    }

    /// Same data with every model's family flipped.
    pub fn swap_families(&self) -> Result<Self> {
        let flip = |m: &ModelSpec| ModelSpec {
            family: m.family.other(),
            ..m.clone()
        };
        let flip_store = |s: &EmbeddingStore| {
            EmbeddingStore::new(flip(&s.model), s.ids().to_vec(), s.matrix().clone())
        };
        Ok(SynthCorpus {
            registry: Registry::new(self.registry.models().iter().map(flip).collect())?,
            quality: self.quality.iter().map(flip_store).collect::<Result<_>>()?,
            labels: self.labels.clone(),
            corpora: self
                .corpora
                .iter()
                .map(|c| {
                    TopicCorpus::new(
                        c.topic,
                        c.stores().iter().map(flip_store).collect::<Result<_>>()?,
                    )
                })
                .collect::<Result<_>>()?,
        })
    }

    /// Writes registry, labels, quality stores and topic corpora under `root`.
    pub fn write_tree(&self, root: &Path) -> Result<FixtureLayout> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let registry = root.join("registry.json");
        let json = serde_json::to_string_pretty(&self.registry).expect("registry serializes");
        fs::write(&registry, json + "\n").map_err(|e| Error::io(&registry, e))?;

        let labels = root.join("labels.csv");
        self.labels.save(&labels)?;

        let data_dir = root.join("quality");
        for s in &self.quality {
            s.save(&data_dir, &s.model.abbreviation)?;
        }

        let mut topics = Vec::new();
        let topic_root = root.join("topics");
        for corpus in &self.corpora {
            let dir = topic_root.join(corpus.topic.as_str());
            let mut stores = Vec::new();
            for s in corpus.stores() {
                s.save(&dir, &s.model.abbreviation)?;
                stores.push(
                    Path::new(corpus.topic.as_str()).join(format!("{}.json", s.model.abbreviation)),
                );
            }
            let manifest = TopicManifest {
                topic: corpus.topic,
                stores,
            };
            let path = topic_root.join(format!("{}.json", corpus.topic.as_str()));
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
            topics.push(path);
        }

        Ok(FixtureLayout {
            root: root.to_path_buf(),
            registry,
            labels,
            data_dir,
            topics,
        })
    }
}

/// A dataset where every label is written into its own coordinate as +-1,
/// so each label is linearly separable. Rows are L2-normalized.
pub fn separable_dataset(n: usize, seed: u64) -> Result<AlignedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = Array2::from_shape_fn((n, NUM_LABELS), |_| u8::from(rng.random_bool(0.5)));
    let raw = Array2::from_shape_fn((n, NUM_LABELS), |(i, l)| 2.0 * f64::from(y[[i, l]]) - 1.0);
    Ok(AlignedDataset {
        model: ModelSpec {
            name: "synth-separable".into(),
            abbreviation: "SEP".into(),
            family: ModelFamily::Western,
            dim: NUM_LABELS,
            param_size: String::new(),
        },
        ids: (0..n).map(|i| format!("s{i:05}")).collect(),
        x: l2_normalize(&raw)?,
        y,
    })
}

/// Copy of `dataset` whose label rows are shuffled against the embeddings.
pub fn permute_labels(dataset: &AlignedDataset, seed: u64) -> AlignedDataset {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    AlignedDataset {
        y: dataset.y.select(ndarray::Axis(0), &order),
        ..dataset.clone()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Raw 1-5 score consistent with the binarized label; 2.0 sits on the
/// negative side of the threshold.
fn raw_score(rng: &mut ChaCha8Rng, positive: bool) -> f64 {
    const HIGH: [f64; 6] = [2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
    const LOW: [f64; 3] = [1.0, 1.5, 2.0];
    if positive {
        HIGH[rng.random_range(0..HIGH.len())]
    } else {
        LOW[rng.random_range(0..LOW.len())]
    }
}

fn topic_row(label_coords: &[f64], dim: usize) -> Vec<f64> {
    let used: f64 = label_coords.iter().map(|v| v * v).sum();
    let mut row = vec![0.0; dim];
    row[..NUM_LABELS].copy_from_slice(label_coords);
    row[SLACK] = (1.0 - used).max(0.0).sqrt();
    row
}

fn as_f32_matrix(rows: &[Vec<f64>], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| f64::from(rows[i][j] as f32))
}

fn model_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a keeps the per-model stream stable across toolchains.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}
