//! Family-level probe scores on topic corpora and the parallax delta
//! (Chinese-family mean minus Western-family mean).

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    AlignedDataset, EmbeddingStore, ModelFamily, Registry, Topic, TopicCorpus, LABEL_NAMES,
    NUM_LABELS,
};
use crate::error::{Error, Result};
use crate::probe::{predict_proba, train_probe, ProbeConfig, ProbeModel};

/// Label used for the across-label mean row of each pairing.
pub const MEAN_LABEL: &str = "__MEAN__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Both families score the Palestine corpus.
    MatchedPalestine,
    /// Chinese family on US coverage against Western family on China coverage.
    CrossTopic,
}

impl Pairing {
    pub const ALL: [Pairing; 2] = [Pairing::MatchedPalestine, Pairing::CrossTopic];

    pub fn as_str(self) -> &'static str {
        match self {
            Pairing::MatchedPalestine => "matched_palestine",
            Pairing::CrossTopic => "cross_topic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Pairing::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Topic scored by each family under this pairing.
    pub fn topic_for(self, family: ModelFamily) -> Topic {
        match (self, family) {
            (Pairing::MatchedPalestine, _) => Topic::Palestine,
            (Pairing::CrossTopic, ModelFamily::Chinese) => Topic::Us,
            (Pairing::CrossTopic, ModelFamily::Western) => Topic::China,
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Topics each family must score.
pub fn assigned_topics(family: ModelFamily) -> [Topic; 2] {
    match family {
        ModelFamily::Chinese => [Topic::Palestine, Topic::Us],
        ModelFamily::Western => [Topic::Palestine, Topic::China],
    }
}

/// Mean positive-class probability of one model's probe over one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub family: ModelFamily,
    pub topic: Topic,
    pub label: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    pub family: ModelFamily,
    pub topic: Topic,
    pub label: String,
    /// Model abbreviation and its mean probability, in registry order.
    pub per_model: Vec<(String, f64)>,
    pub family_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallaxDelta {
    pub pairing: Pairing,
    pub label: String,
    pub chinese_mean: f64,
    pub western_mean: f64,
    pub delta: f64,
}

/// Arithmetic mean of `predict_proba` over every article in `store`.
pub fn score_topic(probe: &ProbeModel, store: &EmbeddingStore) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !store.is_normalized() {
        return Err(Error::ProbeMismatch(format!(
            "store for {} is not l2-normalized",
            store.model.abbreviation
        )));
    }
    if !probe.model.is_empty() && probe.model != store.model.abbreviation {
        return Err(Error::ProbeMismatch(format!(
            "probe trained for {} applied to {} embeddings",
            probe.model, store.model.abbreviation
        )));
    }
    let p = predict_proba(probe, store.matrix().view())?;
    Ok(p.sum() / p.len() as f64)
}

/// Unweighted mean of per-model scores. The sum runs over sorted values so
/// the result does not depend on model order.
pub fn family_aggregate(
    scores: &[ModelScore],
    family: ModelFamily,
    topic: Topic,
    label: &str,
) -> Result<FamilyScore> {
    if scores.is_empty() {
        return Err(Error::FamilyMismatch(format!(
            "no {family} model scores for {label} on {topic}"
        )));
    }
    for s in scores {
        if s.family != family {
            return Err(Error::FamilyMismatch(format!(
                "model {} is {}, expected {family}",
                s.model, s.family
            )));
        }
        if s.topic != topic || s.label != label {
            return Err(Error::FamilyMismatch(format!(
                "score for {} is ({}, {}), expected ({topic}, {label})",
                s.model, s.topic, s.label
            )));
        }
    }
    let mut values: Vec<f64> = scores.iter().map(|s| s.mean).collect();
    values.sort_by(f64::total_cmp);
    let family_mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(FamilyScore {
        family,
        topic,
        label: label.to_owned(),
        per_model: scores.iter().map(|s| (s.model.clone(), s.mean)).collect(),
        family_mean,
    })
}

pub fn parallax_delta(
    chinese: &FamilyScore,
    western: &FamilyScore,
    pairing: Pairing,
) -> Result<ParallaxDelta> {
    if chinese.family != ModelFamily::Chinese || western.family != ModelFamily::Western {
        return Err(Error::FamilyMismatch(format!(
            "expected (chinese, western), got ({}, {})",
            chinese.family, western.family
        )));
    }
    if chinese.label != western.label {
        return Err(Error::LabelMismatch {
            left: chinese.label.clone(),
            right: western.label.clone(),
        });
    }
    Ok(ParallaxDelta {
        pairing,
        label: chinese.label.clone(),
        chinese_mean: chinese.family_mean,
        western_mean: western.family_mean,
        delta: chinese.family_mean - western.family_mean,
    })
}

/// Across-label summary row for one pairing.
pub fn mean_delta(deltas: &[ParallaxDelta]) -> Result<ParallaxDelta> {
    let first = deltas.first().ok_or(Error::EmptyCorpus)?;
    if deltas.iter().any(|d| d.pairing != first.pairing) {
        return Err(Error::MixedPairings);
    }
    let n = deltas.len() as f64;
    let chinese_mean = deltas.iter().map(|d| d.chinese_mean).sum::<f64>() / n;
    let western_mean = deltas.iter().map(|d| d.western_mean).sum::<f64>() / n;
    Ok(ParallaxDelta {
        pairing: first.pairing,
        label: MEAN_LABEL.into(),
        chinese_mean,
        western_mean,
        delta: chinese_mean - western_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallaxReport {
    pub model_scores: Vec<ModelScore>,
    pub family_scores: Vec<FamilyScore>,
    /// Per pairing: one delta per label in fixed label order, then the
    /// [`MEAN_LABEL`] row.
    pub deltas: Vec<ParallaxDelta>,
}

impl ParallaxReport {
    pub fn deltas_for(&self, pairing: Pairing) -> Vec<ParallaxDelta> {
        self.deltas
            .iter()
            .filter(|d| d.pairing == pairing)
            .cloned()
            .collect()
    }
}

/// Trains one deployment probe per (model, label) on the model's full
/// quality dataset. Output is in registry order, then label order.
pub fn train_deployment_probes(
    quality: &[AlignedDataset],
    registry: &Registry,
    config: &ProbeConfig,
) -> Result<Vec<ProbeModel>> {
    let datasets = registry
        .models()
        .iter()
        .map(|m| {
            quality
                .iter()
                .find(|d| d.model.abbreviation == m.abbreviation)
                .ok_or_else(|| Error::MissingQualityData(m.abbreviation.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|m| (0..NUM_LABELS).map(move |l| (m, l)))
        .collect();
    jobs.par_iter()
        .map(|&(m, l)| {
            let d = datasets[m];
            let y = d.label_column(l);
            let probe = train_probe(d.x.view(), &y, config).map_err(|e| match e {
                Error::DegenerateLabel { .. } => Error::SingleClassFold {
                    fold: 0,
                    label: LABEL_NAMES[l].into(),
                },
                e => e,
            })?;
            Ok(probe.named(&d.model.abbreviation, LABEL_NAMES[l]))
        })
        .collect()
}

/// Scores each probe on the corpora assigned to its model's family.
pub fn score_corpora(
    probes: &[ProbeModel],
    corpora: &[TopicCorpus],
    registry: &Registry,
) -> Result<Vec<ModelScore>> {
    let mut by_topic: HashMap<Topic, &TopicCorpus> = HashMap::new();
    for c in corpora {
        if by_topic.insert(c.topic, c).is_some() {
            return Err(Error::InvalidCorpus {
                topic: c.topic.to_string(),
                reason: "topic given more than once".into(),
            });
        }
    }

    let mut jobs = Vec::new();
    for probe in probes {
        let spec = registry
            .get(&probe.model)
            .ok_or_else(|| Error::ProbeMismatch(format!("unknown model {}", probe.model)))?;
        for topic in assigned_topics(spec.family) {
            let missing = || Error::MissingCorpus {
                family: spec.family.to_string(),
                topic: format!("{topic} (model {})", spec.abbreviation),
            };
            let corpus = by_topic.get(&topic).ok_or_else(missing)?;
            let store = corpus.store_for(&spec.abbreviation).ok_or_else(missing)?;
            jobs.push((probe, spec.family, topic, store));
        }
    }
    jobs.par_iter()
        .map(|&(probe, family, topic, store)| {
            Ok(ModelScore {
                model: probe.model.clone(),
                family,
                topic,
                label: probe.label.clone(),
                mean: score_topic(probe, store)?,
            })
        })
        .collect()
}

/// Aggregates model scores into family means and emits both pairings.
pub fn deltas_from_scores(
    scores: &[ModelScore],
    registry: &Registry,
) -> Result<(Vec<FamilyScore>, Vec<ParallaxDelta>)> {
    let mut family_scores = Vec::new();
    let mut deltas = Vec::new();
    for pairing in Pairing::ALL {
        let mut rows = Vec::with_capacity(NUM_LABELS);
        for label in LABEL_NAMES {
            let mut per_family = Vec::with_capacity(2);
            for family in [ModelFamily::Chinese, ModelFamily::Western] {
                let topic = pairing.topic_for(family);
                // registry order
                let cells: Vec<ModelScore> = registry
                    .family(family)
                    .map(|m| {
                        scores
                            .iter()
                            .find(|s| {
                                s.model == m.abbreviation && s.topic == topic && s.label == label
                            })
                            .cloned()
                            .ok_or_else(|| Error::MissingCorpus {
                                family: family.to_string(),
                                topic: format!("{topic} (model {}, label {label})", m.abbreviation),
                            })
                    })
                    .collect::<Result<_>>()?;
                per_family.push(family_aggregate(&cells, family, topic, label)?);
            }
            rows.push(parallax_delta(&per_family[0], &per_family[1], pairing)?);
            // the four (family, topic) cells of the two pairings are disjoint
            family_scores.extend(per_family);
        }
        let mean = mean_delta(&rows)?;
        deltas.extend(rows);
        deltas.push(mean);
    }
    Ok((family_scores, deltas))
}

/// Full suite: deployment probes, topic scoring, family aggregation, deltas.
///
/// Topic corpora are l2-normalized here if they are not already.
pub fn run_parallax_suite(
    quality: &[AlignedDataset],
    corpora: &[TopicCorpus],
    registry: &Registry,
    config: &ProbeConfig,
) -> Result<ParallaxReport> {
    let probes = train_deployment_probes(quality, registry, config)?;
    run_with_probes(&probes, corpora, registry)
}

pub fn run_with_probes(
    probes: &[ProbeModel],
    corpora: &[TopicCorpus],
    registry: &Registry,
) -> Result<ParallaxReport> {
    let normalized = corpora
        .iter()
        .map(|c| {
            if c.stores().iter().all(EmbeddingStore::is_normalized) {
                Ok(c.clone())
            } else {
                c.normalized()
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let model_scores = score_corpora(probes, &normalized, registry)?;
    let (family_scores, deltas) = deltas_from_scores(&model_scores, registry)?;
    Ok(ParallaxReport {
        model_scores,
        family_scores,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ModelSpec;
    use ndarray::array;
    use proptest::prelude::*;

    fn score(model: &str, family: ModelFamily, mean: f64) -> ModelScore {
        ModelScore {
            model: model.into(),
            family,
            topic: Topic::Palestine,
            label: "Subjectivity".into(),
            mean,
        }
    }

    fn fam(family: ModelFamily, means: &[f64]) -> FamilyScore {
        let scores: Vec<_> = means
            .iter()
            .enumerate()
            .map(|(i, &m)| score(&format!("m{i}"), family, m))
            .collect();
        family_aggregate(&scores, family, Topic::Palestine, "Subjectivity").unwrap()
    }

    fn probe(w: Vec<f64>, b: f64) -> ProbeModel {
        ProbeModel {
            label: "Fluency".into(),
            model: "M".into(),
            w,
            b,
            config: ProbeConfig::default(),
            converged: true,
            n_iter: 0,
            class_weights: [1.0, 1.0],
        }
    }

    fn store(rows: ndarray::Array2<f64>) -> EmbeddingStore {
        let ids = (0..rows.nrows()).map(|i| format!("t{i}")).collect();
        let spec = ModelSpec {
            name: "m".into(),
            abbreviation: "M".into(),
            family: ModelFamily::Chinese,
            dim: rows.ncols(),
            param_size: String::new(),
        };
        EmbeddingStore::new(spec, ids, rows)
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn zero_probe_scores_half() {
        let s = store(array![[1.0, 2.0], [3.0, -1.0]]);
        assert_eq!(score_topic(&probe(vec![0.0, 0.0], 0.0), &s).unwrap(), 0.5);
    }

    #[test]
    fn single_article_mean_is_its_probability() {
        let s = store(array![[0.6, 0.8]]);
        let p = probe(vec![1.0, -2.0], 0.3);
        let expected = predict_proba(&p, s.matrix().view()).unwrap()[0];
        assert_eq!(score_topic(&p, &s).unwrap(), expected);
    }

    #[test]
    fn three_article_mean() {
        // one-hot rows and w = logit of the target probabilities
        let s = store(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let pr = probe(vec![logit(0.2), logit(0.4), logit(0.9)], 0.0);
        assert!((score_topic(&pr, &s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn score_topic_errors() {
        let s = store(array![[1.0, 0.0]]);
        assert!(matches!(
            score_topic(&probe(vec![1.0], 0.0), &s),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut other = probe(vec![1.0, 0.0], 0.0);
        other.model = "Q-8B".into();
        assert!(matches!(
            score_topic(&other, &s),
            Err(Error::ProbeMismatch(_))
        ));
    }

    #[test]
    fn family_aggregate_examples() {
        assert_eq!(fam(ModelFamily::Chinese, &[0.4, 0.6]).family_mean, 0.5);
        assert_eq!(fam(ModelFamily::Chinese, &[0.37]).family_mean, 0.37);
        assert!((fam(ModelFamily::Chinese, &[0.3, 0.3, 0.9]).family_mean - 0.5).abs() < 1e-15);
        assert!(family_aggregate(&[], ModelFamily::Chinese, Topic::Us, "Fluency").is_err());
        let mixed = [score("a", ModelFamily::Western, 0.1)];
        assert!(matches!(
            family_aggregate(
                &mixed,
                ModelFamily::Chinese,
                Topic::Palestine,
                "Subjectivity"
            ),
            Err(Error::FamilyMismatch(_))
        ));
    }

    #[test]
    fn delta_examples() {
        let d = parallax_delta(
            &fam(ModelFamily::Chinese, &[0.5]),
            &fam(ModelFamily::Western, &[0.6]),
            Pairing::MatchedPalestine,
        )
        .unwrap();
        assert_eq!(d.delta, 0.5 - 0.6);
        assert!((d.delta + 0.1).abs() < 1e-15);
        let same = parallax_delta(
            &fam(ModelFamily::Chinese, &[0.42, 0.1]),
            &fam(ModelFamily::Western, &[0.1, 0.42]),
            Pairing::CrossTopic,
        )
        .unwrap();
        assert_eq!(same.delta, 0.0);
    }

    #[test]
    fn delta_label_mismatch() {
        let c = fam(ModelFamily::Chinese, &[0.5]);
        let mut w = fam(ModelFamily::Western, &[0.5]);
        w.label = "Fluency".into();
        assert!(matches!(
            parallax_delta(&c, &w, Pairing::MatchedPalestine),
            Err(Error::LabelMismatch { .. })
        ));
        assert!(parallax_delta(&w, &c, Pairing::MatchedPalestine).is_err());
    }

    #[test]
    fn mean_row() {
        let rows = vec![
            ParallaxDelta {
                pairing: Pairing::CrossTopic,
                label: "a".into(),
                chinese_mean: 0.2,
                western_mean: 0.4,
                delta: 0.2 - 0.4,
            },
            ParallaxDelta {
                pairing: Pairing::CrossTopic,
                label: "b".into(),
                chinese_mean: 0.6,
                western_mean: 0.4,
                delta: 0.6 - 0.4,
            },
        ];
        let m = mean_delta(&rows).unwrap();
        assert_eq!(m.label, MEAN_LABEL);
        assert_eq!(m.delta, m.chinese_mean - m.western_mean);
        assert!(m.delta.abs() < 1e-15);
        let mut mixed = rows.clone();
        mixed[1].pairing = Pairing::MatchedPalestine;
        assert!(matches!(mean_delta(&mixed), Err(Error::MixedPairings)));
    }

    proptest! {
        #[test]
        fn family_mean_matches_brute_force_and_ignores_order(
            means in proptest::collection::vec(0.0f64..=1.0, 1..12),
            rot in 0usize..12,
        ) {
            let a = fam(ModelFamily::Western, &means);
            let mut rotated = means.clone();
            let r = rot % means.len();
            rotated.rotate_left(r);
            let b = fam(ModelFamily::Western, &rotated);
            prop_assert_eq!(a.family_mean, b.family_mean);
            let mut brute = 0.0;
            for m in &means { brute += m; }
            prop_assert!((a.family_mean - brute / means.len() as f64).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.family_mean));
        }

        #[test]
        fn delta_is_bounded(c in 0.0f64..=1.0, w in 0.0f64..=1.0) {
            let d = parallax_delta(&fam(ModelFamily::Chinese, &[c]), &fam(ModelFamily::Western, &[w]), Pairing::MatchedPalestine).unwrap();
            prop_assert!(d.delta.abs() <= 1.0);
            prop_assert_eq!(d.delta, d.chinese_mean - d.western_mean);
        }
    }
}
