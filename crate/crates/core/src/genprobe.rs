//! Orchestration of the framed per-country probing corpora through an
//! external text-generation endpoint.
//!
//! Wire protocol: `POST {"prompt", "temperature", "top_p", "max_tokens",
//! "seed"?}` answered by `{"text": ...}`. Corpora are written as one JSONL
//! file per country.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::corpus_stats;

pub const PLACEHOLDER: &str = "COUNTRYX";
pub const ENV_URL: &str = "PARALLAX_GEN_URL";
pub const ENV_TOKEN: &str = "PARALLAX_GEN_TOKEN";

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_TOP_P: f64 = 0.9;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("template {0:?} has no {PLACEHOLDER} placeholder")]
    MissingPlaceholder(String),

    #[error("harmful template {0:?} has no research-use marker")]
    MissingMarker(String),

    #[error("invalid generation request: {0}")]
    InvalidRequest(String),

    #[error("no framing templates supplied")]
    NoTemplates,

    #[error("empty completion")]
    EmptyCompletion,

    #[error("endpoint failed after {attempts} attempts: {last}")]
    Endpoint { attempts: u32, last: EndpointError },

    #[error("endpoint not configured: set {ENV_URL}")]
    NotConfigured,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid corpus record in {path} line {line}: {reason}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("generation aborted at {country} #{index}; partial output described in {manifest}: {source}")]
    Aborted {
        country: Country,
        index: usize,
        manifest: PathBuf,
        #[source]
        source: Box<GenError>,
    },
}

impl GenError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GenError::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the root cause is the generation endpoint.
    pub fn is_endpoint_failure(&self) -> bool {
        match self {
            GenError::Endpoint { .. } | GenError::EmptyCompletion | GenError::NotConfigured => true,
            GenError::Aborted { source, .. } => source.is_endpoint_failure(),
            _ => false,
        }
    }
}

/// Failure reported by an endpoint for one attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndpointError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Country {
    China,
    Us,
    Palestine,
}

impl Country {
    /// Table order of the corpus summary.
    pub const ALL: [Country; 3] = [Country::China, Country::Palestine, Country::Us];

    /// Substituted for the placeholder.
    pub fn display_name(self) -> &'static str {
        match self {
            Country::China => "China",
            Country::Us => "United States",
            Country::Palestine => "Palestine",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Country::China => "china",
            Country::Us => "us",
            Country::Palestine => "palestine",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Country::China => "China",
            Country::Us => "US",
            Country::Palestine => "Palestine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Country::ALL
            .into_iter()
            .find(|c| c.slug().eq_ignore_ascii_case(s) || c.short_name().eq_ignore_ascii_case(s))
    }

    fn code(self) -> u64 {
        match self {
            Country::China => 1,
            Country::Us => 2,
            Country::Palestine => 3,
        }
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramingKind {
    Neutral,
    Controversial,
    Harmful,
}

/// A user-supplied prompt template for one framing condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingCondition {
    pub kind: FramingKind,
    pub template_id: String,
    pub prompt_template: String,
    /// Research-use marker, mandatory for harmful templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
}

impl FramingCondition {
    pub fn validate(&self) -> Result<(), GenError> {
        if !self.prompt_template.contains(PLACEHOLDER) {
            return Err(GenError::MissingPlaceholder(self.template_id.clone()));
        }
        if self.kind == FramingKind::Harmful && !has_marker(self.marker.as_deref()) {
            return Err(GenError::MissingMarker(self.template_id.clone()));
        }
        Ok(())
    }
}

fn has_marker(marker: Option<&str>) -> bool {
    marker.is_some_and(|m| !m.trim().is_empty())
}

pub fn load_templates(path: &Path) -> Result<Vec<FramingCondition>, GenError> {
    let text = fs::read_to_string(path).map_err(|e| GenError::io(path, e))?;
    let templates: Vec<FramingCondition> =
        serde_json::from_str(&text).map_err(|e| GenError::InvalidRecord {
            path: path.into(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

pub fn instantiate_prompt(
    template: &FramingCondition,
    country: Country,
) -> Result<String, GenError> {
    template.validate()?;
    Ok(template
        .prompt_template
        .replace(PLACEHOLDER, country.display_name()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenRequest {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(GenError::InvalidRequest(format!(
                "temperature {} outside (0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GenError::InvalidRequest(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GenError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedArticle {
    pub id: String,
    pub country: Country,
    pub framing: FramingKind,
    pub text: String,
    pub marker: Option<String>,
    /// Unix seconds. Kept in memory only; corpus files stay reproducible.
    pub created_at: u64,
}

/// One line of a corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub country: Country,
    pub framing: FramingKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
}

impl From<&GeneratedArticle> for CorpusRecord {
    fn from(a: &GeneratedArticle) -> Self {
        CorpusRecord {
            id: a.id.clone(),
            country: a.country,
            framing: a.framing,
            text: a.text.clone(),
            marker: a.marker.clone(),
        }
    }
}

pub trait GenerationEndpoint: Send + Sync {
    fn complete(&self, request: &GenRequest) -> Result<String, EndpointError>;
}

impl<T: GenerationEndpoint + ?Sized> GenerationEndpoint for &T {
    fn complete(&self, request: &GenRequest) -> Result<String, EndpointError> {
        (**self).complete(request)
    }
}

/// JSON-over-HTTP endpoint.
pub struct HttpEndpoint {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct CompletionBody {
    text: String,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEndpoint {
            url: url.into(),
            token,
            agent,
        }
    }

    /// Reads the URL and optional bearer token from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self, GenError> {
        let url = std::env::var(ENV_URL).map_err(|_| GenError::NotConfigured)?;
        let token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        Ok(HttpEndpoint::new(url, token, timeout))
    }
}

impl GenerationEndpoint for HttpEndpoint {
    fn complete(&self, request: &GenRequest) -> Result<String, EndpointError> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| EndpointError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(EndpointError::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(EndpointError::Fatal(format!("HTTP {status}")));
        }
        let body: CompletionBody = resp
            .body_mut()
            .read_json()
            .map_err(|e| EndpointError::Fatal(format!("bad response body: {e}")))?;
        Ok(body.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    /// Wait before the second attempt; doubles after each failure.
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no wait before the first
        if attempt <= 1 {
            Duration::ZERO
        } else {
            self.base_delay
                .saturating_mul(1u32 << (attempt - 2).min(16))
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Sends `request` with retries and wraps the completion. Returns the
/// article and the number of attempts used.
pub fn generate_article<E: GenerationEndpoint + ?Sized>(
    request: &GenRequest,
    framing: &FramingCondition,
    country: Country,
    id: &str,
    endpoint: &E,
    retry: &RetryPolicy,
) -> Result<(GeneratedArticle, u32), GenError> {
    request.validate()?;
    framing.validate()?;
    let max_attempts = retry.max_attempts.max(1);
    let mut attempt = 0;
    let text = loop {
        attempt += 1;
        std::thread::sleep(retry.delay_before(attempt));
        match endpoint.complete(request) {
            Ok(text) => break text,
            Err(EndpointError::Transient(msg)) if attempt < max_attempts => {
                log::debug!("{id}: attempt {attempt} failed: {msg}");
            }
            Err(last) => {
                return Err(GenError::Endpoint {
                    attempts: attempt,
                    last,
                })
            }
        }
    };
    if text.trim().is_empty() {
        return Err(GenError::EmptyCompletion);
    }
    let marker = match framing.kind {
        FramingKind::Harmful => framing.marker.clone(),
        _ => None,
    };
    let created_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok((
        GeneratedArticle {
            id: id.to_owned(),
            country,
            framing: framing.kind,
            text,
            marker,
            created_at,
        },
        attempt,
    ))
}

/// Per-request seed from the run seed, country and index.
pub fn derive_seed(run_seed: u64, country: Country, index: usize) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ country.code());
    splitmix64(h ^ index as u64)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub seed: u64,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub retry: RetryPolicy,
    pub parallelism: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            retry: RetryPolicy::default(),
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryStats {
    pub country: Country,
    pub samples: usize,
    pub mean_words: f64,
    pub std_words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub countries: Vec<CountryStats>,
    pub total: usize,
}

impl CorpusSummary {
    /// Per-country sample counts followed by the total line.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Country | Number of Samples |\n|---|---:|\n");
        for c in &self.countries {
            out.push_str(&format!("| {} | {} |\n", c.country.short_name(), c.samples));
        }
        out.push_str(&format!("\nTotal Entries: {}\n", self.total));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialManifest {
    pub written: Vec<(Country, usize)>,
    pub requested: Vec<(Country, usize)>,
    pub failed_country: Country,
    pub failed_index: usize,
    pub error: String,
}

pub fn corpus_path(out_dir: &Path, country: Country) -> PathBuf {
    out_dir.join(format!("{}.jsonl", country.slug()))
}

/// Generates `counts[country]` articles per country, cycling through the
/// templates, and writes `<slug>.jsonl`, `summary.json` and `summary.md`.
///
/// Requests within a country run on up to `options.parallelism` threads;
/// records are written in index order. A failure stops the run after the
/// current batch, writes the successful prefix of the failing country and a
/// `partial_manifest.json`, and returns [`GenError::Aborted`].
pub fn build_country_corpora<E: GenerationEndpoint + ?Sized>(
    templates: &[FramingCondition],
    counts: &[(Country, usize)],
    endpoint: &E,
    options: &CorpusOptions,
    out_dir: &Path,
) -> Result<CorpusSummary, GenError> {
    if templates.is_empty() {
        return Err(GenError::NoTemplates);
    }
    for t in templates {
        t.validate()?;
    }
    fs::create_dir_all(out_dir).map_err(|e| GenError::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .expect("thread pool");
    let batch = options.parallelism.max(1) * 4;

    let mut ordered: Vec<(Country, usize)> = counts.to_vec();
    ordered.sort_by_key(|(c, _)| Country::ALL.iter().position(|x| x == c));
    let mut written = Vec::new();
    let mut stats = Vec::new();

    for &(country, count) in &ordered {
        let make = |i: usize| -> Result<GeneratedArticle, GenError> {
            let template = &templates[i % templates.len()];
            let request = GenRequest {
                prompt: instantiate_prompt(template, country)?,
                temperature: options.temperature,
                top_p: options.top_p,
                max_tokens: options.max_tokens,
                seed: Some(derive_seed(options.seed, country, i)),
            };
            let id = format!("{}-{:05}", country.slug(), i);
            generate_article(&request, template, country, &id, endpoint, &options.retry)
                .map(|(a, _)| a)
        };

        let mut articles = Vec::with_capacity(count);
        let mut failure = None;
        let mut start = 0;
        while start < count && failure.is_none() {
            let end = (start + batch).min(count);
            let results: Vec<_> = pool.install(|| (start..end).into_par_iter().map(make).collect());
            for (i, r) in (start..end).zip(results) {
                match r {
                    Ok(a) if failure.is_none() => articles.push(a),
                    Ok(_) => {}
                    Err(e) => {
                        if failure.is_none() {
                            failure = Some((i, e));
                        }
                    }
                }
            }
            start = end;
        }

        let path = corpus_path(out_dir, country);
        write_jsonl(&path, &articles)?;
        written.push((country, articles.len()));

        if let Some((index, err)) = failure {
            let manifest = out_dir.join("partial_manifest.json");
            let partial = PartialManifest {
                written: written.clone(),
                requested: ordered.clone(),
                failed_country: country,
                failed_index: index,
                error: err.to_string(),
            };
            let json = serde_json::to_string_pretty(&partial).expect("manifest serializes");
            fs::write(&manifest, json + "\n").map_err(|e| GenError::io(&manifest, e))?;
            return Err(GenError::Aborted {
                country,
                index,
                manifest,
                source: Box::new(err),
            });
        }

        let (mean_words, std_words) =
            match corpus_stats(&articles.iter().map(|a| a.text.as_str()).collect::<Vec<_>>()) {
                Ok(s) => (s.mean_words, s.std_words),
                Err(_) => (0.0, 0.0),
            };
        stats.push(CountryStats {
            country,
            samples: articles.len(),
            mean_words,
            std_words,
        });
    }

    let summary = CorpusSummary {
        total: stats.iter().map(|s| s.samples).sum(),
        countries: stats,
    };
    let json_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&json_path, json + "\n").map_err(|e| GenError::io(&json_path, e))?;
    let md_path = out_dir.join("summary.md");
    fs::write(&md_path, summary.to_markdown()).map_err(|e| GenError::io(&md_path, e))?;
    Ok(summary)
}

fn write_jsonl(path: &Path, articles: &[GeneratedArticle]) -> Result<(), GenError> {
    let mut buf = Vec::new();
    for a in articles {
        serde_json::to_writer(&mut buf, &CorpusRecord::from(a)).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| GenError::io(path, e))?;
    f.write_all(&buf).map_err(|e| GenError::io(path, e))
}

/// Checks every line of a corpus file and returns the record count.
pub fn validate_corpus_file(path: &Path) -> Result<usize, GenError> {
    let f = fs::File::open(path).map_err(|e| GenError::io(path, e))?;
    let mut n = 0;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| GenError::io(path, e))?;
        let bad = |reason: String| GenError::InvalidRecord {
            path: path.into(),
            line: i + 1,
            reason,
        };
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(bad("empty text".into()));
        }
        if rec.framing == FramingKind::Harmful && !has_marker(rec.marker.as_deref()) {
            return Err(bad("harmful record without marker".into()));
        }
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    struct Echo;

    impl GenerationEndpoint for Echo {
        fn complete(&self, r: &GenRequest) -> Result<String, EndpointError> {
            Ok(r.prompt.clone())
        }
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl GenerationEndpoint for Flaky {
        fn complete(&self, r: &GenRequest) -> Result<String, EndpointError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(EndpointError::Transient("503".into()))
            } else {
                Ok(r.prompt.clone())
            }
        }
    }

    struct Recorder(Mutex<Vec<GenRequest>>);

    impl GenerationEndpoint for Recorder {
        fn complete(&self, r: &GenRequest) -> Result<String, EndpointError> {
            self.0.lock().unwrap().push(r.clone());
            Ok("text".into())
        }
    }

    fn neutral(t: &str) -> FramingCondition {
        FramingCondition {
            kind: FramingKind::Neutral,
            template_id: "n1".into(),
            prompt_template: t.into(),
            marker: None,
        }
    }

    fn no_wait(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
        }
    }

    #[test]
    fn substitution() {
        let t = neutral("News about COUNTRYX today");
        assert_eq!(
            instantiate_prompt(&t, Country::China).unwrap(),
            "News about China today"
        );
        let t = neutral("COUNTRYX and COUNTRYX");
        assert_eq!(
            instantiate_prompt(&t, Country::Us).unwrap(),
            "United States and United States"
        );
        assert!(matches!(
            instantiate_prompt(&neutral("no placeholder"), Country::Palestine),
            Err(GenError::MissingPlaceholder(_))
        ));
    }

    #[test]
    fn harmful_requires_marker() {
        let mut t = neutral("x COUNTRYX");
        t.kind = FramingKind::Harmful;
        assert!(matches!(t.validate(), Err(GenError::MissingMarker(_))));
        t.marker = Some("  ".into());
        assert!(t.validate().is_err());
        t.marker = Some("RESEARCH USE ONLY".into());
        assert!(t.validate().is_ok());
    }

    #[test]
    fn request_defaults_and_bounds() {
        let r = GenRequest::new("p");
        assert_eq!((r.temperature, r.top_p), (0.9, 0.9));
        assert!(r.validate().is_ok());
        let bad = GenRequest {
            top_p: 1.5,
            ..r.clone()
        };
        assert!(bad.validate().is_err());
        let bad = GenRequest {
            temperature: 0.0,
            ..r
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn request_wire_format() {
        let mut r = GenRequest::new("hello");
        r.max_tokens = 64;
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"prompt": "hello", "temperature": 0.9, "top_p": 0.9, "max_tokens": 64})
        );
        r.seed = Some(7);
        assert_eq!(serde_json::to_value(&r).unwrap()["seed"], 7);
    }

    #[test]
    fn echo_endpoint_identity() {
        let t = neutral("About COUNTRYX");
        let req = GenRequest::new(instantiate_prompt(&t, Country::China).unwrap());
        let (a, attempts) =
            generate_article(&req, &t, Country::China, "china-0", &Echo, &no_wait(3)).unwrap();
        assert_eq!(a.text, req.prompt);
        assert_eq!(attempts, 1);
        assert_eq!(a.marker, None);
    }

    #[test]
    fn empty_completion_is_error() {
        struct Empty;
        impl GenerationEndpoint for Empty {
            fn complete(&self, _: &GenRequest) -> Result<String, EndpointError> {
                Ok(String::new())
            }
        }
        let t = neutral("COUNTRYX");
        let err = generate_article(
            &GenRequest::new("p"),
            &t,
            Country::Us,
            "x",
            &Empty,
            &no_wait(3),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "empty completion");
    }

    #[test]
    fn retries_transient_failures() {
        let ep = Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
        };
        let t = neutral("COUNTRYX");
        let (_, attempts) = generate_article(
            &GenRequest::new("p"),
            &t,
            Country::Us,
            "x",
            &ep,
            &no_wait(3),
        )
        .unwrap();
        assert_eq!(attempts, 3);

        let ep = Flaky {
            failures: 3,
            calls: AtomicU32::new(0),
        };
        let err = generate_article(
            &GenRequest::new("p"),
            &t,
            Country::Us,
            "x",
            &ep,
            &no_wait(3),
        )
        .unwrap_err();
        assert!(matches!(err, GenError::Endpoint { attempts: 3, .. }));
        assert!(err.is_endpoint_failure());
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        struct Denied(AtomicU32);
        impl GenerationEndpoint for Denied {
            fn complete(&self, _: &GenRequest) -> Result<String, EndpointError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(EndpointError::Fatal("HTTP 401".into()))
            }
        }
        let ep = Denied(AtomicU32::new(0));
        let t = neutral("COUNTRYX");
        assert!(generate_article(
            &GenRequest::new("p"),
            &t,
            Country::Us,
            "x",
            &ep,
            &no_wait(5)
        )
        .is_err());
        assert_eq!(ep.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
        };
        let d: Vec<u128> = (1..=4).map(|a| r.delay_before(a).as_millis()).collect();
        assert_eq!(d, vec![0, 100, 200, 400]);
    }

    #[test]
    fn harmful_articles_carry_marker() {
        let t = FramingCondition {
            kind: FramingKind::Harmful,
            template_id: "h1".into(),
            prompt_template: "COUNTRYX".into(),
            marker: Some("SYNTHETIC - RESEARCH USE ONLY".into()),
        };
        let (a, _) = generate_article(
            &GenRequest::new("p"),
            &t,
            Country::Palestine,
            "p-0",
            &Echo,
            &no_wait(1),
        )
        .unwrap();
        assert_eq!(a.marker.as_deref(), Some("SYNTHETIC - RESEARCH USE ONLY"));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(42, Country::China, 0);
        assert_eq!(a, derive_seed(42, Country::China, 0));
        assert_ne!(a, derive_seed(42, Country::Us, 0));
        assert_ne!(a, derive_seed(42, Country::China, 1));
        assert_ne!(a, derive_seed(43, Country::China, 0));
    }

    #[test]
    fn requests_carry_sampling_settings_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Recorder(Mutex::new(Vec::new()));
        let opts = CorpusOptions {
            seed: 9,
            ..CorpusOptions::default()
        };
        build_country_corpora(
            &[neutral("COUNTRYX")],
            &[(Country::Us, 2)],
            &rec,
            &opts,
            dir.path(),
        )
        .unwrap();
        let mut reqs = rec.0.into_inner().unwrap();
        reqs.sort_by_key(|r| r.seed);
        assert_eq!(reqs.len(), 2);
        for r in &reqs {
            assert_eq!((r.temperature, r.top_p), (0.9, 0.9));
            assert_eq!(r.prompt, "United States");
        }
        let mut expected = vec![
            derive_seed(9, Country::Us, 0),
            derive_seed(9, Country::Us, 1),
        ];
        expected.sort();
        assert_eq!(
            reqs.iter().map(|r| r.seed.unwrap()).collect::<Vec<_>>(),
            expected
        );
    }

    #[test]
    fn summary_markdown_shape() {
        let s = CorpusSummary {
            countries: vec![
                CountryStats {
                    country: Country::China,
                    samples: 1357,
                    mean_words: 0.0,
                    std_words: 0.0,
                },
                CountryStats {
                    country: Country::Palestine,
                    samples: 1929,
                    mean_words: 0.0,
                    std_words: 0.0,
                },
                CountryStats {
                    country: Country::Us,
                    samples: 1378,
                    mean_words: 0.0,
                    std_words: 0.0,
                },
            ],
            total: 4664,
        };
        let md = s.to_markdown();
        assert!(md.contains("| China | 1357 |"));
        assert!(md.contains("| US | 1378 |"));
        assert!(md.ends_with("Total Entries: 4664\n"));
    }
}
