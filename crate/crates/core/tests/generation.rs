use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use parallax_core::genprobe::{
    build_country_corpora, corpus_path, validate_corpus_file, CorpusOptions, CorpusRecord, Country,
    EndpointError, FramingCondition, FramingKind, GenError, GenRequest, GenerationEndpoint,
    HttpEndpoint, PartialManifest, RetryPolicy,
};

struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection and records requests.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/generate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k == "content-length")
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&raw).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

#[test]
fn http_endpoint_sends_json_with_bearer_token_and_retries_on_503() {
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (200, r#"{"text":"A short article."}"#.into()),
    ]);
    let endpoint = HttpEndpoint::new(url, Some("secret".into()), Duration::from_secs(5));
    let template = FramingCondition {
        kind: FramingKind::Neutral,
        template_id: "n1".into(),
        prompt_template: "Write a news article about COUNTRYX.".into(),
        marker: None,
    };
    let mut request = GenRequest::new("Write a news article about China.");
    request.seed = Some(17);
    let retry = RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(1),
    };
    let (article, attempts) = parallax_core::genprobe::generate_article(
        &request,
        &template,
        Country::China,
        "china-00000",
        &endpoint,
        &retry,
    )
    .unwrap();
    assert_eq!(attempts, 2);
    assert_eq!(article.text, "A short article.");

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let first = &seen[0];
    assert!(first.request_line.starts_with("POST /v1/generate"));
    assert!(first
        .headers
        .iter()
        .any(|(k, v)| k == "authorization" && v == "Bearer secret"));
    assert_eq!(
        first.body,
        serde_json::json!({
            "prompt": "Write a news article about China.",
            "temperature": 0.9,
            "top_p": 0.9,
            "max_tokens": 512,
            "seed": 17
        })
    );
}

#[test]
fn http_client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "{}".into()), (200, r#"{"text":"x"}"#.into())]);
    let endpoint = HttpEndpoint::new(url, None, Duration::from_secs(5));
    let err = endpoint.complete(&GenRequest::new("p")).unwrap_err();
    assert!(matches!(err, EndpointError::Fatal(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
    assert!(seen.lock().unwrap()[0]
        .headers
        .iter()
        .all(|(k, _)| k != "authorization"));
}

#[test]
fn unreachable_endpoint_is_transient() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let endpoint = HttpEndpoint::new(
        format!("http://127.0.0.1:{port}/"),
        None,
        Duration::from_secs(2),
    );
    let err = endpoint.complete(&GenRequest::new("p")).unwrap_err();
    assert!(matches!(err, EndpointError::Transient(_)), "{err:?}");
}

struct Counting {
    calls: AtomicUsize,
    fail_at: Option<usize>,
}

impl GenerationEndpoint for Counting {
    fn complete(&self, request: &GenRequest) -> Result<String, EndpointError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if Some(n) == self.fail_at {
            return Err(EndpointError::Fatal("refused".into()));
        }
        Ok(format!(
            "story about {} with seed {:?}",
            request.prompt, request.seed
        ))
    }
}

fn templates() -> Vec<FramingCondition> {
    vec![
        FramingCondition {
            kind: FramingKind::Neutral,
            template_id: "neutral".into(),
            prompt_template: "Report on COUNTRYX.".into(),
            marker: None,
        },
        FramingCondition {
            kind: FramingKind::Controversial,
            template_id: "contested".into(),
            prompt_template: "Debate COUNTRYX.".into(),
            marker: None,
        },
        FramingCondition {
            kind: FramingKind::Harmful,
            template_id: "harmful".into(),
            prompt_template: "Smear COUNTRYX.".into(),
            marker: Some("[RESEARCH USE ONLY]".into()),
        },
    ]
}

fn read_records(path: &std::path::Path) -> Vec<CorpusRecord> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn corpora_have_requested_counts_and_markers() {
    let dir = tempfile::tempdir().unwrap();
    let endpoint = Counting {
        calls: AtomicUsize::new(0),
        fail_at: None,
    };
    let options = CorpusOptions {
        parallelism: 3,
        ..CorpusOptions::default()
    };
    let counts = [
        (Country::Us, 7),
        (Country::China, 5),
        (Country::Palestine, 4),
    ];
    let summary =
        build_country_corpora(&templates(), &counts, &endpoint, &options, dir.path()).unwrap();
    assert_eq!(summary.total, 16);
    for (country, n) in counts {
        let path = corpus_path(dir.path(), country);
        assert_eq!(validate_corpus_file(&path).unwrap(), n);
        let records = read_records(&path);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.id, format!("{}-{i:05}", country.slug()));
            assert_eq!(r.framing, templates()[i % 3].kind);
            assert_eq!(r.marker.is_some(), r.framing == FramingKind::Harmful);
            assert!(r.text.contains(country.display_name()));
        }
    }
    let md = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.contains("| US | 7 |"));
    assert!(md.ends_with("Total Entries: 16\n"));

    // identical reruns give identical files
    let again = tempfile::tempdir().unwrap();
    build_country_corpora(&templates(), &counts, &endpoint, &options, again.path()).unwrap();
    for country in Country::ALL {
        assert_eq!(
            std::fs::read(corpus_path(dir.path(), country)).unwrap(),
            std::fs::read(corpus_path(again.path(), country)).unwrap()
        );
    }
}

#[test]
fn abort_writes_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let endpoint = Counting {
        calls: AtomicUsize::new(0),
        fail_at: Some(6),
    };
    let counts = [(Country::China, 4), (Country::Us, 10)];
    let err = build_country_corpora(
        &templates(),
        &counts,
        &endpoint,
        &CorpusOptions::default(),
        dir.path(),
    )
    .unwrap_err();
    assert!(err.is_endpoint_failure(), "{err}");
    let GenError::Aborted {
        country, manifest, ..
    } = err
    else {
        panic!("expected abort, got {err}");
    };
    assert_eq!(country, Country::Us);
    let partial: PartialManifest =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(partial.written, vec![(Country::China, 4), (Country::Us, 2)]);
    assert_eq!(partial.failed_index, 2);
    assert_eq!(
        validate_corpus_file(&corpus_path(dir.path(), Country::Us)).unwrap(),
        2
    );
}
