#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parallax_core::synth::SynthCorpus;

pub const TOPICS: [&str; 3] = [
    "topics/palestine.json",
    "topics/us.json",
    "topics/china.json",
];

/// Writes `corpus` under `root` plus a `config.json` pointing at it.
pub fn write_fixture(root: &Path, corpus: &SynthCorpus, extra: serde_json::Value) -> PathBuf {
    corpus.write_tree(root).unwrap();
    let mut config = serde_json::json!({
        "registry_path": "registry.json",
        "data_dir": "quality",
        "labels_csv": "labels.csv",
        "topics": TOPICS,
        "k": 5,
        "seed": 42,
        "output_dir": "out",
        "parallelism": 2
    });
    for (k, v) in extra.as_object().into_iter().flatten() {
        config[k] = v.clone();
    }
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

pub fn parallax(config: &Path, args: &[&str]) -> Output {
    parallax_with_env(config, args, &[])
}

pub fn parallax_with_env(config: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_parallax"));
    cmd.arg("--config").arg(config).args(args);
    cmd.env_remove("PARALLAX_GEN_URL")
        .env_remove("PARALLAX_GEN_TOKEN");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Minimal HTTP server answering every request with the prompt echoed back,
/// or with `status` when it is not 200. Runs until the process exits.
pub fn echo_server(status: u16) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_ascii_lowercase();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut raw = vec![0; len];
            if reader.read_exact(&mut raw).is_err() {
                continue;
            }
            let body = if status == 200 {
                let req: serde_json::Value = serde_json::from_slice(&raw).unwrap();
                serde_json::json!({ "text": format!("Article: {}", req["prompt"].as_str().unwrap()) })
                    .to_string()
            } else {
                "{}".to_string()
            };
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    url
}
