#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use interrogate::backend::simulated::{SimulatedEmbedder, SimulatedGenerator};
use interrogate::backend::Registry;
use interrogate::config::PromptFile;
use interrogate::evaluation::harness::{EvalPlan, Method, TaskInput};
use interrogate::synthetic::{self, SyntheticBenchmark, SyntheticConfig};
use interrogate::DetectorConfig;
use interrogate_core::{NgramEmbedder, TaskKind};
use serde_json::{json, Value};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Minimal OpenAI-compatible server: one thread per connection,
/// `Connection: close`, optional injected 500s and a concurrency gauge.
pub struct Stub {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
    pub peak: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<(String, Value, Option<String>)>>>,
    failures: Arc<AtomicUsize>,
}

impl Stub {
    pub fn start(fail_first: usize, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let stub = Stub {
            base_url,
            requests: Arc::default(),
            peak: Arc::default(),
            bodies: Arc::default(),
            failures: Arc::new(AtomicUsize::new(fail_first)),
        };
        let active = Arc::new(AtomicUsize::new(0));
        let (requests, peak, bodies, failures) =
            (stub.requests.clone(), stub.peak.clone(), stub.bodies.clone(), stub.failures.clone());
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(conn) = conn else { continue };
                let (requests, peak, bodies, failures, active) =
                    (requests.clone(), peak.clone(), bodies.clone(), failures.clone(), active.clone());
                std::thread::spawn(move || {
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    requests.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(delay);
                    let fail = failures
                        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                        .is_ok();
                    let _ = serve(conn, fail, &bodies);
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        stub
    }
}

fn serve(conn: TcpStream, fail: bool, bodies: &Mutex<Vec<(String, Value, Option<String>)>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
    let (mut len, mut auth) = (0usize, None);
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (name, value) = h.split_once(':').unwrap_or((h, ""));
        match name.to_ascii_lowercase().as_str() {
            "content-length" => len = value.trim().parse().unwrap_or(0),
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    bodies.lock().unwrap().push((path.clone(), body, auth));
    let (status, payload) = if fail {
        ("500 Internal Server Error", json!({ "error": "injected" }))
    } else {
        match path.as_str() {
            "/v1/completions" => ("200 OK", json!({ "choices": [{ "text": " The capital is Paris.\n\nQuery: extra" }] })),
            "/v1/chat/completions" => (
                "200 OK",
                json!({ "choices": [{ "message": { "role": "assistant", "content": "What is the capital of France?" } }] }),
            ),
            "/v1/embeddings" => ("200 OK", json!({ "data": [{ "embedding": [0.25, -0.5, 1.0] }] })),
            _ => ("404 Not Found", json!({ "error": "no route" })),
        }
    };
    let text = payload.to_string();
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    conn.flush()
}

/// The synthetic benchmark wired to fresh simulated backends.
pub struct SyntheticSetup {
    pub bench: SyntheticBenchmark,
    pub generator: Arc<SimulatedGenerator>,
    pub embedder: Arc<SimulatedEmbedder>,
    pub registry: Registry,
}

pub fn synthetic_setup(config: &SyntheticConfig) -> SyntheticSetup {
    let bench = synthetic::build(config);
    let generator = Arc::new(SimulatedGenerator::new("sim", Arc::new(bench.world.clone())));
    let embedder = Arc::new(SimulatedEmbedder::new("ngram", NgramEmbedder::default()));
    let mut registry = Registry::new();
    registry.add_generator(generator.clone());
    registry.add_embedder(embedder.clone());
    SyntheticSetup { bench, generator, embedder, registry }
}

pub fn synthetic_plan(bench: &SyntheticBenchmark, seed: u64, methods: Vec<Method>, k_sweep: Vec<usize>) -> EvalPlan {
    let prompts = PromptFile::builtin();
    let tasks = TaskKind::BUILTIN
        .iter()
        .map(|&kind| {
            let (template, prompt) = prompts.for_task(kind).unwrap();
            TaskInput { kind, template, prompt, records: bench.records_for(kind) }
        })
        .collect();
    EvalPlan {
        tasks,
        forward_backends: vec!["sim".into()],
        methods,
        detector: DetectorConfig::new(vec!["sim".into()], "ngram"),
        k_sweep,
        embed_cosine_threshold: 0.91,
        selfcheck: Default::default(),
        seed,
        limit: None,
    }
}
