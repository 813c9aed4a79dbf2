mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use common::Stub;
use interrogate::backend::http::{Endpoint, HttpBackend, HttpConfig};
use interrogate::backend::simulated::SimulatedEmbedder;
use interrogate::backend::{EmbeddingBackend, GenerationBackend, GenerationRequest};
use interrogate::{BackendError, Detector, DetectorConfig, Error};
use interrogate_core::{FewShotExemplar, NgramEmbedder, PromptSpec};

fn config(stub_url: &str, endpoint: Endpoint) -> HttpConfig {
    let mut c = HttpConfig::new("stub", endpoint, stub_url, "test-model");
    c.retry_base_delay = Duration::from_millis(1);
    c.retry_max_delay = Duration::from_millis(4);
    c.timeout = Duration::from_secs(10);
    c
}

fn request() -> GenerationRequest {
    GenerationRequest::new("Query: What is the capital of France?\nAnswer:", 0.7, 32)
        .with_seed(9)
        .with_stop(["Query:", "Answer:"])
}

#[test]
fn completion_round_trip_sends_openai_fields() {
    let stub = Stub::start(0, Duration::ZERO);
    let mut cfg = config(&stub.base_url, Endpoint::Completions);
    cfg.api_key = Some("sk-test".into());
    let backend = HttpBackend::new(cfg).unwrap();
    assert_eq!(backend.generate(&request()).unwrap(), "The capital is Paris.");
    let bodies = stub.bodies.lock().unwrap();
    let (path, body, auth) = &bodies[0];
    assert_eq!(path, "/v1/completions");
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["prompt"], "Query: What is the capital of France?\nAnswer:");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["max_tokens"], 32);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["stop"], serde_json::json!(["Query:", "Answer:"]));
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
}

#[test]
fn chat_round_trip() {
    let stub = Stub::start(0, Duration::ZERO);
    let backend = HttpBackend::new(config(&stub.base_url, Endpoint::Chat)).unwrap();
    assert_eq!(backend.generate(&request()).unwrap(), "What is the capital of France?");
    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(bodies[0].0, "/v1/chat/completions");
    assert_eq!(bodies[0].1["messages"][0]["role"], "user");
    assert!(bodies[0].2.is_none());
}

#[test]
fn embedding_round_trip_and_dimension_check() {
    let stub = Stub::start(0, Duration::ZERO);
    let mut cfg = config(&stub.base_url, Endpoint::Completions);
    cfg.embedding_model = Some("embed-model".into());
    let backend = HttpBackend::new(cfg.clone()).unwrap();
    let v = backend.embed("hello").unwrap();
    assert_eq!(v.as_slice(), &[0.25, -0.5, 1.0]);
    assert_eq!(stub.bodies.lock().unwrap()[0].1["model"], "embed-model");
    cfg.dimension = Some(4);
    let strict = HttpBackend::new(cfg).unwrap();
    assert!(matches!(strict.embed("hello"), Err(BackendError::Protocol { .. })));
}

#[test]
fn retries_injected_500s_within_budget() {
    let stub = Stub::start(2, Duration::ZERO);
    let backend = HttpBackend::new(config(&stub.base_url, Endpoint::Completions)).unwrap();
    assert_eq!(backend.generate(&request()).unwrap(), "The capital is Paris.");
    assert_eq!(stub.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_budget_is_unavailable() {
    let stub = Stub::start(100, Duration::ZERO);
    let mut cfg = config(&stub.base_url, Endpoint::Completions);
    cfg.retry_budget = 2;
    let backend = HttpBackend::new(cfg).unwrap();
    assert!(matches!(backend.generate(&request()), Err(BackendError::Unavailable { .. })));
    assert_eq!(stub.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(0, Duration::ZERO);
    let mut cfg = config(&stub.base_url, Endpoint::Completions);
    cfg.base_url = format!("{}/missing", stub.base_url);
    let backend = HttpBackend::new(cfg).unwrap();
    assert!(matches!(backend.generate(&request()), Err(BackendError::Protocol { .. })));
    assert_eq!(stub.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn never_exceeds_max_in_flight() {
    let stub = Stub::start(0, Duration::from_millis(30));
    let mut cfg = config(&stub.base_url, Endpoint::Completions);
    cfg.max_in_flight = 2;
    let backend = Arc::new(HttpBackend::new(cfg).unwrap());
    std::thread::scope(|s| {
        for _ in 0..12 {
            let b = backend.clone();
            s.spawn(move || b.generate(&request()).unwrap());
        }
    });
    assert_eq!(stub.requests.load(Ordering::SeqCst), 12);
    assert_eq!(stub.peak.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_backward_models_make_detection_infeasible() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = config(&format!("http://127.0.0.1:{port}"), Endpoint::Completions);
    cfg.retry_budget = 1;
    let dead: Arc<dyn GenerationBackend> = Arc::new(HttpBackend::new(cfg).unwrap());
    let embedder = Arc::new(SimulatedEmbedder::new("ngram", NgramEmbedder::default()));
    let detector = Detector::new(DetectorConfig::new(vec!["stub".into()], "ngram"), vec![dead], embedder)
        .unwrap()
        .with_k(2)
        .unwrap();
    let spec = PromptSpec::new(vec![FewShotExemplar::new("What is the capital of Japan?", "The capital is Tokyo.").unwrap()])
        .unwrap();
    let r = detector.detect_given_answer("What is the capital of France?", "The capital is Paris.", &spec, 1);
    assert!(matches!(r, Err(Error::DetectionInfeasible(_))), "{r:?}");
}
