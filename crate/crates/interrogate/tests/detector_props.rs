use std::sync::Arc;

use interrogate::backend::simulated::{SimulatedEmbedder, SimulatedGenerator, SimulatedWorld};
use interrogate::backend::GenerationBackend;
use interrogate::config::PromptFile;
use interrogate::synthetic::{build, SyntheticConfig};
use interrogate::{Detector, DetectorConfig};
use interrogate_core::{AggregationMode, NgramEmbedder, PromptSpec, TaskKind};
use proptest::prelude::*;

struct Fixture {
    world: Arc<SimulatedWorld>,
    queries: Vec<(TaskKind, String)>,
    prompts: PromptFile,
}

fn fixture() -> &'static Fixture {
    static F: std::sync::OnceLock<Fixture> = std::sync::OnceLock::new();
    F.get_or_init(|| {
        let b = build(&SyntheticConfig { items: 24, seed: 5, ..Default::default() });
        let queries = b.world.items.iter().map(|i| (i.task, i.query.clone())).collect();
        Fixture { world: Arc::new(b.world), queries, prompts: PromptFile::builtin() }
    })
}

fn detector(k: usize, backends: usize, tau: f64, variable: bool) -> (Detector, Arc<dyn GenerationBackend>) {
    let f = fixture();
    let ids: Vec<String> = (0..backends).map(|i| format!("b{i}")).collect();
    let backward: Vec<Arc<dyn GenerationBackend>> = ids
        .iter()
        .map(|id| Arc::new(SimulatedGenerator::new(id.as_str(), f.world.clone())) as Arc<dyn GenerationBackend>)
        .collect();
    let mut cfg = DetectorConfig::new(ids, "ngram");
    cfg.k = k;
    cfg.tau = tau;
    cfg.variable_temperature = variable;
    let embedder = Arc::new(SimulatedEmbedder::new("ngram", NgramEmbedder::default()));
    let forward: Arc<dyn GenerationBackend> = Arc::new(SimulatedGenerator::new("fwd", f.world.clone()));
    (Detector::new(cfg, backward, embedder).unwrap(), forward)
}

fn spec(task: TaskKind) -> PromptSpec {
    fixture().prompts.for_task(task).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reconstruction_count_is_k_times_backends(k in 1usize..=5, b in 1usize..=3, item in 0usize..24, seed: u64) {
        let (task, query) = fixture().queries[item].clone();
        let (d, fwd) = detector(k, b, 0.91, true);
        let out = d.detect(&query, &spec(task), &*fwd, seed).unwrap();
        prop_assert_eq!(out.reconstructions.len(), k * b);
        prop_assert_eq!(out.per_reconstruction_similarity.len(), k * b);
        for (i, r) in out.reconstructions.iter().enumerate() {
            prop_assert_eq!(&r.backend_id, &format!("b{}", i / k));
            prop_assert_eq!(r.pass_index, i % k);
        }
        prop_assert_eq!(out.verdict, out.score < 0.91);
        let (max, _) = out.rescore(AggregationMode::Maximum).unwrap();
        prop_assert!(max >= out.score);
    }

    #[test]
    fn verdict_is_monotone_in_tau(item in 0usize..24, t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, seed: u64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (task, query) = fixture().queries[item].clone();
        let (d_lo, fwd) = detector(3, 1, lo, true);
        let (d_hi, _) = detector(3, 1, hi, true);
        let a = d_lo.detect(&query, &spec(task), &*fwd, seed).unwrap();
        let b = d_hi.detect(&query, &spec(task), &*fwd, seed).unwrap();
        prop_assert_eq!(a.score, b.score);
        prop_assert!(!a.verdict || b.verdict);
    }

    #[test]
    fn duplicating_reconstructions_keeps_the_score(item in 0usize..24, k in 1usize..=5, seed: u64) {
        let (task, query) = fixture().queries[item].clone();
        let (d, fwd) = detector(k, 2, 0.91, true);
        let out = d.detect(&query, &spec(task), &*fwd, seed).unwrap();
        let mut doubled = out.reconstructions.clone();
        doubled.extend(out.reconstructions.iter().cloned());
        let (_, score) = d.score(&query, &doubled).unwrap();
        prop_assert!((score - out.score).abs() < 1e-12);
    }

    #[test]
    fn detection_is_deterministic(item in 0usize..24, k in 1usize..=5, b in 1usize..=3, seed: u64) {
        let (task, query) = fixture().queries[item].clone();
        let (d1, f1) = detector(k, b, 0.91, true);
        let (d2, f2) = detector(k, b, 0.91, true);
        let a = d1.detect(&query, &spec(task), &*f1, seed).unwrap();
        let c = d2.detect(&query, &spec(task), &*f2, seed).unwrap();
        prop_assert_eq!(a.to_json_line().unwrap(), c.to_json_line().unwrap());
    }
}

#[test]
fn constant_schedule_uses_default_temperature() {
    let (task, query) = fixture().queries[0].clone();
    let (d, fwd) = detector(4, 2, 0.91, false);
    let out = d.detect(&query, &spec(task), &*fwd, 3).unwrap();
    assert!(out.reconstructions.iter().all(|r| r.temperature == 0.6));
    let (d, fwd) = detector(5, 1, 0.91, true);
    let out = d.detect(&query, &spec(task), &*fwd, 3).unwrap();
    let temps: Vec<f64> = out.reconstructions.iter().map(|r| r.temperature).collect();
    let expected = [0.6, 0.68, 0.76, 0.84, 0.92];
    for (t, e) in temps.iter().zip(expected) {
        assert!((t - e).abs() < 1e-12);
    }
}

#[test]
fn mismatched_backend_ids_are_rejected() {
    let f = fixture();
    let g: Arc<dyn GenerationBackend> = Arc::new(SimulatedGenerator::new("other", f.world.clone()));
    let e = Arc::new(SimulatedEmbedder::new("ngram", NgramEmbedder::default()));
    assert!(Detector::new(DetectorConfig::new(vec!["b0".into()], "ngram"), vec![g], e).is_err());
}
