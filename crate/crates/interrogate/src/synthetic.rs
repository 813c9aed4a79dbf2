//! Seeded synthetic benchmark: invented movies, books and countries, a
//! [`SimulatedWorld`] whose tables realize each item's hallucination mode, and
//! the matching dataset records.
//!
//! Backward tables put most of the mass on the "true" inverse query and the
//! rest on a light paraphrase, so higher temperatures produce more drift:
//!
//! | mode | forward answer | backward mapping |
//! |------|----------------|------------------|
//! | none | correct | own query (confident) |
//! | fabricate | a decoy entity's answer, sampled among three | the decoy's query |
//! | symmetric | a decoy's answer | own query (less confident) or a decoy query |
//! | many-to-one | correct, shared with two sibling queries | uniform over the siblings |

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use interrogate_core::{AggregationMode, TaskKind, TaskTemplate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::backend::simulated::{Candidate, HallucinationMode, SimulatedWorld, WorldItem};
use crate::config::{BackendConfig, BackendKind, BaselineSection, DetectorSection, PromptFile, RunConfig, TaskSection};
use crate::error::{Error, Result};
use crate::evaluation::dataset::{write_dataset, DatasetRecord};
use crate::evaluation::harness::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub items: usize,
    pub seed: u64,
    /// Fractions for none / fabricate / symmetric / many-to-one. Rounding
    /// remainders go to `none`.
    pub mix: [f64; 4],
    /// Logit of the true inverse query for mode-none and fabricated answers.
    pub confident_logit: f64,
    /// Logit of the original query for symmetric hallucinations.
    pub symmetric_logit: f64,
    /// Logit of the decoy query offered for symmetric hallucinations.
    pub symmetric_decoy_logit: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            items: 200,
            seed: 7,
            mix: [0.60, 0.30, 0.05, 0.05],
            confident_logit: 3.0,
            symmetric_logit: 0.5,
            symmetric_decoy_logit: -0.5,
        }
    }
}

pub struct SyntheticBenchmark {
    pub world: SimulatedWorld,
    pub records: Vec<DatasetRecord>,
}

impl SyntheticBenchmark {
    pub fn records_for(&self, task: TaskKind) -> Vec<DatasetRecord> {
        self.records.iter().filter(|r| r.task == task).cloned().collect()
    }

    pub fn mode_of(&self, id: &str) -> Option<HallucinationMode> {
        self.world.mode_of(id)
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl",
    "dr", "gr", "st", "tr", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "io", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "th", "m", "nd", "x"];
const TITLE_WORDS: &[&str] = &[
    "Silver", "Harbor", "Midnight", "Garden", "Crimson", "River", "Hollow", "Crown", "Winter",
    "Echo", "Stone", "Lantern", "Falcon", "Ember", "Orchard", "Signal", "Atlas", "Velvet",
    "Horizon", "Tide", "Marble", "Comet", "Willow", "Shadow", "Copper", "Meadow", "Static",
    "Paper", "Iron", "Glass", "Summer", "Northern", "Last", "Quiet", "Broken", "Golden",
];

struct Namer {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Namer {
    fn syllable(&mut self) -> String {
        format!(
            "{}{}{}",
            ONSETS.choose(&mut self.rng).unwrap(),
            VOWELS.choose(&mut self.rng).unwrap(),
            CODAS.choose(&mut self.rng).unwrap()
        )
    }

    fn word(&mut self, syllables: usize) -> String {
        let w: String = (0..syllables).map(|_| self.syllable()).collect();
        let mut c = w.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
    }

    fn unique(&mut self, mut make: impl FnMut(&mut Self) -> String) -> String {
        loop {
            let s = make(self);
            if self.used.insert(s.to_lowercase()) {
                return s;
            }
        }
    }

    fn person(&mut self) -> String {
        self.unique(|n| {
            let first = n.rng.random_range(1..=2);
            let last = n.rng.random_range(2..=3);
            format!("{} {}", n.word(first), n.word(last))
        })
    }

    fn title(&mut self) -> String {
        self.unique(|n| {
            let a = TITLE_WORDS.choose(&mut n.rng).unwrap();
            let b = TITLE_WORDS.choose(&mut n.rng).unwrap();
            if n.rng.random_bool(0.3) {
                format!("The {a} {b}")
            } else {
                format!("{a} {b}")
            }
        })
    }

    fn place(&mut self) -> String {
        self.unique(|n| {
            let s = n.rng.random_range(2..=3);
            n.word(s)
        })
    }
}

/// One invented entity: its query fields, truth and canonical answer.
#[derive(Clone)]
struct Entity {
    task: TaskKind,
    query_fields: BTreeMap<String, String>,
    truth: BTreeMap<String, Value>,
    answer: String,
}

impl Entity {
    fn query(&self) -> String {
        TaskTemplate::builtin(self.task)
            .expect("builtin task")
            .render(|k| self.query_fields.get(k).map(String::as_str))
            .expect("entity carries every template field")
    }

    fn paraphrase(&self) -> String {
        let f = |k: &str| self.query_fields[k].as_str();
        match self.task {
            TaskKind::Movies => format!("Which actors starred in the {} movie {}?", f("year"), f("title")),
            TaskKind::Books => format!("Who wrote the book {}, what year was it published?", f("title")),
            _ => format!("What's the capital city of {}?", f("country")),
        }
    }
}

fn fields(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn new_entity(task: TaskKind, namer: &mut Namer) -> Entity {
    match task {
        TaskKind::Movies => {
            let cast: Vec<String> = (0..4).map(|_| namer.person()).collect();
            let year = namer.rng.random_range(1960..=2016).to_string();
            Entity {
                task,
                query_fields: fields(&[("title", namer.title()), ("year", year)]),
                answer: format!(
                    "The main cast included {}, {}, {}, and {}.",
                    cast[0], cast[1], cast[2], cast[3]
                ),
                truth: [("cast".to_string(), json!(cast))].into_iter().collect(),
            }
        }
        TaskKind::Books => {
            let author = namer.person();
            let year = namer.rng.random_range(1950..=2016);
            Entity {
                task,
                query_fields: fields(&[("title", namer.title())]),
                answer: format!("The author is {author}, and it was published in {year}."),
                truth: [("author".to_string(), json!(author)), ("year".into(), json!(year))]
                    .into_iter()
                    .collect(),
            }
        }
        _ => {
            let capital = namer.place();
            Entity {
                task: TaskKind::Gci,
                query_fields: fields(&[("country", namer.place())]),
                answer: format!("The capital is {capital}."),
                truth: [("capital".to_string(), json!(capital))].into_iter().collect(),
            }
        }
    }
}

/// A different entity of the same task that shares `base`'s truth (a sequel,
/// another book by the same author in the same year, ...).
fn sibling(base: &Entity, namer: &mut Namer) -> Entity {
    let mut e = base.clone();
    match base.task {
        TaskKind::Movies | TaskKind::Books => {
            e.query_fields.insert("title".into(), namer.title());
        }
        _ => {
            e.query_fields.insert("country".into(), namer.place());
        }
    }
    e
}

pub fn build(config: &SyntheticConfig) -> SyntheticBenchmark {
    let mut namer = Namer {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        used: HashSet::new(),
    };
    let n = config.items;
    let counts: Vec<usize> = config.mix.iter().map(|f| (f * n as f64).round() as usize).collect();
    let assigned: usize = counts[1..].iter().sum::<usize>().min(n);
    let mut modes = vec![HallucinationMode::None; n - assigned];
    for (mode, &c) in HallucinationMode::ALL[1..].iter().zip(&counts[1..]) {
        modes.extend(std::iter::repeat_n(*mode, c));
    }
    modes.truncate(n);
    modes.shuffle(&mut namer.rng);

    let mut world = SimulatedWorld::new();
    let mut records = Vec::with_capacity(n);
    let tasks = TaskKind::BUILTIN;
    for (i, mode) in modes.into_iter().enumerate() {
        let task = tasks[i % tasks.len()];
        let id = format!("{}-{:04}", task, i);
        let entity = new_entity(task, &mut namer);
        let query = entity.query();
        let paraphrase = entity.paraphrase();
        match mode {
            HallucinationMode::None => {
                world.add_fact(&query, vec![Candidate::new(&entity.answer, 0.0)]);
                world.add_inverse(
                    &entity.answer,
                    vec![Candidate::new(&query, config.confident_logit), Candidate::new(&paraphrase, 0.0)],
                );
            }
            HallucinationMode::Fabricate => {
                let mut answers = Vec::new();
                for logit in [0.0, -0.4, -0.8] {
                    let decoy = new_entity(task, &mut namer);
                    let decoy_query = decoy.query();
                    world.add_inverse(
                        &decoy.answer,
                        vec![
                            Candidate::new(&decoy_query, config.confident_logit),
                            Candidate::new(decoy.paraphrase(), 0.0),
                        ],
                    );
                    // the decoy's own query is known to the model too
                    world.add_fact(&decoy_query, vec![Candidate::new(&decoy.answer, 0.0)]);
                    answers.push(Candidate::new(decoy.answer, logit));
                }
                world.add_fact(&query, answers);
            }
            HallucinationMode::SymmetricHallucinate => {
                let fabricated = new_entity(task, &mut namer);
                let decoy = new_entity(task, &mut namer);
                world.add_fact(&query, vec![Candidate::new(&fabricated.answer, 0.0)]);
                world.add_inverse(
                    &fabricated.answer,
                    vec![
                        Candidate::new(&query, config.symmetric_logit),
                        Candidate::new(&paraphrase, 0.0),
                        Candidate::new(decoy.query(), config.symmetric_decoy_logit),
                    ],
                );
            }
            HallucinationMode::ManyToOne => {
                let siblings = [sibling(&entity, &mut namer), sibling(&entity, &mut namer)];
                let mut queries = vec![Candidate::new(&query, 0.0)];
                world.add_fact(&query, vec![Candidate::new(&entity.answer, 0.0)]);
                for s in &siblings {
                    world.add_fact(&s.query(), vec![Candidate::new(&entity.answer, 0.0)]);
                    queries.push(Candidate::new(s.query(), 0.0));
                }
                world.add_inverse(&entity.answer, queries);
            }
        }
        world.items.push(WorldItem {
            id: id.clone(),
            task,
            mode,
            query,
        });
        records.push(DatasetRecord {
            task,
            id,
            query_fields: entity.query_fields,
            truth_fields: entity.truth,
        });
    }
    SyntheticBenchmark { world, records }
}

/// Writes `world.json`, one dataset per task, `prompts.toml` and a ready
/// `config.toml` into `dir`. Returns the config path.
pub fn write_bundle(bench: &SyntheticBenchmark, dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    bench.world.save(&dir.join("world.json"))?;
    let mut tasks = Vec::new();
    for kind in TaskKind::BUILTIN {
        let file = format!("{kind}.jsonl");
        write_dataset(&dir.join(&file), &bench.records_for(kind))?;
        tasks.push(TaskSection { task: kind, dataset: file.into() });
    }
    let prompts = PromptFile::builtin();
    let prompts_path = dir.join("prompts.toml");
    std::fs::write(&prompts_path, prompts.to_toml()?).map_err(|e| Error::io(&prompts_path, e))?;
    let backend = |id: &str, kind: BackendKind| BackendConfig {
        id: id.into(),
        kind,
        base_url: None,
        model_name: None,
        embedding_model: None,
        api_key_env: None,
        default_temperature: None,
        max_in_flight: None,
        retry_budget: None,
        timeout_secs: None,
        dimension: None,
        world: (kind == BackendKind::Simulated).then(|| "world.json".into()),
        n: None,
    };
    let config = RunConfig {
        seed,
        cache_dir: Some("cache".into()),
        output_dir: Some("out".into()),
        prompts: Some("prompts.toml".into()),
        forward: vec!["sim".into()],
        methods: Method::ALL.to_vec(),
        k_sweep: (1..=5).collect(),
        detector: DetectorSection {
            k: 5,
            tau: 0.91,
            aggregation: AggregationMode::Average,
            variable_temperature: true,
            backward: vec!["sim".into()],
            embedding: "ngram".into(),
        },
        baselines: BaselineSection::default(),
        backends: vec![backend("sim", BackendKind::Simulated), backend("ngram", BackendKind::Ngram)],
        tasks,
    };
    let path = dir.join("config.toml");
    std::fs::write(&path, config.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions_and_determinism() {
        let b = build(&SyntheticConfig::default());
        assert_eq!(b.records.len(), 200);
        let count = |m| b.world.items.iter().filter(|i| i.mode == m).count();
        assert_eq!(count(HallucinationMode::None), 120);
        assert_eq!(count(HallucinationMode::Fabricate), 60);
        assert_eq!(count(HallucinationMode::SymmetricHallucinate), 10);
        assert_eq!(count(HallucinationMode::ManyToOne), 10);
        let again = build(&SyntheticConfig::default());
        assert_eq!(b.world, again.world);
        assert_eq!(b.records, again.records);
        b.world.validate().unwrap();
    }

    #[test]
    fn bundle_loads_back() {
        let b = build(&SyntheticConfig { items: 12, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        let path = write_bundle(&b, dir.path(), 3).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 3);
        let prompts = cfg.prompt_file().unwrap();
        cfg.build_registry(&prompts).unwrap();
        let tasks = cfg.task_inputs(&prompts, &[]).unwrap();
        assert_eq!(tasks.iter().map(|t| t.records.len()).sum::<usize>(), 12);
    }

    #[test]
    fn verifier_labels_follow_modes() {
        let b = build(&SyntheticConfig::default());
        for (rec, item) in b.records.iter().zip(&b.world.items) {
            let top = b.world.facts_for(&item.query).unwrap();
            for cand in top {
                let label = rec.verify(&cand.text).unwrap().hallucination;
                let expect = matches!(
                    item.mode,
                    HallucinationMode::Fabricate | HallucinationMode::SymmetricHallucinate
                );
                assert_eq!(label, expect, "{} {:?}: {}", rec.id, item.mode, cand.text);
            }
        }
    }
}
