//! Line-delimited dataset records and the ground-truth verifiers that label
//! generated answers.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use interrogate_core::{verify, TaskKind, TaskTemplate};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub task: TaskKind,
    pub id: String,
    pub query_fields: BTreeMap<String, String>,
    pub truth_fields: BTreeMap<String, Value>,
}

/// Typed view of `truth_fields`.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Movies { cast: Vec<String> },
    Books { author: String, year: i32 },
    Gci { capital: String },
    Custom { answer: String },
}

/// Verifier output: the label and, for cast lists, the IOU behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub hallucination: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
}

fn text_field(fields: &BTreeMap<String, Value>, name: &str) -> Result<String, String> {
    match fields.get(name) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(format!("truth field `{name}` must be a non-empty string")),
        None => Err(format!("missing truth field `{name}`")),
    }
}

impl DatasetRecord {
    pub fn truth(&self) -> Result<Truth, String> {
        let f = &self.truth_fields;
        Ok(match self.task {
            TaskKind::Movies => {
                let cast = match f.get("cast") {
                    Some(Value::Array(items)) => items
                        .iter()
                        .map(|v| match v {
                            Value::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                            _ => Err("cast entries must be non-empty strings".to_string()),
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                    Some(Value::String(s)) => s
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                    Some(_) => return Err("truth field `cast` must be a list of names".into()),
                    None => return Err("missing truth field `cast`".into()),
                };
                if cast.is_empty() {
                    return Err("cast list is empty".into());
                }
                Truth::Movies { cast }
            }
            TaskKind::Books => {
                let author = text_field(f, "author")?;
                let year = text_field(f, "year")?
                    .parse::<i32>()
                    .map_err(|_| "truth field `year` must be an integer".to_string())?;
                Truth::Books { author, year }
            }
            TaskKind::Gci => Truth::Gci {
                capital: text_field(f, "capital")?,
            },
            TaskKind::Custom => Truth::Custom {
                answer: text_field(f, "answer")?,
            },
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        self.truth().map(|_| ())
    }

    pub fn query(&self, template: &TaskTemplate) -> Result<String> {
        Ok(template.render(|name| self.query_fields.get(name).map(String::as_str))?)
    }

    /// Labels `answer` against this record's truth.
    pub fn verify(&self, answer: &str) -> Result<Verification> {
        let truth = self
            .truth()
            .map_err(|m| Error::Config(format!("record `{}`: {m}", self.id)))?;
        Ok(match truth {
            Truth::Movies { cast } => {
                let (hallucination, iou) = verify::verify_movies(answer, &cast);
                Verification {
                    hallucination,
                    iou: Some(iou),
                }
            }
            Truth::Books { author, year } => Verification {
                hallucination: verify::verify_books(answer, &author, year),
                iou: None,
            },
            Truth::Gci { capital } => Verification {
                hallucination: verify::verify_gci(answer, &capital),
                iou: None,
            },
            // same containment rule as capitals
            Truth::Custom { answer: truth } => Verification {
                hallucination: verify::verify_gci(answer, &truth),
                iou: None,
            },
        })
    }
}

/// Loads a dataset, reporting the 1-based line of the first bad record.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Dataset {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        record.validate().map_err(bad)?;
        if !ids.insert(record.id.clone()) {
            return Err(bad(format!("duplicate id `{}`", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        serde_json::to_writer(&mut file, r)?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}
