//! Few-shot prompt construction: forward prompts that ask for an answer and
//! reversed prompts that ask the model to reconstruct the query.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FewShotExemplar {
    pub query: String,
    pub answer: String,
}

impl FewShotExemplar {
    /// Trims both sides; internal newlines are kept verbatim.
    pub fn new(query: impl AsRef<str>, answer: impl AsRef<str>) -> Result<Self> {
        let ex = Self {
            query: query.as_ref().trim().to_string(),
            answer: answer.as_ref().trim().to_string(),
        };
        ex.validate()?;
        Ok(ex)
    }

    fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() {
            return Err(Error::Empty("exemplar query"));
        }
        if self.answer.trim().is_empty() {
            return Err(Error::Empty("exemplar answer"));
        }
        Ok(())
    }

    fn swapped(&self) -> Self {
        Self {
            query: self.answer.clone(),
            answer: self.query.clone(),
        }
    }
}

/// Ordered exemplars plus the labels and separators used to render them.
///
/// Defaults render as
///
/// ```text
/// Query: q1
/// Answer: a1
///
/// Query: Q
/// Answer:
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PromptSpec {
    pub exemplars: Vec<FewShotExemplar>,
    pub query_label: String,
    pub answer_label: String,
    pub pair_separator: String,
    pub field_separator: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            exemplars: Vec::new(),
            query_label: "Query:".into(),
            answer_label: "Answer:".into(),
            pair_separator: "\n\n".into(),
            field_separator: "\n".into(),
        }
    }
}

impl PromptSpec {
    pub fn new(exemplars: Vec<FewShotExemplar>) -> Result<Self> {
        let spec = Self {
            exemplars,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_labels(mut self, query_label: &str, answer_label: &str) -> Result<Self> {
        self.query_label = query_label.to_string();
        self.answer_label = answer_label.to_string();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exemplars.is_empty() {
            return Err(Error::Empty("few-shot exemplars"));
        }
        if self.query_label.trim().is_empty() || self.answer_label.trim().is_empty() {
            return Err(Error::Empty("prompt label"));
        }
        if self.query_label == self.answer_label {
            return Err(Error::InvalidArgument(
                "query and answer labels must differ".into(),
            ));
        }
        self.exemplars.iter().try_for_each(FewShotExemplar::validate)
    }

    /// Swaps every pair to answer-first and swaps the labels with it, keeping
    /// exemplar order. Applying it twice gives back the original spec.
    pub fn reverse_exemplars(&self) -> Self {
        Self {
            exemplars: self.exemplars.iter().map(FewShotExemplar::swapped).collect(),
            query_label: self.answer_label.clone(),
            answer_label: self.query_label.clone(),
            pair_separator: self.pair_separator.clone(),
            field_separator: self.field_separator.clone(),
        }
    }

    /// `[exemplars; Q]`, ending on the answer label.
    pub fn render_forward(&self, query: &str) -> Result<String> {
        self.validate()?;
        let query = query.trim();
        if query.is_empty() {
            return Err(Error::Empty("query"));
        }
        let mut out = String::new();
        for ex in &self.exemplars {
            self.push_field(&mut out, &self.query_label, &ex.query);
            out.push_str(&self.field_separator);
            self.push_field(&mut out, &self.answer_label, &ex.answer);
            out.push_str(&self.pair_separator);
        }
        self.push_field(&mut out, &self.query_label, query);
        out.push_str(&self.field_separator);
        out.push_str(&self.answer_label);
        Ok(out)
    }

    /// `[reversed exemplars; A*]`, ending on the query label.
    pub fn render_backward(&self, answer: &str) -> Result<String> {
        if answer.trim().is_empty() {
            return Err(Error::Empty("answer"));
        }
        self.reverse_exemplars().render_forward(answer)
    }

    fn push_field(&self, out: &mut String, label: &str, text: &str) {
        out.push_str(label);
        out.push(' ');
        out.push_str(text);
    }

    /// Cuts a completion at the first label it emits (the model running on
    /// into another exemplar) and trims it.
    pub fn truncate_completion<'a>(&self, completion: &'a str) -> &'a str {
        let cut = [&self.query_label, &self.answer_label]
            .iter()
            .filter_map(|l| completion.find(l.as_str()))
            .min()
            .unwrap_or(completion.len());
        completion[..cut].trim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TaskKind {
    Movies,
    Books,
    Gci,
    Custom,
}

impl TaskKind {
    pub const BUILTIN: [TaskKind; 3] = [TaskKind::Movies, TaskKind::Books, TaskKind::Gci];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Movies => "movies",
            TaskKind::Books => "books",
            TaskKind::Gci => "gci",
            TaskKind::Custom => "custom",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "movies" => Ok(TaskKind::Movies),
            "books" => Ok(TaskKind::Books),
            "gci" => Ok(TaskKind::Gci),
            "custom" => Ok(TaskKind::Custom),
            other => Err(Error::InvalidArgument(alloc::format!("unknown task `{other}`"))),
        }
    }
}

/// A query pattern with `{field}` placeholders filled from a dataset record.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskTemplate {
    pub name: TaskKind,
    pub query_pattern: String,
}

impl TaskTemplate {
    pub fn new(name: TaskKind, query_pattern: impl Into<String>) -> Result<Self> {
        let t = Self {
            name,
            query_pattern: query_pattern.into(),
        };
        t.placeholders()?;
        Ok(t)
    }

    pub fn builtin(name: TaskKind) -> Option<Self> {
        let pattern = match name {
            TaskKind::Movies => "What actors played in the {year} movie {title}?",
            TaskKind::Books => "Who is the author of the book {title}, what year was it published?",
            TaskKind::Gci => "What is the capital of {country}?",
            TaskKind::Custom => return None,
        };
        Some(Self {
            name,
            query_pattern: pattern.into(),
        })
    }

    /// Placeholder names in order of appearance. `{{` and `}}` are literal braces.
    pub fn placeholders(&self) -> Result<Vec<&str>> {
        let mut names = Vec::new();
        self.walk(|seg| {
            if let Segment::Field(name) = seg {
                names.push(name);
            }
            Ok(())
        })?;
        Ok(names)
    }

    pub fn render<'f, F>(&self, lookup: F) -> Result<String>
    where
        F: Fn(&str) -> Option<&'f str>,
    {
        let mut out = String::new();
        self.walk(|seg| {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Field(name) => {
                    let value = lookup(name).ok_or_else(|| Error::MissingField(name.into()))?;
                    out.push_str(value.trim());
                }
            }
            Ok(())
        })?;
        Ok(out)
    }

    fn walk<'a>(&'a self, mut visit: impl FnMut(Segment<'a>) -> Result<()>) -> Result<()> {
        let p = self.query_pattern.as_str();
        let mut rest = p;
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix("{{") {
                visit(Segment::Literal("{"))?;
                rest = r;
            } else if let Some(r) = rest.strip_prefix("}}") {
                visit(Segment::Literal("}"))?;
                rest = r;
            } else if let Some(r) = rest.strip_prefix('{') {
                let end = r.find('}').ok_or_else(|| {
                    Error::InvalidArgument(alloc::format!("unclosed placeholder in `{p}`"))
                })?;
                let name = r[..end].trim();
                if name.is_empty() || name.contains('{') {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "bad placeholder in `{p}`"
                    )));
                }
                visit(Segment::Field(name))?;
                rest = &r[end + 1..];
            } else if rest.starts_with('}') {
                return Err(Error::InvalidArgument(alloc::format!("stray `}}` in `{p}`")));
            } else {
                let end = rest.find(['{', '}']).unwrap_or(rest.len());
                visit(Segment::Literal(&rest[..end]))?;
                rest = &rest[end..];
            }
        }
        Ok(())
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Field(&'a str),
}
