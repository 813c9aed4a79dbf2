//! Text helpers and scoring for the sampling-consistency baseline: an answer is
//! split into sentences, a judge model is asked whether each sentence is
//! supported by each extra sample, and unsupported fractions are averaged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. A period
/// after a lone capital letter is treated as an initial ("Mark P. Morford").
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let at_boundary = iter.peek().is_none_or(|(_, n)| n.is_whitespace());
        if !at_boundary || (c == '.' && is_initial(&text[start..i])) {
            continue;
        }
        let end = i + c.len_utf8();
        push_trimmed(&mut out, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn is_initial(before: &str) -> bool {
    let word = before.rsplit(|c: char| c.is_whitespace() || c == '.').next().unwrap_or("");
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

pub fn judge_prompt(sample: &str, sentence: &str) -> String {
    format!(
        "Context: {}\n\nSentence: {}\n\nIs the sentence supported by the context above? \
         Answer Yes or No.\n\nAnswer:",
        sample.trim(),
        sentence.trim()
    )
}

/// `Some(true)` for yes, `Some(false)` for no, `None` when neither leads the reply.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    let first = reply
        .trim_start()
        .split(|c: char| !c.is_alphabetic())
        .next()
        .unwrap_or("");
    if first.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if first.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

/// Mean over sentences of the fraction of samples that did not support it.
/// `judgments[s][j]` is the parsed judge reply for sentence `s`, sample `j`;
/// unparseable replies count as unsupported.
pub fn inconsistency_score(judgments: &[Vec<Option<bool>>]) -> Result<f64> {
    if judgments.is_empty() {
        return Err(Error::Empty("sentences"));
    }
    let mut total = 0.0;
    for row in judgments {
        if row.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let unsupported = row.iter().filter(|j| **j != Some(true)).count();
        total += unsupported as f64 / row.len() as f64;
    }
    Ok(total / judgments.len() as f64)
}
