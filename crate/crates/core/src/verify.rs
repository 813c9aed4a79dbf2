//! Ground-truth heuristics that label a generated answer as hallucinated or not.
//!
//! Names and answers are compared after [`normalize`]: case folded, diacritics
//! and punctuation stripped, whitespace collapsed.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Cast answers with an IOU below this are hallucinations. The comparison is
/// strict, so exactly 0.8 passes.
pub const MOVIES_IOU_THRESHOLD: f64 = 0.8;

const CAST_PREFIXES: &[&str] = &[
    "the main cast included",
    "the main cast includes",
    "the main cast was",
    "the main cast is",
    "the cast included",
    "the cast includes",
    "the actors are",
    "the actors were",
    "the main actors are",
    "starring",
];

pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfd() {
        if is_combining_mark(c) {
            continue;
        }
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '\u{2019}' | '.' | '-' | '\u{2010}') {
            // intra-word marks: "D'Este", "B.J.", "Hann-Byrd"
        } else {
            pending_space = true;
        }
    }
    out
}

/// Splits a cast answer into normalized full names.
pub fn extract_cast(answer: &str) -> BTreeSet<String> {
    let mut body = answer.trim();
    let lowered = normalize(body);
    for prefix in CAST_PREFIXES {
        if lowered.starts_with(prefix) {
            body = skip_words(body, prefix.split(' ').count());
            break;
        }
    }
    body.split([',', ';', '\n'])
        .flat_map(|piece| split_and(piece))
        .map(normalize)
        .filter(|n| !n.is_empty())
        .collect()
}

fn split_and(piece: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut rest = piece.trim();
    if let Some(r) = strip_word_prefix(rest, "and") {
        rest = r;
    }
    while let Some(idx) = find_word(rest, "and") {
        parts.push(&rest[..idx]);
        rest = &rest[idx + 3..];
    }
    parts.push(rest);
    parts
}

fn strip_word_prefix<'a>(s: &'a str, word: &str) -> Option<&'a str> {
    let head = s.get(..word.len())?;
    let tail = &s[word.len()..];
    (head.eq_ignore_ascii_case(word) && tail.starts_with(char::is_whitespace)).then_some(tail)
}

fn find_word(s: &str, word: &str) -> Option<usize> {
    let lower = s.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(word) {
        let idx = from + pos;
        let before = lower[..idx].chars().next_back();
        let after = lower[idx + word.len()..].chars().next();
        if before.is_some_and(char::is_whitespace) && after.is_some_and(char::is_whitespace) {
            return Some(idx);
        }
        from = idx + word.len();
    }
    None
}

/// Drops the first `n` whitespace-separated words and any punctuation after them.
fn skip_words(s: &str, n: usize) -> &str {
    let mut rest = s.trim_start();
    for _ in 0..n {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        rest = rest[end..].trim_start();
    }
    rest.trim_start_matches([':', ',', '-']).trim_start()
}

/// Intersection over union of two name sets; 1.0 when both are empty.
pub fn iou(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Returns `(hallucinated, iou)`.
pub fn verify_movies<S: AsRef<str>>(answer: &str, truth_cast: &[S]) -> (bool, f64) {
    let truth: BTreeSet<String> = truth_cast
        .iter()
        .map(|n| normalize(n.as_ref()))
        .filter(|n| !n.is_empty())
        .collect();
    let extracted = extract_cast(answer);
    let score = if extracted.is_empty() {
        0.0
    } else {
        iou(&extracted, &truth)
    };
    (score < MOVIES_IOU_THRESHOLD, score)
}

/// Hallucinated unless the author's name and the exact publication year both appear.
pub fn verify_books(answer: &str, truth_author: &str, truth_year: i32) -> bool {
    let author = normalize(truth_author);
    let year = alloc::format!("{truth_year:04}");
    let author_ok = !author.is_empty() && contains_phrase(&normalize(answer), &author);
    !(author_ok && contains_year(answer, &year))
}

/// Hallucinated unless the capital's name appears.
pub fn verify_gci(answer: &str, truth_capital: &str) -> bool {
    let capital = normalize(truth_capital);
    capital.is_empty() || !contains_phrase(&normalize(answer), &capital)
}

/// Whole-word containment over normalized text.
fn contains_phrase(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        before.is_none_or(|c| c == ' ') && after.is_none_or(|c| c == ' ')
    })
}

/// The year as a standalone run of digits (not part of a longer number).
fn contains_year(answer: &str, year: &str) -> bool {
    answer.match_indices(year).any(|(i, _)| {
        let before = answer[..i].chars().next_back();
        let after = answer[i + year.len()..].chars().next();
        !before.is_some_and(|c| c.is_ascii_digit()) && !after.is_some_and(|c| c.is_ascii_digit())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Mélanie   LAURENT "), "melanie laurent");
        assert_eq!(normalize("Daniel Brühl"), "daniel bruhl");
        assert_eq!(normalize("B.J. Novak"), "bj novak");
        assert_eq!(normalize("Carlo D'Este"), "carlo deste");
        assert_eq!(normalize("The capital is Paris."), "the capital is paris");
        assert_eq!(normalize("a,b"), "a b");
    }

    #[test]
    fn cast_extraction_forms() {
        let got = extract_cast("The main cast included Robin Williams, Kirsten Dunst, and Bonnie Hunt.");
        let want: BTreeSet<String> = ["robin williams", "kirsten dunst", "bonnie hunt"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(got, want);
        let got = extract_cast("The actors are Brad Pitt and Diane Kruger");
        assert!(got.contains("brad pitt") && got.contains("diane kruger") && got.len() == 2);
        assert!(extract_cast("Selma Blair\nEdward Burns").contains("edward burns"));
        // "and" inside a name is not a separator
        assert!(extract_cast("Sandra Bullock, Andy Serkis").contains("andy serkis"));
    }

    #[test]
    fn movies_exact_match() {
        let (label, score) = verify_movies("A Aa, B Bb, C Cc", &["A Aa", "B Bb", "C Cc"]);
        assert_eq!((label, score), (false, 1.0));
    }

    #[test]
    fn movies_two_of_three() {
        let (label, score) = verify_movies("A Aa, B Bb", &["A Aa", "B Bb", "C Cc"]);
        assert!((score - 2.0 / 3.0).abs() < 1e-12);
        assert!(label);
    }

    #[test]
    fn movies_boundary_is_strict() {
        let truth = ["A Aa", "B Bb", "C Cc", "D Dd", "E Ee"];
        let (label, score) = verify_movies("A Aa, B Bb, C Cc, D Dd", &truth);
        assert_eq!(score, 0.8);
        assert!(!label);
    }

    #[test]
    fn movies_unparseable() {
        assert_eq!(verify_movies("   ", &["A"]), (true, 0.0));
        assert_eq!(verify_movies("...", &["A"]), (true, 0.0));
    }

    #[test]
    fn books_examples() {
        let answer = "The author is Carlo D'Este, and it was published in 1991.";
        assert!(!verify_books(answer, "Carlo D'Este", 1991));
        assert!(verify_books(answer, "Carlo D'Este", 1990));
        assert!(verify_books("", "Carlo D'Este", 1991));
        assert!(verify_books("The author is Carlo D'Este, published 19911.", "Carlo D'Este", 1991));
        assert!(verify_books("The author is Carlo Desterro, 1991", "Carlo D'Este", 1991));
    }

    #[test]
    fn gci_examples() {
        assert!(!verify_gci("The capital is Paris.", "Paris"));
        assert!(verify_gci("The capital is Lyon.", "Paris"));
        assert!(!verify_gci("the capital is paris", "Paris"));
        assert!(verify_gci("The capital is Parisville.", "Paris"));
        assert!(!verify_gci("The capital is Bogotá.", "Bogota"));
    }

    fn name_set() -> impl Strategy<Value = BTreeSet<String>> {
        proptest::collection::btree_set("[a-e]{1,2} [a-c]", 0..6)
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_one_iff_equal(a in name_set(), b in name_set()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert_eq!(iou(&a, &b) == 1.0, a == b);
        }
    }
}
