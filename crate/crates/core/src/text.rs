//! Small text helpers shared by the memory, updater and supervisor.

use crate::evaluation::rouge::unigram_f1;

/// Lowercase, collapse whitespace and strip terminal punctuation.
pub fn normalize_description(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
}

/// Unigram ROUGE-1 F1 over normalized descriptions.
pub fn description_similarity(a: &str, b: &str) -> f64 {
    unigram_f1(&normalize_description(a), &normalize_description(b))
}

/// Splits on `.`, `!` or `?` followed by whitespace. Terminal punctuation stays
/// with its sentence; fragments are trimmed and empties dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            push_trimmed(&mut sentences, &current);
            current.clear();
        }
    }
    push_trimmed(&mut sentences, &current);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, fragment: &str) {
    let collapsed = fragment.split_whitespace().collect::<Vec<_>>().join(" ");
    if !collapsed.is_empty() {
        out.push(collapsed);
    }
}

/// Appends `sentence` to `summary` with a single separating space.
pub fn append_sentence(summary: &mut String, sentence: &str) {
    let sentence = sentence.trim();
    if sentence.is_empty() {
        return;
    }
    if !summary.is_empty() {
        summary.push(' ');
    }
    summary.push_str(sentence);
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
