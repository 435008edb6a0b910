//! Tokenization and ROUGE-N F1.

use std::collections::HashMap;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "he", "in", "is", "it",
    "its", "of", "on", "that", "the", "to", "was", "were", "will", "with",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenizerOptions {
    pub remove_stopwords: bool,
}

/// Lowercases and splits on any non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, TokenizerOptions::default())
}

pub fn tokenize_with(text: &str, options: TokenizerOptions) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !options.remove_stopwords || !STOPWORDS.contains(&t.as_str()))
        .collect()
}

pub type NgramCounts = HashMap<Vec<String>, usize>;

pub fn ngram_counts(tokens: &[String], n: usize) -> NgramCounts {
    let mut counts = NgramCounts::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

pub fn ngram_total(tokens: &[String], n: usize) -> usize {
    if n == 0 {
        0
    } else {
        tokens.len().saturating_sub(n - 1)
    }
}

/// Σ_g min(count_a(g), count_b(g)).
pub fn clipped_overlap(a: &NgramCounts, b: &NgramCounts) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(gram, &count)| count.min(large.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Harmonic mean of precision and recall given raw counts; zero when any
/// denominator or the overlap is zero.
pub fn f1_from_counts(overlap: f64, pred_total: f64, ref_total: f64) -> f64 {
    if pred_total <= 0.0 || ref_total <= 0.0 || overlap <= 0.0 {
        return 0.0;
    }
    let p = overlap / pred_total;
    let r = overlap / ref_total;
    2.0 * p * r / (p + r)
}

pub fn rouge_f1(pred_tokens: &[String], ref_tokens: &[String], n: usize) -> f64 {
    let overlap = clipped_overlap(&ngram_counts(pred_tokens, n), &ngram_counts(ref_tokens, n));
    f1_from_counts(
        overlap as f64,
        ngram_total(pred_tokens, n) as f64,
        ngram_total(ref_tokens, n) as f64,
    )
}

/// Unigram ROUGE-1 F1 between two raw texts.
pub fn unigram_f1(a: &str, b: &str) -> f64 {
    rouge_f1(&tokenize(a), &tokenize(b), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("The iPod, launched!"), vec!["the", "ipod", "launched"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("A-B c"), vec!["a", "b", "c"]);
    }

    #[test]
    fn stopword_removal_is_opt_in() {
        let opts = TokenizerOptions {
            remove_stopwords: true,
        };
        assert_eq!(tokenize_with("The iPod of Apple", opts), vec!["ipod", "apple"]);
    }

    #[test]
    fn rouge_examples() {
        let f = rouge_f1(&toks("the cat sat"), &toks("the cat ran"), 1);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_f1(&toks("a b c"), &toks("a b c"), 2), 1.0);
        // bigrams: {ab, bc, cd} vs {bc} -> overlap 1, P=1/3, R=1
        let f = rouge_f1(&toks("a b c d"), &toks("b c"), 2);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators() {
        assert_eq!(rouge_f1(&[], &toks("a"), 1), 0.0);
        assert_eq!(rouge_f1(&toks("a"), &toks("a"), 2), 0.0);
    }

    #[test]
    fn clipping_counts_repeats_once_per_match() {
        let f = rouge_f1(&toks("the the the"), &toks("the cat"), 1);
        // overlap 1, P = 1/3, R = 1/2
        assert!((f - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fusion_examples() {
        let f = unigram_f1(
            "unveiling of the macintosh computer",
            "unveiling of the macintosh personal computer",
        );
        // 5 shared unigrams, 5 and 6 tokens
        assert!((f - 10.0 / 11.0).abs() < 1e-12);
        assert_eq!(unigram_f1("apple ipod launch", "fiscal earnings call"), 0.0);
    }
}
