use serde::{Deserialize, Serialize};

use crate::retrieval::Document;
use crate::text::{split_sentences, word_count};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: u32,
    pub text: String,
    pub word_count: usize,
}

fn paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

/// Pieces of at most `max_words` words from one oversized paragraph: whole
/// sentences packed greedily, over-long sentences cut every `max_words` words.
fn split_paragraph(paragraph: &str, max_words: usize) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_words = 0;
    let flush = |current: &mut Vec<String>, current_words: &mut usize, pieces: &mut Vec<String>| {
        if !current.is_empty() {
            pieces.push(current.join(" "));
            current.clear();
            *current_words = 0;
        }
    };
    for sentence in split_sentences(paragraph) {
        let n = word_count(&sentence);
        if n > max_words {
            flush(&mut current, &mut current_words, &mut pieces);
            let words: Vec<&str> = sentence.split_whitespace().collect();
            pieces.extend(words.chunks(max_words).map(|w| w.join(" ")));
            continue;
        }
        if current_words + n > max_words {
            flush(&mut current, &mut current_words, &mut pieces);
        }
        current.push(sentence);
        current_words += n;
    }
    flush(&mut current, &mut current_words, &mut pieces);
    pieces
}

/// Greedily packs whole paragraphs (blank-line separated) into chunks of at
/// most `max_words` words. A paragraph too long on its own is split on
/// sentence boundaries, then by words, and its pieces become chunks of their
/// own.
pub fn chunk_document(doc: &Document, max_words: usize) -> Vec<Chunk> {
    let max_words = max_words.max(1);
    let mut texts: Vec<String> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_words = 0;
    for paragraph in paragraphs(&doc.body) {
        let n = word_count(&paragraph);
        if n > max_words {
            if !current.is_empty() {
                texts.push(current.join("\n\n"));
                current.clear();
                current_words = 0;
            }
            texts.extend(split_paragraph(&paragraph, max_words));
            continue;
        }
        if current_words + n > max_words && !current.is_empty() {
            texts.push(current.join("\n\n"));
            current.clear();
            current_words = 0;
        }
        current.push(paragraph);
        current_words += n;
    }
    if !current.is_empty() {
        texts.push(current.join("\n\n"));
    }
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Chunk {
            doc_id: doc.doc_id.clone(),
            index: i as u32,
            word_count: word_count(&text),
            text,
        })
        .collect()
}
