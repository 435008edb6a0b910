//! In-memory BM25 inverted index for closed-corpus retrieval.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Document, RetrievalError, SearchHit};
use crate::date::parse_date;
use crate::evaluation::rouge::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
const SNIPPET_WORDS: usize = 40;

/// One line of a JSON Lines corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub date: Option<String>,
    pub text: Option<String>,
}

impl CorpusRecord {
    pub fn into_document(self, line: usize) -> Result<Document, RetrievalError> {
        let malformed = |reason: &str| RetrievalError::MalformedRecord {
            line,
            reason: reason.to_string(),
        };
        let doc_id = self
            .id
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| malformed("missing id"))?;
        let body = self.text.ok_or_else(|| malformed("missing text"))?;
        let published = match self.date.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(
                parse_date(raw, None).map_err(|e| malformed(&format!("bad date: {e}")))?,
            ),
        };
        Ok(Document {
            doc_id,
            title: self.title.unwrap_or_default(),
            published,
            body,
        })
    }
}

/// Reads a JSON Lines corpus; blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, RetrievalError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| RetrievalError::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
        docs.push(record.into_document(i + 1)?);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Ordinal into [`LocalIndex::docs`].
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDoc {
    pub doc_id: String,
    pub title: String,
    pub published: Option<crate::date::CalendarDate>,
    pub snippet: String,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub docs: Vec<IndexedDoc>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
}

impl LocalIndex {
    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.docs.iter().find(|d| d.doc_id == doc_id).map(|d| d.length)
    }

    /// Term frequency of `term` in `doc_id` (zero when absent).
    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(ord) = self.docs.iter().position(|d| d.doc_id == doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|ps| ps.iter().find(|p| p.doc as usize == ord))
            .map_or(0, |p| p.tf)
    }
}

/// Builds an index over lowercase alphanumeric tokens of title and body.
pub fn index_corpus<'a, I>(documents: I) -> Result<LocalIndex, RetrievalError>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut index = LocalIndex::default();
    let mut seen = BTreeSet::new();
    let mut total_length = 0u64;
    for doc in documents {
        if doc.doc_id.trim().is_empty() {
            return Err(RetrievalError::MalformedRecord {
                line: index.doc_count + 1,
                reason: "missing id".into(),
            });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(RetrievalError::DuplicateDocId(doc.doc_id.clone()));
        }
        let ord = index.docs.len() as u32;
        let tokens = tokenize(&format!("{} {}", doc.title, doc.body));
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            index
                .postings
                .entry(term.to_string())
                .or_default()
                .push(Posting { doc: ord, tf: count });
        }
        total_length += tokens.len() as u64;
        index.docs.push(IndexedDoc {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            published: doc.published,
            snippet: doc
                .body
                .split_whitespace()
                .take(SNIPPET_WORDS)
                .collect::<Vec<_>>()
                .join(" "),
            length: tokens.len() as u32,
        });
        index.doc_count += 1;
    }
    index.avg_doc_length = if index.doc_count == 0 {
        0.0
    } else {
        total_length as f64 / index.doc_count as f64
    };
    Ok(index)
}

pub fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Top-`k` documents by BM25 (k1 = 1.2, b = 0.75), ties broken by doc id.
/// Repeated query terms count once.
pub fn search_local(index: &LocalIndex, query: &str, k: usize) -> Vec<SearchHit> {
    if k == 0 || index.doc_count == 0 {
        return Vec::new();
    }
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let avgdl = if index.avg_doc_length > 0.0 {
        index.avg_doc_length
    } else {
        1.0
    };
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for term in &terms {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let idf = bm25_idf(index.doc_count, postings.len());
        for p in postings {
            let dl = index.docs[p.doc as usize].length as f64;
            let tf = p.tf as f64;
            let norm = tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl));
            *scores.entry(p.doc).or_insert(0.0) += idf * norm;
        }
    }
    let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.docs[a.0 as usize].doc_id.cmp(&index.docs[b.0 as usize].doc_id))
    });
    ranked.truncate(k);
    ranked
        .into_iter()
        .map(|(ord, score)| {
            let d = &index.docs[ord as usize];
            SearchHit {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                snippet: d.snippet.clone(),
                published: d.published,
                score,
            }
        })
        .collect()
}
