//! Search abstraction over a local BM25 index and a remote web-search API,
//! with document fetching and markup cleaning.

mod index;
mod markup;
mod remote;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::CalendarDate;

pub use index::{
    bm25_idf, index_corpus, read_corpus, search_local, CorpusRecord, IndexedDoc, LocalIndex,
    Posting, BM25_B, BM25_K1,
};
pub use markup::clean_markup;
pub use remote::{parse_search_response, RemoteSearch, MIN_BODY_TOKENS, SEARCH_API_KEY_ENV};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("malformed corpus record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("search provider returned HTTP {status}: {excerpt}")]
    Provider { status: u16, excerpt: String },
    #[error("unexpected search response: {0}")]
    Parse(String),
    #[error("could not fetch {0}")]
    Fetch(String),
    #[error("document {0} has too little text after cleaning")]
    EmptyBody(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub title: String,
    pub snippet: String,
    pub published: Option<CalendarDate>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub published: Option<CalendarDate>,
    /// Markup-free plain text; paragraphs separated by blank lines.
    pub body: String,
}

impl Document {
    /// The degraded document used when a hit cannot be fetched.
    pub fn from_snippet(hit: &SearchHit) -> Self {
        let body = [hit.title.trim(), hit.snippet.trim()]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
        Self {
            doc_id: hit.doc_id.clone(),
            title: hit.title.clone(),
            published: hit.published,
            body,
        }
    }
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RetrievalError>;

    fn fetch(&self, hit: &SearchHit) -> Result<Document, RetrievalError>;

    /// Short label recorded in manifests.
    fn name(&self) -> &str;
}

/// Closed-corpus backend: BM25 over an in-memory corpus.
#[derive(Debug, Clone)]
pub struct LocalBackend {
    index: LocalIndex,
    documents: HashMap<String, Document>,
}

impl LocalBackend {
    pub fn new(documents: Vec<Document>) -> Result<Self, RetrievalError> {
        let index = index_corpus(&documents)?;
        Ok(Self::with_index(index, documents))
    }

    /// Uses a prebuilt index; `documents` must be the corpus it was built from.
    pub fn with_index(index: LocalIndex, documents: Vec<Document>) -> Self {
        let documents = documents.into_iter().map(|d| (d.doc_id.clone(), d)).collect();
        Self { index, documents }
    }

    pub fn index(&self) -> &LocalIndex {
        &self.index
    }

    /// Writes the index together with the documents it covers.
    pub fn save(&self, path: &std::path::Path) -> Result<(), RetrievalError> {
        let mut documents: Vec<&Document> = self.documents.values().collect();
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let bundle = serde_json::json!({ "index": &self.index, "documents": documents });
        let text = serde_json::to_string(&bundle).map_err(|e| RetrievalError::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RetrievalError> {
        #[derive(Deserialize)]
        struct Bundle {
            index: LocalIndex,
            documents: Vec<Document>,
        }
        let text = std::fs::read_to_string(path)?;
        let bundle: Bundle =
            serde_json::from_str(&text).map_err(|e| RetrievalError::Parse(format!("{}: {e}", path.display())))?;
        Ok(Self::with_index(bundle.index, bundle.documents))
    }
}

impl SearchBackend for LocalBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        Ok(search_local(&self.index, query, k))
    }

    fn fetch(&self, hit: &SearchHit) -> Result<Document, RetrievalError> {
        self.documents
            .get(&hit.doc_id)
            .cloned()
            .ok_or_else(|| RetrievalError::Fetch(hit.doc_id.clone()))
    }

    fn name(&self) -> &str {
        "local-bm25"
    }
}
