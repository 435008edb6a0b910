use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{clean_markup, Document, RetrievalError, SearchBackend, SearchHit};
use crate::cache::{request_hash, DiskCache};
use crate::date::parse_date;
use crate::evaluation::rouge::tokenize;

pub const SEARCH_API_KEY_ENV: &str = "SEARCH_API_KEY";
/// Cleaned pages shorter than this are skipped.
pub const MIN_BODY_TOKENS: usize = 20;
const EXCERPT_CHARS: usize = 200;

/// JSON-over-HTTP web search client (`POST {"q", "num"}`) with an on-disk
/// response cache for both searches and page fetches.
pub struct RemoteSearch {
    endpoint: String,
    api_key: String,
    client: Client,
    cache: Option<DiskCache>,
    network_calls: AtomicU64,
}

impl std::fmt::Debug for RemoteSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteSearch")
            .field("endpoint", &self.endpoint)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

impl RemoteSearch {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        cache: Option<DiskCache>,
    ) -> Result<Self, RetrievalError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(RetrievalError::Transport("search API key is empty".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client,
            cache,
            network_calls: AtomicU64::new(0),
        })
    }

    pub fn from_env(endpoint: impl Into<String>, cache: Option<DiskCache>) -> Result<Self, RetrievalError> {
        let key = std::env::var(SEARCH_API_KEY_ENV).map_err(|_| {
            RetrievalError::Transport(format!("environment variable {SEARCH_API_KEY_ENV} is not set"))
        })?;
        Self::new(endpoint, key, cache)
    }

    /// Requests that actually went over the network (cache hits excluded).
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn search_remote(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        let key = request_hash(&json!({
            "kind": "search",
            "endpoint": self.endpoint,
            "query": query,
            "k": k,
        }));
        if let Some(hits) = self.cache.as_ref().and_then(|c| c.get::<Vec<SearchHit>>(&key)) {
            return Ok(hits);
        }
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let response = self
            .client
            .post(&self.endpoint)
            .header("X-API-KEY", &self.api_key)
            .json(&json!({ "q": query, "num": k }))
            .send()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(RetrievalError::Provider {
                status: status.as_u16(),
                excerpt: excerpt(&body),
            });
        }
        let value: Value =
            serde_json::from_str(&body).map_err(|e| RetrievalError::Parse(e.to_string()))?;
        let mut hits = parse_search_response(&value)?;
        hits.truncate(k);
        if let Some(cache) = &self.cache {
            cache.put(&key, &hits)?;
        }
        Ok(hits)
    }

    fn fetch_page(&self, hit: &SearchHit) -> Result<Document, RetrievalError> {
        let key = request_hash(&json!({ "kind": "fetch", "doc_id": hit.doc_id }));
        if let Some(doc) = self.cache.as_ref().and_then(|c| c.get::<Document>(&key)) {
            return Ok(doc);
        }
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let response = self
            .client
            .get(&hit.doc_id)
            .send()
            .map_err(|e| RetrievalError::Fetch(format!("{}: {e}", hit.doc_id)))?;
        if !response.status().is_success() {
            return Err(RetrievalError::Fetch(format!(
                "{}: HTTP {}",
                hit.doc_id,
                response.status().as_u16()
            )));
        }
        let raw = response
            .text()
            .map_err(|e| RetrievalError::Fetch(format!("{}: {e}", hit.doc_id)))?;
        let body = clean_markup(&raw);
        if tokenize(&body).len() < MIN_BODY_TOKENS {
            return Err(RetrievalError::EmptyBody(hit.doc_id.clone()));
        }
        let doc = Document {
            doc_id: hit.doc_id.clone(),
            title: hit.title.clone(),
            published: hit.published,
            body,
        };
        if let Some(cache) = &self.cache {
            cache.put(&key, &doc)?;
        }
        Ok(doc)
    }
}

impl SearchBackend for RemoteSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        self.search_remote(query, k)
    }

    fn fetch(&self, hit: &SearchHit) -> Result<Document, RetrievalError> {
        self.fetch_page(hit)
    }

    fn name(&self) -> &str {
        "remote-search"
    }
}

/// Accepts either a top-level array of results or an object holding one under
/// `organic`, `results`, `items` or `hits`. Items without a link are skipped.
pub fn parse_search_response(value: &Value) -> Result<Vec<SearchHit>, RetrievalError> {
    let items = match value {
        Value::Array(items) => items,
        Value::Object(map) => ["organic", "results", "items", "hits"]
            .iter()
            .find_map(|k| map.get(*k).and_then(Value::as_array))
            .ok_or_else(|| RetrievalError::Parse("no result array in response".into()))?,
        _ => return Err(RetrievalError::Parse("response is neither an object nor an array".into())),
    };
    let text = |item: &Value, field: &str| {
        item.get(field)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .trim()
            .to_string()
    };
    let hits = items
        .iter()
        .filter(|item| item.is_object())
        .filter_map(|item| {
            let link = text(item, "link");
            (!link.is_empty()).then_some((link, item))
        })
        .enumerate()
        .map(|(rank, (link, item))| SearchHit {
            doc_id: link,
            title: text(item, "title"),
            snippet: text(item, "snippet"),
            published: item
                .get("date")
                .and_then(Value::as_str)
                .and_then(|d| parse_date(d, None).ok()),
            score: 1.0 / (1.0 + rank as f64),
        })
        .collect();
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{StubResponse, StubServer};

    const FIXTURE: &str = r#"{
      "searchParameters": {"q": "apple mac studio", "num": 3},
      "organic": [
        {"title": "Apple unveils Mac Studio", "link": "https://example.com/a", "snippet": "Apple today unveiled Mac Studio.", "date": "Mar 8, 2022"},
        {"title": "M2 Ultra arrives", "link": "https://example.com/b", "snippet": "The M2 Ultra chip ships in Mac Studio."},
        {"title": "WWDC recap", "link": "https://example.com/c", "snippet": "Everything announced at WWDC.", "date": "2 days ago"}
      ]
    }"#;

    #[test]
    fn fixture_parses_in_order() {
        let value: Value = serde_json::from_str(FIXTURE).unwrap();
        let hits = parse_search_response(&value).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["https://example.com/a", "https://example.com/b", "https://example.com/c"]);
        assert_eq!(hits[0].published.unwrap().to_string(), "2022-03-08");
        assert_eq!(hits[2].published, None);
        assert!(hits.windows(2).all(|w| w[0].score > w[1].score));
    }

    #[test]
    fn unexpected_shape_is_parse_error() {
        assert!(matches!(
            parse_search_response(&json!({"answer": 1})),
            Err(RetrievalError::Parse(_))
        ));
        assert!(matches!(parse_search_response(&json!("x")), Err(RetrievalError::Parse(_))));
    }

    #[test]
    fn posts_query_and_caches() {
        let server = StubServer::start(|_| StubResponse::json(200, FIXTURE));
        let dir = tempfile::tempdir().unwrap();
        let client = RemoteSearch::new(server.url("/search"), "secret", Some(DiskCache::open(dir.path()).unwrap())).unwrap();
        let first = client.search_remote("apple mac studio", 3).unwrap();
        assert_eq!(first.len(), 3);
        let request = &server.requests()[0];
        assert_eq!(request.method, "POST");
        assert_eq!(request.header("x-api-key").as_deref(), Some("secret"));
        let body: Value = serde_json::from_str(&request.body).unwrap();
        assert_eq!(body, json!({"q": "apple mac studio", "num": 3}));

        let second = client.search_remote("apple mac studio", 3).unwrap();
        assert_eq!(first, second);
        assert_eq!(server.request_count(), 1);
        assert_eq!(client.network_calls(), 1);
    }

    #[test]
    fn http_429_is_provider_error() {
        let server = StubServer::start(|_| StubResponse::json(429, r#"{"message":"rate limited"}"#));
        let client = RemoteSearch::new(server.url("/search"), "k", None).unwrap();
        match client.search_remote("q", 3) {
            Err(RetrievalError::Provider { status, excerpt }) => {
                assert_eq!(status, 429);
                assert!(excerpt.contains("rate limited"));
            }
            other => panic!("expected provider error, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let client = RemoteSearch::new(crate::testkit::closed_port_url(), "k", None).unwrap();
        assert!(matches!(client.search_remote("q", 3), Err(RetrievalError::Transport(_))));
    }

    #[test]
    fn empty_key_rejected() {
        assert!(RemoteSearch::new("http://localhost", " ", None).is_err());
    }

    #[test]
    fn fetch_cleans_and_caches_pages() {
        let page = format!(
            "<html><head><script>track()</script></head><body><p>{}</p></body></html>",
            "Apple announced the Mac Studio with the M2 Ultra chip at its developer conference in June 2023 and shipped it days later to customers"
        );
        let server = StubServer::start(move |req| {
            if req.path == "/short" {
                StubResponse::html(200, "<p>too short</p>")
            } else {
                StubResponse::html(200, &page)
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let client = RemoteSearch::new(server.url("/search"), "k", Some(DiskCache::open(dir.path()).unwrap())).unwrap();
        let hit = SearchHit {
            doc_id: server.url("/page"),
            title: "Mac Studio".into(),
            snippet: String::new(),
            published: None,
            score: 1.0,
        };
        let doc = client.fetch(&hit).unwrap();
        assert!(doc.body.starts_with("Apple announced"));
        assert!(!doc.body.contains("track"));
        assert_eq!(client.fetch(&hit).unwrap(), doc);
        assert_eq!(server.request_count(), 1);

        let short = SearchHit { doc_id: server.url("/short"), ..hit };
        assert!(matches!(client.fetch(&short), Err(RetrievalError::EmptyBody(_))));
    }
}
