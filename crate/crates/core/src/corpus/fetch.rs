//! A small, polite fetcher for public subreddit comment listings.

use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use super::types::RawComment;
use crate::http::{send_with_retry, HttpRequest, HttpTransport, RequestError, RetryPolicy};

/// Maximum page size the listing API accepts.
pub const MAX_PAGE: usize = 100;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("transient fetch failure: {0}")]
    Transient(String),
    #[error("permanent fetch failure: {0}")]
    Permanent(String),
    #[error("unexpected listing payload: {0}")]
    Payload(String),
}

impl From<RequestError> for FetchError {
    fn from(e: RequestError) -> Self {
        if e.is_transient() {
            FetchError::Transient(e.to_string())
        } else {
            FetchError::Permanent(e.to_string())
        }
    }
}

#[derive(Deserialize)]
struct Listing {
    data: ListingData,
}

#[derive(Deserialize)]
struct ListingData {
    #[serde(default)]
    children: Vec<Child>,
    after: Option<String>,
}

#[derive(Deserialize)]
struct Child {
    data: CommentData,
}

#[derive(Deserialize)]
struct CommentData {
    author: String,
    subreddit: String,
    body: String,
    #[serde(default)]
    score: i64,
    created_utc: f64,
}

/// Result of a listing fetch.
#[derive(Debug, Clone, Default)]
pub struct FetchedListing {
    pub comments: Vec<RawComment>,
    /// Pages requested successfully.
    pub pages: usize,
    /// Total HTTP attempts, including retries.
    pub attempts: u32,
}

pub struct ListingFetcher {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    politeness_delay: Duration,
    retry: RetryPolicy,
}

impl ListingFetcher {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        ListingFetcher {
            transport,
            base_url: "https://www.reddit.com".into(),
            politeness_delay: Duration::from_secs(2),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_politeness_delay(mut self, delay: Duration) -> Self {
        self.politeness_delay = delay;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Fetches up to `limit` recent comments from `subreddit`, one page of at
    /// most [`MAX_PAGE`] at a time. `limit == 0` issues no request.
    pub fn fetch_subreddit_listing(&self, subreddit: &str, limit: usize) -> Result<FetchedListing, FetchError> {
        let sub = super::reddit::normalize_subreddit(subreddit);
        let mut out = FetchedListing::default();
        let mut after: Option<String> = None;
        while out.comments.len() < limit {
            if out.pages > 0 && !self.politeness_delay.is_zero() {
                std::thread::sleep(self.politeness_delay);
            }
            let page = (limit - out.comments.len()).min(MAX_PAGE);
            let mut url = format!("{}/r/{}/comments.json?limit={}&raw_json=1", self.base_url, sub, page);
            if let Some(a) = &after {
                url.push_str("&after=");
                url.push_str(a);
            }
            let delivered = send_with_retry(self.transport.as_ref(), &HttpRequest::get(url), &self.retry)
                .inspect_err(|e| log::warn!("listing fetch for r/{sub} failed: {e}"))?;
            out.attempts += delivered.attempts;
            out.pages += 1;
            if delivered.attempts > 1 {
                log::info!("r/{sub} page {} needed {} attempts", out.pages, delivered.attempts);
            }
            let listing: Listing = serde_json::from_slice(&delivered.response.body)
                .map_err(|e| FetchError::Payload(e.to_string()))?;
            let n_children = listing.data.children.len();
            for child in listing.data.children.into_iter().take(limit - out.comments.len()) {
                out.comments.push(to_raw(child.data)?);
            }
            after = listing.data.after;
            if after.is_none() || n_children == 0 {
                break;
            }
        }
        log::info!("r/{sub}: {} comments in {} pages, {} attempts", out.comments.len(), out.pages, out.attempts);
        Ok(out)
    }
}

fn to_raw(d: CommentData) -> Result<RawComment, FetchError> {
    let secs = d.created_utc.floor() as i64;
    let created_at: DateTime<Utc> = DateTime::from_timestamp(secs, 0)
        .ok_or_else(|| FetchError::Payload(format!("bad timestamp {}", d.created_utc)))?;
    Ok(RawComment { user_id: d.author, subreddit: d.subreddit, body: d.body, score: d.score, created_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing::ScriptedTransport;

    fn page(n: usize, offset: usize, after: Option<&str>) -> String {
        let children: Vec<serde_json::Value> = (0..n)
            .map(|i| {
                serde_json::json!({"kind": "t1", "data": {
                    "author": format!("user{}", offset + i),
                    "subreddit": "cars",
                    "body": format!("comment number {}", offset + i),
                    "score": (i as i64) - 1,
                    "created_utc": 1_726_000_000.0 + i as f64,
                }})
            })
            .collect();
        serde_json::json!({"kind": "Listing", "data": {"children": children, "after": after}}).to_string()
    }

    fn fetcher(t: Arc<ScriptedTransport>) -> ListingFetcher {
        ListingFetcher::new(t)
            .with_base_url("http://fake")
            .with_politeness_delay(Duration::ZERO)
            .with_retry(RetryPolicy::immediate(5))
    }

    #[test]
    fn zero_limit_issues_no_request() {
        let t = Arc::new(ScriptedTransport::new(vec![]));
        let out = fetcher(t.clone()).fetch_subreddit_listing("r/cars", 0).unwrap();
        assert!(out.comments.is_empty());
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn replays_recorded_fixture() {
        let t = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::status(200, &page(5, 0, None))]));
        let out = fetcher(t.clone()).fetch_subreddit_listing("cars", 50).unwrap();
        assert_eq!(out.comments.len(), 5);
        for (i, c) in out.comments.iter().enumerate() {
            assert_eq!(c.user_id, format!("user{i}"));
            assert_eq!(c.subreddit, "cars");
            assert!(!c.body.is_empty());
            // schema-valid: round-trips through the raw comment line format
            let line = serde_json::to_string(c).unwrap();
            let back: RawComment = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, c);
        }
        assert!(t.seen.lock().unwrap()[0].url.contains("limit=50"));
    }

    #[test]
    fn backs_off_on_rate_limit() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::status(429, ""),
            ScriptedTransport::status(429, ""),
            ScriptedTransport::status(429, ""),
            ScriptedTransport::status(200, &page(3, 0, None)),
        ]));
        let out = fetcher(t.clone()).fetch_subreddit_listing("cars", 3).unwrap();
        assert_eq!(out.comments.len(), 3);
        assert_eq!(out.attempts, 4);
        assert_eq!(t.calls(), 4);
    }

    #[test]
    fn rate_limit_beyond_cap_is_transient() {
        let t = Arc::new(ScriptedTransport::new((0..10).map(|_| ScriptedTransport::status(429, "")).collect()));
        let err = fetcher(t).with_retry(RetryPolicy::immediate(2)).fetch_subreddit_listing("cars", 3).unwrap_err();
        assert!(matches!(err, FetchError::Transient(_)));
    }

    #[test]
    fn not_found_is_permanent() {
        let t = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::status(404, "")]));
        let err = fetcher(t).fetch_subreddit_listing("cars", 3).unwrap_err();
        assert!(matches!(err, FetchError::Permanent(_)));
    }

    #[test]
    fn paginates_with_after_cursor() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::status(200, &page(100, 0, Some("t1_abc"))),
            ScriptedTransport::status(200, &page(100, 100, Some("t1_def"))),
        ]));
        let out = fetcher(t.clone()).fetch_subreddit_listing("cars", 150).unwrap();
        assert_eq!(out.comments.len(), 150);
        assert_eq!(out.pages, 2);
        let seen = t.seen.lock().unwrap();
        assert!(seen[1].url.contains("after=t1_abc"));
        assert!(seen[1].url.contains("limit=50"));
    }
}
