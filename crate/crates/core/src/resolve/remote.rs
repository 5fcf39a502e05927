//! BioPortal-compatible search client.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::Deserialize;

use super::cache::ResponseCache;
use super::ratelimit::RateLimiter;
use super::{rank_and_dedup, MatchKind, MatchedOn, ResolveError, TermHit, TermResolver};
use crate::normalize::{normalize_value, tokens};

const EXACT_PAGE_SIZE: usize = 50;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(10),
            timeout: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Exponential delay before retry number `attempt + 1`, with jitter in
    /// `[d/2, d]`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32.checked_shl(attempt.min(20)).unwrap_or(u32::MAX))
            .min(self.max_delay);
        let half = exp / 2;
        half + exp.saturating_sub(half).mul_f64(rand::thread_rng().gen::<f64>())
    }
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    #[serde(default)]
    collection: Vec<SearchItem>,
}

#[derive(Debug, Deserialize)]
struct SearchItem {
    #[serde(rename = "@id")]
    id: String,
    #[serde(rename = "prefLabel", default)]
    pref_label: String,
    #[serde(default)]
    synonym: Vec<String>,
    #[serde(default)]
    links: Links,
}

#[derive(Debug, Default, Deserialize)]
struct Links {
    #[serde(default)]
    ontology: String,
}

impl SearchItem {
    fn acronym(&self) -> String {
        self.links
            .ontology
            .trim_end_matches('/')
            .rsplit('/')
            .next()
            .unwrap_or_default()
            .to_uppercase()
    }

    /// Candidate hits relative to the normalized query, judged locally so the
    /// service's own matching rules do not leak into results.
    fn hits(&self, q: &str) -> Vec<TermHit> {
        let acronym = self.acronym();
        let q_tokens: Vec<&str> = tokens(q).collect();
        std::iter::once((self.pref_label.as_str(), MatchedOn::Label))
            .chain(self.synonym.iter().map(|s| (s.as_str(), MatchedOn::Synonym)))
            .filter_map(|(text, on)| {
                let nt = normalize_value(text);
                if nt.is_empty() || self.id.is_empty() {
                    return None;
                }
                let kind = if nt == q {
                    MatchKind::Exact
                } else if nt.starts_with(q) {
                    MatchKind::Prefix
                } else if tokens(&nt).any(|t| q_tokens.contains(&t)) {
                    MatchKind::Token
                } else {
                    return None;
                };
                Some(TermHit {
                    ontology_acronym: acronym.clone(),
                    term_iri: self.id.clone(),
                    preferred_label: self.pref_label.clone(),
                    matched_on: on,
                    match_kind: kind,
                    matched_text: text.trim().to_string(),
                })
            })
            .collect()
    }
}

/// Remote resolver with rate limiting, retries, and a persistent cache.
pub struct RemoteResolver {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: RateLimiter,
    retry: RetryPolicy,
    cache: ResponseCache,
    requests: AtomicU64,
    hard_failures: AtomicU64,
}

impl RemoteResolver {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        limiter: RateLimiter,
        retry: RetryPolicy,
        cache: ResponseCache,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(retry.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteResolver {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
            limiter,
            retry,
            cache,
            requests: AtomicU64::new(0),
            hard_failures: AtomicU64::new(0),
        }
    }

    /// HTTP requests issued so far, including retries.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn search(&self, params: &[(&str, &str)]) -> Result<SearchResponse, ResolveError> {
        let url = format!("{}/search", self.endpoint);
        let mut last = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            self.limiter.acquire();
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.agent.get(&url);
            for (k, v) in params {
                req = req.query(*k, *v);
            }
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("apikey token={key}"));
            }
            match req.call() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        let body = match resp.body_mut().read_to_string() {
                            Ok(b) => b,
                            Err(e) => {
                                last = format!("reading body: {e}");
                                continue;
                            }
                        };
                        return serde_json::from_str(&body).map_err(|e| {
                            self.hard_failures.fetch_add(1, Ordering::Relaxed);
                            ResolveError::Rejected(format!("malformed search response: {e}"))
                        });
                    }
                    if (400..500).contains(&status) {
                        self.hard_failures.fetch_add(1, Ordering::Relaxed);
                        return Err(ResolveError::Rejected(format!("HTTP {status} from {url}")));
                    }
                    last = format!("HTTP {status}");
                }
                Err(ureq::Error::BadUri(e)) => {
                    self.hard_failures.fetch_add(1, Ordering::Relaxed);
                    return Err(ResolveError::Rejected(format!("bad URI: {e}")));
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("search attempt {} failed: {last}", attempt + 1);
        }
        Err(ResolveError::Unavailable {
            attempts: self.retry.max_retries + 1,
            last,
        })
    }
}

impl TermResolver for RemoteResolver {
    fn resolve_exact(&self, query: &str, ontology_acronym: &str) -> Result<Option<TermHit>, ResolveError> {
        let q = normalize_value(query);
        if q.is_empty() {
            return Ok(None);
        }
        let acronym = ontology_acronym.trim().to_uppercase();
        let hits = self.cache.get_or_fetch(&q, &acronym, true, || {
            let page = EXACT_PAGE_SIZE.to_string();
            let resp = self.search(&[
                ("q", &q),
                ("ontologies", &acronym),
                ("require_exact_match", "true"),
                ("pagesize", &page),
            ])?;
            let hits = resp
                .collection
                .iter()
                .flat_map(|item| item.hits(&q))
                .filter(|h| h.match_kind == MatchKind::Exact)
                .map(|mut h| {
                    if h.ontology_acronym.is_empty() {
                        h.ontology_acronym = acronym.clone();
                    }
                    h
                })
                .filter(|h| h.ontology_acronym == acronym)
                .collect();
            Ok(rank_and_dedup(hits, 1))
        })?;
        Ok(hits.into_iter().next())
    }

    fn search_any(&self, query: &str, limit: usize) -> Result<Vec<TermHit>, ResolveError> {
        let q = normalize_value(query);
        if q.is_empty() {
            return Ok(Vec::new());
        }
        let limit = limit.max(1);
        let scope = format!("*|limit={limit}");
        self.cache.get_or_fetch(&q, &scope, false, || {
            let page = limit.to_string();
            let resp = self.search(&[("q", &q), ("pagesize", &page)])?;
            let hits = resp.collection.iter().flat_map(|item| item.hits(&q)).collect();
            Ok(rank_and_dedup(hits, limit))
        })
    }

    fn hard_failures(&self) -> u64 {
        self.hard_failures.load(Ordering::Relaxed)
    }
}
