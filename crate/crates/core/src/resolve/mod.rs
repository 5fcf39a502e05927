//! Ontology term resolution.
//!
//! Values are resolved either against a local [`TermIndex`] built from TSV
//! term files, or against a BioPortal-compatible search service through
//! [`RemoteResolver`], which caches responses on disk and rate-limits
//! requests. Both honor the same matching rules: case-insensitive,
//! whitespace-collapsed, underscores significant; preferred labels and
//! synonyms both count; ties go to the smallest term IRI.

mod cache;
mod index;
mod ratelimit;
mod remote;

use std::cmp::Ordering;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, ResponseCache};
pub use index::{build_term_index, TermFileError, TermIndex};
pub use ratelimit::RateLimiter;
pub use remote::{RemoteResolver, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedOn {
    Label,
    Synonym,
}

/// Match quality, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Prefix,
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermHit {
    pub ontology_acronym: String,
    pub term_iri: String,
    pub preferred_label: String,
    pub matched_on: MatchedOn,
    pub match_kind: MatchKind,
    /// The label or synonym text that matched, as written in the source.
    pub matched_text: String,
}

impl TermHit {
    /// Ranking order for candidate lists: match kind, then
    /// (ontology, IRI), then label before synonym.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        (self.match_kind, &self.ontology_acronym, &self.term_iri, self.matched_on, &self.matched_text).cmp(&(
            other.match_kind,
            &other.ontology_acronym,
            &other.term_iri,
            other.matched_on,
            &other.matched_text,
        ))
    }
}

/// Sort candidates by rank and keep the best hit per (ontology, IRI).
pub(crate) fn rank_and_dedup(mut hits: Vec<TermHit>, limit: usize) -> Vec<TermHit> {
    hits.sort_by(|a, b| {
        (&a.ontology_acronym, &a.term_iri)
            .cmp(&(&b.ontology_acronym, &b.term_iri))
            .then_with(|| a.rank_cmp(b))
    });
    hits.dedup_by(|later, earlier| {
        later.ontology_acronym == earlier.ontology_acronym && later.term_iri == earlier.term_iri
    });
    hits.sort_by(TermHit::rank_cmp);
    hits.truncate(limit);
    hits
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ResolveError {
    /// Transient failures exhausted the retry budget.
    #[error("resolver unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    /// The service refused the request (4xx) or answered with garbage.
    #[error("resolver request rejected: {0}")]
    Rejected(String),
}

pub trait TermResolver: Send + Sync {
    /// First exact hit for `query` within one ontology.
    fn resolve_exact(&self, query: &str, ontology_acronym: &str) -> Result<Option<TermHit>, ResolveError>;

    /// Ranked candidates across all ontologies, at most `limit`.
    fn search_any(&self, query: &str, limit: usize) -> Result<Vec<TermHit>, ResolveError>;

    /// Count of permanent (non-retryable) failures seen so far.
    fn hard_failures(&self) -> u64 {
        0
    }
}

/// Free-function form of [`TermResolver::resolve_exact`].
pub fn resolve_exact(
    resolver: &dyn TermResolver,
    query: &str,
    ontology_acronym: &str,
) -> Result<Option<TermHit>, ResolveError> {
    resolver.resolve_exact(query, ontology_acronym)
}

/// Free-function form of [`TermResolver::search_any`].
pub fn search_any(resolver: &dyn TermResolver, query: &str, limit: usize) -> Result<Vec<TermHit>, ResolveError> {
    resolver.search_any(query, limit.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ResolverMode {
    #[default]
    #[value(name = "local")]
    Local,
    #[value(name = "remote")]
    Remote,
    #[serde(alias = "remote-with-fallback")]
    #[value(name = "remote-with-fallback", alias = "remote_with_local_fallback")]
    RemoteWithLocalFallback,
}

impl fmt::Display for ResolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResolverMode::Local => "local",
            ResolverMode::Remote => "remote",
            ResolverMode::RemoteWithLocalFallback => "remote_with_local_fallback",
        })
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolverConfig {
    pub mode: ResolverMode,
    pub endpoint_url: Option<String>,
    /// Never serialized; supplied from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
    /// Requests per second.
    pub rate_limit: u32,
    pub max_retries: u32,
    pub cache_path: Option<PathBuf>,
    pub term_files: Vec<PathBuf>,
    pub timeout_ms: u64,
    pub backoff_base_ms: u64,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            mode: ResolverMode::Local,
            endpoint_url: None,
            api_key: None,
            rate_limit: 10,
            max_retries: 3,
            cache_path: None,
            term_files: Vec::new(),
            timeout_ms: 30_000,
            backoff_base_ms: 250,
        }
    }
}

impl fmt::Debug for ResolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolverConfig")
            .field("mode", &self.mode)
            .field("endpoint_url", &self.endpoint_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("rate_limit", &self.rate_limit)
            .field("max_retries", &self.max_retries)
            .field("cache_path", &self.cache_path)
            .field("term_files", &self.term_files)
            .finish()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResolverConfigError {
    #[error("remote resolver modes require an endpoint URL")]
    MissingEndpoint,
    #[error("rate limit must be greater than zero")]
    ZeroRateLimit,
    #[error(transparent)]
    TermFile(#[from] TermFileError),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ResolverConfig {
    pub fn validate(&self) -> Result<(), ResolverConfigError> {
        if self.rate_limit == 0 {
            return Err(ResolverConfigError::ZeroRateLimit);
        }
        if self.mode != ResolverMode::Local && self.endpoint_url.as_deref().is_none_or(str::is_empty) {
            return Err(ResolverConfigError::MissingEndpoint);
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_base_ms),
            max_delay: Duration::from_secs(10),
            timeout: Duration::from_millis(self.timeout_ms),
        }
    }
}

/// Remote first; on any remote failure answer from the local index.
pub struct FallbackResolver {
    remote: RemoteResolver,
    local: TermIndex,
}

impl FallbackResolver {
    pub fn new(remote: RemoteResolver, local: TermIndex) -> Self {
        FallbackResolver { remote, local }
    }
}

impl TermResolver for FallbackResolver {
    fn resolve_exact(&self, query: &str, ontology_acronym: &str) -> Result<Option<TermHit>, ResolveError> {
        self.remote.resolve_exact(query, ontology_acronym).or_else(|e| {
            log::debug!("remote resolve failed, using local index: {e}");
            self.local.resolve_exact(query, ontology_acronym)
        })
    }

    fn search_any(&self, query: &str, limit: usize) -> Result<Vec<TermHit>, ResolveError> {
        self.remote.search_any(query, limit).or_else(|e| {
            log::debug!("remote search failed, using local index: {e}");
            self.local.search_any(query, limit)
        })
    }
}

/// Build the resolver described by `config`.
pub fn build_resolver(config: &ResolverConfig) -> Result<Arc<dyn TermResolver>, ResolverConfigError> {
    config.validate()?;
    let local = || build_term_index(&config.term_files);
    let remote = || -> Result<RemoteResolver, ResolverConfigError> {
        let cache = match &config.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None => ResponseCache::in_memory(),
        };
        Ok(RemoteResolver::new(
            config.endpoint_url.clone().unwrap_or_default(),
            config.api_key.clone(),
            RateLimiter::per_second(config.rate_limit),
            config.retry_policy(),
            cache,
        ))
    };
    Ok(match config.mode {
        ResolverMode::Local => Arc::new(local()?),
        ResolverMode::Remote => Arc::new(remote()?),
        ResolverMode::RemoteWithLocalFallback => Arc::new(FallbackResolver::new(remote()?, local()?)),
    })
}
