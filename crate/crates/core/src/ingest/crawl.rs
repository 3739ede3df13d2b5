//! Keyword and page crawls over a paginated source, with a shared rate
//! limiter, retry backoff, cross-term de-duplication and a query log.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use super::ratelimit::{Clock, SystemClock, TokenBucket};
use super::{
    ActiveStatus, AdQuery, AdSource, IngestError, Page, PageCursor, RecordFailure, DEFAULT_PAGE_SIZE,
    DEFAULT_PER_TERM_CAP,
};
use crate::model::{AdRecord, QueryLogEntry};

/// Exponential backoff: waits `base * factor^(k-1)` after the k-th failed
/// attempt, giving up after `max_attempts` attempts in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 5,
        }
    }
}

impl Backoff {
    pub fn delay(&self, failed_attempts: u32) -> Duration {
        self.base
            .mul_f64(self.factor.powi(failed_attempts.saturating_sub(1) as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlConfig {
    pub per_term_cap: usize,
    pub page_size: u32,
    pub country: String,
    pub active_status: ActiveStatus,
    pub backoff: Backoff,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            per_term_cap: DEFAULT_PER_TERM_CAP,
            page_size: DEFAULT_PAGE_SIZE,
            country: "US".into(),
            active_status: ActiveStatus::All,
            backoff: Backoff::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CrawlOutcome {
    /// Distinct by archive id, in first-seen order.
    pub records: Vec<AdRecord>,
    /// One entry per term or page list attempted.
    pub log: Vec<QueryLogEntry>,
    /// Distinct per-record parse failures.
    pub failures: Vec<RecordFailure>,
}

/// A crawl that stopped on a non-retryable error, or on a retryable one
/// after the backoff budget ran out. `partial` holds everything collected
/// up to that point, including the failed term's log entry.
#[derive(Debug)]
pub struct CrawlError {
    pub target: String,
    pub error: IngestError,
    pub partial: Box<CrawlOutcome>,
}

impl fmt::Display for CrawlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "crawl of `{}` failed: {}", self.target, self.error)
    }
}

impl std::error::Error for CrawlError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub struct Crawler<S> {
    source: S,
    config: CrawlConfig,
    limiter: Arc<TokenBucket>,
    clock: Arc<dyn Clock>,
}

impl<S: AdSource> Crawler<S> {
    pub fn new(source: S, config: CrawlConfig) -> Self {
        Self {
            source,
            config,
            limiter: Arc::new(TokenBucket::unlimited()),
            clock: Arc::new(SystemClock::default()),
        }
    }

    pub fn with_limiter(mut self, limiter: Arc<TokenBucket>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    /// One rate-limited page request, retried with backoff on transport
    /// failures and throttling.
    pub fn fetch_with_retry(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            match self.source.fetch_page(query, cursor) {
                Ok(page) => return Ok(page),
                Err(e) if e.is_retryable() && attempt < self.config.backoff.max_attempts => {
                    let mut wait = self.config.backoff.delay(attempt);
                    if let IngestError::RateLimited {
                        retry_after: Some(hint),
                    } = &e
                    {
                        wait = wait.max(*hint);
                    }
                    self.clock.sleep(wait);
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn crawl_terms(&self, terms: &[String]) -> Result<CrawlOutcome, CrawlError> {
        let queries = terms.iter().map(|t| AdQuery::search(t.clone())).collect::<Vec<_>>();
        self.crawl(terms.iter().cloned().zip(queries).collect())
    }

    pub fn crawl_pages(&self, page_ids: &[String]) -> Result<CrawlOutcome, CrawlError> {
        let label = format!("pages:{}", page_ids.join(","));
        self.crawl(vec![(label, AdQuery::pages(page_ids.to_vec()))])
    }

    fn crawl(&self, targets: Vec<(String, Result<AdQuery, IngestError>)>) -> Result<CrawlOutcome, CrawlError> {
        let mut out = CrawlOutcome::default();
        let mut seen_ids = HashSet::new();
        let mut seen_failures = HashSet::new();

        for (label, query) in targets {
            let requested_at = self.clock.utc_now();
            let mut count = 0usize;
            let result = query.and_then(|q| self.crawl_one(q, &mut count, &mut seen_ids, &mut seen_failures, &mut out));
            out.log.push(QueryLogEntry {
                search_term_or_page: label.clone(),
                requested_at,
                record_count: count as u64,
            });
            if let Err(error) = result {
                return Err(CrawlError {
                    target: label,
                    error,
                    partial: Box::new(out),
                });
            }
        }
        Ok(out)
    }

    fn crawl_one(
        &self,
        base: AdQuery,
        count: &mut usize,
        seen_ids: &mut HashSet<String>,
        seen_failures: &mut HashSet<(Option<usize>, String)>,
        out: &mut CrawlOutcome,
    ) -> Result<(), IngestError> {
        let cap = self.config.per_term_cap;
        let base = base
            .country(self.config.country.clone())
            .active_status(self.config.active_status);
        let mut cursor = PageCursor::first();
        while *count < cap {
            let want = (cap - *count).min(self.config.page_size as usize) as u32;
            let query = base.clone().page_size(want)?;
            let page = self.fetch_with_retry(&query, &cursor)?;
            for failure in page.failures {
                if seen_failures.insert((failure.line, failure.raw.clone())) {
                    out.failures.push(failure);
                }
            }
            for record in page.records.into_iter().take(cap - *count) {
                *count += 1;
                if seen_ids.insert(record.archive_id.clone()) {
                    out.records.push(record);
                }
            }
            match page.next {
                Some(next) => cursor = next,
                None => break,
            }
        }
        Ok(())
    }
}

/// Crawls `terms` with default settings and the given per-term cap.
pub fn run_keyword_crawl<S: AdSource>(
    source: S,
    terms: &[String],
    per_term_cap: usize,
) -> Result<CrawlOutcome, CrawlError> {
    let config = CrawlConfig {
        per_term_cap: per_term_cap.max(1),
        ..CrawlConfig::default()
    };
    Crawler::new(source, config).crawl_terms(terms)
}
