//! Retrieval of ad records from an Ad-Library-style paginated endpoint or
//! from saved fixture files.

pub mod crawl;
pub mod fixture;
pub mod http;
pub mod ratelimit;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::model::{AdRecord, ParseError};

pub use crawl::{run_keyword_crawl, Backoff, CrawlConfig, CrawlError, CrawlOutcome, Crawler};
pub use fixture::{load_fixture, FixtureError, FixtureReader, FixtureSource};
pub use http::HttpSource;
pub use ratelimit::{Clock, ManualClock, SystemClock, TokenBucket};

/// Env var holding the endpoint access token.
pub const TOKEN_ENV: &str = "AD_AUDIT_TOKEN";
pub const DEFAULT_PAGE_SIZE: u32 = 1000;
pub const MAX_PAGE_SIZE: u32 = 1000;
/// The endpoint starts failing above roughly 2,000 ads per request even
/// though its documented limit is 5,000.
pub const DEFAULT_PER_TERM_CAP: usize = 2000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited by source")]
    RateLimited { retry_after: Option<Duration> },
    #[error("source error {code}: {message}")]
    Source { code: i64, message: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// Transport failures and rate limiting are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Transport(_) | IngestError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActiveStatus {
    #[default]
    All,
    Active,
    Inactive,
}

impl ActiveStatus {
    pub fn as_param(self) -> &'static str {
        match self {
            ActiveStatus::All => "ALL",
            ActiveStatus::Active => "ACTIVE",
            ActiveStatus::Inactive => "INACTIVE",
        }
    }

    pub fn admits(self, record: &AdRecord) -> bool {
        match self {
            ActiveStatus::All => true,
            ActiveStatus::Active => record.delivery_stop.is_none(),
            ActiveStatus::Inactive => record.delivery_stop.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryTarget {
    SearchTerm(String),
    PageIds(Vec<String>),
}

impl fmt::Display for QueryTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryTarget::SearchTerm(t) => f.write_str(t),
            QueryTarget::PageIds(ids) => write!(f, "pages:{}", ids.join(",")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdQuery {
    target: QueryTarget,
    country: String,
    active_status: ActiveStatus,
    page_size: u32,
}

impl AdQuery {
    pub fn search(term: impl Into<String>) -> Result<Self, IngestError> {
        let term = term.into();
        if term.trim().is_empty() {
            return Err(IngestError::InvalidQuery("search term is empty".into()));
        }
        Ok(Self::with_target(QueryTarget::SearchTerm(term)))
    }

    pub fn pages(ids: Vec<String>) -> Result<Self, IngestError> {
        if ids.is_empty() || ids.iter().any(|id| id.trim().is_empty()) {
            return Err(IngestError::InvalidQuery(
                "page id list is empty or has a blank id".into(),
            ));
        }
        Ok(Self::with_target(QueryTarget::PageIds(ids)))
    }

    fn with_target(target: QueryTarget) -> Self {
        Self {
            target,
            country: "US".into(),
            active_status: ActiveStatus::All,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }

    pub fn page_size(mut self, n: u32) -> Result<Self, IngestError> {
        if !(1..=MAX_PAGE_SIZE).contains(&n) {
            return Err(IngestError::InvalidQuery(format!(
                "page size {n} outside 1..={MAX_PAGE_SIZE}"
            )));
        }
        self.page_size = n;
        Ok(self)
    }

    pub fn country(mut self, code: impl Into<String>) -> Self {
        self.country = code.into();
        self
    }

    pub fn active_status(mut self, status: ActiveStatus) -> Self {
        self.active_status = status;
        self
    }

    pub fn target(&self) -> &QueryTarget {
        &self.target
    }

    pub fn get_country(&self) -> &str {
        &self.country
    }

    pub fn get_active_status(&self) -> ActiveStatus {
        self.active_status
    }

    pub fn get_page_size(&self) -> u32 {
        self.page_size
    }
}

/// Opaque continuation token; `None` means the first page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PageCursor(pub Option<String>);

impl PageCursor {
    pub fn first() -> Self {
        Self(None)
    }

    pub fn token(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

/// Why a single record on a page was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordErrorKind {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFailure {
    /// 1-based source line, for fixture sources.
    pub line: Option<usize>,
    pub raw: String,
    pub error: RecordErrorKind,
}

impl fmt::Display for RecordFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Page {
    pub records: Vec<AdRecord>,
    /// Records that failed to parse; they never abort the page.
    pub failures: Vec<RecordFailure>,
    pub next: Option<PageCursor>,
}

/// A paginated ad source. Implementations are shareable across threads.
pub trait AdSource: Send + Sync {
    fn fetch_page(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError>;
}

impl<S: AdSource + ?Sized> AdSource for &S {
    fn fetch_page(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError> {
        (**self).fetch_page(query, cursor)
    }
}

impl<S: AdSource + ?Sized> AdSource for Box<S> {
    fn fetch_page(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError> {
        (**self).fetch_page(query, cursor)
    }
}
