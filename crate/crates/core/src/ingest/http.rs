//! HTTP client for an Ad-Library-style Graph endpoint.
//!
//! Requests are plain GETs. Responses use the envelope
//! `{"data": [...], "paging": {"cursors": {"after": "..."}, "next": "..."}}`;
//! a `next` link signals that more data exists.

use std::time::Duration;

use serde_json::Value;
use url::Url;

use super::{AdQuery, AdSource, IngestError, Page, PageCursor, QueryTarget, RecordErrorKind, RecordFailure};
use crate::model::{field, parse_ad_record};

/// Graph API error codes that mean "slow down".
const THROTTLE_CODES: [i64; 5] = [4, 17, 32, 613, 80000];

pub struct HttpSource {
    endpoint: Url,
    access_token: String,
    fields: Vec<String>,
    agent: ureq::Agent,
}

impl HttpSource {
    pub fn new(endpoint: &str, access_token: impl Into<String>) -> Result<Self, IngestError> {
        let endpoint = Url::parse(endpoint).map_err(|e| IngestError::InvalidQuery(format!("endpoint url: {e}")))?;
        Ok(Self {
            endpoint,
            access_token: access_token.into(),
            fields: field::RAW.iter().map(|f| f.to_string()).collect(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }

    /// The request URL for a page, including the access token.
    pub fn request_url(&self, query: &AdQuery, cursor: &PageCursor) -> Url {
        let mut url = self.endpoint.clone();
        {
            let mut q = url.query_pairs_mut();
            match query.target() {
                QueryTarget::SearchTerm(t) => q.append_pair("search_terms", t),
                QueryTarget::PageIds(ids) => q.append_pair("search_page_ids", &ids.join(",")),
            };
            q.append_pair("ad_reached_countries", query.get_country());
            q.append_pair("ad_active_status", query.get_active_status().as_param());
            q.append_pair("limit", &query.get_page_size().to_string());
            if let Some(after) = cursor.token() {
                q.append_pair("after", after);
            }
            q.append_pair("access_token", &self.access_token);
            q.append_pair("fields", &self.fields.join(","));
        }
        url
    }
}

fn api_error(status: u16, body: &str) -> IngestError {
    let parsed: Option<(i64, String)> = serde_json::from_str::<Value>(body).ok().and_then(|v| {
        let e = v.get("error")?;
        let code = e.get("code").and_then(Value::as_i64).unwrap_or(i64::from(status));
        let message = e.get("message").and_then(Value::as_str).unwrap_or("").to_string();
        Some((code, message))
    });
    match parsed {
        Some((code, _)) if THROTTLE_CODES.contains(&code) => IngestError::RateLimited { retry_after: None },
        _ if status == 429 => IngestError::RateLimited { retry_after: None },
        _ if status >= 500 => IngestError::Transport(format!("server returned {status}")),
        Some((code, message)) => IngestError::Source { code, message },
        None => IngestError::Source {
            code: i64::from(status),
            message: body.chars().take(200).collect(),
        },
    }
}

/// Splits a response envelope into a page.
pub fn parse_envelope(body: &str) -> Result<Page, IngestError> {
    let v: Value = serde_json::from_str(body).map_err(|e| IngestError::Transport(format!("bad response body: {e}")))?;
    if v.get("error").is_some() {
        return Err(api_error(200, body));
    }
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::Transport("response has no data array".into()))?;

    let mut page = Page::default();
    for item in data {
        match parse_ad_record(item) {
            Ok(r) => page.records.push(r),
            Err(e) => page.failures.push(RecordFailure {
                line: None,
                raw: item.to_string(),
                error: RecordErrorKind::Parse(e),
            }),
        }
    }

    let paging = v.get("paging");
    let has_next = paging.and_then(|p| p.get("next")).is_some_and(|n| !n.is_null());
    if has_next {
        let after = paging
            .and_then(|p| p.pointer("/cursors/after"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .or_else(|| {
                let next = paging?.get("next")?.as_str()?;
                let url = Url::parse(next).ok()?;
                url.query_pairs()
                    .find(|(k, _)| k == "after")
                    .map(|(_, v)| v.into_owned())
            });
        page.next = after.map(|a| PageCursor(Some(a)));
    }
    Ok(page)
}

impl AdSource for HttpSource {
    fn fetch_page(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError> {
        let url = self.request_url(query, cursor);
        match self.agent.request_url("GET", &url).call() {
            Ok(resp) => {
                let body = resp.into_string().map_err(|e| IngestError::Transport(e.to_string()))?;
                let mut page = parse_envelope(&body)?;
                page.records.truncate(query.get_page_size() as usize);
                Ok(page)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let retry_after = resp
                    .header("Retry-After")
                    .and_then(|h| h.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let body = resp.into_string().unwrap_or_default();
                match api_error(status, &body) {
                    IngestError::RateLimited { .. } => Err(IngestError::RateLimited { retry_after }),
                    other => Err(other),
                }
            }
            Err(ureq::Error::Transport(t)) => Err(IngestError::Transport(t.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_carries_all_parameters() {
        let src = HttpSource::new("http://127.0.0.1:1/ads_archive", "secret").unwrap();
        let q = AdQuery::search("home loan").unwrap().page_size(50).unwrap();
        let url = src.request_url(&q, &PageCursor(Some("abc".into())));
        let pairs: std::collections::HashMap<_, _> = url.query_pairs().into_owned().collect();
        assert_eq!(pairs["search_terms"], "home loan");
        assert_eq!(pairs["ad_reached_countries"], "US");
        assert_eq!(pairs["ad_active_status"], "ALL");
        assert_eq!(pairs["limit"], "50");
        assert_eq!(pairs["after"], "abc");
        assert_eq!(pairs["access_token"], "secret");
        assert!(pairs["fields"].starts_with("archiveID,ad_creation_time,text"));
    }

    #[test]
    fn envelope_without_next_ends_paging() {
        let page = parse_envelope(r#"{"data": [], "paging": {"cursors": {"after": "x"}}}"#).unwrap();
        assert!(page.next.is_none());
    }

    #[test]
    fn envelope_cursor_from_next_link() {
        let page = parse_envelope(r#"{"data": [], "paging": {"next": "http://h/ads?after=tok%3D1&limit=5"}}"#).unwrap();
        assert_eq!(page.next, Some(PageCursor(Some("tok=1".into()))));
    }

    #[test]
    fn throttle_codes() {
        assert!(matches!(
            api_error(400, r#"{"error": {"code": 613, "message": "calls exceeded"}}"#),
            IngestError::RateLimited { .. }
        ));
        assert!(matches!(
            api_error(400, r#"{"error": {"code": 100, "message": "bad field"}}"#),
            IngestError::Source { code: 100, .. }
        ));
        assert!(matches!(api_error(503, ""), IngestError::Transport(_)));
    }
}
