//! Line-delimited JSON fixtures: one ad document per line, UTF-8, with an
//! optional byte-order mark.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::{AdQuery, AdSource, IngestError, Page, PageCursor, QueryTarget, RecordErrorKind, RecordFailure};
use crate::model::{parse_ad_record, AdRecord, ParseError};
use crate::textproc;

const BOM: char = '\u{feff}';

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {}: {}", .0.line.unwrap_or(0), .0.error)]
    Line(RecordFailure),
}

fn decode_line<T>(
    line_no: usize,
    raw: &str,
    parse: impl Fn(&Value) -> Result<T, ParseError>,
) -> Result<T, RecordFailure> {
    let failure = |error| RecordFailure {
        line: Some(line_no),
        raw: raw.to_string(),
        error,
    };
    let value: Value = serde_json::from_str(raw).map_err(|e| failure(RecordErrorKind::Syntax(e.to_string())))?;
    parse(&value).map_err(|e| failure(RecordErrorKind::Parse(e)))
}

/// Lazily decodes a fixture stream in file order. Blank lines are skipped;
/// malformed lines come out as [`FixtureError::Line`] with their line number.
pub struct FixtureReader<R, T> {
    lines: io::Lines<BufReader<R>>,
    line_no: usize,
    parse: fn(&Value) -> Result<T, ParseError>,
}

impl<R: Read, T> FixtureReader<R, T> {
    pub fn with_parser(reader: R, parse: fn(&Value) -> Result<T, ParseError>) -> Self {
        Self {
            lines: BufReader::new(reader).lines(),
            line_no: 0,
            parse,
        }
    }
}

impl<R: Read> FixtureReader<R, AdRecord> {
    pub fn new(reader: R) -> Self {
        Self::with_parser(reader, parse_ad_record)
    }
}

impl<T> FixtureReader<File, T> {
    pub fn open_with(path: impl AsRef<Path>, parse: fn(&Value) -> Result<T, ParseError>) -> io::Result<Self> {
        Ok(Self::with_parser(File::open(path)?, parse))
    }
}

impl<R: Read, T> Iterator for FixtureReader<R, T> {
    type Item = Result<T, FixtureError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            let text = if self.line_no == 1 {
                line.trim_start_matches(BOM)
            } else {
                line.as_str()
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(decode_line(self.line_no, text, self.parse).map_err(FixtureError::Line));
        }
    }
}

pub fn load_fixture(path: impl AsRef<Path>) -> io::Result<FixtureReader<File, AdRecord>> {
    FixtureReader::open_with(path, parse_ad_record)
}

/// Serves a fixture as a paginated source. Cursors are line offsets; search
/// terms match as whole-token phrases in the ad body.
#[derive(Debug, Clone, Default)]
pub struct FixtureSource {
    lines: Vec<(usize, String)>,
}

impl FixtureSource {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Ok(Self::from_text(&text))
    }

    pub fn from_text(text: &str) -> Self {
        let text = text.strip_prefix(BOM).unwrap_or(text);
        Self {
            lines: text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| (i + 1, l.to_string()))
                .collect(),
        }
    }

    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            lines: lines.into_iter().enumerate().map(|(i, l)| (i + 1, l.into())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

fn contains_phrase(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn matches(query: &AdQuery, record: &AdRecord, term_tokens: &[String]) -> bool {
    let target = match query.target() {
        QueryTarget::SearchTerm(_) => contains_phrase(&textproc::tokenize(&record.body_text), term_tokens),
        QueryTarget::PageIds(ids) => ids.contains(&record.page_id),
    };
    target && query.get_active_status().admits(record)
}

impl AdSource for FixtureSource {
    fn fetch_page(&self, query: &AdQuery, cursor: &PageCursor) -> Result<Page, IngestError> {
        let start = match cursor.token() {
            None => 0,
            Some(t) => t.parse::<usize>().map_err(|_| IngestError::Source {
                code: 400,
                message: format!("invalid cursor `{t}`"),
            })?,
        };
        let term_tokens = match query.target() {
            QueryTarget::SearchTerm(t) => textproc::tokenize(t),
            QueryTarget::PageIds(_) => Vec::new(),
        };
        let limit = query.get_page_size() as usize;

        let mut page = Page::default();
        let mut pos = start;
        while pos < self.lines.len() && page.records.len() < limit {
            let (line_no, raw) = &self.lines[pos];
            pos += 1;
            match decode_line(*line_no, raw, parse_ad_record) {
                Ok(record) if matches(query, &record, &term_tokens) => page.records.push(record),
                Ok(_) => {}
                Err(failure) => page.failures.push(failure),
            }
        }
        if pos < self.lines.len() {
            page.next = Some(PageCursor(Some(pos.to_string())));
        }
        Ok(page)
    }
}
