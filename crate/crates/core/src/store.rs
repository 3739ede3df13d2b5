//! Embedded single-file ad store (SQLite).
//!
//! Every ad is keyed by archive id and kept as one fixture-format document, so
//! demographic cells live denormalized with their record. A few columns are
//! broken out for filtering and ordering.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, ToSql};
use serde_json::Value;
use thiserror::Error;

use crate::augment::{self, AugmentedAd};
use crate::ingest::fixture::{FixtureError, FixtureReader};
use crate::model::{self, field, AdClass, AdRecord, Gender, ParseError, QueryLogEntry};

pub const STORE_SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),
    #[error("store schema version {found} is not supported (expected {STORE_SCHEMA_VERSION})")]
    SchemaMismatch { found: i64 },
    #[error("stored record {archive_id} is corrupt: {source}")]
    Corrupt { archive_id: String, source: ParseError },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Conjunctive filter; the default matches every ad.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdFilter {
    /// Matches the strict label.
    pub class: Option<AdClass>,
    /// Inclusive lower bound on delivery start.
    pub start_from: Option<DateTime<Utc>>,
    /// Exclusive upper bound on delivery start.
    pub start_before: Option<DateTime<Utc>>,
    pub page_id: Option<String>,
    pub gender_exclusive: Option<Gender>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Augmented fixture documents, one per line.
    FixtureLines,
    /// One row per demographic observation.
    Csv,
}

#[derive(Debug, Default)]
pub struct ImportSummary {
    pub inserted: usize,
    pub failures: Vec<FixtureError>,
}

pub struct Store {
    conn: Connection,
}

fn sort_key(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.9fZ").to_string()
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
             CREATE TABLE IF NOT EXISTS raw_ads (
                 archive_id TEXT PRIMARY KEY,
                 delivery_start TEXT NOT NULL,
                 document TEXT NOT NULL
             );
             CREATE TABLE IF NOT EXISTS ads (
                 archive_id TEXT PRIMARY KEY,
                 delivery_start TEXT NOT NULL,
                 predicted_label TEXT NOT NULL,
                 strict_label TEXT,
                 page_id TEXT NOT NULL,
                 exclusive_gender TEXT,
                 document TEXT NOT NULL
             );
             CREATE INDEX IF NOT EXISTS ads_by_start ON ads (delivery_start, archive_id);
             CREATE INDEX IF NOT EXISTS ads_by_label ON ads (strict_label);
             CREATE TABLE IF NOT EXISTS query_log (
                 id INTEGER PRIMARY KEY AUTOINCREMENT,
                 search_term_or_page TEXT NOT NULL,
                 requested_at TEXT NOT NULL,
                 record_count INTEGER NOT NULL
             );",
        )?;
        let found: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?;
        match found {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                    [STORE_SCHEMA_VERSION.to_string()],
                )?;
            }
            Some(v) => {
                let found = v.parse().unwrap_or(-1);
                if found != STORE_SCHEMA_VERSION {
                    return Err(StoreError::SchemaMismatch { found });
                }
            }
        }
        Ok(Self { conn })
    }

    /// Upserts raw records; returns how many archive ids were new.
    pub fn insert_raw_batch(&mut self, records: &[AdRecord]) -> Result<usize, StoreError> {
        let tx = self.conn.transaction()?;
        let mut new = 0;
        {
            let mut exists = tx.prepare("SELECT 1 FROM raw_ads WHERE archive_id = ?1")?;
            let mut upsert = tx.prepare(
                "INSERT INTO raw_ads (archive_id, delivery_start, document) VALUES (?1, ?2, ?3)
                 ON CONFLICT(archive_id) DO UPDATE SET delivery_start = excluded.delivery_start, document = excluded.document",
            )?;
            for r in records {
                if !exists.exists([&r.archive_id])? {
                    new += 1;
                }
                let doc = serde_json::to_string(&model::record_to_document(r))?;
                upsert.execute(params![r.archive_id, sort_key(&r.delivery_start), doc])?;
            }
        }
        tx.commit()?;
        Ok(new)
    }

    /// Raw records ordered by (delivery start, archive id).
    pub fn raw_records(&self) -> Result<Vec<AdRecord>, StoreError> {
        let mut stmt = self
            .conn
            .prepare("SELECT archive_id, document FROM raw_ads ORDER BY delivery_start, archive_id")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
        let mut out = Vec::new();
        for row in rows {
            let (archive_id, doc) = row?;
            let value: Value = serde_json::from_str(&doc)?;
            out.push(model::parse_ad_record(&value).map_err(|source| StoreError::Corrupt { archive_id, source })?);
        }
        Ok(out)
    }

    /// Upserts augmented ads (a later insert replaces an earlier one); returns
    /// how many archive ids were new.
    pub fn insert_batch(&mut self, records: &[AugmentedAd]) -> Result<usize, StoreError> {
        let tx = self.conn.transaction()?;
        let mut new = 0;
        {
            let mut exists = tx.prepare("SELECT 1 FROM ads WHERE archive_id = ?1")?;
            let mut upsert = tx.prepare(
                "INSERT INTO ads (archive_id, delivery_start, predicted_label, strict_label, page_id, exclusive_gender, document)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
                 ON CONFLICT(archive_id) DO UPDATE SET
                     delivery_start = excluded.delivery_start,
                     predicted_label = excluded.predicted_label,
                     strict_label = excluded.strict_label,
                     page_id = excluded.page_id,
                     exclusive_gender = excluded.exclusive_gender,
                     document = excluded.document",
            )?;
            for ad in records {
                if !exists.exists([&ad.base.archive_id])? {
                    new += 1;
                }
                let doc = serde_json::to_string(&augment::augmented_to_document(ad))?;
                upsert.execute(params![
                    ad.base.archive_id,
                    sort_key(&ad.base.delivery_start),
                    ad.predicted_label.as_str(),
                    ad.strict_label.map(AdClass::as_str),
                    ad.base.page_id,
                    ad.exclusive_gender().map(Gender::as_str),
                    doc,
                ])?;
            }
        }
        tx.commit()?;
        Ok(new)
    }

    pub fn count(&self) -> Result<u64, StoreError> {
        Ok(self
            .conn
            .query_row("SELECT COUNT(*) FROM ads", [], |r| r.get::<_, i64>(0))? as u64)
    }

    pub fn raw_count(&self) -> Result<u64, StoreError> {
        Ok(self
            .conn
            .query_row("SELECT COUNT(*) FROM raw_ads", [], |r| r.get::<_, i64>(0))? as u64)
    }

    /// Matching ads ordered by (delivery start, archive id).
    pub fn query(&self, filter: &AdFilter) -> Result<Vec<AugmentedAd>, StoreError> {
        let mut sql = String::from("SELECT archive_id, document FROM ads WHERE 1 = 1");
        let mut args: Vec<Box<dyn ToSql>> = Vec::new();
        if let Some(c) = filter.class {
            sql.push_str(" AND strict_label = ?");
            args.push(Box::new(c.as_str()));
        }
        if let Some(t) = &filter.start_from {
            sql.push_str(" AND delivery_start >= ?");
            args.push(Box::new(sort_key(t)));
        }
        if let Some(t) = &filter.start_before {
            sql.push_str(" AND delivery_start < ?");
            args.push(Box::new(sort_key(t)));
        }
        if let Some(p) = &filter.page_id {
            sql.push_str(" AND page_id = ?");
            args.push(Box::new(p.clone()));
        }
        if let Some(g) = filter.gender_exclusive {
            sql.push_str(" AND exclusive_gender = ?");
            args.push(Box::new(g.as_str()));
        }
        sql.push_str(" ORDER BY delivery_start, archive_id");

        let mut stmt = self.conn.prepare(&sql)?;
        let rows = stmt.query_map(rusqlite::params_from_iter(args.iter()), |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (archive_id, doc) = row?;
            let value: Value = serde_json::from_str(&doc)?;
            out.push(augment::parse_augmented(&value).map_err(|source| StoreError::Corrupt { archive_id, source })?);
        }
        Ok(out)
    }

    pub fn log_queries(&mut self, entries: &[QueryLogEntry]) -> Result<(), StoreError> {
        let tx = self.conn.transaction()?;
        {
            let mut stmt = tx.prepare(
                "INSERT INTO query_log (search_term_or_page, requested_at, record_count) VALUES (?1, ?2, ?3)",
            )?;
            for e in entries {
                stmt.execute(params![
                    e.search_term_or_page,
                    model::format_timestamp(&e.requested_at),
                    e.record_count as i64
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    pub fn query_log(&self) -> Result<Vec<QueryLogEntry>, StoreError> {
        let mut stmt = self
            .conn
            .prepare("SELECT search_term_or_page, requested_at, record_count FROM query_log ORDER BY id")?;
        let rows = stmt.query_map([], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, i64>(2)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (term, at, count) = row?;
            let requested_at = model::parse_timestamp("requested_at", &at).map_err(|source| StoreError::Corrupt {
                archive_id: format!("query_log:{term}"),
                source,
            })?;
            out.push(QueryLogEntry {
                search_term_or_page: term,
                requested_at,
                record_count: count as u64,
            });
        }
        Ok(out)
    }

    /// Writes matching ads to `path`; returns the number of ads written.
    pub fn export(&self, filter: &AdFilter, path: impl AsRef<Path>, format: ExportFormat) -> Result<usize, StoreError> {
        let ads = self.query(filter)?;
        let file = BufWriter::new(File::create(path)?);
        match format {
            ExportFormat::FixtureLines => write_fixture_lines(&ads, file)?,
            ExportFormat::Csv => write_csv(&ads, file)?,
        }
        Ok(ads.len())
    }

    /// Loads augmented fixture lines (as written by `export`), skipping and
    /// reporting malformed lines.
    pub fn import(&mut self, path: impl AsRef<Path>) -> Result<ImportSummary, StoreError> {
        let mut summary = ImportSummary::default();
        let mut batch = Vec::new();
        for item in FixtureReader::open_with(path, augment::parse_augmented)? {
            match item {
                Ok(ad) => batch.push(ad),
                Err(FixtureError::Io(e)) => return Err(e.into()),
                Err(e) => summary.failures.push(e),
            }
        }
        summary.inserted = self.insert_batch(&batch)?;
        Ok(summary)
    }
}

pub fn write_fixture_lines<W: Write>(ads: &[AugmentedAd], mut out: W) -> Result<(), StoreError> {
    for ad in ads {
        serde_json::to_writer(&mut out, &augment::augmented_to_document(ad))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// CSV column order: the raw record columns, one demographic observation,
/// then the derived columns.
pub fn csv_header() -> Vec<&'static str> {
    let mut cols = vec![
        field::ARCHIVE_ID,
        field::CREATION_TIME,
        field::TEXT,
        field::URL_CAPTION,
        field::URL_DESCRIPTION,
        field::URL_TITLE,
        field::DELIVERY_START,
        field::DELIVERY_STOP,
        field::EMBEDDED_URL,
        field::CURRENCY,
        field::FUNDING_ENTITY,
        "impressions_lower_bound",
        "impressions_upper_bound",
        "potential_reach_lower_bound",
        "potential_reach_upper_bound",
        field::PAGE_ID,
        field::PAGE_NAME,
        field::PUBLISHER_PLATFORMS,
        field::REGION_DISTRIBUTION,
        "spend_lower_bound",
        "spend_upper_bound",
        "age",
        "gender",
        "percentage_demographic",
    ];
    cols.extend(augment::DERIVED_FIELDS);
    cols
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(items)) if items.iter().all(Value::is_string) => {
            items.iter().filter_map(Value::as_str).collect::<Vec<_>>().join(";")
        }
        Some(other) => other.to_string(),
    }
}

pub fn write_csv<W: Write>(ads: &[AugmentedAd], out: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for ad in ads {
        let doc = augment::augmented_to_document(ad);
        let bound = |key: &str, which: &str| cell(doc.get(key).and_then(|r| r.get(which)));
        let mut prefix: Vec<String> = [
            field::ARCHIVE_ID,
            field::CREATION_TIME,
            field::TEXT,
            field::URL_CAPTION,
            field::URL_DESCRIPTION,
            field::URL_TITLE,
            field::DELIVERY_START,
            field::DELIVERY_STOP,
            field::EMBEDDED_URL,
            field::CURRENCY,
            field::FUNDING_ENTITY,
        ]
        .iter()
        .map(|k| cell(doc.get(*k)))
        .collect();
        prefix.push(bound(field::IMPRESSIONS, "lower_bound"));
        prefix.push(bound(field::IMPRESSIONS, "upper_bound"));
        prefix.push(bound(field::POTENTIAL_REACH, "lower_bound"));
        prefix.push(bound(field::POTENTIAL_REACH, "upper_bound"));
        prefix.push(cell(doc.get(field::PAGE_ID)));
        prefix.push(cell(doc.get(field::PAGE_NAME)));
        prefix.push(cell(doc.get(field::PUBLISHER_PLATFORMS)));
        prefix.push(cell(doc.get(field::REGION_DISTRIBUTION)));
        prefix.push(bound(field::SPEND, "lower_bound"));
        prefix.push(bound(field::SPEND, "upper_bound"));
        let suffix: Vec<String> = augment::DERIVED_FIELDS.iter().map(|k| cell(doc.get(*k))).collect();

        let cells: Vec<[String; 3]> = if ad.base.demographic_distribution.is_empty() {
            vec![Default::default()]
        } else {
            ad.base
                .demographic_distribution
                .iter()
                .map(|d| {
                    [
                        d.age.to_string(),
                        d.gender.to_string(),
                        model::format_fraction(d.fraction),
                    ]
                })
                .collect()
        };
        for obs in cells {
            let row = prefix.iter().chain(obs.iter()).chain(suffix.iter());
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}
