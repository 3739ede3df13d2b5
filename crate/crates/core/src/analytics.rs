//! Delivery audit statistics over augmented ads: gender and age skew,
//! single-gender exclusivity, uniqueness counts and average demographics.
//!
//! All statistics are computed over distinct campaigns (archive ids) and are
//! independent of input order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use chrono::Datelike;
use serde::Serialize;
use thiserror::Error;

use crate::augment::AugmentedAd;
use crate::model::{normalize_demographics, AdClass, AgeBucket, Gender};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no ads with a usable demographic distribution")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExclusiveAudienceStats {
    pub campaign_count: u64,
    pub advertiser_count: u64,
    pub funding_entity_count: u64,
    pub embedded_url_count: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UniquenessStats {
    pub campaign_count: u64,
    pub advertiser_count: u64,
    pub unique_text_count: u64,
    pub unique_url_count: u64,
    pub funding_entity_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAudit {
    pub campaign_count: u64,
    pub advertiser_count: u64,
    pub funding_entity_count: u64,
    pub unique_text_count: u64,
    pub unique_embedded_url_count: u64,
    /// Empty when no ad of the class has a usable distribution.
    pub gender_skew: BTreeMap<Gender, f64>,
    pub age_skew: BTreeMap<AgeBucket, f64>,
    pub exclusive_counts: BTreeMap<Gender, ExclusiveAudienceStats>,
    pub avg_demographic_matrix: BTreeMap<Gender, BTreeMap<AgeBucket, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub classes: BTreeMap<AdClass, ClassAudit>,
    /// Campaigns per delivery start year, over every input ad.
    pub delivery_start_years: BTreeMap<i32, u64>,
}

fn distinct<'a, I>(ads: I) -> Vec<&'a AugmentedAd>
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let mut by_id: BTreeMap<&str, &AugmentedAd> = BTreeMap::new();
    for ad in ads {
        by_id.entry(ad.base.archive_id.as_str()).or_insert(ad);
    }
    by_id.into_values().collect()
}

fn fractions<K: Ord + Copy>(keys: &[K], counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let total: u64 = counts.values().sum();
    keys.iter()
        .map(|&k| (k, counts.get(&k).copied().unwrap_or(0) as f64 / total as f64))
        .collect()
}

/// Share of ads whose marginal-majority gender is each gender. Ads without a
/// usable distribution are left out.
pub fn gender_skew<'a, I>(ads: I) -> Result<BTreeMap<Gender, f64>, AnalyticsError>
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let mut counts = BTreeMap::new();
    for ad in distinct(ads) {
        if let Some(m) = ad.maxima {
            *counts.entry(m.max_gender).or_insert(0u64) += 1;
        }
    }
    if counts.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok(fractions(&Gender::ALL, &counts))
}

/// Share of ads whose marginal-majority age bucket is each bucket.
pub fn age_skew<'a, I>(ads: I) -> Result<BTreeMap<AgeBucket, f64>, AnalyticsError>
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let mut counts = BTreeMap::new();
    for ad in distinct(ads) {
        if let Some(m) = ad.maxima {
            *counts.entry(m.max_age).or_insert(0u64) += 1;
        }
    }
    if counts.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok(fractions(&AgeBucket::ALL, &counts))
}

#[derive(Default)]
struct DistinctSets<'a> {
    campaigns: BTreeSet<&'a str>,
    pages: BTreeSet<&'a str>,
    funders: BTreeSet<&'a str>,
    urls: BTreeSet<&'a str>,
    texts: BTreeSet<&'a str>,
}

impl<'a> DistinctSets<'a> {
    fn add(&mut self, ad: &'a AugmentedAd) {
        let b = &ad.base;
        self.campaigns.insert(&b.archive_id);
        self.pages.insert(&b.page_id);
        self.texts.insert(&b.body_text);
        if let Some(f) = &b.funding_entity {
            self.funders.insert(f);
        }
        if let Some(u) = &b.embedded_url {
            self.urls.insert(u);
        }
    }
}

/// Ads whose every positive demographic cell belongs to one gender, with the
/// distinct advertisers, funders and embedded URLs behind them.
pub fn exclusive_audience<'a, I>(ads: I) -> BTreeMap<Gender, ExclusiveAudienceStats>
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let mut sets: BTreeMap<Gender, DistinctSets> = BTreeMap::new();
    for ad in distinct(ads) {
        if let Some(g) = ad.exclusive_gender() {
            sets.entry(g).or_default().add(ad);
        }
    }
    Gender::ALL
        .iter()
        .map(|g| {
            let stats = sets
                .get(g)
                .map_or_else(ExclusiveAudienceStats::default, |s| ExclusiveAudienceStats {
                    campaign_count: s.campaigns.len() as u64,
                    advertiser_count: s.pages.len() as u64,
                    funding_entity_count: s.funders.len() as u64,
                    embedded_url_count: s.urls.len() as u64,
                });
            (*g, stats)
        })
        .collect()
}

pub fn uniqueness_stats<'a, I>(ads: I) -> UniquenessStats
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let mut sets = DistinctSets::default();
    for ad in distinct(ads) {
        sets.add(ad);
    }
    UniquenessStats {
        campaign_count: sets.campaigns.len() as u64,
        advertiser_count: sets.pages.len() as u64,
        unique_text_count: sets.texts.len() as u64,
        unique_url_count: sets.urls.len() as u64,
        funding_entity_count: sets.funders.len() as u64,
    }
}

/// Mean fraction of each (gender, age) cell over ads; absent cells count as 0.
pub fn avg_demographic_matrix<'a, I>(ads: I) -> Result<BTreeMap<Gender, BTreeMap<AgeBucket, f64>>, AnalyticsError>
where
    I: IntoIterator<Item = &'a AugmentedAd>,
{
    let ads = distinct(ads);
    if ads.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let mut sums = [[0.0f64; 7]; 3];
    for ad in &ads {
        // Stored ads passed record validation, so cells are unique.
        let cells = normalize_demographics(&ad.base.demographic_distribution).unwrap_or_default();
        for c in cells {
            sums[c.gender as usize][c.age as usize] += c.fraction;
        }
    }
    let n = ads.len() as f64;
    Ok(Gender::ALL
        .iter()
        .map(|&g| {
            let row = AgeBucket::ALL
                .iter()
                .map(|&a| (a, sums[g as usize][a as usize] / n))
                .collect();
            (g, row)
        })
        .collect())
}

pub fn class_audit(ads: &[&AugmentedAd]) -> ClassAudit {
    let u = uniqueness_stats(ads.iter().copied());
    ClassAudit {
        campaign_count: u.campaign_count,
        advertiser_count: u.advertiser_count,
        funding_entity_count: u.funding_entity_count,
        unique_text_count: u.unique_text_count,
        unique_embedded_url_count: u.unique_url_count,
        gender_skew: gender_skew(ads.iter().copied()).unwrap_or_default(),
        age_skew: age_skew(ads.iter().copied()).unwrap_or_default(),
        exclusive_counts: exclusive_audience(ads.iter().copied()),
        avg_demographic_matrix: avg_demographic_matrix(ads.iter().copied()).unwrap_or_default(),
    }
}

/// Groups ads by strict label and audits each requested class.
pub fn build_report(ads: &[AugmentedAd], classes: &[AdClass]) -> AuditReport {
    let ads = distinct(ads);
    let mut delivery_start_years = BTreeMap::new();
    for ad in &ads {
        *delivery_start_years.entry(ad.base.delivery_start.year()).or_insert(0) += 1;
    }
    let classes = classes
        .iter()
        .map(|&class| {
            let members: Vec<&AugmentedAd> = ads.iter().copied().filter(|a| a.strict_label == Some(class)).collect();
            (class, class_audit(&members))
        })
        .collect();
    AuditReport {
        classes,
        delivery_start_years,
    }
}

/// Percent with one decimal.
pub fn percent(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

fn gender_column(g: Gender) -> &'static str {
    match g {
        Gender::Male => "Men",
        Gender::Female => "Women",
        Gender::Unknown => "Custom gender",
    }
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, AnalyticsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The per-class CSV tables keyed by file name.
pub fn report_tables(report: &AuditReport) -> Result<BTreeMap<String, String>, AnalyticsError> {
    let mut files = BTreeMap::new();

    let mut years = vec![vec!["Year".to_string(), "Ad Campaigns (#)".to_string()]];
    years.extend(
        report
            .delivery_start_years
            .iter()
            .map(|(y, n)| vec![y.to_string(), n.to_string()]),
    );
    files.insert("delivery_start_years.csv".to_string(), csv_string(years)?);

    for (class, audit) in &report.classes {
        let mut rows = vec![vec!["Gender Skew".to_string(), "Percent".to_string()]];
        rows.extend(
            audit
                .gender_skew
                .iter()
                .map(|(g, f)| vec![gender_column(*g).to_string(), percent(*f)]),
        );
        files.insert(format!("{class}_gender_skew.csv"), csv_string(rows)?);

        let mut rows = vec![vec!["Age Skew".to_string(), "Percent".to_string()]];
        rows.extend(audit.age_skew.iter().map(|(a, f)| vec![a.to_string(), percent(*f)]));
        files.insert(format!("{class}_age_skew.csv"), csv_string(rows)?);

        let mut header = vec![String::new()];
        header.extend(Gender::ALL.iter().map(|g| gender_column(*g).to_string()));
        let stat_row = |name: &str, pick: fn(&ExclusiveAudienceStats) -> u64| {
            let mut row = vec![name.to_string()];
            row.extend(
                Gender::ALL
                    .iter()
                    .map(|g| audit.exclusive_counts.get(g).map_or(0, pick).to_string()),
            );
            row
        };
        let rows = vec![
            header,
            stat_row("Ad Campaigns (#)", |s| s.campaign_count),
            stat_row("Advertisers", |s| s.advertiser_count),
            stat_row("Funding entities", |s| s.funding_entity_count),
            stat_row("Embedded Websites (#)", |s| s.embedded_url_count),
        ];
        files.insert(format!("{class}_exclusive.csv"), csv_string(rows)?);

        let rows = vec![
            vec!["Statistic".to_string(), "Count".to_string()],
            vec!["Ad Campaigns (#)".to_string(), audit.campaign_count.to_string()],
            vec!["Advertisers".to_string(), audit.advertiser_count.to_string()],
            vec!["Funding entities".to_string(), audit.funding_entity_count.to_string()],
            vec!["Unique texts".to_string(), audit.unique_text_count.to_string()],
            vec![
                "Embedded Websites (#)".to_string(),
                audit.unique_embedded_url_count.to_string(),
            ],
        ];
        files.insert(format!("{class}_uniqueness.csv"), csv_string(rows)?);

        let mut header = vec!["Gender".to_string()];
        header.extend(AgeBucket::ALL.iter().map(|a| a.to_string()));
        let mut rows = vec![header];
        for (g, row) in &audit.avg_demographic_matrix {
            let mut line = vec![gender_column(*g).to_string()];
            line.extend(row.values().map(|f| percent(*f)));
            rows.push(line);
        }
        files.insert(format!("{class}_avg_demographics.csv"), csv_string(rows)?);
    }
    Ok(files)
}

/// Writes `report.json` and every CSV table into `dir`.
pub fn write_report(report: &AuditReport, dir: &Path) -> Result<Vec<String>, AnalyticsError> {
    fs::create_dir_all(dir)?;
    let mut written = vec!["report.json".to_string()];
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    for (name, body) in report_tables(report)? {
        fs::write(dir.join(&name), body)?;
        written.push(name);
    }
    Ok(written)
}
