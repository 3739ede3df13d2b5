//! Canonical ad records, demographic distributions and the line-document
//! codec shared by fixtures, exports and the HTTP source.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Upper bound on the sum of an ad's demographic fractions. API data carries
/// rounding error, and suppressed cells make sums below one legal.
pub const DEMOGRAPHIC_SUM_TOLERANCE: f64 = 1.01;

// Float slack so that e.g. 0.51 + 0.50 is not rejected.
const SUM_EPSILON: f64 = 1e-9;

/// Marketing class of an ad. Variant order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdClass {
    Credit,
    Employment,
    Housing,
    Other,
    Political,
}

impl AdClass {
    pub const ALL: [AdClass; 5] = [
        AdClass::Credit,
        AdClass::Employment,
        AdClass::Housing,
        AdClass::Other,
        AdClass::Political,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdClass::Credit => "credit",
            AdClass::Employment => "employment",
            AdClass::Housing => "housing",
            AdClass::Other => "other",
            AdClass::Political => "political",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AdClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownName {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for AdClass {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_lowercase();
        AdClass::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or(UnknownName {
                kind: "ad class",
                value: s.to_string(),
            })
    }
}

/// Credit sub-classes labelled by the rules model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditSubclass {
    StudentLoan,
    DebtRelief,
    AutoLoan,
    HomeLoanOrMortgage,
    OtherCredit,
}

impl CreditSubclass {
    pub const ALL: [CreditSubclass; 5] = [
        CreditSubclass::StudentLoan,
        CreditSubclass::DebtRelief,
        CreditSubclass::AutoLoan,
        CreditSubclass::HomeLoanOrMortgage,
        CreditSubclass::OtherCredit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CreditSubclass::StudentLoan => "student_loan",
            CreditSubclass::DebtRelief => "debt_relief",
            CreditSubclass::AutoLoan => "auto_loan",
            CreditSubclass::HomeLoanOrMortgage => "home_loan_or_mortgage",
            CreditSubclass::OtherCredit => "other_credit",
        }
    }
}

impl fmt::Display for CreditSubclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CreditSubclass {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_lowercase();
        CreditSubclass::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or(UnknownName {
                kind: "credit sub-class",
                value: s.to_string(),
            })
    }
}

/// Gender bucket of a demographic cell. `Unknown` holds the platform's
/// custom and undisclosed genders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    /// Any string other than "male"/"female" (case-insensitive) is `Unknown`.
    pub fn from_api(s: &str) -> Gender {
        match s.trim().to_lowercase().as_str() {
            "male" => Gender::Male,
            "female" => Gender::Female,
            _ => Gender::Unknown,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBucket {
    #[serde(rename = "13-17")]
    A13_17,
    #[serde(rename = "18-24")]
    A18_24,
    #[serde(rename = "25-34")]
    A25_34,
    #[serde(rename = "35-44")]
    A35_44,
    #[serde(rename = "45-54")]
    A45_54,
    #[serde(rename = "55-64")]
    A55_64,
    #[serde(rename = "65+")]
    A65Plus,
}

impl AgeBucket {
    pub const ALL: [AgeBucket; 7] = [
        AgeBucket::A13_17,
        AgeBucket::A18_24,
        AgeBucket::A25_34,
        AgeBucket::A35_44,
        AgeBucket::A45_54,
        AgeBucket::A55_64,
        AgeBucket::A65Plus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeBucket::A13_17 => "13-17",
            AgeBucket::A18_24 => "18-24",
            AgeBucket::A25_34 => "25-34",
            AgeBucket::A35_44 => "35-44",
            AgeBucket::A45_54 => "45-54",
            AgeBucket::A55_64 => "55-64",
            AgeBucket::A65Plus => "65+",
        }
    }
}

impl fmt::Display for AgeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeBucket {
    type Err = UnknownName;

    /// Accepts "25-34" as well as spaced forms like "25 - 34".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        AgeBucket::ALL
            .into_iter()
            .find(|a| a.as_str() == compact)
            .ok_or(UnknownName {
                kind: "age bucket",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicShare {
    pub age: AgeBucket,
    pub gender: Gender,
    pub fraction: f64,
}

impl DemographicShare {
    pub fn new(age: AgeBucket, gender: Gender, fraction: f64) -> Self {
        Self { age, gender, fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionShare {
    pub region: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub lower: u64,
    pub upper: Option<u64>,
}

/// Spend bounds in currency minor units (hundredths of the major unit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoneyRange {
    pub lower: u64,
    pub upper: Option<u64>,
    pub currency: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub archive_id: String,
    pub creation_time: DateTime<Utc>,
    pub body_text: String,
    pub url_caption: Option<String>,
    pub url_description: Option<String>,
    pub url_title: Option<String>,
    pub delivery_start: DateTime<Utc>,
    pub delivery_stop: Option<DateTime<Utc>>,
    pub embedded_url: Option<String>,
    pub currency: String,
    pub funding_entity: Option<String>,
    pub impressions: CountRange,
    pub potential_reach: Option<CountRange>,
    pub page_id: String,
    pub page_name: String,
    pub publisher_platforms: BTreeSet<String>,
    pub region_distribution: Vec<RegionShare>,
    pub demographic_distribution: Vec<DemographicShare>,
    pub spend: MoneyRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub search_term_or_page: String,
    pub requested_at: DateTime<Utc>,
    pub record_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("document is not a key-value object")]
    NotAnObject,
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl ParseError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ParseError::InvalidValue {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate demographic cell ({age}, {gender})")]
pub struct DuplicateCell {
    pub age: AgeBucket,
    pub gender: Gender,
}

/// Wire names of the raw record fields, in column order.
pub mod field {
    pub const ARCHIVE_ID: &str = "archiveID";
    pub const CREATION_TIME: &str = "ad_creation_time";
    pub const TEXT: &str = "text";
    pub const URL_CAPTION: &str = "url_caption";
    pub const URL_DESCRIPTION: &str = "url_description";
    pub const URL_TITLE: &str = "url_title";
    pub const DELIVERY_START: &str = "ad_delivery_start_time";
    pub const DELIVERY_STOP: &str = "ad_delivery_stop_time";
    pub const EMBEDDED_URL: &str = "embedded_url";
    pub const CURRENCY: &str = "currency";
    pub const FUNDING_ENTITY: &str = "funding_entity";
    pub const IMPRESSIONS: &str = "impressions";
    pub const POTENTIAL_REACH: &str = "potential_reach";
    pub const PAGE_ID: &str = "page_id";
    pub const PAGE_NAME: &str = "page_name";
    pub const PUBLISHER_PLATFORMS: &str = "publisher_platforms";
    pub const REGION_DISTRIBUTION: &str = "region_distribution";
    pub const DEMOGRAPHIC_DISTRIBUTION: &str = "demographic_distribution";
    pub const SPEND: &str = "spend";

    pub const RAW: [&str; 19] = [
        ARCHIVE_ID,
        CREATION_TIME,
        TEXT,
        URL_CAPTION,
        URL_DESCRIPTION,
        URL_TITLE,
        DELIVERY_START,
        DELIVERY_STOP,
        EMBEDDED_URL,
        CURRENCY,
        FUNDING_ENTITY,
        IMPRESSIONS,
        POTENTIAL_REACH,
        PAGE_ID,
        PAGE_NAME,
        PUBLISHER_PLATFORMS,
        REGION_DISTRIBUTION,
        SPEND,
        DEMOGRAPHIC_DISTRIBUTION,
    ];
}

/// Parses one decoded fixture/API document into a validated record.
/// Unknown keys are ignored; `null` counts as absent.
pub fn parse_ad_record(raw: &Value) -> Result<AdRecord, ParseError> {
    let obj = raw.as_object().ok_or(ParseError::NotAnObject)?;

    let archive_id = required_scalar(obj, field::ARCHIVE_ID)?;
    let creation_time = parse_timestamp(field::CREATION_TIME, &required_string(obj, field::CREATION_TIME)?)?;
    let body_text = required_string(obj, field::TEXT)?;
    let delivery_start = parse_timestamp(field::DELIVERY_START, &required_string(obj, field::DELIVERY_START)?)?;
    let delivery_stop = optional_string(obj, field::DELIVERY_STOP)?
        .map(|s| parse_timestamp(field::DELIVERY_STOP, &s))
        .transpose()?;
    let currency = parse_currency(&required_string(obj, field::CURRENCY)?)?;
    let impressions = parse_count_range(field::IMPRESSIONS, require(obj, field::IMPRESSIONS)?)?;
    let potential_reach = present(obj, field::POTENTIAL_REACH)
        .map(|v| parse_count_range(field::POTENTIAL_REACH, v))
        .transpose()?;
    let spend = parse_money_range(require(obj, field::SPEND)?, &currency)?;

    let record = AdRecord {
        archive_id,
        creation_time,
        body_text,
        url_caption: optional_string(obj, field::URL_CAPTION)?,
        url_description: optional_string(obj, field::URL_DESCRIPTION)?,
        url_title: optional_string(obj, field::URL_TITLE)?,
        delivery_start,
        delivery_stop,
        embedded_url: optional_string(obj, field::EMBEDDED_URL)?,
        currency,
        funding_entity: optional_string(obj, field::FUNDING_ENTITY)?,
        impressions,
        potential_reach,
        page_id: required_scalar(obj, field::PAGE_ID)?,
        page_name: required_string(obj, field::PAGE_NAME)?,
        publisher_platforms: parse_platforms(obj)?,
        region_distribution: parse_regions(obj)?,
        demographic_distribution: parse_demographics(obj)?,
        spend,
    };
    validate_record(&record)?;
    Ok(record)
}

/// Checks the record-level invariants.
pub fn validate_record(record: &AdRecord) -> Result<(), ParseError> {
    if record.archive_id.is_empty() {
        return Err(ParseError::InvariantViolation("archive_id is empty".into()));
    }
    if let Some(stop) = record.delivery_stop {
        if stop < record.delivery_start {
            return Err(ParseError::InvariantViolation(format!(
                "delivery stop {stop} precedes delivery start {}",
                record.delivery_start
            )));
        }
    }
    for range in std::iter::once(&record.impressions).chain(record.potential_reach.as_ref()) {
        if range.upper.is_some_and(|u| u < range.lower) {
            return Err(ParseError::InvariantViolation(
                "range upper bound below lower bound".into(),
            ));
        }
    }
    if record.spend.upper.is_some_and(|u| u < record.spend.lower) {
        return Err(ParseError::InvariantViolation(
            "spend upper bound below lower bound".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    let mut sum = 0.0;
    for share in &record.demographic_distribution {
        if !(0.0..=1.0).contains(&share.fraction) {
            return Err(ParseError::InvariantViolation(format!(
                "demographic fraction {} outside [0, 1]",
                share.fraction
            )));
        }
        if !seen.insert((share.age, share.gender)) {
            return Err(ParseError::InvariantViolation(
                DuplicateCell {
                    age: share.age,
                    gender: share.gender,
                }
                .to_string(),
            ));
        }
        sum += share.fraction;
    }
    if sum > DEMOGRAPHIC_SUM_TOLERANCE + SUM_EPSILON {
        return Err(ParseError::InvariantViolation(format!(
            "demographic fractions sum to {sum}, above {DEMOGRAPHIC_SUM_TOLERANCE}"
        )));
    }
    for region in &record.region_distribution {
        if !(0.0..=1.0).contains(&region.fraction) {
            return Err(ParseError::InvariantViolation(format!(
                "region fraction {} outside [0, 1]",
                region.fraction
            )));
        }
    }
    Ok(())
}

/// Expands a distribution to all 21 (age, gender) cells, sorted by
/// (age, gender), with absent cells at zero.
pub fn normalize_demographics(shares: &[DemographicShare]) -> Result<Vec<DemographicShare>, DuplicateCell> {
    let mut cells: BTreeMap<(AgeBucket, Gender), f64> = BTreeMap::new();
    for share in shares {
        if cells.insert((share.age, share.gender), share.fraction).is_some() {
            return Err(DuplicateCell {
                age: share.age,
                gender: share.gender,
            });
        }
    }
    Ok(AgeBucket::ALL
        .iter()
        .flat_map(|&age| Gender::ALL.iter().map(move |&gender| (age, gender)))
        .map(|(age, gender)| DemographicShare::new(age, gender, cells.get(&(age, gender)).copied().unwrap_or(0.0)))
        .collect())
}

/// Encodes a record in the fixture line format. Parsing the result with
/// [`parse_ad_record`] reproduces the record exactly.
pub fn record_to_document(record: &AdRecord) -> Map<String, Value> {
    let mut doc = Map::new();
    doc.insert(field::ARCHIVE_ID.into(), record.archive_id.clone().into());
    doc.insert(
        field::CREATION_TIME.into(),
        format_timestamp(&record.creation_time).into(),
    );
    doc.insert(field::TEXT.into(), record.body_text.clone().into());
    insert_opt(&mut doc, field::URL_CAPTION, &record.url_caption);
    insert_opt(&mut doc, field::URL_DESCRIPTION, &record.url_description);
    insert_opt(&mut doc, field::URL_TITLE, &record.url_title);
    doc.insert(
        field::DELIVERY_START.into(),
        format_timestamp(&record.delivery_start).into(),
    );
    if let Some(stop) = &record.delivery_stop {
        doc.insert(field::DELIVERY_STOP.into(), format_timestamp(stop).into());
    }
    insert_opt(&mut doc, field::EMBEDDED_URL, &record.embedded_url);
    doc.insert(field::CURRENCY.into(), record.currency.clone().into());
    insert_opt(&mut doc, field::FUNDING_ENTITY, &record.funding_entity);
    doc.insert(field::IMPRESSIONS.into(), count_range_value(&record.impressions));
    if let Some(reach) = &record.potential_reach {
        doc.insert(field::POTENTIAL_REACH.into(), count_range_value(reach));
    }
    doc.insert(field::PAGE_ID.into(), record.page_id.clone().into());
    doc.insert(field::PAGE_NAME.into(), record.page_name.clone().into());
    doc.insert(
        field::PUBLISHER_PLATFORMS.into(),
        Value::Array(record.publisher_platforms.iter().cloned().map(Value::from).collect()),
    );
    doc.insert(
        field::REGION_DISTRIBUTION.into(),
        Value::Array(
            record
                .region_distribution
                .iter()
                .map(|r| serde_json::json!({"region": r.region, "percentage": format_fraction(r.fraction)}))
                .collect(),
        ),
    );
    doc.insert(
        field::DEMOGRAPHIC_DISTRIBUTION.into(),
        Value::Array(
            record
                .demographic_distribution
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "age": d.age.as_str(),
                        "gender": d.gender.as_str(),
                        "percentage": format_fraction(d.fraction),
                    })
                })
                .collect(),
        ),
    );
    let mut spend = Map::new();
    spend.insert("lower_bound".into(), format_minor_units(record.spend.lower).into());
    if let Some(upper) = record.spend.upper {
        spend.insert("upper_bound".into(), format_minor_units(upper).into());
    }
    doc.insert(field::SPEND.into(), Value::Object(spend));
    doc
}

/// Accepts RFC 3339 (`Z` or `+00:00`) and the API's `+0000` form. A timestamp
/// without an explicit offset is rejected.
pub fn parse_timestamp(field: &str, s: &str) -> Result<DateTime<Utc>, ParseError> {
    let s = s.trim();
    DateTime::parse_from_rfc3339(s)
        .or_else(|_| DateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f%z"))
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| ParseError::invalid(field, format!("`{s}` is not an ISO-8601 timestamp with UTC offset")))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_fraction(f: f64) -> String {
    format!("{f}")
}

fn format_minor_units(v: u64) -> String {
    if v.is_multiple_of(100) {
        (v / 100).to_string()
    } else {
        format!("{}.{:02}", v / 100, v % 100)
    }
}

fn insert_opt(doc: &mut Map<String, Value>, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        doc.insert(key.into(), v.clone().into());
    }
}

fn count_range_value(r: &CountRange) -> Value {
    let mut m = Map::new();
    m.insert("lower_bound".into(), r.lower.to_string().into());
    if let Some(u) = r.upper {
        m.insert("upper_bound".into(), u.to_string().into());
    }
    Value::Object(m)
}

fn present<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).filter(|v| !v.is_null())
}

fn require<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ParseError> {
    present(obj, key).ok_or_else(|| ParseError::MissingField(key.to_string()))
}

fn required_string(obj: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match require(obj, key)? {
        Value::String(s) => Ok(s.clone()),
        _ => Err(ParseError::invalid(key, "expected a string")),
    }
}

/// Identifiers may arrive as strings or bare integers.
fn required_scalar(obj: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match require(obj, key)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Ok(n.to_string()),
        _ => Err(ParseError::invalid(key, "expected a string or integer identifier")),
    }
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, ParseError> {
    match present(obj, key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ParseError::invalid(key, "expected a string")),
    }
}

fn parse_currency(s: &str) -> Result<String, ParseError> {
    let code = s.trim();
    if code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase()) {
        Ok(code.to_string())
    } else {
        Err(ParseError::invalid(
            field::CURRENCY,
            format!("`{s}` is not an ISO-4217 code"),
        ))
    }
}

fn bound_text<'a>(field: &str, v: &'a Value) -> Result<std::borrow::Cow<'a, str>, ParseError> {
    match v {
        Value::String(s) => Ok(s.trim().into()),
        Value::Number(n) => Ok(n.to_string().into()),
        _ => Err(ParseError::invalid(field, "bound must be a string or number")),
    }
}

fn parse_count(field: &str, v: &Value) -> Result<u64, ParseError> {
    let text = bound_text(field, v)?;
    text.parse::<u64>()
        .map_err(|_| ParseError::invalid(field, format!("`{text}` is not a non-negative integer")))
}

fn parse_count_range(field: &str, v: &Value) -> Result<CountRange, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::invalid(field, "expected {lower_bound, upper_bound}"))?;
    let lower = obj
        .get("lower_bound")
        .filter(|v| !v.is_null())
        .ok_or_else(|| ParseError::MissingField(format!("{field}.lower_bound")))?;
    Ok(CountRange {
        lower: parse_count(field, lower)?,
        upper: obj
            .get("upper_bound")
            .filter(|v| !v.is_null())
            .map(|u| parse_count(field, u))
            .transpose()?,
    })
}

/// Decimal major-unit amount ("12", "12.5", "12.50") to minor units.
fn parse_minor_units(field: &str, v: &Value) -> Result<u64, ParseError> {
    let text = bound_text(field, v)?;
    let bad = || ParseError::invalid(field, format!("`{text}` is not a non-negative decimal amount"));
    let (whole, frac) = text.split_once('.').unwrap_or((&text, ""));
    if whole.is_empty()
        || !whole.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > 2
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let whole: u64 = whole.parse().map_err(|_| bad())?;
    let cents: u64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
    whole
        .checked_mul(100)
        .and_then(|w| w.checked_add(cents))
        .ok_or_else(bad)
}

fn parse_money_range(v: &Value, currency: &str) -> Result<MoneyRange, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::invalid(field::SPEND, "expected {lower_bound, upper_bound}"))?;
    let lower = obj
        .get("lower_bound")
        .filter(|v| !v.is_null())
        .ok_or_else(|| ParseError::MissingField(format!("{}.lower_bound", field::SPEND)))?;
    Ok(MoneyRange {
        lower: parse_minor_units(field::SPEND, lower)?,
        upper: obj
            .get("upper_bound")
            .filter(|v| !v.is_null())
            .map(|u| parse_minor_units(field::SPEND, u))
            .transpose()?,
        currency: currency.to_string(),
    })
}

/// Fractions arrive as decimal strings; `str::parse::<f64>` rounds the exact
/// decimal value to the nearest double.
fn parse_fraction(field: &str, v: Option<&Value>) -> Result<f64, ParseError> {
    let v = v
        .filter(|v| !v.is_null())
        .ok_or_else(|| ParseError::MissingField(format!("{field}.percentage")))?;
    let text = bound_text(field, v)?;
    let f: f64 = text
        .parse()
        .map_err(|_| ParseError::invalid(field, format!("`{text}` is not a decimal fraction")))?;
    if !f.is_finite() || !(0.0..=1.0).contains(&f) {
        return Err(ParseError::invalid(field, format!("fraction `{text}` outside [0, 1]")));
    }
    Ok(f)
}

fn array<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a [Value], ParseError> {
    match present(obj, key) {
        None => Ok(&[]),
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(ParseError::invalid(key, "expected an array")),
    }
}

fn parse_platforms(obj: &Map<String, Value>) -> Result<BTreeSet<String>, ParseError> {
    array(obj, field::PUBLISHER_PLATFORMS)?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| ParseError::invalid(field::PUBLISHER_PLATFORMS, "expected an array of strings"))
        })
        .collect()
}

fn parse_regions(obj: &Map<String, Value>) -> Result<Vec<RegionShare>, ParseError> {
    array(obj, field::REGION_DISTRIBUTION)?
        .iter()
        .map(|item| {
            let cell = item
                .as_object()
                .ok_or_else(|| ParseError::invalid(field::REGION_DISTRIBUTION, "expected {region, percentage}"))?;
            let region = cell
                .get("region")
                .and_then(Value::as_str)
                .ok_or_else(|| ParseError::MissingField(format!("{}.region", field::REGION_DISTRIBUTION)))?;
            Ok(RegionShare {
                region: region.to_string(),
                fraction: parse_fraction(field::REGION_DISTRIBUTION, cell.get("percentage"))?,
            })
        })
        .collect()
}

fn parse_demographics(obj: &Map<String, Value>) -> Result<Vec<DemographicShare>, ParseError> {
    let key = field::DEMOGRAPHIC_DISTRIBUTION;
    array(obj, key)?
        .iter()
        .map(|item| {
            let cell = item
                .as_object()
                .ok_or_else(|| ParseError::invalid(key, "expected {age, gender, percentage}"))?;
            let age = cell
                .get("age")
                .and_then(Value::as_str)
                .ok_or_else(|| ParseError::MissingField(format!("{key}.age")))?;
            let age = age
                .parse::<AgeBucket>()
                .map_err(|e| ParseError::invalid(key, e.to_string()))?;
            let gender = cell
                .get("gender")
                .and_then(Value::as_str)
                .ok_or_else(|| ParseError::MissingField(format!("{key}.gender")))?;
            Ok(DemographicShare {
                age,
                gender: Gender::from_api(gender),
                fraction: parse_fraction(key, cell.get("percentage"))?,
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn minimal_doc() -> Value {
        json!({
            "archiveID": "1",
            "ad_creation_time": "2019-10-01T00:00:00+0000",
            "text": "Now hiring",
            "ad_delivery_start_time": "2019-10-02T00:00:00Z",
            "currency": "USD",
            "impressions": {"lower_bound": "1000", "upper_bound": "1999"},
            "page_id": "42",
            "page_name": "Jobs Inc",
            "spend": {"lower_bound": "100", "upper_bound": "199"},
            "demographic_distribution": [
                {"age": "25-34", "gender": "female", "percentage": "1.0"}
            ]
        })
    }

    #[test]
    fn parses_minimal_record() {
        let rec = parse_ad_record(&minimal_doc()).unwrap();
        assert_eq!(rec.archive_id, "1");
        assert_eq!(
            rec.demographic_distribution,
            vec![DemographicShare::new(AgeBucket::A25_34, Gender::Female, 1.0)]
        );
        assert_eq!(rec.spend.lower, 10_000);
        assert_eq!(rec.spend.upper, Some(19_900));
        assert!(rec.delivery_stop.is_none());
        assert!(rec.publisher_platforms.is_empty());
    }

    #[test]
    fn missing_archive_id() {
        let mut doc = minimal_doc();
        doc.as_object_mut().unwrap().remove("archiveID");
        assert_eq!(parse_ad_record(&doc), Err(ParseError::MissingField("archiveID".into())));
    }

    #[test]
    fn overfull_distribution_is_rejected() {
        let mut doc = minimal_doc();
        doc["demographic_distribution"] = json!([
            {"age": "25-34", "gender": "female", "percentage": "0.55"},
            {"age": "25-34", "gender": "male", "percentage": "0.5"}
        ]);
        assert!(matches!(parse_ad_record(&doc), Err(ParseError::InvariantViolation(_))));
    }

    #[test]
    fn sum_at_tolerance_is_accepted() {
        let mut doc = minimal_doc();
        doc["demographic_distribution"] = json!([
            {"age": "25-34", "gender": "female", "percentage": "0.51"},
            {"age": "25-34", "gender": "male", "percentage": "0.5"}
        ]);
        assert!(parse_ad_record(&doc).is_ok());
    }

    #[test]
    fn timestamp_without_offset_is_rejected() {
        let mut doc = minimal_doc();
        doc["ad_delivery_start_time"] = json!("2019-10-02T00:00:00");
        assert!(matches!(
            parse_ad_record(&doc),
            Err(ParseError::InvalidValue { field, .. }) if field == "ad_delivery_start_time"
        ));
    }

    #[test]
    fn age_all_is_invalid() {
        let mut doc = minimal_doc();
        doc["demographic_distribution"][0]["age"] = json!("All");
        assert!(matches!(parse_ad_record(&doc), Err(ParseError::InvalidValue { .. })));
    }

    #[test]
    fn custom_genders_map_to_unknown() {
        for g in ["unknown", "Custom", "non-binary", "UNKNOWN"] {
            assert_eq!(Gender::from_api(g), Gender::Unknown);
        }
        assert_eq!(Gender::from_api("MALE"), Gender::Male);
        assert_eq!(Gender::from_api("Female"), Gender::Female);
    }

    #[test]
    fn stop_before_start_is_rejected() {
        let mut doc = minimal_doc();
        doc["ad_delivery_stop_time"] = json!("2019-10-01T00:00:00Z");
        assert!(matches!(parse_ad_record(&doc), Err(ParseError::InvariantViolation(_))));
    }

    #[test]
    fn duplicate_cell_in_document_is_rejected() {
        let mut doc = minimal_doc();
        doc["demographic_distribution"] = json!([
            {"age": "18-24", "gender": "male", "percentage": "0.4"},
            {"age": "18-24", "gender": "male", "percentage": "0.6"}
        ]);
        assert!(matches!(parse_ad_record(&doc), Err(ParseError::InvariantViolation(_))));
    }

    #[test]
    fn unknown_keys_ignored_and_numeric_ids_accepted() {
        let mut doc = minimal_doc();
        doc["archiveID"] = json!(123456789);
        doc["some_future_field"] = json!({"x": 1});
        assert_eq!(parse_ad_record(&doc).unwrap().archive_id, "123456789");
    }

    #[test]
    fn bad_spend_amount() {
        let mut doc = minimal_doc();
        doc["spend"] = json!({"lower_bound": "1.234"});
        assert!(matches!(parse_ad_record(&doc), Err(ParseError::InvalidValue { .. })));
        doc["spend"] = json!({"lower_bound": "12.5"});
        assert_eq!(parse_ad_record(&doc).unwrap().spend.lower, 1250);
    }

    #[test]
    fn normalize_empty_gives_21_zero_cells() {
        let cells = normalize_demographics(&[]).unwrap();
        assert_eq!(cells.len(), 21);
        assert!(cells.iter().all(|c| c.fraction == 0.0));
    }

    #[test]
    fn normalize_single_cell() {
        let cells = normalize_demographics(&[DemographicShare::new(AgeBucket::A25_34, Gender::Female, 1.0)]).unwrap();
        assert_eq!(cells.len(), 21);
        for c in &cells {
            let expected = if c.age == AgeBucket::A25_34 && c.gender == Gender::Female {
                1.0
            } else {
                0.0
            };
            assert_eq!(c.fraction, expected);
        }
        let keys: Vec<_> = cells.iter().map(|c| (c.age, c.gender)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn normalize_rejects_duplicates() {
        let err = normalize_demographics(&[
            DemographicShare::new(AgeBucket::A18_24, Gender::Male, 0.4),
            DemographicShare::new(AgeBucket::A18_24, Gender::Male, 0.6),
        ])
        .unwrap_err();
        assert_eq!(err.age, AgeBucket::A18_24);
    }

    #[test]
    fn class_order_is_alphabetical() {
        let mut names: Vec<_> = AdClass::ALL.iter().map(|c| c.as_str()).collect();
        let copy = names.clone();
        names.sort();
        assert_eq!(names, copy);
    }
}
