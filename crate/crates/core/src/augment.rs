//! Derived per-ad features: classifier labels, demographic maxima, and
//! calendar/duration features of the delivery window (all in UTC).

use std::collections::BTreeSet;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::eval::strict_filter;
use crate::model::{self, AdClass, AdRecord, AgeBucket, CreditSubclass, DemographicShare, Gender, ParseError};
use crate::nb::NbModel;
use crate::rules::RuleSet;
use crate::textproc;

pub const SECONDS_PER_MINUTE: f64 = 60.0;
pub const SECONDS_PER_HOUR: f64 = 3_600.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const SECONDS_PER_WEEK: f64 = 604_800.0;
/// Average Gregorian month (365.2425 days / 12).
pub const SECONDS_PER_MONTH: f64 = 2_629_746.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("ad {0} has no positive demographic cell")]
    EmptyDistribution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DayOfWeek {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl From<chrono::Weekday> for DayOfWeek {
    fn from(d: chrono::Weekday) -> Self {
        use chrono::Weekday::*;
        match d {
            Mon => DayOfWeek::Mon,
            Tue => DayOfWeek::Tue,
            Wed => DayOfWeek::Wed,
            Thu => DayOfWeek::Thu,
            Fri => DayOfWeek::Fri,
            Sat => DayOfWeek::Sat,
            Sun => DayOfWeek::Sun,
        }
    }
}

/// Half of the calendar year: H1 is Jan–Jun, H2 is Jul–Dec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Semester {
    H1,
    H2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quarter {
    Q1,
    Q2,
    Q3,
    Q4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub day_of_week: DayOfWeek,
    /// ISO-8601 week number.
    pub week: u32,
    pub semester: Semester,
    pub quarter: Quarter,
}

impl CalendarFeatures {
    pub fn of(t: &DateTime<Utc>) -> Self {
        let month0 = t.month0();
        Self {
            day_of_week: t.weekday().into(),
            week: t.iso_week().week(),
            semester: if month0 < 6 { Semester::H1 } else { Semester::H2 },
            quarter: match month0 / 3 {
                0 => Quarter::Q1,
                1 => Quarter::Q2,
                2 => Quarter::Q3,
                _ => Quarter::Q4,
            },
        }
    }
}

/// Delivery duration in several units; every unit is `seconds` divided by a
/// fixed constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub seconds: f64,
    pub minutes: f64,
    pub hours: f64,
    pub days: f64,
    pub weeks: f64,
    pub months: f64,
}

impl Durations {
    pub fn from_seconds(seconds: f64) -> Self {
        Self {
            seconds,
            minutes: seconds / SECONDS_PER_MINUTE,
            hours: seconds / SECONDS_PER_HOUR,
            days: seconds / SECONDS_PER_DAY,
            weeks: seconds / SECONDS_PER_WEEK,
            months: seconds / SECONDS_PER_MONTH,
        }
    }

    pub fn between(start: &DateTime<Utc>, stop: &DateTime<Utc>) -> Self {
        let delta = *stop - *start;
        let seconds = match delta.num_nanoseconds() {
            Some(ns) => ns as f64 / 1e9,
            None => delta.num_milliseconds() as f64 / 1e3,
        };
        Self::from_seconds(seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicMaxima {
    /// Largest single-cell fraction.
    pub max_percentage: f64,
    /// Gender with the largest marginal share.
    pub max_gender: Gender,
    /// Age bucket with the largest marginal share.
    pub max_age: AgeBucket,
}

/// Largest cell plus the argmax of the gender and age marginals. Ties go to
/// the earlier enumeration value (Male < Female < Unknown; ages ascending).
pub fn demographic_maxima(shares: &[DemographicShare]) -> Option<DemographicMaxima> {
    if !shares.iter().any(|s| s.fraction > 0.0) {
        return None;
    }
    let mut by_gender = [0.0f64; 3];
    let mut by_age = [0.0f64; 7];
    let mut max_percentage = 0.0f64;
    for s in shares {
        by_gender[s.gender as usize] += s.fraction;
        by_age[s.age as usize] += s.fraction;
        max_percentage = max_percentage.max(s.fraction);
    }
    Some(DemographicMaxima {
        max_percentage,
        max_gender: Gender::ALL[first_argmax(&by_gender)],
        max_age: AgeBucket::ALL[first_argmax(&by_age)],
    })
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedAd {
    pub base: AdRecord,
    pub predicted_label: AdClass,
    pub rule_labels: BTreeSet<AdClass>,
    pub strict_label: Option<AdClass>,
    /// Empty unless the strict label is credit.
    pub ad_subclass: BTreeSet<CreditSubclass>,
    /// Absent when the ad has no positive demographic cell.
    pub maxima: Option<DemographicMaxima>,
    pub start: CalendarFeatures,
    pub stop: Option<CalendarFeatures>,
    pub duration: Option<Durations>,
}

impl AugmentedAd {
    /// Gender whose cells hold every positive fraction of the ad, if any.
    pub fn exclusive_gender(&self) -> Option<Gender> {
        exclusive_gender(&self.base.demographic_distribution)
    }
}

pub fn exclusive_gender(shares: &[DemographicShare]) -> Option<Gender> {
    let genders: BTreeSet<Gender> = shares.iter().filter(|s| s.fraction > 0.0).map(|s| s.gender).collect();
    match genders.len() {
        1 => genders.into_iter().next(),
        _ => None,
    }
}

/// Classifies and derives features for one ad. A distribution with no
/// positive cell is reported as a warning with the maxima left absent.
pub fn augment_record(ad: &AdRecord, nb: &NbModel, rules: &RuleSet) -> (AugmentedAd, Option<AugmentError>) {
    let bag = textproc::features(&ad.body_text);
    let predicted_label = nb.predict(&bag).label;
    let rule_labels = rules.classify_bag(&bag);
    let strict_label = strict_filter(predicted_label, &rule_labels);
    let ad_subclass = if strict_label == Some(AdClass::Credit) {
        rules.subclassify_bag(&bag)
    } else {
        BTreeSet::new()
    };
    let maxima = demographic_maxima(&ad.demographic_distribution);
    let warning = maxima
        .is_none()
        .then(|| AugmentError::EmptyDistribution(ad.archive_id.clone()));
    let augmented = AugmentedAd {
        predicted_label,
        rule_labels,
        strict_label,
        ad_subclass,
        maxima,
        start: CalendarFeatures::of(&ad.delivery_start),
        stop: ad.delivery_stop.as_ref().map(CalendarFeatures::of),
        duration: ad
            .delivery_stop
            .as_ref()
            .map(|stop| Durations::between(&ad.delivery_start, stop)),
        base: ad.clone(),
    };
    (augmented, warning)
}

pub fn augment_batch(ads: &[AdRecord], nb: &NbModel, rules: &RuleSet) -> (Vec<AugmentedAd>, Vec<AugmentError>) {
    let mut out = Vec::with_capacity(ads.len());
    let mut warnings = Vec::new();
    for ad in ads {
        let (a, w) = augment_record(ad, nb, rules);
        out.push(a);
        warnings.extend(w);
    }
    (out, warnings)
}

/// Derived columns in export order.
#[derive(Debug, Serialize, Deserialize)]
struct DerivedFields {
    predicted_label: AdClass,
    rule_labels: BTreeSet<AdClass>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    strict_label: Option<AdClass>,
    #[serde(rename = "ad_subClass")]
    ad_subclass: BTreeSet<CreditSubclass>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    max_percentage: Option<f64>,
    #[serde(rename = "max_genderDemographic", skip_serializing_if = "Option::is_none", default)]
    max_gender: Option<Gender>,
    #[serde(rename = "max_ageDemographic", skip_serializing_if = "Option::is_none", default)]
    max_age: Option<AgeBucket>,
    #[serde(rename = "startTimeDayOfWeek")]
    start_day: DayOfWeek,
    #[serde(rename = "stopTimeDayOfWeek", skip_serializing_if = "Option::is_none", default)]
    stop_day: Option<DayOfWeek>,
    #[serde(rename = "adStartWeek")]
    start_week: u32,
    #[serde(rename = "adStopWeek", skip_serializing_if = "Option::is_none", default)]
    stop_week: Option<u32>,
    #[serde(rename = "adDuration_Seconds", skip_serializing_if = "Option::is_none", default)]
    seconds: Option<f64>,
    #[serde(rename = "adDuration_Minutes", skip_serializing_if = "Option::is_none", default)]
    minutes: Option<f64>,
    #[serde(rename = "adDuration_Hours", skip_serializing_if = "Option::is_none", default)]
    hours: Option<f64>,
    #[serde(rename = "adDuration_Days", skip_serializing_if = "Option::is_none", default)]
    days: Option<f64>,
    #[serde(rename = "adDuration_Weeks", skip_serializing_if = "Option::is_none", default)]
    weeks: Option<f64>,
    #[serde(rename = "adDuration_Months", skip_serializing_if = "Option::is_none", default)]
    months: Option<f64>,
    #[serde(rename = "adStart_Semester")]
    start_semester: Semester,
    #[serde(rename = "adStop_Semester", skip_serializing_if = "Option::is_none", default)]
    stop_semester: Option<Semester>,
    #[serde(rename = "startQuarter")]
    start_quarter: Quarter,
    #[serde(rename = "stopQuarter", skip_serializing_if = "Option::is_none", default)]
    stop_quarter: Option<Quarter>,
}

/// Export column names of the derived fields, in order.
pub const DERIVED_FIELDS: [&str; 21] = [
    "predicted_label",
    "rule_labels",
    "strict_label",
    "ad_subClass",
    "max_percentage",
    "max_genderDemographic",
    "max_ageDemographic",
    "startTimeDayOfWeek",
    "stopTimeDayOfWeek",
    "adStartWeek",
    "adStopWeek",
    "adDuration_Seconds",
    "adDuration_Minutes",
    "adDuration_Hours",
    "adDuration_Days",
    "adDuration_Weeks",
    "adDuration_Months",
    "adStart_Semester",
    "adStop_Semester",
    "startQuarter",
    "stopQuarter",
];

/// Fixture-format document extended with the derived fields.
pub fn augmented_to_document(ad: &AugmentedAd) -> Map<String, Value> {
    let mut doc = model::record_to_document(&ad.base);
    let derived = DerivedFields {
        predicted_label: ad.predicted_label,
        rule_labels: ad.rule_labels.clone(),
        strict_label: ad.strict_label,
        ad_subclass: ad.ad_subclass.clone(),
        max_percentage: ad.maxima.map(|m| m.max_percentage),
        max_gender: ad.maxima.map(|m| m.max_gender),
        max_age: ad.maxima.map(|m| m.max_age),
        start_day: ad.start.day_of_week,
        stop_day: ad.stop.map(|s| s.day_of_week),
        start_week: ad.start.week,
        stop_week: ad.stop.map(|s| s.week),
        seconds: ad.duration.map(|d| d.seconds),
        minutes: ad.duration.map(|d| d.minutes),
        hours: ad.duration.map(|d| d.hours),
        days: ad.duration.map(|d| d.days),
        weeks: ad.duration.map(|d| d.weeks),
        months: ad.duration.map(|d| d.months),
        start_semester: ad.start.semester,
        stop_semester: ad.stop.map(|s| s.semester),
        start_quarter: ad.start.quarter,
        stop_quarter: ad.stop.map(|s| s.quarter),
    };
    if let Ok(Value::Object(extra)) = serde_json::to_value(derived) {
        doc.extend(extra);
    }
    doc
}

/// Inverse of [`augmented_to_document`]; stored derived values are taken as
/// is, not recomputed.
pub fn parse_augmented(raw: &Value) -> Result<AugmentedAd, ParseError> {
    let base = model::parse_ad_record(raw)?;
    let d: DerivedFields = serde_json::from_value(raw.clone()).map_err(|e| ParseError::InvalidValue {
        field: "derived fields".into(),
        reason: e.to_string(),
    })?;
    let maxima = match (d.max_percentage, d.max_gender, d.max_age) {
        (Some(max_percentage), Some(max_gender), Some(max_age)) => Some(DemographicMaxima {
            max_percentage,
            max_gender,
            max_age,
        }),
        (None, None, None) => None,
        _ => {
            return Err(ParseError::InvariantViolation(
                "demographic maxima partially present".into(),
            ))
        }
    };
    let stop = match (d.stop_day, d.stop_week, d.stop_semester, d.stop_quarter) {
        (Some(day_of_week), Some(week), Some(semester), Some(quarter)) => Some(CalendarFeatures {
            day_of_week,
            week,
            semester,
            quarter,
        }),
        (None, None, None, None) => None,
        _ => {
            return Err(ParseError::InvariantViolation(
                "stop-side fields partially present".into(),
            ))
        }
    };
    let duration = match (d.seconds, d.minutes, d.hours, d.days, d.weeks, d.months) {
        (Some(seconds), Some(minutes), Some(hours), Some(days), Some(weeks), Some(months)) => Some(Durations {
            seconds,
            minutes,
            hours,
            days,
            weeks,
            months,
        }),
        (None, None, None, None, None, None) => None,
        _ => {
            return Err(ParseError::InvariantViolation(
                "duration fields partially present".into(),
            ))
        }
    };
    if stop.is_some() != base.delivery_stop.is_some() || duration.is_some() != base.delivery_stop.is_some() {
        return Err(ParseError::InvariantViolation(
            "stop-side fields disagree with ad_delivery_stop_time".into(),
        ));
    }
    Ok(AugmentedAd {
        base,
        predicted_label: d.predicted_label,
        rule_labels: d.rule_labels,
        strict_label: d.strict_label,
        ad_subclass: d.ad_subclass,
        maxima,
        start: CalendarFeatures {
            day_of_week: d.start_day,
            week: d.start_week,
            semester: d.start_semester,
            quarter: d.start_quarter,
        },
        stop,
        duration,
    })
}
