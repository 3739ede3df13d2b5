//! Multinomial Naive Bayes over unigram+bigram bags of words.
//!
//! Class priors come from document frequencies and token likelihoods from
//! Lidstone-smoothed term frequencies:
//!
//! ```text
//! P(t | c) = (count(t, c) + alpha) / (tokens(c) + alpha * |V|)
//! ```
//!
//! where `V` is the union vocabulary of the training set. Everything is kept
//! in natural-log space.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AdClass;
use crate::textproc::{self, BagOfWords};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum NbError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("smoothing alpha must be positive and finite, got {0}")]
    NonPositiveAlpha(f64),
    #[error("model schema version {found} does not match supported version {expected}")]
    SchemaMismatch { found: i64, expected: u32 },
    #[error("malformed model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    schema_version: u32,
    alpha: f64,
    /// Classes that had at least one training document, ascending.
    classes: Vec<AdClass>,
    /// Training document count for every class, including empty ones.
    doc_counts: BTreeMap<AdClass, u64>,
    #[serde(rename = "priors")]
    class_log_prior: BTreeMap<AdClass, f64>,
    token_log_likelihood: BTreeMap<AdClass, BTreeMap<String, f64>>,
    vocabulary: BTreeSet<String>,
}

/// Output of [`NbModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: AdClass,
    /// Normalized log posterior per trained class; `exp` sums to one.
    pub log_posterior: BTreeMap<AdClass, f64>,
}

impl Prediction {
    pub fn posterior(&self, class: AdClass) -> f64 {
        self.log_posterior.get(&class).map_or(0.0, |lp| lp.exp())
    }
}

impl NbModel {
    pub fn train(labeled: &[(BagOfWords, AdClass)], alpha: f64) -> Result<Self, NbError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(NbError::NonPositiveAlpha(alpha));
        }
        if labeled.is_empty() {
            return Err(NbError::EmptyTrainingSet);
        }

        let mut doc_counts: BTreeMap<AdClass, u64> = AdClass::ALL.iter().map(|&c| (c, 0)).collect();
        let mut token_counts: BTreeMap<AdClass, BTreeMap<&str, u64>> = BTreeMap::new();
        let mut vocabulary = BTreeSet::new();
        for (bag, class) in labeled {
            *doc_counts.entry(*class).or_default() += 1;
            let counts = token_counts.entry(*class).or_default();
            for (token, n) in bag.iter() {
                *counts.entry(token).or_default() += u64::from(n);
                vocabulary.insert(token.to_string());
            }
        }

        let total_docs = labeled.len() as f64;
        let vocab_size = vocabulary.len() as f64;
        let classes: Vec<AdClass> = doc_counts.iter().filter(|(_, &n)| n > 0).map(|(&c, _)| c).collect();

        let mut class_log_prior = BTreeMap::new();
        let mut token_log_likelihood = BTreeMap::new();
        for &class in &classes {
            class_log_prior.insert(class, (doc_counts[&class] as f64 / total_docs).ln());
            let counts = &token_counts[&class];
            let class_tokens: u64 = counts.values().sum();
            let log_denominator = (class_tokens as f64 + alpha * vocab_size).ln();
            let table = vocabulary
                .iter()
                .map(|t| {
                    let n = counts.get(t.as_str()).copied().unwrap_or(0) as f64;
                    (t.clone(), (n + alpha).ln() - log_denominator)
                })
                .collect();
            token_log_likelihood.insert(class, table);
        }

        Ok(Self {
            schema_version: SCHEMA_VERSION,
            alpha,
            classes,
            doc_counts,
            class_log_prior,
            token_log_likelihood,
            vocabulary,
        })
    }

    /// Scores `bag` against every trained class. Out-of-vocabulary tokens are
    /// ignored; ties go to the earlier class in [`AdClass`] order.
    pub fn predict(&self, bag: &BagOfWords) -> Prediction {
        let scores: Vec<(AdClass, f64)> = self
            .classes
            .iter()
            .map(|&class| {
                let table = &self.token_log_likelihood[&class];
                let evidence: f64 = bag
                    .iter()
                    .filter_map(|(t, n)| table.get(t).map(|ll| f64::from(n) * ll))
                    .sum();
                (class, self.class_log_prior[&class] + evidence)
            })
            .collect();

        let mut label = scores[0].0;
        let mut best = scores[0].1;
        for &(class, score) in &scores[1..] {
            if score > best {
                best = score;
                label = class;
            }
        }
        let log_norm = best + scores.iter().map(|(_, s)| (s - best).exp()).sum::<f64>().ln();
        Prediction {
            label,
            log_posterior: scores.into_iter().map(|(c, s)| (c, s - log_norm)).collect(),
        }
    }

    pub fn predict_text(&self, text: &str) -> Prediction {
        self.predict(&textproc::features(text))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn classes(&self) -> &[AdClass] {
        &self.classes
    }

    pub fn doc_count(&self, class: AdClass) -> u64 {
        self.doc_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn log_prior(&self, class: AdClass) -> Option<f64> {
        self.class_log_prior.get(&class).copied()
    }

    /// `None` when the class was untrained or the token is out of vocabulary.
    pub fn log_likelihood(&self, class: AdClass, token: &str) -> Option<f64> {
        self.token_log_likelihood.get(&class)?.get(token).copied()
    }

    pub fn to_json(&self) -> Result<String, NbError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NbError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw
            .get("schema_version")
            .and_then(serde_json::Value::as_i64)
            .ok_or_else(|| NbError::InvalidModel("missing schema_version".into()))?;
        if found != i64::from(SCHEMA_VERSION) {
            return Err(NbError::SchemaMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let model: NbModel = serde_json::from_value(raw)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NbError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NbError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), NbError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(NbError::NonPositiveAlpha(self.alpha));
        }
        if self.classes.is_empty() {
            return Err(NbError::InvalidModel("no trained classes".into()));
        }
        for class in &self.classes {
            if !self.class_log_prior.contains_key(class) {
                return Err(NbError::InvalidModel(format!("no prior for class {class}")));
            }
            match self.token_log_likelihood.get(class) {
                Some(table) if table.len() == self.vocabulary.len() && table.keys().eq(self.vocabulary.iter()) => {}
                _ => {
                    return Err(NbError::InvalidModel(format!(
                        "likelihood table for {class} does not cover the vocabulary"
                    )))
                }
            }
        }
        Ok(())
    }
}
