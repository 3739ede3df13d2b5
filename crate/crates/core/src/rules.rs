//! Term-matching classifier used to confirm Naive Bayes labels and to assign
//! credit sub-classes.
//!
//! Each label owns a term-topic vector of unigrams and bigrams. A label fires
//! when any of its terms appears as a whole token (or adjacent token pair) in
//! the ad text, so "job" never matches inside "jobless". Every rule runs
//! independently and the output is a set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::model::{AdClass, CreditSubclass};
use crate::textproc::{self, BagOfWords};

const DEFAULT_CLASS_RULES: &str = include_str!("../data/rules/classes.json");
const DEFAULT_SUBCLASS_RULES: &str = include_str!("../data/rules/credit_subclasses.json");

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("term list for `{0}` is empty")]
    EmptyTermList(String),
    #[error("term `{term}` for `{label}` must be one or two tokens")]
    InvalidTerm { label: String, term: String },
    #[error("label `{0}` appears more than once")]
    DuplicateLabel(String),
    #[error("`{0}` is not a label the rules model can emit")]
    UnknownLabel(String),
    #[error("malformed rules document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermTopicVector {
    pub label: String,
    /// Normalized terms: tokens joined by a single space.
    pub terms: BTreeSet<String>,
}

impl TermTopicVector {
    fn compile(label: &str, raw_terms: &[String]) -> Result<Self, RulesError> {
        if raw_terms.is_empty() {
            return Err(RulesError::EmptyTermList(label.to_string()));
        }
        let terms = raw_terms
            .iter()
            .map(|term| match textproc::tokenize(term).as_slice() {
                [one] => Ok(one.clone()),
                [first, second] => Ok(textproc::bigram(first, second)),
                _ => Err(RulesError::InvalidTerm {
                    label: label.to_string(),
                    term: term.clone(),
                }),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            label: label.to_string(),
            terms,
        })
    }

    pub fn matches(&self, bag: &BagOfWords) -> bool {
        self.terms.iter().any(|t| bag.contains(t))
    }
}

/// A rules document as an ordered list of (label, terms). Duplicate keys are
/// kept so they can be reported instead of silently overwritten.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RulesDocument(pub Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for RulesDocument {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DocVisitor;

        impl<'de> Visitor<'de> for DocVisitor {
            type Value = RulesDocument;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping labels to arrays of terms")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((label, terms)) = map.next_entry::<String, Vec<String>>()? {
                    entries.push((label, terms));
                }
                Ok(RulesDocument(entries))
            }
        }

        deserializer.deserialize_map(DocVisitor)
    }
}

impl RulesDocument {
    pub fn from_json(text: &str) -> Result<Self, RulesError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RulesError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub class_vectors: BTreeMap<AdClass, TermTopicVector>,
    pub subclass_vectors: BTreeMap<CreditSubclass, TermTopicVector>,
}

impl RuleSet {
    /// Compiles class rules and credit sub-class rules. `Other` and
    /// `other_credit` are fallbacks and cannot carry terms.
    pub fn compile(classes: &RulesDocument, subclasses: &RulesDocument) -> Result<Self, RulesError> {
        Ok(Self {
            class_vectors: compile_vectors(classes, |l| match l.parse::<AdClass>() {
                Ok(AdClass::Other) | Err(_) => None,
                Ok(c) => Some(c),
            })?,
            subclass_vectors: compile_vectors(subclasses, |l| match l.parse::<CreditSubclass>() {
                Ok(CreditSubclass::OtherCredit) | Err(_) => None,
                Ok(s) => Some(s),
            })?,
        })
    }

    /// The starter term lists shipped with the crate. They are illustrative
    /// defaults, replaceable per run.
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_CLASS_RULES, Some(DEFAULT_SUBCLASS_RULES)).expect("bundled rules compile")
    }

    pub fn from_json(classes: &str, subclasses: Option<&str>) -> Result<Self, RulesError> {
        let subclasses = subclasses
            .map(RulesDocument::from_json)
            .transpose()?
            .unwrap_or_default();
        Self::compile(&RulesDocument::from_json(classes)?, &subclasses)
    }

    /// Loads rule files; a missing path falls back to the bundled list.
    pub fn load(classes: Option<&Path>, subclasses: Option<&Path>) -> Result<Self, RulesError> {
        let classes = match classes {
            Some(p) => RulesDocument::load(p)?,
            None => RulesDocument::from_json(DEFAULT_CLASS_RULES)?,
        };
        let subclasses = match subclasses {
            Some(p) => RulesDocument::load(p)?,
            None => RulesDocument::from_json(DEFAULT_SUBCLASS_RULES)?,
        };
        Self::compile(&classes, &subclasses)
    }

    pub fn classify_all(&self, ad_text: &str) -> BTreeSet<AdClass> {
        self.classify_bag(&textproc::features(ad_text))
    }

    pub fn classify_bag(&self, bag: &BagOfWords) -> BTreeSet<AdClass> {
        self.class_vectors
            .iter()
            .filter(|(_, v)| v.matches(bag))
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn subclassify_credit(&self, ad_text: &str) -> BTreeSet<CreditSubclass> {
        self.subclassify_bag(&textproc::features(ad_text))
    }

    pub fn subclassify_bag(&self, bag: &BagOfWords) -> BTreeSet<CreditSubclass> {
        let labels: BTreeSet<_> = self
            .subclass_vectors
            .iter()
            .filter(|(_, v)| v.matches(bag))
            .map(|(&s, _)| s)
            .collect();
        if labels.is_empty() {
            BTreeSet::from([CreditSubclass::OtherCredit])
        } else {
            labels
        }
    }
}

fn compile_vectors<K: Ord + Copy>(
    doc: &RulesDocument,
    resolve: impl Fn(&str) -> Option<K>,
) -> Result<BTreeMap<K, TermTopicVector>, RulesError> {
    let mut out = BTreeMap::new();
    for (label, terms) in &doc.0 {
        let key = resolve(label).ok_or_else(|| RulesError::UnknownLabel(label.clone()))?;
        if out.contains_key(&key) {
            return Err(RulesError::DuplicateLabel(label.clone()));
        }
        out.insert(key, TermTopicVector::compile(&label.trim().to_lowercase(), terms)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(classes: &str) -> RuleSet {
        RuleSet::from_json(classes, None).unwrap()
    }

    #[test]
    fn compiles_credit_vector() {
        let r = rules(r#"{"credit": ["loan", "credit card"]}"#);
        assert_eq!(r.class_vectors.len(), 1);
        assert_eq!(r.class_vectors[&AdClass::Credit].terms.len(), 2);
    }

    #[test]
    fn terms_are_lowercased() {
        let r = rules(r#"{"Credit": ["Credit Card", "APR"]}"#);
        let terms: Vec<_> = r.class_vectors[&AdClass::Credit].terms.iter().cloned().collect();
        assert_eq!(terms, vec!["apr".to_string(), "credit card".to_string()]);
    }

    #[test]
    fn empty_term_list() {
        assert!(matches!(
            RuleSet::from_json(r#"{"credit": []}"#, None),
            Err(RulesError::EmptyTermList(l)) if l == "credit"
        ));
    }

    #[test]
    fn three_token_term() {
        assert!(matches!(
            RuleSet::from_json(r#"{"credit": ["a b c"]}"#, None),
            Err(RulesError::InvalidTerm { term, .. }) if term == "a b c"
        ));
        assert!(matches!(
            RuleSet::from_json(r#"{"credit": ["!!"]}"#, None),
            Err(RulesError::InvalidTerm { .. })
        ));
    }

    #[test]
    fn duplicate_label() {
        assert!(matches!(
            RuleSet::from_json(r#"{"credit": ["loan"], "CREDIT": ["apr"]}"#, None),
            Err(RulesError::DuplicateLabel(_))
        ));
    }

    #[test]
    fn other_cannot_carry_rules() {
        assert!(matches!(
            RuleSet::from_json(r#"{"other": ["sale"]}"#, None),
            Err(RulesError::UnknownLabel(_))
        ));
        assert!(matches!(
            RuleSet::from_json(r#"{}"#, Some(r#"{"other_credit": ["x"]}"#)),
            Err(RulesError::UnknownLabel(_))
        ));
    }

    #[test]
    fn multi_label() {
        let r = rules(r#"{"employment": ["job"], "credit": ["home loan"]}"#);
        assert_eq!(
            r.classify_all("apply for this job and a home loan"),
            BTreeSet::from([AdClass::Employment, AdClass::Credit])
        );
    }

    #[test]
    fn no_match() {
        let r = rules(r#"{"employment": ["job"], "credit": ["home loan"]}"#);
        assert!(r.classify_all("fresh bread daily").is_empty());
    }

    #[test]
    fn whole_token_matching() {
        let r = rules(r#"{"employment": ["job"]}"#);
        assert!(r.classify_all("jobless recovery").is_empty());
        assert_eq!(r.classify_all("JOB fair"), BTreeSet::from([AdClass::Employment]));
    }

    #[test]
    fn bigram_needs_adjacency() {
        let r = rules(r#"{"credit": ["home loan"]}"#);
        assert!(r.classify_all("loan for your home").is_empty());
        assert!(r.classify_all("a home, loan").len() == 1);
    }

    #[test]
    fn student_loans() {
        let r = RuleSet::from_json("{}", Some(r#"{"student_loan": ["student loan", "student loans"]}"#)).unwrap();
        assert_eq!(
            r.subclassify_credit("refinance your student loans today"),
            BTreeSet::from([CreditSubclass::StudentLoan])
        );
    }

    #[test]
    fn debt_relief() {
        let r = RuleSet::from_json("{}", Some(r#"{"debt_relief": ["consolidate", "debt relief"]}"#)).unwrap();
        assert_eq!(
            r.subclassify_credit("consolidate your debt"),
            BTreeSet::from([CreditSubclass::DebtRelief])
        );
    }

    #[test]
    fn subclass_fallback() {
        let r = RuleSet::from_json("{}", Some(r#"{"debt_relief": ["consolidate"]}"#)).unwrap();
        assert_eq!(
            r.subclassify_credit("get a new credit card"),
            BTreeSet::from([CreditSubclass::OtherCredit])
        );
    }

    #[test]
    fn bundled_rules_compile() {
        let r = RuleSet::default_rules();
        assert_eq!(r.class_vectors.len(), 4);
        assert_eq!(r.subclass_vectors.len(), 4);
        assert!(r.classify_all("Now hiring! Apply now").contains(&AdClass::Employment));
    }
}
