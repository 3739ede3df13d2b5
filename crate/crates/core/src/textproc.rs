//! Tokenization and unigram+bigram bag-of-words features.
//!
//! Tokens are lowercased runs of Unicode letters and digits. Nothing is
//! stemmed, lemmatized or dropped as a stop word, and URLs are not special:
//! they break apart at punctuation like any other text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token counts over unigrams and adjacent-pair bigrams. Bigram keys are the
/// two unigrams joined by a single space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    counts: BTreeMap<String, u32>,
}

impl BagOfWords {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a bag from explicit counts; zero counts are dropped.
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let mut bag = Self::new();
        for (token, n) in counts {
            bag.add(token, n);
        }
        bag
    }

    pub fn add(&mut self, token: impl Into<String>, n: u32) {
        if n > 0 {
            *self.counts.entry(token.into()).or_insert(0) += n;
        }
    }

    pub fn get(&self, token: &str) -> u32 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&v| u64::from(v)).sum()
    }
}

pub fn vectorize(tokens: &[String]) -> BagOfWords {
    let mut bag = BagOfWords::new();
    for token in tokens {
        bag.add(token.as_str(), 1);
    }
    for pair in tokens.windows(2) {
        bag.add(bigram(&pair[0], &pair[1]), 1);
    }
    bag
}

/// Shorthand for `vectorize(&tokenize(text))`.
pub fn features(text: &str) -> BagOfWords {
    vectorize(&tokenize(text))
}

pub fn bigram(first: &str, second: &str) -> String {
    let mut s = String::with_capacity(first.len() + second.len() + 1);
    s.push_str(first);
    s.push(' ');
    s.push_str(second);
    s
}

pub fn is_bigram(token: &str) -> bool {
    token.contains(' ')
}
