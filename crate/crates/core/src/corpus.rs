//! Labeled training corpora: JSON lines of `{"text": ..., "label": ...}`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AdClass;
use crate::textproc::{self, BagOfWords};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: AdClass,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: AdClass) -> Self {
        Self {
            text: text.into(),
            label,
        }
    }

    pub fn features(&self) -> BagOfWords {
        textproc::features(&self.text)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Deserialize)]
struct RawLabeled {
    text: String,
    label: String,
}

/// Reads a labeled corpus. Labels are matched case-insensitively; the first
/// bad line aborts, since a training set with silent gaps is worse than none.
pub fn read_labeled<R: Read>(reader: R) -> Result<Vec<LabeledText>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let text = if i == 0 {
            line.trim_start_matches('\u{feff}')
        } else {
            &line
        };
        if text.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CorpusError::Line { line: i + 1, message };
        let raw: RawLabeled = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let label = raw.label.parse::<AdClass>().map_err(|e| bad(e.to_string()))?;
        out.push(LabeledText { text: raw.text, label });
    }
    Ok(out)
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledText>, CorpusError> {
    read_labeled(File::open(path)?)
}

pub fn to_training_set(docs: &[LabeledText]) -> Vec<(BagOfWords, AdClass)> {
    docs.iter().map(|d| (d.features(), d.label)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_lines() {
        let text =
            "{\"text\": \"Now hiring\", \"label\": \"Employment\"}\n\n{\"text\": \"low apr\", \"label\": \"credit\"}\n";
        let docs = read_labeled(text.as_bytes()).unwrap();
        assert_eq!(
            docs,
            vec![
                LabeledText::new("Now hiring", AdClass::Employment),
                LabeledText::new("low apr", AdClass::Credit)
            ]
        );
    }

    #[test]
    fn unknown_label_reports_line() {
        let text = "{\"text\": \"x\", \"label\": \"credit\"}\n{\"text\": \"y\", \"label\": \"misc\"}\n";
        assert!(matches!(
            read_labeled(text.as_bytes()),
            Err(CorpusError::Line { line: 2, .. })
        ));
    }
}
