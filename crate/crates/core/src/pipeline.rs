//! End-to-end steps shared by the CLI and tests.

use std::path::Path;

use crate::augment::{augment_batch, AugmentError, AugmentedAd};
use crate::corpus::{to_training_set, LabeledText};
use crate::eval::{self, ClassMetrics, EvalError};
use crate::ingest::fixture::{load_fixture, FixtureError};
use crate::ingest::RecordFailure;
use crate::model::{AdClass, AdRecord};
use crate::nb::{NbError, NbModel};
use crate::rules::RuleSet;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nb(#[from] NbError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A model trained on the train side of a stratified split and its scores on
/// the held-out side.
pub struct TrainedModel {
    pub model: NbModel,
    pub test_metrics: ClassMetrics,
    pub train_size: usize,
    pub test_size: usize,
}

pub fn train_with_holdout(
    docs: &[LabeledText],
    alpha: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<TrainedModel, PipelineError> {
    let (train, test) = eval::stratified_split(docs, |d| d.label, test_fraction, seed)?;
    let model = NbModel::train(&to_training_set(&train), alpha)?;
    let test_metrics = evaluate(&model, &test)?;
    Ok(TrainedModel {
        model,
        test_metrics,
        train_size: train.len(),
        test_size: test.len(),
    })
}

pub fn evaluate(model: &NbModel, docs: &[LabeledText]) -> Result<ClassMetrics, EvalError> {
    let gold: Vec<AdClass> = docs.iter().map(|d| d.label).collect();
    let predicted: Vec<AdClass> = docs.iter().map(|d| model.predict(&d.features()).label).collect();
    eval::metrics(&gold, &predicted)
}

/// Scores the strict NB-and-rules label; ads the filter drops abstain.
pub fn evaluate_strict(model: &NbModel, rules: &RuleSet, docs: &[LabeledText]) -> Result<ClassMetrics, EvalError> {
    let gold: Vec<AdClass> = docs.iter().map(|d| d.label).collect();
    let predicted: Vec<Option<AdClass>> = docs
        .iter()
        .map(|d| {
            let bag = d.features();
            eval::strict_filter(model.predict(&bag).label, &rules.classify_bag(&bag))
        })
        .collect();
    eval::metrics_with_abstention(&gold, &predicted)
}

/// Every parseable record of a fixture file plus the line-numbered failures.
pub fn read_fixture(path: impl AsRef<Path>) -> Result<(Vec<AdRecord>, Vec<RecordFailure>), PipelineError> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for item in load_fixture(path)? {
        match item {
            Ok(r) => records.push(r),
            Err(FixtureError::Line(f)) => failures.push(f),
            Err(FixtureError::Io(e)) => return Err(e.into()),
        }
    }
    Ok((records, failures))
}

pub fn augment_all(records: &[AdRecord], model: &NbModel, rules: &RuleSet) -> (Vec<AugmentedAd>, Vec<AugmentError>) {
    augment_batch(records, model, rules)
}
