//! Ad-library audit toolkit.
//!
//! Ingests platform ad records, labels each ad as housing, employment,
//! credit, political or other with a multinomial Naive Bayes model confirmed
//! by a term-matching rules model, derives per-ad delivery features, and
//! computes demographic delivery statistics (gender and age skew,
//! single-gender exclusivity, uniqueness) as reproducible reports.

pub mod analytics;
pub mod augment;
pub mod corpus;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod nb;
pub mod pipeline;
pub mod rules;
pub mod store;
pub mod textproc;

pub use analytics::AuditReport;
pub use augment::AugmentedAd;
pub use model::{AdClass, AdRecord, AgeBucket, CreditSubclass, DemographicShare, Gender};
pub use nb::NbModel;
pub use rules::RuleSet;
pub use store::{AdFilter, Store};
