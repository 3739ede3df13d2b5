mod common;

use chrono::{DateTime, Utc};

use adaudit::augment::augment_batch;
use adaudit::corpus::to_training_set;
use adaudit::model::parse_ad_record;
use adaudit::store::{csv_header, ExportFormat};
use adaudit::{AdClass, AdFilter, AugmentedAd, Gender, NbModel, RuleSet, Store};

use common::{seed_corpus, AdSpec};

fn at(s: &str) -> DateTime<Utc> {
    s.parse().unwrap()
}

/// 1,000 ads over 2019-2020, alternating credit and employment copy; every
/// tenth ad is shown to women only.
fn batch() -> Vec<AugmentedAd> {
    let model = NbModel::train(&to_training_set(&seed_corpus()), 1.0).unwrap();
    let records: Vec<_> = (0..1000)
        .map(|i| {
            let text = if i % 2 == 0 {
                "Low APR personal loan"
            } else {
                "Now hiring drivers, apply now"
            };
            let mut spec = AdSpec::new(format!("{i:04}"), text)
                .page(format!("p{}", i % 7))
                .start(format!("{}-{:02}-15T09:00:00+0000", 2019 + i / 500, 1 + (i % 12)));
            if i % 10 == 0 {
                spec = spec.demographics(vec![("25-34", "female", 0.4), ("35-44", "female", 0.6)]);
            }
            parse_ad_record(&spec.to_value()).unwrap()
        })
        .collect();
    augment_batch(&records, &model, &RuleSet::default_rules()).0
}

#[test]
fn batch_insert_is_idempotent_and_persistent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ads.db");
    let ads = batch();
    {
        let mut store = Store::open(&path).unwrap();
        assert_eq!(store.insert_batch(&ads).unwrap(), 1000);
        assert_eq!(store.insert_batch(&ads[..10]).unwrap(), 0);
    }
    let store = Store::open(&path).unwrap();
    assert_eq!(store.count().unwrap(), 1000);
}

#[test]
fn filters_combine() {
    let mut store = Store::open_in_memory().unwrap();
    store.insert_batch(&batch()).unwrap();

    let y2019 = AdFilter {
        start_from: Some(at("2019-01-01T00:00:00Z")),
        start_before: Some(at("2020-01-01T00:00:00Z")),
        ..AdFilter::default()
    };
    let got = store.query(&y2019).unwrap();
    assert_eq!(got.len(), 500);
    assert!(got.windows(2).all(
        |w| (w[0].base.delivery_start, &w[0].base.archive_id) <= (w[1].base.delivery_start, &w[1].base.archive_id)
    ));

    let credit = AdFilter {
        class: Some(AdClass::Credit),
        ..y2019.clone()
    };
    assert_eq!(store.query(&credit).unwrap().len(), 250);

    let women_only = AdFilter {
        gender_exclusive: Some(Gender::Female),
        ..AdFilter::default()
    };
    let got = store.query(&women_only).unwrap();
    assert_eq!(got.len(), 100);
    assert!(got.iter().all(|a| a.exclusive_gender() == Some(Gender::Female)));

    let page = AdFilter {
        page_id: Some("p3".into()),
        ..AdFilter::default()
    };
    assert_eq!(
        store.query(&page).unwrap().len(),
        (0..1000).filter(|i| i % 7 == 3).count()
    );
}

#[test]
fn csv_export_has_one_row_per_observation() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open_in_memory().unwrap();
    let ads = batch();
    store.insert_batch(&ads).unwrap();
    let out = dir.path().join("ads.csv");
    let n = store.export(&AdFilter::default(), &out, ExportFormat::Csv).unwrap();
    assert_eq!(n, 1000);

    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, csv_header());
    let rows = reader.records().count();
    let observations: usize = ads.iter().map(|a| a.base.demographic_distribution.len()).sum();
    assert_eq!(rows, observations);
}

#[test]
fn fixture_export_reimports_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Store::open_in_memory().unwrap();
    a.insert_batch(&batch()).unwrap();
    let out = dir.path().join("ads.jsonl");
    let filter = AdFilter {
        class: Some(AdClass::Employment),
        ..AdFilter::default()
    };
    a.export(&filter, &out, ExportFormat::FixtureLines).unwrap();
    let mut b = Store::open_in_memory().unwrap();
    let summary = b.import(&out).unwrap();
    assert_eq!(summary.inserted, 500);
    assert_eq!(b.query(&AdFilter::default()).unwrap(), a.query(&filter).unwrap());
}

#[test]
fn raw_records_round_trip() {
    let mut store = Store::open_in_memory().unwrap();
    let raw: Vec<_> = batch().into_iter().map(|a| a.base).collect();
    assert_eq!(store.insert_raw_batch(&raw).unwrap(), 1000);
    assert_eq!(store.insert_raw_batch(&raw).unwrap(), 0);
    let mut back = store.raw_records().unwrap();
    back.sort_by(|x, y| x.archive_id.cmp(&y.archive_id));
    assert_eq!(back, raw);
}

#[test]
fn foreign_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("not-a-db");
    std::fs::write(&path, "hello").unwrap();
    assert!(Store::open(&path).is_err());
}
