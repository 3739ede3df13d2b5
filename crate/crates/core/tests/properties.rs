mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::subsequence;

use adaudit::analytics::{age_skew, gender_skew};
use adaudit::augment::{augment_record, augmented_to_document, parse_augmented};
use adaudit::eval::{self, metrics};
use adaudit::model::{normalize_demographics, parse_ad_record, record_to_document, DemographicShare};
use adaudit::textproc::{features, is_bigram, tokenize, vectorize, BagOfWords};
use adaudit::{AdClass, AgeBucket, Gender, NbModel, RuleSet};

use common::AdSpec;

fn class() -> impl Strategy<Value = AdClass> {
    prop::sample::select(AdClass::ALL.to_vec())
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "loan", "apr", "hiring", "job", "rent", "bedroom", "vote", "senator", "coffee", "sale", "credit", "card",
        "home", "apply", "now", "today",
    ])
    .prop_map(str::to_string)
}

fn phrase(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 0..max).prop_map(|w| w.join(" "))
}

fn training_set() -> impl Strategy<Value = Vec<(BagOfWords, AdClass)>> {
    prop::collection::vec((phrase(8), class()), 1..25)
        .prop_map(|docs| docs.into_iter().map(|(t, c)| (features(&t), c)).collect())
}

const AGES: [&str; 7] = ["13-17", "18-24", "25-34", "35-44", "45-54", "55-64", "65+"];
const GENDERS: [&str; 3] = ["male", "female", "unknown"];

/// Distinct cells with positive weights that sum to one.
fn distribution() -> impl Strategy<Value = Vec<(&'static str, &'static str, f64)>> {
    let cells: Vec<(&str, &str)> = AGES
        .iter()
        .flat_map(|a| GENDERS.iter().map(move |g| (*a, *g)))
        .collect();
    subsequence(cells, 1..8).prop_flat_map(|cells| {
        let n = cells.len();
        prop::collection::vec(1u32..100, n).prop_map(move |w| {
            let total: u32 = w.iter().sum();
            cells
                .iter()
                .zip(&w)
                .map(|(&(a, g), &x)| (a, g, f64::from(x) / f64::from(total)))
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn tokens_are_lowercase_alphanumeric(text in "\\PC{0,60}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(char::is_alphanumeric));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }

    #[test]
    fn tokenize_is_idempotent_and_case_blind(text in "[ -~]{0,60}") {
        let tokens = tokenize(&text);
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens.clone());
        prop_assert_eq!(tokenize(&text.to_uppercase()), tokens);
    }

    #[test]
    fn bag_counts_match_token_counts(text in "[a-z ]{0,80}") {
        let tokens = tokenize(&text);
        let bag = vectorize(&tokens);
        let (bigrams, unigrams): (Vec<_>, Vec<_>) = bag.iter().partition(|(t, _)| is_bigram(t));
        let uni: u64 = unigrams.iter().map(|(_, n)| u64::from(*n)).sum();
        let bi: u64 = bigrams.iter().map(|(_, n)| u64::from(*n)).sum();
        prop_assert_eq!(uni, tokens.len() as u64);
        prop_assert_eq!(bi, tokens.len().saturating_sub(1) as u64);
    }

    #[test]
    fn normalize_is_idempotent_and_keeps_mass(d in distribution()) {
        let shares: Vec<DemographicShare> = d
            .iter()
            .map(|(a, g, f)| DemographicShare::new(a.parse().unwrap(), Gender::from_api(g), *f))
            .collect();
        let once = normalize_demographics(&shares).unwrap();
        prop_assert_eq!(once.len(), 21);
        prop_assert_eq!(normalize_demographics(&once).unwrap(), once.clone());
        let before: f64 = shares.iter().map(|s| s.fraction).sum();
        let after: f64 = once.iter().map(|s| s.fraction).sum();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn record_document_round_trip(id in "[0-9]{1,12}", text in "[ -~]{0,80}", d in distribution(), stopped in any::<bool>()) {
        let mut spec = AdSpec::new(id, text).demographics(d).url("https://x.example/a?b=1").funding("F");
        if stopped {
            spec = spec.stop("2020-06-01T10:30:00+0000");
        }
        let rec = parse_ad_record(&spec.to_value()).unwrap();
        let doc = serde_json::Value::Object(record_to_document(&rec));
        prop_assert_eq!(parse_ad_record(&doc).unwrap(), rec);
    }

    #[test]
    fn augmented_document_round_trip(text in phrase(10), d in distribution()) {
        let model = NbModel::train(&[(features("loan apr"), AdClass::Credit), (features("job hiring"), AdClass::Employment)], 1.0).unwrap();
        let rec = parse_ad_record(&AdSpec::new("7", text).demographics(d).to_value()).unwrap();
        let (ad, _) = augment_record(&rec, &model, &RuleSet::default_rules());
        let doc = serde_json::Value::Object(augmented_to_document(&ad));
        prop_assert_eq!(parse_augmented(&doc).unwrap(), ad);
    }

    #[test]
    fn posterior_is_normalized(train in training_set(), query in phrase(12), alpha in 0.01f64..5.0) {
        let model = NbModel::train(&train, alpha).unwrap();
        let p = model.predict(&features(&query));
        let total: f64 = p.log_posterior.values().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let best = p.log_posterior.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(p.log_posterior[&p.label], best);
    }

    #[test]
    fn unseen_tokens_do_not_move_the_posterior(train in training_set(), query in phrase(12), extra in "[q-z]{12,16}") {
        let model = NbModel::train(&train, 1.0).unwrap();
        let mut bag = features(&query);
        let before = model.predict(&bag);
        bag.add(extra, 3);
        prop_assert_eq!(model.predict(&bag), before);
    }

    /// Doubling every document is the same as halving the smoothing.
    #[test]
    fn duplicated_training_halves_alpha(train in training_set(), alpha in 0.1f64..4.0) {
        let doubled: Vec<_> = train.iter().chain(train.iter()).cloned().collect();
        let a = NbModel::train(&doubled, alpha).unwrap();
        let b = NbModel::train(&train, alpha / 2.0).unwrap();
        prop_assert_eq!(a.vocabulary(), b.vocabulary());
        prop_assert_eq!(a.classes(), b.classes());
        for &c in a.classes() {
            prop_assert!((a.log_prior(c).unwrap() - b.log_prior(c).unwrap()).abs() < 1e-12);
            for t in a.vocabulary() {
                prop_assert!((a.log_likelihood(c, t).unwrap() - b.log_likelihood(c, t).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rules_are_monotone_and_case_blind(a in phrase(8), b in phrase(8)) {
        let rules = RuleSet::default_rules();
        let base = rules.classify_all(&a);
        let more = rules.classify_all(&format!("{a} . {b}"));
        prop_assert!(base.is_subset(&more));
        prop_assert_eq!(rules.classify_all(&a.to_uppercase()), base);
    }

    #[test]
    fn strict_label_is_nb_label_or_nothing(nb in class(), labels in prop::collection::btree_set(class(), 0..5)) {
        match eval::strict_filter(nb, &labels) {
            Some(c) => prop_assert_eq!(c, nb),
            None => prop_assert!(nb != AdClass::Other && !labels.contains(&nb)),
        }
    }

    #[test]
    fn metrics_ignore_order(pairs in prop::collection::vec((class(), class()), 1..60), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let split = |p: &[(AdClass, AdClass)]| -> (Vec<AdClass>, Vec<AdClass>) { p.iter().cloned().unzip() };
        let (g1, p1) = split(&pairs);
        let (g2, p2) = split(&shuffled);
        prop_assert_eq!(metrics(&g1, &p1).unwrap(), metrics(&g2, &p2).unwrap());
    }

    #[test]
    fn stratified_split_partitions(labels in prop::collection::vec(class(), 1..80), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let items: Vec<(usize, AdClass)> = labels.into_iter().enumerate().collect();
        let (train, test) = eval::stratified_split(&items, |x| x.1, frac, seed).unwrap();
        let all: BTreeSet<usize> = train.iter().chain(&test).map(|x| x.0).collect();
        prop_assert_eq!(all.len(), items.len());
        prop_assert_eq!(train.len() + test.len(), items.len());
        let mut per: BTreeMap<AdClass, (usize, usize)> = BTreeMap::new();
        for x in &train { per.entry(x.1).or_default().0 += 1; }
        for x in &test { per.entry(x.1).or_default().1 += 1; }
        for (tr, te) in per.values() {
            if tr + te >= 2 {
                prop_assert!(*tr >= 1 && *te >= 1);
            }
        }
        let again = eval::stratified_split(&items, |x| x.1, frac, seed).unwrap();
        prop_assert_eq!(again, (train, test));
    }

    #[test]
    fn skews_sum_to_one(ds in prop::collection::vec(distribution(), 1..30)) {
        let model = NbModel::train(&[(features("loan"), AdClass::Credit)], 1.0).unwrap();
        let rules = RuleSet::default_rules();
        let ads: Vec<_> = ds
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let rec = parse_ad_record(&AdSpec::new(i.to_string(), "loan").demographics(d).to_value()).unwrap();
                augment_record(&rec, &model, &rules).0
            })
            .collect();
        let g: f64 = gender_skew(&ads).unwrap().values().sum();
        let a: BTreeMap<AgeBucket, f64> = age_skew(&ads).unwrap();
        prop_assert!((g - 1.0).abs() < 1e-12);
        prop_assert!((a.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
