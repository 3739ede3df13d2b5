//! Fixture and corpus generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use adaudit::corpus::LabeledText;
use adaudit::{AdClass, RuleSet};

/// One ad document in wire format.
#[derive(Debug, Clone)]
pub struct AdSpec {
    pub id: String,
    pub text: String,
    pub page_id: String,
    pub page_name: String,
    pub funding: Option<String>,
    pub url: Option<String>,
    pub start: String,
    pub stop: Option<String>,
    pub demographics: Vec<(&'static str, &'static str, f64)>,
}

impl AdSpec {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            page_id: format!("page{id}"),
            page_name: format!("Page {id}"),
            id,
            text: text.into(),
            funding: None,
            url: None,
            start: "2020-03-02T08:00:00+0000".into(),
            stop: None,
            demographics: vec![("25-34", "female", 0.5), ("35-44", "male", 0.5)],
        }
    }

    pub fn page(mut self, id: impl Into<String>) -> Self {
        let id = id.into();
        self.page_name = format!("Advertiser {id}");
        self.page_id = id;
        self
    }

    pub fn funding(mut self, f: impl Into<String>) -> Self {
        self.funding = Some(f.into());
        self
    }

    pub fn url(mut self, u: impl Into<String>) -> Self {
        self.url = Some(u.into());
        self
    }

    pub fn start(mut self, s: impl Into<String>) -> Self {
        self.start = s.into();
        self
    }

    pub fn stop(mut self, s: impl Into<String>) -> Self {
        self.stop = Some(s.into());
        self
    }

    pub fn demographics(mut self, d: Vec<(&'static str, &'static str, f64)>) -> Self {
        self.demographics = d;
        self
    }

    pub fn to_value(&self) -> Value {
        let mut v = json!({
            "archiveID": self.id,
            "ad_creation_time": self.start,
            "text": self.text,
            "ad_delivery_start_time": self.start,
            "currency": "USD",
            "impressions": {"lower_bound": "1000", "upper_bound": "4999"},
            "page_id": self.page_id,
            "page_name": self.page_name,
            "publisher_platforms": ["facebook", "instagram"],
            "spend": {"lower_bound": "100", "upper_bound": "499"},
            "demographic_distribution": self.demographics.iter().map(|(age, gender, pct)| json!({
                "age": age, "gender": gender, "percentage": pct.to_string()
            })).collect::<Vec<_>>(),
        });
        let obj = v.as_object_mut().unwrap();
        if let Some(f) = &self.funding {
            obj.insert("funding_entity".into(), f.clone().into());
        }
        if let Some(u) = &self.url {
            obj.insert("embedded_url".into(), u.clone().into());
        }
        if let Some(s) = &self.stop {
            obj.insert("ad_delivery_stop_time".into(), s.clone().into());
        }
        v
    }

    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }
}

pub fn to_fixture(ads: &[AdSpec]) -> String {
    let mut out = String::new();
    for a in ads {
        out.push_str(&a.to_line());
        out.push('\n');
    }
    out
}

/// Hand-written texts per class; enough for a small model to separate
/// ordinary ad copy.
pub fn seed_corpus() -> Vec<LabeledText> {
    let per_class: [(AdClass, &[&str]); 5] = [
        (
            AdClass::Credit,
            &[
                "Low APR personal loan with fast approval",
                "Refinance your mortgage and lower your interest rate today",
                "Get a credit card with no annual fee",
                "Check your credit score for free and get pre approved for a loan",
                "Debt consolidation loans from a trusted lender",
                "Auto loan financing with low monthly payments",
                "Apply for a business loan in minutes",
                "Home equity line of credit with a low rate",
            ],
        ),
        (
            AdClass::Employment,
            &[
                "Now hiring warehouse associates apply now",
                "Join our team: nursing jobs with great benefits",
                "Career opportunities for truck drivers, competitive salary",
                "We are recruiting software engineers, open positions in Austin",
                "Part time job openings at our store, apply today",
                "Hiring delivery drivers with flexible hours and weekly pay",
                "Start your career in sales, hiring now",
                "Food service director position available, apply now",
            ],
        ),
        (
            AdClass::Housing,
            &[
                "3 bedroom 2 bath home for sale in a quiet neighborhood",
                "Luxury apartments for rent near downtown",
                "New listing: 4 bed 3 bath 2400 sqft house",
                "Tour our spacious apartment homes with a pool",
                "Just listed by our realtor team, open house Sunday",
                "Studio apartment for rent, utilities included",
                "Real estate listing with a big backyard",
                "Find your dream homes in the suburbs",
            ],
        ),
        (
            AdClass::Political,
            &[
                "Vote for our candidate on election day",
                "Paid for by the committee to elect a new senator",
                "Tell congress to protect health care, sign the petition",
                "Support the governor campaign, donate today",
                "Early voting starts now, make a plan to vote",
                "Democrats and republicans agree this bill matters",
                "Our campaign needs your support before the ballot deadline",
                "Stand with your senator and vote in november",
            ],
        ),
        (
            AdClass::Other,
            &[
                "Shop the summer sale on shoes and clothing",
                "Healthy meal kits delivered to your door",
                "Learn to play guitar with online lessons",
                "Discover nutrition benefits for needy families",
                "Fresh coffee roasted daily at our cafe",
                "Download our fitness app and track your workouts",
                "Book your vacation cruise with exclusive deals",
                "Adopt a puppy from our local shelter this weekend",
            ],
        ),
    ];
    per_class
        .iter()
        .flat_map(|(class, texts)| texts.iter().map(move |t| LabeledText::new(*t, *class)))
        .collect()
}

fn class_prefix(c: AdClass) -> &'static str {
    match c {
        AdClass::Credit => "cred",
        AdClass::Employment => "empl",
        AdClass::Housing => "hous",
        AdClass::Political => "poli",
        AdClass::Other => "othr",
    }
}

pub const SIGNATURE_WORDS: usize = 40;
pub const NOISE_WORDS: usize = 200;
pub const DOC_LEN: usize = 20;

pub fn signature_word(c: AdClass, k: usize) -> String {
    format!("{}{k}", class_prefix(c))
}

/// `per_class` documents per class. Each document has `DOC_LEN` tokens;
/// each token is drawn from a shared noise vocabulary with probability
/// `noise`, otherwise from the class's signature vocabulary.
pub fn synthetic_corpus(per_class: usize, noise: f64, seed: u64) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(per_class * AdClass::ALL.len());
    for &class in AdClass::ALL.iter() {
        for _ in 0..per_class {
            let words: Vec<String> = (0..DOC_LEN)
                .map(|_| {
                    if rng.gen_bool(noise) {
                        format!("noise{}", rng.gen_range(0..NOISE_WORDS))
                    } else {
                        signature_word(class, rng.gen_range(0..SIGNATURE_WORDS))
                    }
                })
                .collect();
            docs.push(LabeledText::new(words.join(" "), class));
        }
    }
    docs.shuffle(&mut rng);
    docs
}

/// Rules over the first quarter of each non-Other signature vocabulary.
pub fn signature_rules() -> RuleSet {
    let mut doc: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for &c in AdClass::ALL.iter().filter(|&&c| c != AdClass::Other) {
        doc.insert(
            c.as_str(),
            (0..SIGNATURE_WORDS / 4).map(|k| signature_word(c, k)).collect(),
        );
    }
    RuleSet::from_json(&serde_json::to_string(&doc).unwrap(), None).unwrap()
}
