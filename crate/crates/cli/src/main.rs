mod config;

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use adaudit::augment::augment_batch;
use adaudit::corpus::load_labeled;
use adaudit::eval::{metrics_csv, metrics_text, ClassMetrics};
use adaudit::ingest::crawl::{CrawlConfig, CrawlOutcome, Crawler};
use adaudit::ingest::fixture::FixtureSource;
use adaudit::ingest::http::HttpSource;
use adaudit::ingest::ratelimit::{SystemClock, TokenBucket};
use adaudit::ingest::{AdSource, RecordFailure, DEFAULT_PAGE_SIZE, DEFAULT_PER_TERM_CAP};
use adaudit::model::{AdClass, AdRecord, Gender};
use adaudit::nb::{NbModel, DEFAULT_ALPHA};
use adaudit::pipeline::{self, DEFAULT_TEST_FRACTION};
use adaudit::store::ExportFormat;
use adaudit::{analytics, textproc, AdFilter, RuleSet, Store};

use config::Config;

#[derive(Parser)]
#[command(name = "audit", version, about = "Collect, classify and audit ad-library data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pull ads from an endpoint or a fixture file into the store.
    Ingest(IngestArgs),
    /// Train a classifier and report held-out metrics.
    Train(TrainArgs),
    /// Score a saved classifier on a labeled corpus.
    Eval(EvalArgs),
    /// Label ad texts or fixture records and print JSON lines.
    Classify(ClassifyArgs),
    /// Re-derive labels and features for every raw ad in the store.
    Augment(AugmentArgs),
    /// Write audit tables for the stored ads.
    Report(ReportArgs),
    /// Export stored ads as fixture lines or CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct ClassifierArgs {
    /// Saved classifier (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Class term lists (JSON); defaults to the bundled lists.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Credit sub-class term lists (JSON); defaults to the bundled lists.
    #[arg(long)]
    subrules: Option<PathBuf>,
}

impl ClassifierArgs {
    fn load(&self) -> Result<(NbModel, RuleSet)> {
        let model = NbModel::load(&self.model).with_context(|| format!("loading model {}", self.model.display()))?;
        let rules = RuleSet::load(self.rules.as_deref(), self.subrules.as_deref()).context("loading rules")?;
        Ok((model, rules))
    }
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["fixture", "endpoint", "config"])))]
struct IngestArgs {
    /// Line-delimited JSON fixture to read instead of an endpoint.
    #[arg(long, conflicts_with = "endpoint")]
    fixture: Option<PathBuf>,
    /// Archive endpoint URL; overrides the config file.
    #[arg(long)]
    endpoint: Option<String>,
    /// TOML file with endpoint_url, access_token, requests_per_minute, country.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated search terms.
    #[arg(long, value_delimiter = ',')]
    terms: Vec<String>,
    /// Comma-separated page ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "terms")]
    page_ids: Vec<String>,
    /// Maximum ads fetched per term.
    #[arg(long, default_value_t = DEFAULT_PER_TERM_CAP)]
    cap: usize,
    #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
    page_size: u32,
    #[arg(long)]
    db: PathBuf,
    /// Classify and augment while ingesting; needs a saved model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    rules: Option<PathBuf>,
    #[arg(long, requires = "model")]
    subrules: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricsFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled corpus: JSON lines with `text` and `label`.
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Where to write the trained model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricsFormat::Text)]
    format: MetricsFormat,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labeled: PathBuf,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Also score the strict classifier-and-rules label.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value_t = MetricsFormat::Text)]
    format: MetricsFormat,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["text", "fixture"])))]
struct ClassifyArgs {
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// A single ad text.
    #[arg(long)]
    text: Option<String>,
    /// Fixture file of ad records.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    classifier: ClassifierArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    db: PathBuf,
    /// Classes to audit, comma-separated; defaults to all.
    #[arg(long, value_delimiter = ',')]
    class: Vec<AdClass>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Fixture,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenderArg {
    Male,
    Female,
    Unknown,
}

impl From<GenderArg> for Gender {
    fn from(g: GenderArg) -> Self {
        match g {
            GenderArg::Male => Gender::Male,
            GenderArg::Female => Gender::Female,
            GenderArg::Unknown => Gender::Unknown,
        }
    }
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    class: Option<AdClass>,
    /// Delivery start on or after this date or timestamp.
    #[arg(long, value_parser = parse_when)]
    from: Option<DateTime<Utc>>,
    /// Delivery start before this date or timestamp.
    #[arg(long, value_parser = parse_when)]
    to: Option<DateTime<Utc>>,
    #[arg(long)]
    page_id: Option<String>,
    /// Only ads delivered exclusively to this gender.
    #[arg(long, value_enum)]
    gender_exclusive: Option<GenderArg>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportKind::Fixture)]
    format: ExportKind,
}

fn parse_when(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc());
    }
    adaudit::model::parse_timestamp("date", s).map_err(|e| format!("expected YYYY-MM-DD or an RFC 3339 timestamp: {e}"))
}

fn report_failures(failures: &[RecordFailure]) {
    for f in failures {
        match f.line {
            Some(line) => eprintln!("warning: line {line}: {}", f.error),
            None => eprintln!("warning: record skipped: {}", f.error),
        }
    }
}

fn store_records(store: &mut Store, records: &[AdRecord], classifier: Option<(&NbModel, &RuleSet)>) -> Result<usize> {
    let new = store.insert_raw_batch(records)?;
    if let Some((model, rules)) = classifier {
        let (ads, warnings) = augment_batch(records, model, rules);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        store.insert_batch(&ads)?;
    }
    Ok(new)
}

fn crawl<S: AdSource>(
    crawler: &Crawler<S>,
    args: &IngestArgs,
) -> Result<CrawlOutcome, adaudit::ingest::crawl::CrawlError> {
    if args.page_ids.is_empty() {
        crawler.crawl_terms(&args.terms)
    } else {
        crawler.crawl_pages(&args.page_ids)
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let classifier = match &args.model {
        Some(model) => Some(
            ClassifierArgs {
                model: model.clone(),
                rules: args.rules.clone(),
                subrules: args.subrules.clone(),
            }
            .load()?,
        ),
        None => None,
    };
    let mut store = Store::open(&args.db).with_context(|| format!("opening {}", args.db.display()))?;
    let crawl_config = CrawlConfig {
        per_term_cap: args.cap.max(1),
        page_size: args.page_size,
        country: cfg.country.clone().unwrap_or_else(|| CrawlConfig::default().country),
        ..CrawlConfig::default()
    };
    let targeted = !args.terms.is_empty() || !args.page_ids.is_empty();

    let result = match (&args.fixture, targeted) {
        (Some(path), false) => {
            let (records, failures) = pipeline::read_fixture(path)?;
            Ok(CrawlOutcome {
                records,
                log: Vec::new(),
                failures,
            })
        }
        (Some(path), true) => {
            let source = FixtureSource::open(path).with_context(|| format!("reading {}", path.display()))?;
            crawl(&Crawler::new(source, crawl_config), &args)
        }
        (None, false) => bail!("--terms or --page-ids is required when reading from an endpoint"),
        (None, true) => {
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| cfg.endpoint_url.clone())
                .context("no endpoint: pass --endpoint or set `endpoint_url` in the config file")?;
            let source = HttpSource::new(&endpoint, cfg.token()?)?;
            let clock = Arc::new(SystemClock::default());
            let limiter = Arc::new(TokenBucket::per_minute(cfg.requests_per_minute(), clock.clone()));
            crawl(
                &Crawler::new(source, crawl_config)
                    .with_limiter(limiter)
                    .with_clock(clock),
                &args,
            )
        }
    };

    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => {
            let msg = e.to_string();
            (*e.partial, Some(msg))
        }
    };
    report_failures(&outcome.failures);
    let new = store_records(&mut store, &outcome.records, classifier.as_ref().map(|(m, r)| (m, r)))?;
    store.log_queries(&outcome.log)?;
    println!(
        "fetched {} records ({} new), {} malformed",
        outcome.records.len(),
        new,
        outcome.failures.len()
    );
    match error {
        Some(msg) => bail!("{msg}"),
        None => Ok(()),
    }
}

fn print_metrics(m: &ClassMetrics, format: MetricsFormat) {
    match format {
        MetricsFormat::Text => print!("{}", metrics_text(m)),
        MetricsFormat::Csv => print!("{}", metrics_csv(m)),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let docs = load_labeled(&args.labeled).with_context(|| format!("reading {}", args.labeled.display()))?;
    let trained = pipeline::train_with_holdout(&docs, args.alpha, args.test_fraction, args.seed)?;
    trained
        .model
        .save(&args.model)
        .with_context(|| format!("writing {}", args.model.display()))?;
    eprintln!(
        "trained on {} documents, evaluated on {}",
        trained.train_size, trained.test_size
    );
    print_metrics(&trained.test_metrics, args.format);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let docs = load_labeled(&args.labeled).with_context(|| format!("reading {}", args.labeled.display()))?;
    let (model, rules) = args.classifier.load()?;
    print_metrics(&pipeline::evaluate(&model, &docs)?, args.format);
    if args.strict {
        println!();
        print_metrics(&pipeline::evaluate_strict(&model, &rules, &docs)?, args.format);
    }
    Ok(())
}

fn label_json(text: &str, model: &NbModel, rules: &RuleSet) -> serde_json::Value {
    let bag = textproc::features(text);
    let predicted = model.predict(&bag).label;
    let rule_labels = rules.classify_bag(&bag);
    let strict = adaudit::eval::strict_filter(predicted, &rule_labels);
    let subclasses = if strict == Some(AdClass::Credit) {
        rules.subclassify_bag(&bag)
    } else {
        Default::default()
    };
    json!({
        "predicted_label": predicted,
        "rule_labels": rule_labels,
        "strict_label": strict,
        "ad_subclass": subclasses,
    })
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let (model, rules) = args.classifier.load()?;
    let mut out = BufWriter::new(io::stdout().lock());
    if let Some(text) = &args.text {
        writeln!(out, "{}", label_json(text, &model, &rules))?;
    }
    if let Some(path) = &args.fixture {
        let (records, failures) = pipeline::read_fixture(path)?;
        report_failures(&failures);
        for r in &records {
            let mut v = label_json(&r.body_text, &model, &rules);
            v.as_object_mut()
                .expect("label json is an object")
                .insert("archiveID".into(), r.archive_id.clone().into());
            writeln!(out, "{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<()> {
    let (model, rules) = args.classifier.load()?;
    let mut store = open_existing(&args.db)?;
    let raw = store.raw_records()?;
    let (ads, warnings) = augment_batch(&raw, &model, &rules);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    store.insert_batch(&ads)?;
    println!("augmented {} ads", ads.len());
    Ok(())
}

fn open_existing(path: &Path) -> Result<Store> {
    if !path.exists() {
        bail!("store {} does not exist", path.display());
    }
    Store::open(path).with_context(|| format!("opening {}", path.display()))
}

fn report(args: ReportArgs) -> Result<()> {
    let store = open_existing(&args.db)?;
    let ads = store.query(&AdFilter::default())?;
    let classes = if args.class.is_empty() {
        AdClass::ALL.to_vec()
    } else {
        args.class
    };
    let report = analytics::build_report(&ads, &classes);
    let files = analytics::write_report(&report, &args.out)?;
    for f in files {
        println!("{}", args.out.join(f).display());
    }
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let store = open_existing(&args.db)?;
    let filter = AdFilter {
        class: args.class,
        start_from: args.from,
        start_before: args.to,
        page_id: args.page_id,
        gender_exclusive: args.gender_exclusive.map(Gender::from),
    };
    let format = match args.format {
        ExportKind::Fixture => ExportFormat::FixtureLines,
        ExportKind::Csv => ExportFormat::Csv,
    };
    let n = store.export(&filter, &args.out, format)?;
    println!("exported {n} ads to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
        Command::Augment(a) => augment(a),
        Command::Report(a) => report(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
