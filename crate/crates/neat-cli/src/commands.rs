use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use neat_core::corpus::{
    build_stats, filter_same_category, ingest_transactions, load_catalog, load_pairs, load_stats,
    sample_pairs, write_catalog, write_pairs, write_stats, write_transactions, Vocab,
};
use neat_core::embedding::EmbeddingTable;
use neat_core::evaluator::{
    build_recall_set, evaluate, global_popularity_order, rank_candidates, EvalReport, Ranking,
    Scorer,
};
use neat_core::kv::parse_kv;
use neat_core::labelgen::{diagnostics_json, generate_labels, load_labels, threshold_for, write_labels};
use neat_core::synth::{generate_synthetic, SynthSpec};
use neat_core::trainer::{train, TrainConfig, TrainMode};

use crate::manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "neat",
    version,
    about = "Complementary-item recommendation: Gaussian item embeddings with chi-squared label generation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run seed (CLI flag beats config file beats built-in default)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Key/value config file with training hyperparameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Force single-threaded, bit-reproducible execution
    #[arg(long, global = true)]
    deterministic: bool,

    /// Worker threads for training
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a transaction file; write pairs, stats, and catalog files
    Ingest(IngestArgs),
    /// Generate a synthetic transaction file from a spec
    Synth(SynthArgs),
    /// Train item Gaussian embeddings from a pairs file
    Train(TrainArgs),
    /// Run the chi-squared test over a stats file and write labels
    Labelgen(LabelgenArgs),
    /// Score methods with HR@K / NDCG@K against a label file
    Eval(EvalArgs),
    /// Print the top complementary items for a query item
    Recommend(RecommendArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Transaction file (user_id,transaction_id,position,item_id,category_id)
    #[arg(long)]
    input: PathBuf,
    /// Output directory for pairs.tsv, stats.tsv, catalog.tsv
    #[arg(long)]
    out_dir: PathBuf,
    /// Positional co-purchase window
    #[arg(long)]
    window: Option<usize>,
    /// Drop pairs whose items share a category (training-label cleanup)
    #[arg(long)]
    filter_same_category: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic corpus spec (key = value text)
    #[arg(long)]
    spec: PathBuf,
    /// Output transaction file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Pairs file from `ingest`
    #[arg(long)]
    pairs: PathBuf,
    /// Output directory for embeddings and the loss trace
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    num_negatives: Option<usize>,
    /// Objective: `neat` or `neat-bpr`
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    c_min: Option<f64>,
    #[arg(long)]
    c_max: Option<f64>,
}

#[derive(Args)]
struct LabelgenArgs {
    /// Stats file from `ingest`
    #[arg(long)]
    stats: PathBuf,
    /// Output label TSV
    #[arg(long)]
    out: PathBuf,
    /// Significance level for the chi-squared test
    #[arg(long, default_value_t = 0.05)]
    p_value: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Label TSV from `labelgen`
    #[arg(long)]
    labels: PathBuf,
    /// Training stats file used to build recall sets
    #[arg(long)]
    stats: PathBuf,
    /// Catalog file (needed for the `pop` baseline)
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Item embedding file (needed for the `neat` method)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated methods: pop, popco, neat
    #[arg(long, default_value = "pop,popco,neat")]
    method: String,
    /// Comma-separated metric cutoffs
    #[arg(long, default_value = "1,3,5,10,20")]
    k: String,
    /// Recall-set size
    #[arg(long, default_value_t = 100)]
    recall_size: usize,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecommendArgs {
    /// Item embedding file from `train`
    #[arg(long)]
    embeddings: PathBuf,
    /// Training stats file used to build the candidate pool
    #[arg(long)]
    stats: PathBuf,
    /// Query item id
    #[arg(long)]
    query: String,
    /// Number of recommendations to print
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Recall-set size to re-rank
    #[arg(long, default_value_t = 100)]
    recall_size: usize,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = TrainConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        config.apply_kv(&parse_kv(&text)?)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if cli.deterministic {
        config.threads = 1;
    }

    match cli.command {
        Command::Ingest(args) => cmd_ingest(args, &config),
        Command::Synth(args) => cmd_synth(args, &config),
        Command::Train(args) => cmd_train(args, config),
        Command::Labelgen(args) => cmd_labelgen(args, &config),
        Command::Eval(args) => cmd_eval(args, &config),
        Command::Recommend(args) => cmd_recommend(args),
    }
}

fn open_reader(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create_writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_ingest(args: IngestArgs, config: &TrainConfig) -> anyhow::Result<()> {
    let window = args.window.unwrap_or(config.window);
    let corpus = ingest_transactions(open_reader(&args.input)?)
        .with_context(|| format!("ingesting {}", args.input.display()))?;

    let mut pairs = sample_pairs(&corpus, window);
    let unfiltered = pairs.len();
    if args.filter_same_category {
        pairs = filter_same_category(pairs, &corpus.vocab)?;
    }
    let stats = build_stats(&pairs);

    fs::create_dir_all(&args.out_dir)?;
    let pairs_path = args.out_dir.join("pairs.tsv");
    write_pairs(&mut create_writer(&pairs_path)?, &pairs, &corpus.vocab)?;
    let stats_path = args.out_dir.join("stats.tsv");
    write_stats(&mut create_writer(&stats_path)?, &stats, &corpus.vocab)?;
    let catalog_path = args.out_dir.join("catalog.tsv");
    write_catalog(&mut create_writer(&catalog_path)?, &corpus.vocab)?;

    println!(
        "transactions={} items={} users={} categories={} pairs={} (sampled {unfiltered})",
        corpus.n_transactions(),
        corpus.vocab.n_items(),
        corpus.vocab.n_users(),
        corpus.vocab.n_categories(),
        pairs.len(),
    );

    let mut manifest = Manifest::new("ingest");
    manifest.push("input", args.input.display());
    manifest.push("window", window);
    manifest.push("filter_same_category", args.filter_same_category);
    manifest.push("transactions", corpus.n_transactions());
    manifest.push("items", corpus.vocab.n_items());
    manifest.push("users", corpus.vocab.n_users());
    manifest.push("pairs", pairs.len());
    manifest.push("pairs_out", pairs_path.display());
    manifest.push("stats_out", stats_path.display());
    manifest.push("catalog_out", catalog_path.display());
    manifest.append_to(&args.out_dir)
}

fn cmd_synth(args: SynthArgs, config: &TrainConfig) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading spec {}", args.spec.display()))?;
    let spec = SynthSpec::from_kv_text(&text)?;
    let corpus = generate_synthetic(&spec, config.seed)?;
    write_transactions(&mut create_writer(&args.out)?, &corpus)?;
    println!(
        "transactions={} items={} users={} -> {}",
        corpus.n_transactions(),
        corpus.vocab.n_items(),
        corpus.vocab.n_users(),
        args.out.display()
    );

    let mut manifest = Manifest::new("synth");
    manifest.push("spec", args.spec.display());
    manifest.push("seed", config.seed);
    manifest.push("transactions", corpus.n_transactions());
    manifest.push("out", args.out.display());
    let dir = args.out.parent().unwrap_or(Path::new("."));
    manifest.append_to(if dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        dir
    })
}

fn cmd_train(args: TrainArgs, mut config: TrainConfig) -> anyhow::Result<()> {
    if let Some(v) = args.margin {
        config.margin = v;
    }
    if let Some(v) = args.dim {
        config.dim = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.num_negatives {
        config.num_negatives = v;
    }
    if let Some(v) = &args.mode {
        config.mode = TrainMode::parse(v)?;
    }
    if let Some(v) = args.c_min {
        config.c_min = v;
    }
    if let Some(v) = args.c_max {
        config.c_max = v;
    }

    let mut vocab = Vocab::new();
    let pairs = load_pairs(open_reader(&args.pairs)?, &mut vocab)
        .with_context(|| format!("loading pairs {}", args.pairs.display()))?;
    let outcome = train(&pairs, &vocab, &config)?;

    fs::create_dir_all(&args.out_dir)?;
    let items_path = args.out_dir.join("items.tsv");
    outcome.table.save_items(&mut create_writer(&items_path)?)?;
    let users_path = args.out_dir.join("users.tsv");
    if config.mode == TrainMode::NeatBpr {
        outcome.table.save_users(&mut create_writer(&users_path)?)?;
    }
    let trace_path = args.out_dir.join("loss_trace.csv");
    {
        let mut w = create_writer(&trace_path)?;
        writeln!(w, "epoch,mean_loss,wallclock_seconds")?;
        for entry in &outcome.trace {
            writeln!(w, "{},{:.6},{:.3}", entry.epoch, entry.mean_loss, entry.seconds)?;
        }
    }

    for entry in &outcome.trace {
        println!(
            "epoch {}: mean_loss={:.4} ({:.1}s)",
            entry.epoch, entry.mean_loss, entry.seconds
        );
    }

    let mut manifest = Manifest::new("train");
    manifest.push("pairs", args.pairs.display());
    manifest.push("margin", config.margin);
    manifest.push("dim", config.dim);
    manifest.push("epochs", config.epochs);
    manifest.push("learning_rate", config.learning_rate);
    manifest.push("batch_size", config.batch_size);
    manifest.push("num_negatives", config.num_negatives);
    manifest.push("window", config.window);
    manifest.push("mode", config.mode.as_str());
    manifest.push("seed", config.seed);
    manifest.push("c_min", config.c_min);
    manifest.push("c_max", config.c_max);
    manifest.push("threads", config.threads);
    manifest.push("items_out", items_path.display());
    if config.mode == TrainMode::NeatBpr {
        manifest.push("users_out", users_path.display());
    }
    manifest.push("trace_out", trace_path.display());
    manifest.append_to(&args.out_dir)
}

fn cmd_labelgen(args: LabelgenArgs, _config: &TrainConfig) -> anyhow::Result<()> {
    let mut vocab = Vocab::new();
    let stats = load_stats(open_reader(&args.stats)?, &mut vocab)
        .with_context(|| format!("loading stats {}", args.stats.display()))?;
    let outcome = generate_labels(&stats, args.p_value, &vocab)?;
    let threshold = threshold_for(args.p_value)?;

    write_labels(
        &mut create_writer(&args.out)?,
        &outcome.qualified,
        &vocab,
        args.p_value,
        threshold,
    )?;
    let diagnostics = diagnostics_json(&outcome);
    let diag_path = args.out.with_extension("diagnostics.json");
    fs::write(&diag_path, &diagnostics)?;
    print!("{diagnostics}");

    let mut manifest = Manifest::new("labelgen");
    manifest.push("stats", args.stats.display());
    manifest.push("p_value", args.p_value);
    manifest.push("chi2_threshold", format!("{threshold:.3}"));
    manifest.push("qualified", outcome.qualified.len());
    manifest.push("negatively_dependent", outcome.negatively_dependent.len());
    manifest.push("independent", outcome.independent.len());
    manifest.push("skipped_degenerate", outcome.skipped_degenerate);
    manifest.push("labels_out", args.out.display());
    let dir = args.out.parent().unwrap_or(Path::new("."));
    manifest.append_to(if dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        dir
    })
}

fn cmd_eval(args: EvalArgs, _config: &TrainConfig) -> anyhow::Result<()> {
    let methods: Vec<&str> = args.method.split(',').map(str::trim).collect();
    for method in &methods {
        if !matches!(*method, "pop" | "popco" | "neat") {
            bail!("unknown method `{method}` (expected pop, popco, neat)");
        }
    }
    let ks: Vec<usize> = args
        .k
        .split(',')
        .map(|k| k.trim().parse().context("bad --k value"))
        .collect::<anyhow::Result<_>>()?;

    let mut vocab = Vocab::new();
    let labels = load_labels(open_reader(&args.labels)?, &mut vocab)?;
    let stats = load_stats(open_reader(&args.stats)?, &mut vocab)?;
    if let Some(catalog) = &args.catalog {
        load_catalog(open_reader(catalog)?, &mut vocab)?;
    }

    let table = match &args.embeddings {
        Some(path) => Some(EmbeddingTable::load_items(open_reader(path)?)?),
        None => None,
    };
    if methods.contains(&"neat") && table.is_none() {
        bail!("--method neat requires --embeddings");
    }
    if methods.contains(&"pop") && args.catalog.is_none() {
        bail!("--method pop requires --catalog (for global purchase counts)");
    }

    let pop_order = global_popularity_order(&vocab);
    let mut reports: Vec<EvalReport> = Vec::new();
    for method in &methods {
        let scorer = match *method {
            "pop" => Scorer::Pop(&pop_order),
            "popco" => Scorer::PopCo,
            "neat" => Scorer::NeatCosine(table.as_ref().unwrap()),
            _ => unreachable!(),
        };
        let report = evaluate(
            &labels.records,
            &stats,
            &scorer,
            &ks,
            args.recall_size,
            &vocab,
        )?;
        print!("{report}");
        reports.push(report);
    }

    let mut w = create_writer(&args.out)?;
    writeln!(w, "{}", EvalReport::CSV_HEADER)?;
    for report in &reports {
        report.write_csv_rows(&mut w)?;
    }
    drop(w);

    let mut manifest = Manifest::new("eval");
    manifest.push("labels", args.labels.display());
    manifest.push("stats", args.stats.display());
    manifest.push("methods", args.method.clone());
    manifest.push("k", args.k.clone());
    manifest.push("recall_size", args.recall_size);
    manifest.push("n_labels", labels.records.len());
    manifest.push("report_out", args.out.display());
    let dir = args.out.parent().unwrap_or(Path::new("."));
    manifest.append_to(if dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        dir
    })
}

fn cmd_recommend(args: RecommendArgs) -> anyhow::Result<()> {
    let table = EmbeddingTable::load_items(open_reader(&args.embeddings)?)?;
    let mut vocab = Vocab::new();
    let stats = load_stats(open_reader(&args.stats)?, &mut vocab)?;
    let query = vocab
        .item_id(&args.query)
        .with_context(|| format!("query item `{}` has no co-purchase history", args.query))?;
    let recall = build_recall_set(query, &stats, args.recall_size, &vocab)
        .with_context(|| format!("query item `{}` has no co-purchase history", args.query))?;
    let scorer = Scorer::NeatCosine(&table);
    let ranked = match rank_candidates(&recall, &scorer, &vocab) {
        Ranking::Ranked { items, .. } => items,
        Ranking::QueryUnscorable => bail!("query item `{}` has no embedding", args.query),
    };
    let query_embedding = table.item(&args.query)?;
    for item in ranked.into_iter().take(args.n) {
        let candidate = table.item(vocab.item_name(item))?;
        let score = neat_core::embedding::cosine_score(&query_embedding, &candidate)?;
        println!("{}\t{score:.6}", vocab.item_name(item));
    }
    Ok(())
}
