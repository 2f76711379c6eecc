use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccbench_core::corpus::{
    corpus_summary, load_corpus, stratified_split, taxonomy_for, write_jsonl, ColumnMap, CorpusFormat, Language,
    LanguageSource,
};
use ccbench_core::harness::{self, run_experiment, run_grid, ExperimentConfig, GridSpec};
use ccbench_core::pairgen::{export_pairs, generate_pairs, PairPlan};
use ccbench_core::score::{breakdown_export, submission_score_with, ScoreConstants, SubmissionInputs};

#[derive(Parser)]
#[command(name = "ccbench", version, about = "Code-comment classification benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and rewrite it as normalized JSONL
    Ingest(IngestArgs),
    /// Stratified train/test split per language
    Split(SplitArgs),
    /// Export contrastive sentence pairs for a training split
    Pairs(PairsArgs),
    /// Train one model per language and save them
    Train(ConfigArgs),
    /// Run a hyperparameter sweep defined by a config's [grid] section
    Grid(ConfigArgs),
    /// Train, evaluate, measure and score one configuration
    Evaluate(ConfigArgs),
    /// Compute the submission score from its three inputs
    Score(ScoreArgs),
    /// Write per-term score contributions for plotting
    ExportBreakdown(BreakdownArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Corpus file
    #[arg(long)]
    input: PathBuf,
    /// jsonl or csv
    #[arg(long, default_value = "jsonl")]
    format: String,
    /// Column map for csv input
    #[arg(long)]
    column_map: Option<PathBuf>,
    /// Language of every row, overriding the column map
    #[arg(long)]
    language: Option<Language>,
}

impl InputArgs {
    fn load(&self) -> Result<Vec<ccbench_core::CommentSentence>> {
        let format = match self.format.as_str() {
            "jsonl" => CorpusFormat::Jsonl,
            "csv" => {
                let path = self.column_map.as_ref().context("--column-map is required for csv input")?;
                let mut map = ColumnMap::parse(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
                if let Some(l) = self.language {
                    map.language = LanguageSource::Fixed(l);
                }
                CorpusFormat::Csv(map)
            }
            other => bail!("unknown format `{other}` (jsonl | csv)"),
        };
        load_corpus(&self.input, &format).with_context(|| format!("loading {}", self.input.display()))
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Normalized JSONL output
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.jsonl and test.jsonl
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TSV output: a_id, b_id, 1 (shared label) or 0 (disjoint)
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. --set head.c=0.1 (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Same as --set run.seed=N
    #[arg(long)]
    seed: Option<u64>,
    /// Same as --set run.out_dir=DIR
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<String>> {
        let mut all = self.overrides.clone();
        if let Some(s) = self.seed {
            all.push(format!("run.seed={s}"));
        }
        if let Some(d) = &self.out_dir {
            let abs = std::path::absolute(d).with_context(|| format!("resolving {}", d.display()))?;
            all.push(format!("run.out_dir={}", abs.display()));
        }
        Ok(all)
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &self.overrides()?)
            .with_context(|| format!("loading config {}", self.config.display()))
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Average F1 over all labels
    #[arg(long, allow_negative_numbers = true)]
    f1: f64,
    /// Average runtime in seconds
    #[arg(long, allow_negative_numbers = true)]
    runtime: f64,
    /// Average GFLOPS
    #[arg(long, allow_negative_numbers = true)]
    gflops: f64,
    /// Also print each term
    #[arg(long)]
    breakdown: bool,
}

#[derive(Args)]
struct BreakdownArgs {
    /// CSV with name, avg_f1, avg_runtime_s and avg_gflops columns (a leaderboard works)
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let sentences = args.input.load()?;
    write_jsonl(&args.output, &sentences)?;
    println!("{}", corpus_summary(&sentences));
    Ok(())
}

fn split(args: &SplitArgs) -> Result<()> {
    let sentences = args.input.load()?;
    let split = stratified_split(&sentences, args.ratio, args.seed)?;
    fs::create_dir_all(&args.out_dir)?;
    write_jsonl(&args.out_dir.join("train.jsonl"), &split.train)?;
    write_jsonl(&args.out_dir.join("test.jsonl"), &split.test)?;
    for d in &split.degenerate {
        eprintln!(
            "warning: {} label `{}` has {} positive(s); all placed in train",
            d.language,
            taxonomy_for(d.language).labels[d.label],
            d.positives
        );
    }
    println!("train: {}  test: {}", split.train.len(), split.test.len());
    Ok(())
}

fn pairs(args: &PairsArgs) -> Result<()> {
    let sentences = args.input.load()?;
    let mut all = Vec::new();
    for language in Language::ALL {
        let train: Vec<_> = sentences.iter().filter(|s| s.language == language).cloned().collect();
        if train.is_empty() {
            continue;
        }
        let pairs = generate_pairs(&train, PairPlan { num_iterations: args.iterations, seed: args.seed })
            .with_context(|| format!("generating {language} pairs"))?;
        all.extend(pairs);
    }
    export_pairs(&all, &args.output)?;
    println!("{} pairs", all.len());
    Ok(())
}

fn train(args: &ConfigArgs) -> Result<()> {
    let config = args.experiment()?;
    let (_, models) = harness::train_models(&config)?;
    let dir = config.out_root.join(harness::config_hash(&config));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.ini"), config.canonical_text())?;
    for m in &models {
        let path = dir.join(format!("model_{}.json", m.language));
        m.save(&path)?;
        if !m.flagged_labels.is_empty() {
            eprintln!("warning: {} labels trained as constants: {}", m.language, m.flagged_labels.join(", "));
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn evaluate(args: &ConfigArgs) -> Result<()> {
    let config = args.experiment()?;
    let report = run_experiment(&config)?;
    println!("run:          {}", report.run_dir.display());
    println!("avg_f1:       {:.4}", report.inputs.avg_f1);
    println!("avg_runtime:  {:.4} s", report.inputs.avg_runtime_s);
    println!("avg_gflops:   {:.4}", report.inputs.avg_gflops);
    println!("score:        {:.4}", report.score.total);
    Ok(())
}

fn grid(args: &ConfigArgs) -> Result<()> {
    let (spec, base) = GridSpec::load(&args.config, &args.overrides()?)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    let report = run_grid(&spec, &base)?;
    for e in &report.leaderboard {
        match (&e.breakdown, &e.error) {
            (Some(b), _) => println!("{:>8.4}  {}", b.total, e.name),
            (None, Some(err)) => println!("{:>8}  {}  ({err})", "failed", e.name),
            (None, None) => println!("{:>8}  {}", "failed", e.name),
        }
    }
    println!("leaderboard: {}", report.dir.join("leaderboard.csv").display());
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<()> {
    let b = submission_score_with(&SubmissionInputs::new(args.f1, args.runtime, args.gflops), &ScoreConstants::default())?;
    if args.breakdown {
        println!("f1_term:      {:.4}", b.f1_term);
        println!("runtime_term: {:.4}", b.runtime_term);
        println!("gflops_term:  {:.4}", b.gflops_term);
    }
    println!("{:.4}", b.total);
    Ok(())
}

fn export_breakdown(args: &BreakdownArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("missing column `{name}`"));
    let (name, f1, rt, gf) = (column("name")?, column("avg_f1")?, column("avg_runtime_s")?, column("avg_gflops")?);
    let status = headers.iter().position(|h| h == "status");
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if status.is_some_and(|s| &record[s] != "ok") {
            continue;
        }
        let num = |c: usize| -> Result<f64> {
            record[c].parse().with_context(|| format!("row {}: `{}` is not a number", i + 2, &record[c]))
        };
        let inputs = SubmissionInputs::new(num(f1)?, num(rt)?, num(gf)?);
        rows.push((record[name].to_string(), submission_score_with(&inputs, &ScoreConstants::default())?));
    }
    breakdown_export(&rows, &args.output)?;
    println!("{} rows", rows.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Pairs(a) => pairs(a),
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Score(a) => score(a),
        Command::ExportBreakdown(a) => export_breakdown(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
