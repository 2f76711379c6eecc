//! End-to-end runs: load, split, featurize, train per language, evaluate,
//! measure cost, score, and write every artifact under a run directory named
//! by the config hash.

pub mod config;
pub mod fixture;
pub mod grid;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    load_corpus, stratified_split, taxonomy_for, ColumnMap, CommentSentence, CorpusError, CorpusFormat, DegenerateLabel,
    LabelSet, Language, LanguageSource, SplitDataset,
};
use crate::cost::{
    cost_report, head_flops, measure_runtime, test_set_encoder_flops, CostError, CostReport, FlopCount,
    RuntimeMeasurement,
};
use crate::featurize::{
    load_embeddings, preprocess, EmbeddingTable, FeatureVector, FeaturizeError, Featurizer, Vocabulary,
};
use crate::heads::{HeadError, HeadSpec, LabelModel};
use crate::metrics::{aggregate, score_language, AggregateReport, LabelScore, LanguageScores, MetricsError};
use crate::pairgen::{export_pairs, generate_pairs, PairError, PairPlan};
use crate::score::{
    breakdown_csv, leaderboard_csv, submission_score_with, LeaderboardEntry, ScoreBreakdown, ScoreError,
    SubmissionInputs,
};

pub use config::{
    ConfigError, ConfigMap, CostConfig, DataConfig, DataSource, ExperimentConfig, FeaturizerConfig, InputFormat,
    RuntimeMode, RUN_ROOT_ENV,
};
pub use grid::{run_grid, GridError, GridPoint, GridReport, GridSpec, HeadFamily, PointOutcome};

pub const MODEL_FORMAT: &str = "ccbench-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error("{language}: {source}")]
    Head { language: Language, source: HeadError },
    #[error("{language}: {source}")]
    Pairs { language: Language, source: PairError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{language} has no training sentences")]
    NoTrainingData { language: Language },
    #[error("`{}` holds {found} sentences, expected only {expected}", path.display())]
    WrongLanguage { path: PathBuf, expected: Language, found: Language },
    #[error("model file `{}`: {message}", path.display())]
    Model { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("run `{name}` (config {config_hash}): {source}")]
    Run { name: String, config_hash: String, source: Box<HarnessError> },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 16 hex digits of the canonical config digest.
pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(config.canonical_text().as_bytes())[..16].to_string()
}

/// A trained per-language model with everything needed to apply it to new text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format: String,
    pub version: u32,
    pub language: Language,
    pub featurizer: Featurizer,
    pub spec: HeadSpec,
    pub model: LabelModel,
    /// Labels with no positive (or no negative) training sentence.
    pub flagged_labels: Vec<String>,
}

impl ModelContainer {
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let container: ModelContainer = serde_json::from_str(&fs::read_to_string(path)?)?;
        if container.format != MODEL_FORMAT || container.version != MODEL_FORMAT_VERSION {
            return Err(HarnessError::Model {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported format {} v{} (expected {MODEL_FORMAT} v{MODEL_FORMAT_VERSION})",
                    container.format, container.version
                ),
            });
        }
        Ok(container)
    }

    pub fn features(&self, s: &CommentSentence, table: Option<&EmbeddingTable>) -> Result<FeatureVector, HarnessError> {
        Ok(self.featurizer.featurize(&s.id, &s.text, table)?)
    }

    pub fn predict(&self, s: &CommentSentence, table: Option<&EmbeddingTable>) -> Result<LabelSet, HarnessError> {
        let f = self.features(s, table)?;
        self.model.predict(&f).map_err(|source| HarnessError::Head { language: self.language, source })
    }
}

fn corpus_format(format: &InputFormat, fixed: Option<Language>) -> Result<CorpusFormat, HarnessError> {
    Ok(match format {
        InputFormat::Jsonl => CorpusFormat::Jsonl,
        InputFormat::Csv { column_map } => {
            let mut map = ColumnMap::parse(&fs::read_to_string(column_map)?)?;
            if let Some(lang) = fixed {
                map.language = LanguageSource::Fixed(lang);
            }
            CorpusFormat::Csv(map)
        }
    })
}

/// All sentences named by the data section, in file order.
pub fn load_sentences(data: &DataConfig) -> Result<Vec<CommentSentence>, HarnessError> {
    let load = |path: &Path, fixed: Option<Language>| -> Result<Vec<CommentSentence>, HarnessError> {
        let sentences = load_corpus(path, &corpus_format(&data.format, fixed)?)?;
        if let Some(expected) = fixed {
            if let Some(s) = sentences.iter().find(|s| s.language != expected) {
                return Err(HarnessError::WrongLanguage { path: path.to_path_buf(), expected, found: s.language });
            }
        }
        Ok(sentences)
    };
    match &data.source {
        DataSource::Corpus(p) => load(p, None),
        DataSource::PerLanguage(files) => {
            let mut all = Vec::new();
            for (lang, p) in files {
                all.extend(load(p, Some(*lang))?);
            }
            Ok(all)
        }
        DataSource::PreSplit { train, test } => {
            let mut all = load(train, None)?;
            all.extend(load(test, None)?);
            Ok(all)
        }
    }
}

/// Train/test sentences: loaded as given for pre-split data, otherwise
/// stratified with the run seed.
pub fn load_dataset(data: &DataConfig, seed: u64) -> Result<SplitDataset, HarnessError> {
    match &data.source {
        DataSource::PreSplit { train, test } => {
            let fmt = corpus_format(&data.format, None)?;
            Ok(SplitDataset {
                train: load_corpus(train, &fmt)?,
                test: load_corpus(test, &fmt)?,
                ratio: data.split_ratio,
                seed,
                degenerate: Vec::new(),
            })
        }
        _ => Ok(stratified_split(&load_sentences(data)?, data.split_ratio, seed)?),
    }
}

fn load_table(config: &ExperimentConfig) -> Result<Option<EmbeddingTable>, HarnessError> {
    match &config.featurizer {
        FeaturizerConfig::Embeddings { path } => Ok(Some(load_embeddings(path)?)),
        _ => Ok(None),
    }
}

/// Fits the featurizer on `train` (which must all be `language`) and then the head.
pub fn train_language(
    config: &ExperimentConfig,
    language: Language,
    train: &[CommentSentence],
    table: Option<&EmbeddingTable>,
) -> Result<ModelContainer, HarnessError> {
    if train.is_empty() {
        return Err(HarnessError::NoTrainingData { language });
    }
    let featurizer = match &config.featurizer {
        FeaturizerConfig::BagOfWords { min_df } => {
            let seqs: Vec<_> = train.iter().map(|s| preprocess(&s.text)).collect();
            Featurizer::BagOfWords { vocabulary: Vocabulary::build(&seqs, *min_df)? }
        }
        FeaturizerConfig::Hashed { dim, seed } => Featurizer::Hashed { dim: *dim, seed: *seed },
        FeaturizerConfig::Embeddings { .. } => {
            let t = table.ok_or_else(|| FeaturizeError::MissingEmbedding(train[0].id.clone()))?;
            Featurizer::Embeddings { dim: t.dim(), provenance: t.provenance().to_string() }
        }
    };
    let features = train
        .iter()
        .map(|s| featurizer.featurize(&s.id, &s.text, table))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<LabelSet> = train.iter().map(|s| s.labels).collect();
    let taxonomy = taxonomy_for(language);
    let model = LabelModel::train(&features, &labels, taxonomy.len(), &config.head, config.threshold)
        .map_err(|source| HarnessError::Head { language, source })?;
    let flagged_labels = model.constant_labels().iter().map(|&l| taxonomy.labels[l].to_string()).collect();
    Ok(ModelContainer {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_FORMAT_VERSION,
        language,
        featurizer,
        spec: config.head.clone(),
        model,
        flagged_labels,
    })
}

fn of_language(sentences: &[CommentSentence], language: Language) -> Vec<CommentSentence> {
    sentences.iter().filter(|s| s.language == language).cloned().collect()
}

/// Loads and splits the data, then trains every language in parallel.
pub fn train_models(config: &ExperimentConfig) -> Result<(SplitDataset, Vec<ModelContainer>), HarnessError> {
    let split = load_dataset(&config.data, config.seed)?;
    let table = load_table(config)?;
    let models = Language::ALL
        .par_iter()
        .map(|&l| train_language(config, l, &of_language(&split.train, l), table.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((split, models))
}

/// Test-set predictions and per-label scores for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageEvaluation {
    pub language: Language,
    pub ids: Vec<String>,
    pub truth: Vec<LabelSet>,
    pub predicted: Vec<LabelSet>,
    pub scores: Vec<LabelScore>,
    /// Encoder (if any) plus head FLOPs over the whole test set.
    pub flops: FlopCount,
}

pub fn evaluate_language(
    container: &ModelContainer,
    test: &[CommentSentence],
    table: Option<&EmbeddingTable>,
    cost: &CostConfig,
) -> Result<LanguageEvaluation, HarnessError> {
    let language = container.language;
    let mut predicted = Vec::with_capacity(test.len());
    let mut flops = FlopCount(0);
    for s in test {
        let f = container.features(s, table)?;
        flops = flops + head_flops(&container.model, f.active())?;
        predicted.push(container.model.predict(&f).map_err(|source| HarnessError::Head { language, source })?);
    }
    if let Some(encoder) = &cost.encoder {
        let tokens: Vec<usize> = test.iter().map(|s| preprocess(&s.text).len()).collect();
        flops = flops + test_set_encoder_flops(encoder, cost.seq_len, &tokens)?;
    }
    let truth: Vec<LabelSet> = test.iter().map(|s| s.labels).collect();
    let scores = score_language(language, &truth, &predicted)?;
    Ok(LanguageEvaluation { language, ids: test.iter().map(|s| s.id.clone()).collect(), truth, predicted, scores, flops })
}

/// Seconds to featurize and classify `test`, per the configured protocol.
pub fn language_runtime(
    container: &ModelContainer,
    test: &[CommentSentence],
    table: Option<&EmbeddingTable>,
    cost: &CostConfig,
) -> Result<(f64, Option<RuntimeMeasurement>), HarnessError> {
    match cost.runtime {
        RuntimeMode::Fixed(s) => Ok((s, None)),
        RuntimeMode::Measured => {
            let mut failure = None;
            let m = measure_runtime(
                || {
                    for s in test {
                        match container.predict(s, table) {
                            Ok(p) => {
                                std::hint::black_box(p);
                            }
                            Err(e) => failure = Some(e),
                        }
                    }
                },
                &cost.protocol,
            )?;
            match failure {
                Some(e) => Err(e),
                None => Ok((m.seconds, Some(m))),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub key: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub ccbench_version: String,
    pub model_format_version: u32,
    pub inputs: Vec<InputDigest>,
    /// Labels too rare to appear on both sides of the split: `language:label`.
    pub degenerate_labels: Vec<String>,
    /// Labels trained as constants: `language:label`.
    pub flagged_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub config_hash: String,
    pub run_dir: PathBuf,
    pub metrics: AggregateReport,
    pub cost: CostReport,
    pub inputs: SubmissionInputs,
    pub score: ScoreBreakdown,
    pub evaluations: Vec<LanguageEvaluation>,
    pub runtime_samples: Vec<(Language, RuntimeMeasurement)>,
    pub manifest: Manifest,
}

impl ExperimentReport {
    pub fn leaderboard_entry(&self) -> LeaderboardEntry {
        LeaderboardEntry::scored(self.name.clone(), self.inputs, self.score)
    }
}

fn degenerate_names(d: &[DegenerateLabel]) -> Vec<String> {
    d.iter().map(|d| format!("{}:{}", d.language, taxonomy_for(d.language).labels[d.label])).collect()
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    id: &'a str,
    language: Language,
    truth: Vec<&'static str>,
    predicted: Vec<&'static str>,
}

fn label_names(language: Language, set: LabelSet) -> Vec<&'static str> {
    let t = taxonomy_for(language);
    set.iter().map(|l| t.labels[l]).collect()
}

/// Runs one configuration end to end. Errors carry the run name and config hash.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let hash = config_hash(config);
    run_inner(config, &hash).map_err(|e| HarnessError::Run {
        name: config.name.clone(),
        config_hash: hash,
        source: Box::new(e),
    })
}

fn run_inner(config: &ExperimentConfig, hash: &str) -> Result<ExperimentReport, HarnessError> {
    let mut inputs = Vec::new();
    let mut files = config.data.files();
    if let FeaturizerConfig::Embeddings { path } = &config.featurizer {
        files.push(("featurize.embeddings".into(), path.clone()));
    }
    for (key, path) in files {
        inputs.push(InputDigest { sha256: sha256_hex(&fs::read(&path)?), key, path });
    }

    let (split, models) = train_models(config)?;
    let table = load_table(config)?;
    let tests: Vec<Vec<CommentSentence>> = Language::ALL.iter().map(|&l| of_language(&split.test, l)).collect();

    let evaluations = models
        .par_iter()
        .zip(tests.par_iter())
        .map(|(m, t)| evaluate_language(m, t, table.as_ref(), &config.cost))
        .collect::<Result<Vec<_>, _>>()?;

    let mut runtimes = Vec::new();
    let mut runtime_samples = Vec::new();
    for (m, t) in models.iter().zip(&tests) {
        let (secs, samples) = language_runtime(m, t, table.as_ref(), &config.cost)?;
        runtimes.push((m.language, secs));
        if let Some(s) = samples {
            runtime_samples.push((m.language, s));
        }
    }
    let gflops: Vec<(Language, f64)> = evaluations.iter().map(|e| (e.language, e.flops.gflops())).collect();
    let cost = cost_report(&runtimes, &gflops)?;

    let per_language: Vec<LanguageScores> =
        evaluations.iter().map(|e| LanguageScores { language: e.language, scores: e.scores.clone() }).collect();
    let metrics = aggregate(&per_language, config.aggregation)?;
    let score_inputs = SubmissionInputs::new(metrics.avg_f1, cost.avg_runtime_s, cost.avg_gflops);
    let score = submission_score_with(&score_inputs, &config.score)?;

    let run_dir = config.out_root.join(hash);
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join("config.ini"), config.canonical_text())?;
    metrics.write_csv(&run_dir.join("metrics.csv"))?;
    fs::write(run_dir.join("cost.csv"), cost.to_csv())?;
    let entry = LeaderboardEntry::scored(config.name.clone(), score_inputs, score);
    fs::write(run_dir.join("score.csv"), leaderboard_csv(std::slice::from_ref(&entry)))?;
    fs::write(run_dir.join("breakdown.csv"), breakdown_csv(&[(config.name.clone(), score)]))?;
    for (lang, m) in &runtime_samples {
        fs::write(run_dir.join(format!("runtime_{lang}.csv")), m.samples_csv())?;
    }
    let mut predictions = String::new();
    for e in &evaluations {
        for ((id, t), p) in e.ids.iter().zip(&e.truth).zip(&e.predicted) {
            let rec = PredictionRecord {
                id,
                language: e.language,
                truth: label_names(e.language, *t),
                predicted: label_names(e.language, *p),
            };
            predictions.push_str(&serde_json::to_string(&rec)?);
            predictions.push('\n');
        }
    }
    fs::write(run_dir.join("predictions.jsonl"), predictions)?;
    for m in &models {
        m.save(&run_dir.join(format!("model_{}.json", m.language)))?;
    }
    if let Some(n) = config.pair_iterations {
        for language in Language::ALL {
            let train = of_language(&split.train, language);
            let pairs = generate_pairs(&train, PairPlan { num_iterations: n, seed: config.seed })
                .map_err(|source| HarnessError::Pairs { language, source })?;
            export_pairs(&pairs, &run_dir.join(format!("pairs_{language}.tsv")))
                .map_err(|source| HarnessError::Pairs { language, source })?;
        }
    }

    let manifest = Manifest {
        name: config.name.clone(),
        config_hash: hash.to_string(),
        seed: config.seed,
        ccbench_version: env!("CARGO_PKG_VERSION").to_string(),
        model_format_version: MODEL_FORMAT_VERSION,
        inputs,
        degenerate_labels: degenerate_names(&split.degenerate),
        flagged_labels: models
            .iter()
            .flat_map(|m| m.flagged_labels.iter().map(move |l| format!("{}:{l}", m.language)))
            .collect(),
    };
    fs::write(run_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    Ok(ExperimentReport {
        name: config.name.clone(),
        config_hash: hash.to_string(),
        run_dir,
        metrics,
        cost,
        inputs: score_inputs,
        score,
        evaluations,
        runtime_samples,
        manifest,
    })
}
