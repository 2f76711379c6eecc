//! Experiment configuration: a sectioned `key = value` file whose entries
//! can all be overridden as `section.key=value`.
//!
//! ```text
//! [run]
//! name = hashed-lr
//! seed = 7
//!
//! [data]
//! corpus = synthetic.jsonl
//! split_ratio = 0.75
//!
//! [featurize]
//! kind = hashed
//! dim = 256
//!
//! [head]
//! kind = logistic
//! c = 10.0
//!
//! [cost]
//! runtime = fixed:0.5
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Language;
use crate::cost::{Aggregation, EncoderSpec, MeasurementProtocol, SeqLenPolicy};
use crate::heads::{
    BoostedConfig, ForestConfig, HeadSpec, KernelParams, LogisticConfig, SvmConfig, DEFAULT_THRESHOLD,
};
use crate::metrics::AggregationMode;
use crate::score::ScoreConstants;

/// Environment variable naming the directory under which run directories
/// are created when `run.out_dir` is not set.
pub const RUN_ROOT_ENV: &str = "CCBENCH_RUN_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` = `{value}`: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("`{key}` refers to `{}`, which does not exist", path.display())]
    MissingFile { key: String, path: PathBuf },
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const KEYS: &[(&str, &[&str])] = &[
    ("run", &["name", "seed", "out_dir"]),
    (
        "data",
        &["corpus", "java", "python", "pharo", "train", "test", "format", "column_map", "split_ratio"],
    ),
    ("featurize", &["kind", "min_df", "dim", "hash_seed", "embeddings"]),
    (
        "head",
        &[
            "kind", "threshold", "c", "max_iters", "tol", "kernel", "degree", "gamma", "coef0", "max_iter", "n_trees",
            "max_depth", "max_features", "seed", "rounds", "shrinkage", "alpha",
        ],
    ),
    ("cost", &["encoder", "seq_len", "warmup", "reps", "aggregation", "runtime"]),
    ("score", &["f1_weight", "runtime_weight", "gflops_weight", "runtime_budget_s", "gflops_budget"]),
    ("metrics", &["aggregation"]),
    ("pairs", &["num_iterations"]),
    ("grid", &["family", "c", "kernel", "max_depth", "alpha", "num_iterations"]),
];

/// Keys whose values are file paths, resolved against the config file's directory.
const PATH_KEYS: &[&str] = &[
    "run.out_dir",
    "data.corpus",
    "data.java",
    "data.python",
    "data.pharo",
    "data.train",
    "data.test",
    "data.column_map",
    "featurize.embeddings",
];

fn known(key: &str) -> bool {
    key.split_once('.')
        .and_then(|(section, name)| KEYS.iter().find(|(s, _)| *s == section).map(|(_, names)| names.contains(&name)))
        .unwrap_or(false)
}

/// Flat `section.key -> value` view of a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = ConfigMap::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line: line_no, message: format!("unclosed section `{line}`") })?;
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: format!("expected key = value, got `{line}`") })?;
            let sec = section
                .as_deref()
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: "key outside of any [section]".into() })?;
            let key = format!("{sec}.{}", k.trim());
            if map.entries.contains_key(&key) {
                return Err(ConfigError::Syntax { line: line_no, message: format!("duplicate key `{key}`") });
            }
            map.set(&key, v.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::InvalidValue {
            key: assignment.to_string(),
            value: String::new(),
            message: "overrides take the form section.key=value".into(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Rewrites relative path values against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for key in PATH_KEYS {
            if let Some(v) = self.entries.get_mut(*key) {
                let p = Path::new(v.as_str());
                if p.is_relative() {
                    *v = base.join(p).to_string_lossy().into_owned();
                }
            }
        }
        // an encoder value is a preset name unless it names an existing file
        if let Some(v) = self.entries.get_mut("cost.encoder") {
            let p = Path::new(v.as_str());
            if p.is_relative() && base.join(p).is_file() {
                *v = base.join(p).to_string_lossy().into_owned();
            }
        }
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                message: e.to_string(),
            }),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }
}

impl fmt::Display for ConfigMap {
    /// Sectioned text that parses back to the same map.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut current = None;
        for (key, value) in &self.entries {
            let (section, name) = key.split_once('.').expect("keys are validated as section.name");
            if current != Some(section) {
                if current.is_some() {
                    writeln!(f)?;
                }
                writeln!(f, "[{section}]")?;
                current = Some(section);
            }
            writeln!(f, "{name} = {value}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// One file holding all languages, split by the harness.
    Corpus(PathBuf),
    /// One file per language, split by the harness.
    PerLanguage(Vec<(Language, PathBuf)>),
    /// Already split.
    PreSplit { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputFormat {
    Jsonl,
    Csv { column_map: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub format: InputFormat,
    pub split_ratio: f64,
}

impl DataConfig {
    /// Every input file with the config key that names it.
    pub fn files(&self) -> Vec<(String, PathBuf)> {
        let mut out = Vec::new();
        match &self.source {
            DataSource::Corpus(p) => out.push(("data.corpus".to_string(), p.clone())),
            DataSource::PerLanguage(list) => {
                out.extend(list.iter().map(|(l, p)| (format!("data.{l}"), p.clone())));
            }
            DataSource::PreSplit { train, test } => {
                out.push(("data.train".to_string(), train.clone()));
                out.push(("data.test".to_string(), test.clone()));
            }
        }
        if let InputFormat::Csv { column_map } = &self.format {
            out.push(("data.column_map".to_string(), column_map.clone()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeaturizerConfig {
    BagOfWords { min_df: usize },
    Hashed { dim: usize, seed: u64 },
    Embeddings { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuntimeMode {
    Measured,
    /// Every language reports this many seconds; nothing is timed.
    Fixed(f64),
}

impl std::str::FromStr for RuntimeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "measured" {
            return Ok(RuntimeMode::Measured);
        }
        let secs = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected `measured` or `fixed:<seconds>`, got `{s}`"))?;
        match secs.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(RuntimeMode::Fixed(v)),
            _ => Err(format!("`{secs}` is not a non-negative number of seconds")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    /// Encoder whose FLOPs are charged per test sentence; `None` charges the head only.
    pub encoder: Option<EncoderSpec>,
    pub seq_len: SeqLenPolicy,
    pub protocol: MeasurementProtocol,
    pub runtime: RuntimeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub out_root: PathBuf,
    pub data: DataConfig,
    pub featurizer: FeaturizerConfig,
    pub head: HeadSpec,
    pub threshold: f64,
    pub cost: CostConfig,
    pub score: ScoreConstants,
    pub aggregation: AggregationMode,
    /// When set, contrastive pairs are exported for each language's train split.
    pub pair_iterations: Option<usize>,
    map: ConfigMap,
}

fn invalid(key: &str, value: impl fmt::Display, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_string(), value: value.to_string(), message: message.into() }
}

fn head_from_map(map: &ConfigMap, seed: u64) -> Result<HeadSpec, ConfigError> {
    let kind = map.get("head.kind").ok_or_else(|| ConfigError::Missing("head.kind".into()))?;
    let allowed: &[&str] = match kind {
        "logistic" => &["c", "max_iters", "tol"],
        "svm" => &["c", "kernel", "degree", "gamma", "coef0", "tol", "max_iter"],
        "forest" => &["n_trees", "max_depth", "max_features", "seed"],
        "boosted" => &["rounds", "max_depth", "shrinkage"],
        "naive_bayes" => &["alpha"],
        other => {
            return Err(invalid("head.kind", other, "expected logistic | svm | forest | boosted | naive_bayes"));
        }
    };
    for (key, _) in map.iter() {
        if let Some(name) = key.strip_prefix("head.") {
            if name != "kind" && name != "threshold" && !allowed.contains(&name) {
                return Err(ConfigError::Conflict(format!("`{key}` does not apply to head kind `{kind}`")));
            }
        }
    }
    Ok(match kind {
        "logistic" => {
            let d = LogisticConfig::default();
            HeadSpec::Logistic(LogisticConfig {
                c: map.parse_or("head.c", d.c)?,
                max_iters: map.parse_or("head.max_iters", d.max_iters)?,
                tol: map.parse_or("head.tol", d.tol)?,
            })
        }
        "svm" => {
            let d = SvmConfig::default();
            let gamma = match map.get("head.gamma") {
                None | Some("auto") => None,
                Some(v) => Some(v.parse::<f64>().map_err(|e| invalid("head.gamma", v, e.to_string()))?),
            };
            HeadSpec::Svm(SvmConfig {
                c: map.parse_or("head.c", d.c)?,
                kernel: map.parse_or("head.kernel", d.kernel)?,
                params: KernelParams {
                    degree: map.parse_or("head.degree", d.params.degree)?,
                    gamma,
                    coef0: map.parse_or("head.coef0", d.params.coef0)?,
                },
                tol: map.parse_or("head.tol", d.tol)?,
                max_iter: map.get("head.max_iter").map(|v| v.parse()).transpose().map_err(
                    |e: std::num::ParseIntError| invalid("head.max_iter", map.get("head.max_iter").unwrap_or(""), e.to_string()),
                )?,
            })
        }
        "forest" => {
            let d = ForestConfig::default();
            HeadSpec::Forest(ForestConfig {
                n_trees: map.parse_or("head.n_trees", d.n_trees)?,
                max_depth: map.parse_or("head.max_depth", d.max_depth)?,
                seed: map.parse_or("head.seed", seed)?,
                max_features: map.get("head.max_features").map(|v| v.parse()).transpose().map_err(
                    |e: std::num::ParseIntError| {
                        invalid("head.max_features", map.get("head.max_features").unwrap_or(""), e.to_string())
                    },
                )?,
            })
        }
        "boosted" => {
            let d = BoostedConfig::default();
            HeadSpec::Boosted(BoostedConfig {
                rounds: map.parse_or("head.rounds", d.rounds)?,
                max_depth: map.parse_or("head.max_depth", d.max_depth)?,
                shrinkage: map.parse_or("head.shrinkage", d.shrinkage)?,
            })
        }
        _ => HeadSpec::NaiveBayes { alpha: map.parse_or("head.alpha", 1.0)? },
    })
}

/// `head.*` entries describing `spec`.
pub fn head_entries(spec: &HeadSpec) -> Vec<(&'static str, String)> {
    match spec {
        HeadSpec::Logistic(c) => vec![
            ("head.kind", "logistic".into()),
            ("head.c", format!("{:?}", c.c)),
            ("head.max_iters", c.max_iters.to_string()),
            ("head.tol", format!("{:?}", c.tol)),
        ],
        HeadSpec::Svm(c) => {
            let mut v = vec![
                ("head.kind", "svm".into()),
                ("head.c", format!("{:?}", c.c)),
                ("head.kernel", c.kernel.to_string()),
                ("head.degree", c.params.degree.to_string()),
                ("head.gamma", c.params.gamma.map_or("auto".into(), |g| format!("{g:?}"))),
                ("head.coef0", format!("{:?}", c.params.coef0)),
                ("head.tol", format!("{:?}", c.tol)),
            ];
            if let Some(m) = c.max_iter {
                v.push(("head.max_iter", m.to_string()));
            }
            v
        }
        HeadSpec::Forest(c) => {
            let mut v = vec![
                ("head.kind", "forest".into()),
                ("head.n_trees", c.n_trees.to_string()),
                ("head.max_depth", c.max_depth.to_string()),
                ("head.seed", c.seed.to_string()),
            ];
            if let Some(m) = c.max_features {
                v.push(("head.max_features", m.to_string()));
            }
            v
        }
        HeadSpec::Boosted(c) => vec![
            ("head.kind", "boosted".into()),
            ("head.rounds", c.rounds.to_string()),
            ("head.max_depth", c.max_depth.to_string()),
            ("head.shrinkage", format!("{:?}", c.shrinkage)),
        ],
        HeadSpec::NaiveBayes { alpha } => vec![("head.kind", "naive_bayes".into()), ("head.alpha", format!("{alpha:?}"))],
    }
}

impl ExperimentConfig {
    /// Reads a config file, applies `section.key=value` overrides, and
    /// resolves relative paths against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut map = ConfigMap::load(path)?;
        for o in overrides {
            map.apply_override(o)?;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        map.resolve_paths(&base);
        Self::from_map(map)
    }

    /// Builds a config from an already-resolved map. Referenced files must exist.
    pub fn from_map(map: ConfigMap) -> Result<Self, ConfigError> {
        if let Some((key, _)) = map.iter().find(|(k, _)| k.starts_with("grid.")) {
            return Err(ConfigError::Conflict(format!("`{key}` belongs to a grid sweep, not a single experiment")));
        }
        let seed: u64 = map.parse_or("run.seed", 0)?;
        let name = map.get("run.name").unwrap_or("experiment").to_string();
        let out_root = map
            .path("run.out_dir")
            .or_else(|| std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));

        let langs: Vec<(Language, PathBuf)> = Language::ALL
            .iter()
            .filter_map(|&l| map.path(&format!("data.{l}")).map(|p| (l, p)))
            .collect();
        let source = match (map.path("data.corpus"), langs.is_empty(), map.path("data.train"), map.path("data.test")) {
            (Some(p), true, None, None) => DataSource::Corpus(p),
            (None, false, None, None) => DataSource::PerLanguage(langs),
            (None, true, Some(train), Some(test)) => DataSource::PreSplit { train, test },
            (None, true, None, None) => {
                return Err(ConfigError::Missing("data.corpus (or data.java/python/pharo, or data.train + data.test)".into()))
            }
            _ => {
                return Err(ConfigError::Conflict(
                    "use exactly one of data.corpus, per-language data.<lang> files, or data.train + data.test".into(),
                ))
            }
        };
        let format = match map.get("data.format").unwrap_or("jsonl") {
            "jsonl" => InputFormat::Jsonl,
            "csv" => InputFormat::Csv {
                column_map: map.path("data.column_map").ok_or_else(|| ConfigError::Missing("data.column_map".into()))?,
            },
            other => return Err(invalid("data.format", other, "expected jsonl | csv")),
        };
        let split_ratio: f64 = map.parse_or("data.split_ratio", 0.8)?;
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(invalid("data.split_ratio", split_ratio, "must lie strictly between 0 and 1"));
        }
        let data = DataConfig { source, format, split_ratio };

        let featurizer = match map.get("featurize.kind").unwrap_or("bow") {
            "bow" => FeaturizerConfig::BagOfWords { min_df: map.parse_or("featurize.min_df", 1)? },
            "hashed" => {
                let dim: usize = map.parse_or("featurize.dim", 384)?;
                if dim == 0 {
                    return Err(invalid("featurize.dim", dim, "must be positive"));
                }
                FeaturizerConfig::Hashed { dim, seed: map.parse_or("featurize.hash_seed", seed)? }
            }
            "embeddings" => FeaturizerConfig::Embeddings {
                path: map.path("featurize.embeddings").ok_or_else(|| ConfigError::Missing("featurize.embeddings".into()))?,
            },
            other => return Err(invalid("featurize.kind", other, "expected bow | hashed | embeddings")),
        };
        if let FeaturizerConfig::BagOfWords { min_df: 0 } = featurizer {
            return Err(invalid("featurize.min_df", 0, "must be at least 1"));
        }

        let head = head_from_map(&map, seed)?;
        let threshold: f64 = map.parse_or("head.threshold", DEFAULT_THRESHOLD)?;

        let encoder = match map.get("cost.encoder") {
            None | Some("none") => None,
            Some(v) if Path::new(v).is_file() => {
                Some(EncoderSpec::load(Path::new(v)).map_err(|e| invalid("cost.encoder", v, e.to_string()))?)
            }
            Some(v) => Some(EncoderSpec::preset(v).map_err(|e| invalid("cost.encoder", v, e.to_string()))?),
        };
        let protocol = MeasurementProtocol {
            warmup: map.parse_or("cost.warmup", 1)?,
            repetitions: map.parse_or("cost.reps", 5)?,
            aggregation: map.parse_or("cost.aggregation", Aggregation::Median)?,
        };
        if protocol.repetitions < 3 {
            return Err(invalid("cost.reps", protocol.repetitions, "at least 3 repetitions are required"));
        }
        let cost = CostConfig {
            encoder,
            seq_len: map.parse_or("cost.seq_len", SeqLenPolicy::Actual)?,
            protocol,
            runtime: map.parse_or("cost.runtime", RuntimeMode::Measured)?,
        };

        let d = ScoreConstants::default();
        let score = ScoreConstants {
            f1_weight: map.parse_or("score.f1_weight", d.f1_weight)?,
            runtime_weight: map.parse_or("score.runtime_weight", d.runtime_weight)?,
            gflops_weight: map.parse_or("score.gflops_weight", d.gflops_weight)?,
            runtime_budget_s: map.parse_or("score.runtime_budget_s", d.runtime_budget_s)?,
            gflops_budget: map.parse_or("score.gflops_budget", d.gflops_budget)?,
        };
        score.validate().map_err(|e| ConfigError::Conflict(e.to_string()))?;

        let aggregation = map.parse_or("metrics.aggregation", AggregationMode::Flat)?;
        let pair_iterations = map.get("pairs.num_iterations").map(|v| v.parse::<usize>()).transpose().map_err(|e| {
            invalid("pairs.num_iterations", map.get("pairs.num_iterations").unwrap_or(""), e.to_string())
        })?;

        let config = ExperimentConfig {
            name,
            seed,
            out_root,
            data,
            featurizer,
            head,
            threshold,
            cost,
            score,
            aggregation,
            pair_iterations,
            map,
        };
        config.check_files()?;
        Ok(config)
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        let mut files = self.data.files();
        if let FeaturizerConfig::Embeddings { path } = &self.featurizer {
            files.push(("featurize.embeddings".into(), path.clone()));
        }
        for (key, path) in files {
            if !path.is_file() {
                return Err(ConfigError::MissingFile { key, path });
            }
        }
        Ok(())
    }

    pub fn map(&self) -> &ConfigMap {
        &self.map
    }

    /// The same experiment with a different head. Threshold and every other
    /// section are kept.
    pub fn with_head(&self, head: HeadSpec) -> Self {
        let mut map = self.map.clone();
        let stale: Vec<String> =
            map.iter().map(|(k, _)| k.to_string()).filter(|k| k.starts_with("head.") && k != "head.threshold").collect();
        for k in stale {
            map.remove(&k);
        }
        for (k, v) in head_entries(&head) {
            map.set(k, &v).expect("head keys are known");
        }
        ExperimentConfig { head, map, ..self.clone() }
    }

    pub fn with_pair_iterations(&self, iterations: Option<usize>) -> Self {
        let mut map = self.map.clone();
        match iterations {
            Some(n) => map.set("pairs.num_iterations", &n.to_string()).expect("known key"),
            None => {
                map.remove("pairs.num_iterations");
            }
        }
        ExperimentConfig { pair_iterations: iterations, map, ..self.clone() }
    }

    pub fn with_name(&self, name: &str) -> Self {
        let mut map = self.map.clone();
        map.set("run.name", name).expect("known key");
        ExperimentConfig { name: name.to_string(), map, ..self.clone() }
    }

    /// Config text that identifies the experiment: every entry except the
    /// output location.
    pub fn canonical_text(&self) -> String {
        let mut map = self.map.clone();
        map.remove("run.out_dir");
        map.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::Kernel;

    #[test]
    fn parse_and_print_round_trip() {
        let text = "[run]\nseed = 3\n# note\n[head]\nkind = logistic\nc = 0.5\n";
        let map = ConfigMap::parse(text).unwrap();
        assert_eq!(map.get("head.c"), Some("0.5"));
        assert_eq!(ConfigMap::parse(&map.to_string()).unwrap(), map);
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(ConfigMap::parse("seed = 1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ConfigMap::parse("[run]\nbogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ConfigMap::parse("[run]\nseed = 1\nseed = 2"), Err(ConfigError::Syntax { line: 3, .. })));
        assert!(matches!(ConfigMap::parse("[run\nseed = 1"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn overrides_win() {
        let mut map = ConfigMap::parse("[head]\nkind = logistic\nc = 0.5\n").unwrap();
        map.apply_override("head.c=2.0").unwrap();
        assert_eq!(map.get("head.c"), Some("2.0"));
        assert!(map.apply_override("head.c").is_err());
        assert!(map.apply_override("nope.c=1").is_err());
    }

    #[test]
    fn runtime_modes() {
        assert_eq!("measured".parse::<RuntimeMode>().unwrap(), RuntimeMode::Measured);
        assert_eq!("fixed:0.25".parse::<RuntimeMode>().unwrap(), RuntimeMode::Fixed(0.25));
        assert!("fixed:-1".parse::<RuntimeMode>().is_err());
        assert!("sometimes".parse::<RuntimeMode>().is_err());
    }

    fn fixture_map(dir: &Path, head: &str) -> ConfigMap {
        let corpus = dir.join("c.jsonl");
        std::fs::write(&corpus, "").unwrap();
        let mut map = ConfigMap::parse(head).unwrap();
        map.set("data.corpus", corpus.to_str().unwrap()).unwrap();
        map.set("run.seed", "11").unwrap();
        map
    }

    #[test]
    fn head_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_map(fixture_map(dir.path(), "[head]\nkind = forest\nmax_depth = 4\n")).unwrap();
        assert_eq!(cfg.head, HeadSpec::Forest(ForestConfig { max_depth: 4, seed: 11, ..Default::default() }));
        let cfg = ExperimentConfig::from_map(fixture_map(dir.path(), "[head]\nkind = svm\nkernel = poly\nc = 0.1\n")).unwrap();
        match cfg.head {
            HeadSpec::Svm(c) => assert_eq!((c.kernel, c.c), (Kernel::Poly, 0.1)),
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::from_map(fixture_map(dir.path(), "[head]\nkind = forest\nc = 1\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Conflict(_)));
    }

    #[test]
    fn with_head_rewrites_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_map(fixture_map(dir.path(), "[head]\nkind = logistic\nthreshold = 0.4\n")).unwrap();
        let spec = HeadSpec::NaiveBayes { alpha: 0.5 };
        let swapped = cfg.with_head(spec.clone());
        assert_eq!(swapped.head, spec);
        assert_eq!(swapped.map().get("head.threshold"), Some("0.4"));
        assert_eq!(swapped.map().get("head.c"), None);
        let reparsed = ExperimentConfig::from_map(swapped.map().clone()).unwrap();
        assert_eq!(reparsed.head, spec);
        assert_ne!(cfg.canonical_text(), swapped.canonical_text());
    }

    #[test]
    fn missing_files_are_reported() {
        let map = ConfigMap::parse("[data]\ncorpus = /definitely/not/here.jsonl\n[head]\nkind = logistic\n").unwrap();
        assert!(matches!(ExperimentConfig::from_map(map), Err(ConfigError::MissingFile { .. })));
    }

    #[test]
    fn out_dir_is_not_part_of_the_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = fixture_map(dir.path(), "[head]\nkind = logistic\n");
        let b = a.clone();
        a.set("run.out_dir", "/tmp/elsewhere").unwrap();
        let (a, b) = (ExperimentConfig::from_map(a).unwrap(), ExperimentConfig::from_map(b).unwrap());
        assert_eq!(a.canonical_text(), b.canonical_text());
    }
}
