//! Labeled comment-sentence corpus: taxonomies, ingestion, stratified splitting.
//!
//! Sentences arrive already split (one sentence per record). Two on-disk
//! layouts are accepted: canonical JSONL and CSV with a column map.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: sentence `{id}` has no labels")]
    MissingLabel { line: usize, id: String },
    #[error("line {line}: label `{label}` is not part of the {language} taxonomy")]
    UnknownLabel {
        line: usize,
        label: String,
        language: Language,
    },
    #[error("line {line}: duplicate sentence id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid column map: {0}")]
    ColumnMap(String),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("{language} has {count} sentence(s); at least 2 are needed to split")]
    TooFewSentences { language: Language, count: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source language of a comment sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
    Pharo,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Java, Language::Python, Language::Pharo];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Java => "java",
            Language::Python => "python",
            Language::Pharo => "pharo",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "java" => Ok(Language::Java),
            "python" => Ok(Language::Python),
            "pharo" => Ok(Language::Pharo),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

const JAVA_LABELS: &[&str] = &[
    "deprecation",
    "expand",
    "ownership",
    "pointer",
    "rational",
    "summary",
    "usage",
];

const PYTHON_LABELS: &[&str] = &[
    "development_notes",
    "expand",
    "parameters",
    "summary",
    "usage",
];

const PHARO_LABELS: &[&str] = &[
    "class_references",
    "collaborators",
    "example",
    "intent",
    "key_implementation_points",
    "key_messages",
    "responsibilities",
];

/// Ordered label names for one language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelTaxonomy {
    pub language: Language,
    pub labels: &'static [&'static str],
}

impl LabelTaxonomy {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&'static str> {
        self.labels.get(index).copied()
    }

    /// Resolves a label name, ignoring case and separators, so that
    /// `key_messages`, `Key messages` and `keymessages` all match.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let wanted = normalize_label(name);
        self.labels
            .iter()
            .position(|label| normalize_label(label) == wanted)
    }

    pub fn all_labels(&self) -> LabelSet {
        LabelSet::from_indices(0..self.len()).expect("taxonomies fit in a label set")
    }
}

fn normalize_label(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn taxonomy_for(language: Language) -> LabelTaxonomy {
    let labels = match language {
        Language::Java => JAVA_LABELS,
        Language::Python => PYTHON_LABELS,
        Language::Pharo => PHARO_LABELS,
    };
    LabelTaxonomy { language, labels }
}

/// Set of label indices, stored as a bitmask. Supports up to 32 labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const MAX_LABELS: usize = 32;

    pub const fn empty() -> Self {
        LabelSet(0)
    }

    pub fn single(index: usize) -> Self {
        assert!(index < Self::MAX_LABELS, "label index {index} out of range");
        LabelSet(1 << index)
    }

    /// Returns `None` if any index is ≥ 32.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Option<Self> {
        let mut bits = 0u32;
        for i in indices {
            if i >= Self::MAX_LABELS {
                return None;
            }
            bits |= 1 << i;
        }
        Some(LabelSet(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn from_bits(bits: u32) -> Self {
        LabelSet(bits)
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < Self::MAX_LABELS, "label index {index} out of range");
        self.0 |= 1 << index;
    }

    pub fn contains(self, index: usize) -> bool {
        index < Self::MAX_LABELS && self.0 & (1 << index) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn intersects(self, other: LabelSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..Self::MAX_LABELS).filter(move |&i| self.contains(i))
    }

    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut set = LabelSet::empty();
        for i in iter {
            set.insert(i);
        }
        set
    }
}

/// One labeled comment sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentSentence {
    pub id: String,
    pub language: Language,
    pub text: String,
    pub labels: LabelSet,
}

impl CommentSentence {
    pub fn label_names(&self) -> Vec<&'static str> {
        let taxonomy = taxonomy_for(self.language);
        self.labels
            .iter()
            .filter_map(|i| taxonomy.name(i))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    language: Language,
    text: String,
    labels: Vec<String>,
}

/// How label columns are laid out in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumns {
    /// One column per label holding `1`/`0` (or `true`/`false`). Each entry
    /// is `(column header, label name)`.
    OneHot(Vec<(String, String)>),
    /// A single column holding label names separated by `delimiter`.
    List { column: String, delimiter: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageSource {
    Column(String),
    Fixed(Language),
}

/// Column mapping for CSV ingestion.
///
/// Parsed from `key = value` lines:
///
/// ```text
/// id_column = comment_id
/// text_column = comment_sentence
/// language = java                 # or: language_column = lang
/// label_columns = summary, usage, Ownership:ownership
/// # or:
/// label_list_column = labels
/// delimiter = ;
/// ```
///
/// In `label_columns`, an entry `header:label` maps a column to a label
/// name; a bare entry uses the header as the label name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub id_column: String,
    pub text_column: String,
    pub language: LanguageSource,
    pub labels: LabelColumns,
}

impl ColumnMap {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut keys = BTreeMap::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CorpusError::ColumnMap(format!("expected key = value, got `{line}`")))?;
            keys.insert(k.trim().to_string(), v.trim().to_string());
        }
        let take = |k: &str| {
            keys.get(k)
                .cloned()
                .ok_or_else(|| CorpusError::ColumnMap(format!("missing key `{k}`")))
        };
        let language = match (keys.get("language_column"), keys.get("language")) {
            (Some(col), None) => LanguageSource::Column(col.clone()),
            (None, Some(lang)) => LanguageSource::Fixed(lang.parse().map_err(CorpusError::ColumnMap)?),
            _ => {
                return Err(CorpusError::ColumnMap(
                    "exactly one of `language_column` or `language` is required".into(),
                ))
            }
        };
        let labels = match (keys.get("label_columns"), keys.get("label_list_column")) {
            (Some(cols), None) => LabelColumns::OneHot(
                cols.split(',')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(|c| match c.split_once(':') {
                        Some((col, label)) => (col.trim().to_string(), label.trim().to_string()),
                        None => (c.to_string(), c.to_string()),
                    })
                    .collect(),
            ),
            (None, Some(col)) => LabelColumns::List {
                column: col.clone(),
                delimiter: keys.get("delimiter").cloned().unwrap_or_else(|| ",".into()),
            },
            _ => {
                return Err(CorpusError::ColumnMap(
                    "exactly one of `label_columns` or `label_list_column` is required".into(),
                ))
            }
        };
        Ok(ColumnMap {
            id_column: take("id_column")?,
            text_column: take("text_column")?,
            language,
            labels,
        })
    }
}

#[derive(Debug, Clone)]
pub enum CorpusFormat {
    Jsonl,
    Csv(ColumnMap),
}

/// Loads and validates every record. The first invalid record aborts the
/// load with an error carrying its line number (1-based, header = line 1 for CSV).
pub fn load_corpus(path: &Path, format: &CorpusFormat) -> Result<Vec<CommentSentence>, CorpusError> {
    let text = fs::read_to_string(path)?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&text),
        CorpusFormat::Csv(map) => parse_csv(&text, map),
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<CommentSentence>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: JsonRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let sentence = build_sentence(line, record.id, record.language, record.text, &record.labels)?;
        if !seen.insert(sentence.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: sentence.id });
        }
        out.push(sentence);
    }
    Ok(out)
}

fn parse_csv(text: &str, map: &ColumnMap) -> Result<Vec<CommentSentence>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::ColumnMap(format!("column `{name}` not found in header")))
    };
    let id_col = column(&map.id_column)?;
    let text_col = column(&map.text_column)?;
    let lang_col = match &map.language {
        LanguageSource::Column(c) => Some(column(c)?),
        LanguageSource::Fixed(_) => None,
    };
    enum Resolved {
        OneHot(Vec<(usize, String)>),
        List(usize, String),
    }
    let resolved = match &map.labels {
        LabelColumns::OneHot(cols) => Resolved::OneHot(
            cols.iter()
                .map(|(col, label)| Ok((column(col)?, label.clone())))
                .collect::<Result<_, CorpusError>>()?,
        ),
        LabelColumns::List { column: col, delimiter } => Resolved::List(column(col)?, delimiter.clone()),
    };

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| CorpusError::Parse {
                line,
                message: format!("missing field {}", idx + 1),
            })
        };
        let language = match (&map.language, lang_col) {
            (LanguageSource::Fixed(l), _) => *l,
            (_, Some(c)) => field(c)?
                .parse()
                .map_err(|message| CorpusError::Parse { line, message })?,
            _ => unreachable!("language column resolved above"),
        };
        let labels: Vec<String> = match &resolved {
            Resolved::OneHot(cols) => {
                let mut names = Vec::new();
                for (c, label) in cols {
                    let value = field(*c)?.trim();
                    let on = match value.to_ascii_lowercase().as_str() {
                        "1" | "true" | "1.0" => true,
                        "0" | "false" | "0.0" | "" => false,
                        other => {
                            return Err(CorpusError::Parse {
                                line,
                                message: format!("label column value `{other}` is not 0/1"),
                            })
                        }
                    };
                    if on {
                        names.push(label.clone());
                    }
                }
                names
            }
            Resolved::List(c, delimiter) => field(*c)?
                .split(delimiter.as_str())
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        };
        let sentence = build_sentence(
            line,
            field(id_col)?.to_string(),
            language,
            field(text_col)?.to_string(),
            &labels,
        )?;
        if !seen.insert(sentence.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: sentence.id });
        }
        out.push(sentence);
    }
    Ok(out)
}

fn build_sentence(
    line: usize,
    id: String,
    language: Language,
    text: String,
    labels: &[String],
) -> Result<CommentSentence, CorpusError> {
    let taxonomy = taxonomy_for(language);
    let mut set = LabelSet::empty();
    for label in labels {
        let index = taxonomy.index_of(label).ok_or_else(|| CorpusError::UnknownLabel {
            line,
            label: label.clone(),
            language,
        })?;
        set.insert(index);
    }
    if set.is_empty() {
        return Err(CorpusError::MissingLabel { line, id });
    }
    Ok(CommentSentence { id, language, text, labels: set })
}

/// Serializes sentences in the canonical JSONL layout.
pub fn to_jsonl(sentences: &[CommentSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let record = JsonRecord {
            id: s.id.clone(),
            language: s.language,
            text: s.text.clone(),
            labels: s.label_names().into_iter().map(String::from).collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, sentences: &[CommentSentence]) -> Result<(), CorpusError> {
    fs::write(path, to_jsonl(sentences))?;
    Ok(())
}

/// A label with too few positives to appear on both sides of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegenerateLabel {
    pub language: Language,
    pub label: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<CommentSentence>,
    pub test: Vec<CommentSentence>,
    pub ratio: f64,
    pub seed: u64,
    /// Labels that could not be represented on both sides. Their positives
    /// were placed in train.
    pub degenerate: Vec<DegenerateLabel>,
}

/// Iterative multi-label stratification, applied to each language
/// independently. Labels are processed rarest first; each sentence carrying
/// the current label goes to the side with the largest outstanding demand for
/// that label, then the largest outstanding total demand, then a seeded coin.
/// Both output lists keep input order.
pub fn stratified_split(
    sentences: &[CommentSentence],
    ratio: f64,
    seed: u64,
) -> Result<SplitDataset, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    let mut in_train = vec![false; sentences.len()];
    let mut degenerate = Vec::new();

    for language in Language::ALL {
        let members: Vec<usize> = (0..sentences.len())
            .filter(|&i| sentences[i].language == language)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(CorpusError::TooFewSentences { language, count: members.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(language as u64);
        let assignment = stratify_group(sentences, &members, ratio, &mut rng, language, &mut degenerate);
        for (&i, side) in members.iter().zip(assignment) {
            in_train[i] = side;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, t) in sentences.iter().zip(&in_train) {
        if *t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    Ok(SplitDataset { train, test, ratio, seed, degenerate })
}

fn stratify_group(
    sentences: &[CommentSentence],
    members: &[usize],
    ratio: f64,
    rng: &mut ChaCha8Rng,
    language: Language,
    degenerate: &mut Vec<DegenerateLabel>,
) -> Vec<bool> {
    const TRAIN: usize = 0;
    const TEST: usize = 1;
    let n = members.len();
    let n_labels = LabelSet::MAX_LABELS;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut label_count = vec![0usize; n_labels];
    for &m in members {
        for l in sentences[m].labels.iter() {
            label_count[l] += 1;
        }
    }

    let train_total = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut total_demand = [train_total as f64, (n - train_total) as f64];
    let mut label_demand: Vec<[f64; 2]> = label_count
        .iter()
        .map(|&c| [ratio * c as f64, (1.0 - ratio) * c as f64])
        .collect();

    let mut side: Vec<Option<usize>> = vec![None; n];
    let mut remaining = label_count.clone();

    let place = |pos: usize, target: usize, side: &mut Vec<Option<usize>>, remaining: &mut Vec<usize>,
                     total_demand: &mut [f64; 2], label_demand: &mut Vec<[f64; 2]>| {
        side[pos] = Some(target);
        total_demand[target] -= 1.0;
        for l in sentences[members[pos]].labels.iter() {
            label_demand[l][target] -= 1.0;
            remaining[l] -= 1;
        }
    };

    for (l, &c) in label_count.iter().enumerate() {
        if c == 1 {
            degenerate.push(DegenerateLabel { language, label: l, positives: c });
            for &pos in &order {
                if side[pos].is_none() && sentences[members[pos]].labels.contains(l) {
                    place(pos, TRAIN, &mut side, &mut remaining, &mut total_demand, &mut label_demand);
                }
            }
        }
    }

    loop {
        let next = (0..n_labels)
            .filter(|&l| remaining[l] > 0)
            .min_by_key(|&l| (remaining[l], l));
        let Some(label) = next else { break };
        for &pos in &order {
            if side[pos].is_some() || !sentences[members[pos]].labels.contains(label) {
                continue;
            }
            let [dt, de] = label_demand[label];
            let target = if dt > de {
                TRAIN
            } else if de > dt {
                TEST
            } else if total_demand[TRAIN] > total_demand[TEST] {
                TRAIN
            } else if total_demand[TEST] > total_demand[TRAIN] {
                TEST
            } else if rng.random_bool(0.5) {
                TRAIN
            } else {
                TEST
            };
            place(pos, target, &mut side, &mut remaining, &mut total_demand, &mut label_demand);
        }
    }

    side.into_iter()
        .map(|s| s.expect("every sentence has at least one label") == TRAIN)
        .collect()
}

/// Per-language label counts. Multi-label sentences count once per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSummary {
    pub language: Language,
    pub sentences: usize,
    pub multi_label: usize,
    pub label_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub languages: Vec<LanguageSummary>,
}

impl CorpusSummary {
    pub fn total_sentences(&self) -> usize {
        self.languages.iter().map(|l| l.sentences).sum()
    }

    pub fn multi_label_fraction(&self) -> f64 {
        let total = self.total_sentences();
        if total == 0 {
            return 0.0;
        }
        self.languages.iter().map(|l| l.multi_label).sum::<usize>() as f64 / total as f64
    }

    pub fn get(&self, language: Language) -> &LanguageSummary {
        self.languages
            .iter()
            .find(|l| l.language == language)
            .expect("summary covers every language")
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:<28} {:>8}", "language", "label", "count")?;
        for lang in &self.languages {
            let taxonomy = taxonomy_for(lang.language);
            for (i, c) in lang.label_counts.iter().enumerate() {
                writeln!(f, "{:<8} {:<28} {:>8}", lang.language, taxonomy.labels[i], c)?;
            }
            writeln!(f, "{:<8} {:<28} {:>8}", lang.language, "(sentences)", lang.sentences)?;
            writeln!(f, "{:<8} {:<28} {:>8}", lang.language, "(multi-label)", lang.multi_label)?;
        }
        write!(
            f,
            "total sentences: {}, multi-label fraction: {:.4}",
            self.total_sentences(),
            self.multi_label_fraction()
        )
    }
}

pub fn corpus_summary(sentences: &[CommentSentence]) -> CorpusSummary {
    let languages = Language::ALL
        .iter()
        .map(|&language| {
            let taxonomy = taxonomy_for(language);
            let mut label_counts = vec![0; taxonomy.len()];
            let mut count = 0;
            let mut multi_label = 0;
            for s in sentences.iter().filter(|s| s.language == language) {
                count += 1;
                if s.labels.len() > 1 {
                    multi_label += 1;
                }
                for l in s.labels.iter() {
                    if let Some(c) = label_counts.get_mut(l) {
                        *c += 1;
                    }
                }
            }
            LanguageSummary { language, sentences: count, multi_label, label_counts }
        })
        .collect();
    CorpusSummary { languages }
}
