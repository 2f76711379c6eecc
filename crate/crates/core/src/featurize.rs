//! Sentence featurizers: token preprocessing, bag-of-words counts, dense
//! embeddings loaded from files, and a hashed embedder that needs no model.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("no token reaches the document-frequency floor of {min_df}")]
    EmptyVocabulary { min_df: usize },
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("line {line}: row `{id}` has {found} values, header declares dim={expected}")]
    DimMismatch {
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate embedding id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no embedding for sentence `{0}`")]
    MissingEmbedding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Comment styling markers removed before tokenizing. Longest first so that
/// `/**` is not consumed as `//`-less leftovers.
const COMMENT_MARKERS: [&str; 4] = ["/**", "*/", "//", "#"];

/// Lowercase tokens of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

/// Lowercases, strips comment markers, then splits into maximal runs of
/// alphanumeric characters. Everything else (whitespace, punctuation,
/// symbols) is a boundary.
pub fn preprocess(text: &str) -> TokenSequence {
    let mut cleaned = text.to_lowercase();
    for marker in COMMENT_MARKERS {
        cleaned = cleaned.replace(marker, " ");
    }
    TokenSequence(
        cleaned
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect(),
    )
}

/// Token to index mapping built from training documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    min_df: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens occurring in at least `min_df` documents, indexed in
    /// order of first occurrence.
    pub fn build(train: &[TokenSequence], min_df: usize) -> Result<Self, FeaturizeError> {
        if min_df == 0 {
            return Err(FeaturizeError::InvalidMinDf);
        }
        let mut first_seen: Vec<&str> = Vec::new();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in train {
            let mut seen_here = std::collections::HashSet::new();
            for token in doc.iter() {
                if seen_here.insert(token) {
                    let entry = df.entry(token).or_insert_with(|| {
                        first_seen.push(token);
                        0
                    });
                    *entry += 1;
                }
            }
        }
        let tokens: Vec<String> = first_seen
            .into_iter()
            .filter(|t| df[t] >= min_df)
            .map(String::from)
            .collect();
        if tokens.is_empty() {
            return Err(FeaturizeError::EmptyVocabulary { min_df });
        }
        Ok(Self::from_tokens(tokens, min_df))
    }

    pub fn from_tokens(tokens: Vec<String>, min_df: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, min_df, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    min_df: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        Vocabulary::from_tokens(repr.tokens, repr.min_df)
    }
}

/// Sparse token counts; entries sorted by strictly increasing index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseCountVector {
    pub entries: Vec<(usize, u32)>,
    pub dim: usize,
}

impl SparseCountVector {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, c) in &self.entries {
            dense[i] = c as f64;
        }
        dense
    }
}

/// Out-of-vocabulary tokens are dropped.
pub fn bow_vector(tokens: &TokenSequence, vocab: &Vocabulary) -> SparseCountVector {
    let mut counts: Vec<(usize, u32)> = Vec::new();
    let mut indices: Vec<usize> = tokens.iter().filter_map(|t| vocab.get(t)).collect();
    indices.sort_unstable();
    for i in indices {
        match counts.last_mut() {
            Some((last, c)) if *last == i => *c += 1,
            _ => counts.push((i, 1)),
        }
    }
    SparseCountVector { entries: counts, dim: vocab.len() }
}

/// A dense sentence vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEmbedding(pub Vec<f64>);

impl DenseEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sentence id to embedding mapping, read from producer-supplied files.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    provenance: String,
    ids: Vec<String>,
    vectors: Vec<DenseEmbedding>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provenance: impl Into<String>) -> Self {
        EmbeddingTable {
            dim,
            provenance: provenance.into(),
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Appends a row, rejecting wrong lengths, non-finite values and repeated ids.
    pub fn insert(&mut self, id: impl Into<String>, vector: DenseEmbedding) -> Result<(), FeaturizeError> {
        let id = id.into();
        let line = self.ids.len() + 2;
        if vector.dim() != self.dim {
            return Err(FeaturizeError::DimMismatch { line, id, expected: self.dim, found: vector.dim() });
        }
        if vector.0.iter().any(|v| !v.is_finite()) {
            return Err(FeaturizeError::Parse { line, message: format!("non-finite value in row `{id}`") });
        }
        if self.index.contains_key(&id) {
            return Err(FeaturizeError::DuplicateId { line, id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&DenseEmbedding, FeaturizeError> {
        self.index
            .get(id)
            .map(|&i| &self.vectors[i])
            .ok_or_else(|| FeaturizeError::MissingEmbedding(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseEmbedding)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Text layout: a `dim=<n> provenance=<name>` header, then one
    /// `<id>\t<v1> <v2> ...` row per sentence. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} provenance={}\n", self.dim, self.provenance);
        for (id, v) in self.iter() {
            out.push_str(id);
            out.push('\t');
            for (i, x) in v.0.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{x:?}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FeaturizeError> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or_default();
        let parse_err = |line: usize, message: String| FeaturizeError::Parse { line, message };
        let rest = header
            .strip_prefix("dim=")
            .ok_or_else(|| parse_err(1, "header must start with `dim=`".into()))?;
        let (dim_text, provenance) = rest
            .split_once(" provenance=")
            .ok_or_else(|| parse_err(1, "header must contain ` provenance=`".into()))?;
        let dim: usize = dim_text
            .parse()
            .map_err(|e| parse_err(1, format!("bad dim `{dim_text}`: {e}")))?;
        if dim == 0 {
            return Err(parse_err(1, "dim must be positive".into()));
        }
        let mut table = EmbeddingTable::new(dim, provenance);
        for (i, row) in lines.enumerate() {
            let line = i + 2;
            if row.is_empty() {
                continue;
            }
            let (id, values) = row
                .split_once('\t')
                .ok_or_else(|| parse_err(line, "expected `<id>\\t<values>`".into()))?;
            let vector = values
                .split(' ')
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|e| parse_err(line, format!("bad value `{v}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if vector.len() != dim {
                return Err(FeaturizeError::DimMismatch {
                    line,
                    id: id.to_string(),
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(line, format!("non-finite value in row `{id}`")));
            }
            if table.index.contains_key(id) {
                return Err(FeaturizeError::DuplicateId { line, id: id.to_string() });
            }
            table.insert(id, DenseEmbedding(vector))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<(), FeaturizeError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, FeaturizeError> {
    EmbeddingTable::parse(&fs::read_to_string(path)?)
}

/// Classifier input: sparse counts or a dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureVector {
    Sparse(SparseCountVector),
    Dense(DenseEmbedding),
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Sparse(v) => v.dim,
            FeatureVector::Dense(v) => v.dim(),
        }
    }

    /// Features a sparse-aware consumer would touch: `nnz` or `dim`.
    pub fn active(&self) -> usize {
        match self {
            FeatureVector::Sparse(v) => v.nnz(),
            FeatureVector::Dense(v) => v.dim(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVector::Sparse(v) => v.to_dense(),
            FeatureVector::Dense(v) => v.0.clone(),
        }
    }
}

/// What a trained featurizer needs to turn new text into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    BagOfWords { vocabulary: Vocabulary },
    Hashed { dim: usize, seed: u64 },
    /// Vectors are looked up by sentence id in an external table.
    Embeddings { dim: usize, provenance: String },
}

impl Featurizer {
    pub fn dim(&self) -> usize {
        match self {
            Featurizer::BagOfWords { vocabulary } => vocabulary.len(),
            Featurizer::Hashed { dim, .. } | Featurizer::Embeddings { dim, .. } => *dim,
        }
    }

    pub fn provenance(&self) -> String {
        match self {
            Featurizer::BagOfWords { vocabulary } => {
                format!("bag-of-words(min_df={}, |V|={})", vocabulary.min_df(), vocabulary.len())
            }
            Featurizer::Hashed { dim, seed } => format!("hashed(dim={dim}, seed={seed})"),
            Featurizer::Embeddings { provenance, .. } => provenance.clone(),
        }
    }

    /// `table` is required for [`Featurizer::Embeddings`] and ignored otherwise.
    pub fn featurize(
        &self,
        id: &str,
        text: &str,
        table: Option<&EmbeddingTable>,
    ) -> Result<FeatureVector, FeaturizeError> {
        match self {
            Featurizer::BagOfWords { vocabulary } => Ok(FeatureVector::Sparse(bow_vector(&preprocess(text), vocabulary))),
            Featurizer::Hashed { dim, seed } => Ok(FeatureVector::Dense(hashed_embedding(&preprocess(text), *dim, *seed))),
            Featurizer::Embeddings { .. } => {
                let table = table.ok_or_else(|| FeaturizeError::MissingEmbedding(id.to_string()))?;
                Ok(FeatureVector::Dense(table.get(id)?.clone()))
            }
        }
    }
}

// FNV-1a followed by the splitmix64 finalizer; stable across platforms and
// releases, unlike std's hasher.
fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Signed feature hashing: each token adds ±1 at a hashed index, then the
/// vector is L2-normalized. Index and sign come from differently seeded
/// hashes. Empty input gives the zero vector.
pub fn hashed_embedding(tokens: &TokenSequence, dim: usize, seed: u64) -> DenseEmbedding {
    assert!(dim >= 1, "hashed embedding needs dim >= 1");
    let mut v = vec![0.0; dim];
    for token in tokens.iter() {
        let index = (token_hash(token, seed) % dim as u64) as usize;
        let sign = if token_hash(token, seed ^ 0x5bd1_e995) & 1 == 0 { 1.0 } else { -1.0 };
        v[index] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    DenseEmbedding(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence(tokens.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn preprocess_strips_markers() {
        assert_eq!(preprocess("// Returns the sum"), seq(&["returns", "the", "sum"]));
        assert_eq!(preprocess(""), seq(&[]));
        assert_eq!(preprocess("/** @param x THE Value */"), seq(&["param", "x", "the", "value"]));
        assert_eq!(preprocess("# TODO: fix__this"), seq(&["todo", "fix", "this"]));
    }

    #[test]
    fn vocabulary_min_df() {
        let docs = vec![seq(&["a", "b"]), seq(&["a"])];
        let v1 = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(v1.tokens(), &["a".to_string(), "b".to_string()]);
        assert_eq!(v1.get("b"), Some(1));
        let v2 = Vocabulary::build(&docs, 2).unwrap();
        assert_eq!(v2.tokens(), &["a".to_string()]);
        assert!(matches!(Vocabulary::build(&docs, 3), Err(FeaturizeError::EmptyVocabulary { .. })));
        assert!(matches!(Vocabulary::build(&docs, 0), Err(FeaturizeError::InvalidMinDf)));
    }

    #[test]
    fn document_frequency_counts_once_per_document() {
        let docs = vec![seq(&["a", "a", "a"]), seq(&["b"]), seq(&["b"])];
        let v = Vocabulary::build(&docs, 2).unwrap();
        assert_eq!(v.tokens(), &["b".to_string()]);
    }

    #[test]
    fn bow_counts_and_drops_oov() {
        let vocab = Vocabulary::from_tokens(vec!["a".into(), "b".into()], 1);
        let v = bow_vector(&seq(&["a", "a", "b"]), &vocab);
        assert_eq!(v.entries, vec![(0, 2), (1, 1)]);
        assert_eq!(bow_vector(&seq(&["b", "a", "a"]), &vocab), v);
        let only_a = Vocabulary::from_tokens(vec!["a".into()], 1);
        assert!(bow_vector(&seq(&["z"]), &only_a).entries.is_empty());
    }

    #[test]
    fn embedding_file_parsing() {
        let row: Vec<String> = (0..384).map(|i| format!("{}", i as f64 / 100.0)).collect();
        let text = format!("dim=384 provenance=paraphrase-MiniLM-L3-v2\ns1\t{}\ns2\t{}\n", row.join(" "), row.join(" "));
        let table = EmbeddingTable::parse(&text).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.dim(), 384);
        assert_eq!(table.provenance(), "paraphrase-MiniLM-L3-v2");
        assert!(matches!(table.get("nope"), Err(FeaturizeError::MissingEmbedding(_))));

        let short = format!("dim=384 provenance=x\nbad\t{}\n", row[..383].join(" "));
        match EmbeddingTable::parse(&short) {
            Err(FeaturizeError::DimMismatch { line, id, expected, found }) => {
                assert_eq!((line, id.as_str(), expected, found), (2, "bad", 384, 383));
            }
            other => panic!("expected DimMismatch, got {other:?}"),
        }
        let dup = "dim=1 provenance=x\na\t1\na\t2\n";
        assert!(matches!(EmbeddingTable::parse(dup), Err(FeaturizeError::DuplicateId { line: 3, .. })));
        assert!(matches!(EmbeddingTable::parse("dims=1\n"), Err(FeaturizeError::Parse { line: 1, .. })));
        assert!(matches!(EmbeddingTable::parse("dim=1 provenance=x\na\tNaN\n"), Err(FeaturizeError::Parse { .. })));
    }

    #[test]
    fn hashed_embedding_properties() {
        let empty = hashed_embedding(&seq(&[]), 16, 3);
        assert!(empty.0.iter().all(|&x| x == 0.0));
        let a = hashed_embedding(&seq(&["x", "y", "x", "z"]), 32, 7);
        let b = hashed_embedding(&seq(&["z", "x", "y", "x"]), 32, 7);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_ne!(a, hashed_embedding(&seq(&["x", "y", "x", "z"]), 32, 8));
    }
}
