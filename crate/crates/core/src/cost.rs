//! Analytical FLOP counts for encoder and head inference, plus a wall-clock
//! measurement protocol.
//!
//! Convention throughout: one multiply-accumulate is two FLOPs, so a dense
//! `m x k` by `k x n` product costs `2 m k n`. GFLOPS here means a
//! quantity of work (`flops / 1e9`), not a rate.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;
use crate::heads::{BinaryHead, LabelModel, Kernel};

pub const FLOP_CONVENTION: &str = "1 multiply-accumulate = 2 FLOPs";

#[derive(Debug, Error)]
pub enum CostError {
    #[error("sequence length {len} exceeds {encoder}'s maximum of {max}")]
    SeqTooLong { encoder: String, len: usize, max: usize },
    #[error("sequence length must be at least 1")]
    EmptySequence,
    #[error("label {label}: SVM head has no support vectors")]
    EmptySupportSet { label: usize },
    #[error("measurement protocol needs at least 3 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("cost report needs one entry for each of the 3 languages, got {0}")]
    WrongLanguageCount(usize),
    #[error("unknown encoder `{0}`")]
    UnknownEncoder(String),
    #[error("encoder spec: {0}")]
    SpecFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlopCount(pub u64);

impl FlopCount {
    pub fn gflops(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl std::ops::Add for FlopCount {
    type Output = FlopCount;
    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount(self.0 + rhs.0)
    }
}

impl std::ops::Mul<u64> for FlopCount {
    type Output = FlopCount;
    fn mul(self, rhs: u64) -> FlopCount {
        FlopCount(self.0 * rhs)
    }
}

impl std::iter::Sum for FlopCount {
    fn sum<I: Iterator<Item = FlopCount>>(iter: I) -> FlopCount {
        FlopCount(iter.map(|f| f.0).sum())
    }
}

pub fn matmul_flops(m: u64, k: u64, n: u64) -> FlopCount {
    FlopCount(2 * m * k * n)
}

/// Transformer encoder shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub name: String,
    pub layers: u64,
    pub hidden_dim: u64,
    pub ffn_dim: u64,
    pub heads: u64,
    pub max_seq: u64,
    pub out_dim: u64,
}

impl EncoderSpec {
    /// Built-in sentence encoders. Layer count, hidden and feed-forward
    /// widths, head count and maximum sequence length are the published
    /// architecture constants of each checkpoint.
    pub fn presets() -> Vec<EncoderSpec> {
        let spec = |name: &str, layers, hidden_dim, ffn_dim, heads, max_seq, out_dim| EncoderSpec {
            name: name.to_string(),
            layers,
            hidden_dim,
            ffn_dim,
            heads,
            max_seq,
            out_dim,
        };
        vec![
            spec("paraphrase-MiniLM-L3-v2", 3, 384, 1536, 12, 128, 384),
            spec("all-MiniLM-L6-v2", 6, 384, 1536, 12, 256, 384),
            spec("paraphrase-albert-small-v2", 6, 768, 3072, 12, 100, 768),
            spec("all-distilroberta-v1", 6, 768, 3072, 12, 512, 768),
            spec("all-mpnet-base-v2", 12, 768, 3072, 12, 384, 768),
        ]
    }

    pub fn preset(name: &str) -> Result<EncoderSpec, CostError> {
        Self::presets()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CostError::UnknownEncoder(name.to_string()))
    }

    /// Key-value text: `name`, `layers`, `hidden_dim`, `ffn_dim`, `heads`,
    /// `max_seq`, `out_dim`, one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<EncoderSpec, CostError> {
        let mut name = None;
        let mut nums = std::collections::HashMap::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CostError::SpecFile(format!("expected key = value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "name" => name = Some(v.to_string()),
                "layers" | "hidden_dim" | "ffn_dim" | "heads" | "max_seq" | "out_dim" => {
                    let n: u64 = v.parse().map_err(|_| CostError::SpecFile(format!("`{k}` is not an integer")))?;
                    if n == 0 {
                        return Err(CostError::SpecFile(format!("`{k}` must be positive")));
                    }
                    nums.insert(k.to_string(), n);
                }
                other => return Err(CostError::SpecFile(format!("unknown key `{other}`"))),
            }
        }
        let get = |k: &str| nums.get(k).copied().ok_or_else(|| CostError::SpecFile(format!("missing `{k}`")));
        Ok(EncoderSpec {
            name: name.ok_or_else(|| CostError::SpecFile("missing `name`".into()))?,
            layers: get("layers")?,
            hidden_dim: get("hidden_dim")?,
            ffn_dim: get("ffn_dim")?,
            heads: get("heads")?,
            max_seq: get("max_seq")?,
            out_dim: get("out_dim")?,
        })
    }

    pub fn load(path: &Path) -> Result<EncoderSpec, CostError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        format!(
            "name = {}\nlayers = {}\nhidden_dim = {}\nffn_dim = {}\nheads = {}\nmax_seq = {}\nout_dim = {}\n",
            self.name, self.layers, self.hidden_dim, self.ffn_dim, self.heads, self.max_seq, self.out_dim
        )
    }
}

/// Encoder FLOPs split by matmul, for one batch at one sequence length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderFlopTerms {
    /// Q, K and V projections: `3 * 2 L d^2` per layer.
    pub qkv: FlopCount,
    /// `Q K^T` over all heads: `2 L^2 d` per layer.
    pub scores: FlopCount,
    /// Attention weights times V: `2 L^2 d` per layer.
    pub attention_values: FlopCount,
    /// Attention output projection: `2 L d^2` per layer.
    pub output_projection: FlopCount,
    /// Feed-forward expansion `2 L d f` plus contraction `2 L f d` per layer.
    pub feed_forward: FlopCount,
    /// `2 L d out_dim`, charged only when `out_dim != d`.
    pub pooling_projection: FlopCount,
}

impl EncoderFlopTerms {
    pub fn total(&self) -> FlopCount {
        self.qkv + self.scores + self.attention_values + self.output_projection + self.feed_forward + self.pooling_projection
    }
}

pub fn encoder_flop_terms(spec: &EncoderSpec, seq_len: u64, batch: u64) -> Result<EncoderFlopTerms, CostError> {
    if seq_len == 0 {
        return Err(CostError::EmptySequence);
    }
    if seq_len > spec.max_seq {
        return Err(CostError::SeqTooLong { encoder: spec.name.clone(), len: seq_len as usize, max: spec.max_seq as usize });
    }
    let (l, d, f) = (seq_len, spec.hidden_dim, spec.ffn_dim);
    let per_layer = batch * spec.layers;
    Ok(EncoderFlopTerms {
        qkv: matmul_flops(l, d, d) * (3 * per_layer),
        scores: FlopCount(2 * l * l * d) * per_layer,
        attention_values: FlopCount(2 * l * l * d) * per_layer,
        output_projection: matmul_flops(l, d, d) * per_layer,
        feed_forward: (matmul_flops(l, d, f) + matmul_flops(l, f, d)) * per_layer,
        pooling_projection: if spec.out_dim != d { matmul_flops(l, d, spec.out_dim) * batch } else { FlopCount(0) },
    })
}

pub fn encoder_flops(spec: &EncoderSpec, seq_len: u64, batch: u64) -> Result<FlopCount, CostError> {
    encoder_flop_terms(spec, seq_len, batch).map(|t| t.total())
}

/// How encoder sequence length is chosen per sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqLenPolicy {
    /// The sentence's token count, clamped to `[1, max_seq]`.
    #[default]
    Actual,
    /// A fixed length, clamped to `max_seq`.
    Fixed(u64),
}

impl SeqLenPolicy {
    pub fn seq_len(&self, spec: &EncoderSpec, tokens: usize) -> u64 {
        let raw = match self {
            SeqLenPolicy::Actual => tokens as u64,
            SeqLenPolicy::Fixed(l) => *l,
        };
        raw.clamp(1, spec.max_seq)
    }
}

impl fmt::Display for SeqLenPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqLenPolicy::Actual => f.write_str("actual"),
            SeqLenPolicy::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for SeqLenPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "actual" => Ok(SeqLenPolicy::Actual),
            n => n
                .parse()
                .map(SeqLenPolicy::Fixed)
                .map_err(|_| format!("seq_len must be `actual` or an integer, got `{n}`")),
        }
    }
}

/// Encoder FLOPs summed over sentences with the given token counts.
pub fn test_set_encoder_flops(
    spec: &EncoderSpec,
    policy: SeqLenPolicy,
    token_counts: &[usize],
) -> Result<FlopCount, CostError> {
    token_counts
        .iter()
        .map(|&t| encoder_flops(spec, policy.seq_len(spec, t), 1))
        .sum()
}

fn svm_kernel_extra(kind: Kernel, degree: u32, dim: u64) -> u64 {
    match kind {
        Kernel::Linear => 0,
        // scale + offset, then degree-1 multiplications
        Kernel::Poly => 2 + degree.saturating_sub(1) as u64,
        // per-coordinate difference, scale, exp
        Kernel::Rbf => dim + 2,
        // scale + offset, tanh
        Kernel::Sigmoid => 3,
    }
}

/// FLOPs to classify one sentence with a trained model.
///
/// `active_features` is the input dimension for dense heads and the number
/// of non-zero counts for Naive Bayes. Per label: logistic `2 dim`; SVM
/// `(2 dim + kernel extra + 2) * |SV|`; tree ensembles one comparison per
/// level of each tree's depth; constant heads nothing. Naive Bayes charges
/// `2 nnz` per class.
pub fn head_flops(model: &LabelModel, active_features: usize) -> Result<FlopCount, CostError> {
    let dim = active_features as u64;
    match model {
        LabelModel::NaiveBayes(nb) => Ok(FlopCount(2 * dim * nb.classes.len() as u64)),
        LabelModel::OneVsRest(ovr) => ovr
            .heads
            .iter()
            .enumerate()
            .map(|(label, head)| {
                Ok(match head {
                    BinaryHead::Logistic(_) => FlopCount(2 * dim),
                    BinaryHead::Svm(svm) => {
                        if svm.support_vectors.is_empty() {
                            return Err(CostError::EmptySupportSet { label });
                        }
                        let per_sv = 2 * dim + svm_kernel_extra(svm.kernel.kind, svm.kernel.degree, dim) + 2;
                        FlopCount(per_sv * svm.support_vectors.len() as u64)
                    }
                    BinaryHead::Forest(f) => FlopCount(f.trees.iter().map(|t| t.depth() as u64).sum()),
                    BinaryHead::Boosted(b) => FlopCount(b.trees.iter().map(|t| t.depth() as u64).sum()),
                    BinaryHead::Constant { .. } => FlopCount(0),
                })
            })
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "median" => Ok(Aggregation::Median),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation `{other}` (median | mean)")),
        }
    }
}

impl Aggregation {
    pub fn apply(self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        match self {
            Aggregation::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
            Aggregation::Median => {
                let mut sorted = samples.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mid = sorted.len() / 2;
                if sorted.len() % 2 == 1 {
                    sorted[mid]
                } else {
                    (sorted[mid - 1] + sorted[mid]) / 2.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementProtocol {
    pub warmup: usize,
    pub repetitions: usize,
    pub aggregation: Aggregation,
}

impl Default for MeasurementProtocol {
    fn default() -> Self {
        MeasurementProtocol { warmup: 1, repetitions: 5, aggregation: Aggregation::Median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeasurement {
    pub seconds: f64,
    /// Every measured repetition, in order; warmups excluded.
    pub samples: Vec<f64>,
    pub protocol: MeasurementProtocol,
}

impl RuntimeMeasurement {
    /// CSV `rep,seconds`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("rep,seconds\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{s:.9}\n"));
        }
        out
    }
}

static MEASUREMENT_LOCK: Mutex<()> = Mutex::new(());

/// Times `f` on the monotonic clock. Only one measurement runs at a time in
/// the process; concurrent callers wait for the lock.
pub fn measure_runtime<F: FnMut()>(mut f: F, protocol: &MeasurementProtocol) -> Result<RuntimeMeasurement, CostError> {
    if protocol.repetitions < 3 {
        return Err(CostError::TooFewRepetitions(protocol.repetitions));
    }
    let _guard = MEASUREMENT_LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    for _ in 0..protocol.warmup {
        f();
    }
    let samples: Vec<f64> = (0..protocol.repetitions)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    Ok(RuntimeMeasurement { seconds: protocol.aggregation.apply(&samples), samples, protocol: *protocol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageCost {
    pub language: Language,
    pub runtime_s: f64,
    pub gflops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// In [`Language::ALL`] order.
    pub languages: Vec<LanguageCost>,
    pub avg_runtime_s: f64,
    pub avg_gflops: f64,
}

/// Per-language test-set totals, averaged over the three languages.
pub fn cost_report(runtimes: &[(Language, f64)], gflops: &[(Language, f64)]) -> Result<CostReport, CostError> {
    let find = |list: &[(Language, f64)], lang: Language| {
        let hits: Vec<f64> = list.iter().filter(|(l, _)| *l == lang).map(|(_, v)| *v).collect();
        (hits.len() == 1).then(|| hits[0])
    };
    if runtimes.len() != 3 || gflops.len() != 3 {
        return Err(CostError::WrongLanguageCount(runtimes.len().max(gflops.len())));
    }
    let mut languages = Vec::with_capacity(3);
    for language in Language::ALL {
        match (find(runtimes, language), find(gflops, language)) {
            (Some(runtime_s), Some(g)) => languages.push(LanguageCost { language, runtime_s, gflops: g }),
            _ => return Err(CostError::WrongLanguageCount(runtimes.len())),
        }
    }
    let avg_runtime_s = languages.iter().map(|l| l.runtime_s).sum::<f64>() / 3.0;
    let avg_gflops = languages.iter().map(|l| l.gflops).sum::<f64>() / 3.0;
    Ok(CostReport { languages, avg_runtime_s, avg_gflops })
}

impl CostReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# flops convention: {FLOP_CONVENTION}\nlanguage,runtime_s,gflops\n");
        for l in &self.languages {
            out.push_str(&format!("{},{:.6},{:.6}\n", l.language, l.runtime_s, l.gflops));
        }
        out.push_str(&format!("average,{:.6},{:.6}\n", self.avg_runtime_s, self.avg_gflops));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::{LogisticHead, OneVsRestClassifier, SvmHead, KernelFn, PlattScaling};

    fn unit_spec(out_dim: u64) -> EncoderSpec {
        EncoderSpec { name: "unit".into(), layers: 1, hidden_dim: 1, ffn_dim: 1, heads: 1, max_seq: 8, out_dim }
    }

    #[test]
    fn matmul_counts() {
        assert_eq!(matmul_flops(2, 3, 4), FlopCount(48));
        assert_eq!(matmul_flops(1, 1, 1), FlopCount(2));
        assert_eq!(FlopCount(1_500_000_000).gflops(), 1.5);
    }

    #[test]
    fn unit_encoder_terms() {
        let terms = encoder_flop_terms(&unit_spec(1), 1, 1).unwrap();
        assert_eq!(terms.qkv, FlopCount(6));
        assert_eq!(terms.total(), FlopCount(16));
        assert_eq!(encoder_flops(&unit_spec(2), 1, 1).unwrap(), FlopCount(20));
    }

    #[test]
    fn encoder_scaling() {
        let spec = EncoderSpec::preset("paraphrase-MiniLM-L3-v2").unwrap();
        let one = encoder_flops(&spec, 32, 1).unwrap();
        assert_eq!(encoder_flops(&spec, 32, 2).unwrap(), one * 2);
        let short = encoder_flop_terms(&spec, 16, 1).unwrap();
        let long = encoder_flop_terms(&spec, 32, 1).unwrap();
        assert_eq!(long.scores, short.scores * 4);
        assert_eq!(long.attention_values, short.attention_values * 4);
        assert_eq!(long.qkv, short.qkv * 2);
        assert_eq!(long.feed_forward, short.feed_forward * 2);
        assert!(matches!(encoder_flops(&spec, 129, 1), Err(CostError::SeqTooLong { .. })));
        assert!(matches!(encoder_flops(&spec, 0, 1), Err(CostError::EmptySequence)));
    }

    #[test]
    fn presets_have_table_dimensions() {
        let dims: Vec<(String, u64)> = EncoderSpec::presets().into_iter().map(|s| (s.name, s.out_dim)).collect();
        assert_eq!(dims.len(), 5);
        for (name, dim) in dims {
            let expected = if name.contains("MiniLM") { 384 } else { 768 };
            assert_eq!(dim, expected, "{name}");
        }
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = EncoderSpec::preset("all-mpnet-base-v2").unwrap();
        assert_eq!(EncoderSpec::parse(&spec.to_text()).unwrap(), spec);
        assert!(EncoderSpec::parse("name = x\nlayers = 2\n").is_err());
    }

    #[test]
    fn logistic_head_flops() {
        let head = BinaryHead::Logistic(LogisticHead::zeros(384, 1.0));
        let model = LabelModel::OneVsRest(OneVsRestClassifier {
            heads: vec![head; 7],
            threshold: 0.5,
            dim: 384,
            constant_labels: vec![],
        });
        assert_eq!(head_flops(&model, 384).unwrap(), FlopCount(5376));
    }

    #[test]
    fn svm_without_support_vectors_is_an_error() {
        let svm = SvmHead {
            kernel: KernelFn { kind: Kernel::Linear, degree: 3, gamma: 1.0, coef0: 0.0 },
            c: 1.0,
            support_vectors: vec![],
            alphas: vec![],
            signs: vec![],
            bias: 0.0,
            platt: PlattScaling { a: -1.0, b: 0.0 },
        };
        let model = LabelModel::OneVsRest(OneVsRestClassifier {
            heads: vec![BinaryHead::Svm(svm)],
            threshold: 0.5,
            dim: 4,
            constant_labels: vec![],
        });
        assert!(matches!(head_flops(&model, 4), Err(CostError::EmptySupportSet { label: 0 })));
    }

    #[test]
    fn aggregation_rules() {
        let symmetric = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((Aggregation::Mean.apply(&symmetric) - Aggregation::Median.apply(&symmetric)).abs() < 1e-9);
        assert_eq!(Aggregation::Median.apply(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn protocol_needs_three_reps() {
        let p = MeasurementProtocol { repetitions: 0, ..Default::default() };
        assert!(matches!(measure_runtime(|| {}, &p), Err(CostError::TooFewRepetitions(0))));
        let m = measure_runtime(|| {}, &MeasurementProtocol::default()).unwrap();
        assert_eq!(m.samples.len(), 5);
        assert!(m.seconds >= m.samples.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn cost_report_means() {
        let rt = [(Language::Java, 0.675), (Language::Python, 0.235), (Language::Pharo, 0.197)];
        let gf = [(Language::Java, 803.469), (Language::Python, 103.6213), (Language::Pharo, 91.9368)];
        let report = cost_report(&rt, &gf).unwrap();
        assert!((report.avg_runtime_s - 0.369).abs() < 1e-12);
        assert!((report.avg_gflops - 999.0271 / 3.0).abs() < 1e-9);
        assert_eq!(report.languages[1].gflops, 103.6213);

        let zeros = [(Language::Java, 0.0), (Language::Python, 0.0), (Language::Pharo, 0.0)];
        let z = cost_report(&zeros, &zeros).unwrap();
        assert_eq!((z.avg_runtime_s, z.avg_gflops), (0.0, 0.0));
        assert!(matches!(cost_report(&rt[..2], &gf[..2]), Err(CostError::WrongLanguageCount(2))));
    }
}
