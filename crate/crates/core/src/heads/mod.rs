//! Classification heads and their one-vs-rest composition.
//!
//! Binary heads (logistic, SVM, forest, boosted trees) each produce a
//! positive-class probability. [`OneVsRestClassifier`] trains one per label
//! and thresholds them; Naive Bayes is a multi-class model that emits exactly
//! one label. [`LabelModel`] unifies both behind one prediction call.

pub mod logistic;
pub mod naive_bayes;
pub mod svm;
pub mod tree;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSet;
use crate::featurize::FeatureVector;

pub use logistic::{fit_logistic, train_logistic, LogisticConfig, LogisticFit, LogisticHead};
pub use naive_bayes::{train_naive_bayes, NaiveBayesModel};
pub use svm::{fit_svm, train_svm, Kernel, KernelFn, KernelParams, PlattScaling, SvmConfig, SvmFit, SvmHead};
pub use tree::{
    fit_boosted, train_boosted, train_forest, BoostedConfig, BoostedFit, BoostedHead, DecisionTree, ForestConfig,
    ForestHead, Node,
};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("training targets contain a single class")]
    SingleClass,
    #[error("non-finite value in inputs or parameters")]
    NonFinite,
    #[error("optimizer hit its iteration cap ({iterations}) before converging")]
    NoConvergence { iterations: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("naive bayes needs a non-empty vocabulary")]
    EmptyVocabulary,
    #[error("no training rows")]
    EmptyInput,
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("feature dimension {found} does not match the model's {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("{head} heads need {needed} features")]
    FeatureKind { head: &'static str, needed: &'static str },
    #[error("label {label}: {source}")]
    Label {
        label: usize,
        #[source]
        source: Box<HeadError>,
    },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shape and finiteness checks shared by every dense trainer. Returns the dim.
pub(crate) fn check_problem(x: &[Vec<f64>], targets: usize) -> Result<usize, HeadError> {
    if x.len() != targets {
        return Err(HeadError::LengthMismatch { features: x.len(), targets });
    }
    if x.is_empty() {
        return Err(HeadError::EmptyInput);
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(HeadError::DimMismatch { expected: dim, found: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(HeadError::NonFinite);
        }
    }
    Ok(dim)
}

pub(crate) fn check_binary_problem(x: &[Vec<f64>], y: &[bool]) -> Result<usize, HeadError> {
    let dim = check_problem(x, y.len())?;
    if x.len() < 2 || y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
        return Err(HeadError::SingleClass);
    }
    Ok(dim)
}

/// Head family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    Logistic(LogisticConfig),
    Svm(SvmConfig),
    Forest(ForestConfig),
    Boosted(BoostedConfig),
    NaiveBayes { alpha: f64 },
}

impl HeadSpec {
    pub fn family(&self) -> &'static str {
        match self {
            HeadSpec::Logistic(_) => "LR",
            HeadSpec::Svm(_) => "SVM",
            HeadSpec::Forest(_) => "RF",
            HeadSpec::Boosted(_) => "XG",
            HeadSpec::NaiveBayes { .. } => "NB",
        }
    }
}

/// Row label in the `HEAD, param: value` style, listing the swept parameter(s).
impl fmt::Display for HeadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadSpec::Logistic(c) => write!(f, "LR, C: {:?}", c.c),
            HeadSpec::Svm(c) => write!(f, "SVM, C: {:?}, kernel: {}", c.c, c.kernel),
            HeadSpec::Forest(c) => write!(f, "RF, max_depth: {}", c.max_depth),
            HeadSpec::Boosted(c) => write!(f, "XG, max_depth: {}", c.max_depth),
            HeadSpec::NaiveBayes { alpha } => write!(f, "NB, alpha: {alpha:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinaryHead {
    Logistic(LogisticHead),
    Svm(SvmHead),
    Forest(ForestHead),
    Boosted(BoostedHead),
    /// Fixed probability for labels that were all-positive or all-negative in training.
    Constant { probability: f64 },
}

impl BinaryHead {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            BinaryHead::Logistic(h) => h.predict_proba(x),
            BinaryHead::Svm(h) => h.predict_proba(x),
            BinaryHead::Forest(h) => h.predict_proba(x),
            BinaryHead::Boosted(h) => h.predict_proba(x),
            BinaryHead::Constant { probability } => *probability,
        }
    }
}

/// Trains one binary head. Label-specific seeds are the caller's business.
pub fn train_binary(spec: &HeadSpec, x: &[Vec<f64>], y: &[bool]) -> Result<BinaryHead, HeadError> {
    Ok(match spec {
        HeadSpec::Logistic(c) => BinaryHead::Logistic(train_logistic(x, y, c)?),
        HeadSpec::Svm(c) => BinaryHead::Svm(train_svm(x, y, c)?),
        HeadSpec::Forest(c) => BinaryHead::Forest(train_forest(x, y, c)?),
        HeadSpec::Boosted(c) => BinaryHead::Boosted(train_boosted(x, y, c)?),
        HeadSpec::NaiveBayes { .. } => {
            return Err(HeadError::InvalidParameter("naive bayes is not a binary head".into()))
        }
    })
}

fn label_seed(seed: u64, label: usize) -> u64 {
    seed ^ (label as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Labels with probability at or above `threshold`; if none qualifies, the
/// single most probable label (lowest index on ties).
pub fn decide_labels(probabilities: &[f64], threshold: f64) -> LabelSet {
    let chosen: LabelSet = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect();
    if !chosen.is_empty() || probabilities.is_empty() {
        return chosen;
    }
    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > probabilities[best] {
            best = i;
        }
    }
    LabelSet::single(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRestClassifier {
    pub heads: Vec<BinaryHead>,
    pub threshold: f64,
    pub dim: usize,
    /// Labels whose training targets were constant; their head is [`BinaryHead::Constant`].
    pub constant_labels: Vec<usize>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// One binary head per label, trained in parallel across labels.
pub fn ovr_train(
    x: &[Vec<f64>],
    labels: &[LabelSet],
    n_labels: usize,
    spec: &HeadSpec,
    threshold: f64,
) -> Result<OneVsRestClassifier, HeadError> {
    if !(2..=LabelSet::MAX_LABELS).contains(&n_labels) {
        return Err(HeadError::InvalidParameter(format!(
            "one-vs-rest needs between 2 and {} labels, got {n_labels}",
            LabelSet::MAX_LABELS
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(HeadError::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let dim = check_problem(x, labels.len())?;
    let trained: Vec<Result<(BinaryHead, bool), HeadError>> = (0..n_labels)
        .into_par_iter()
        .map(|label| {
            let y: Vec<bool> = labels.iter().map(|s| s.contains(label)).collect();
            let positives = y.iter().filter(|&&b| b).count();
            if positives == 0 || positives == y.len() {
                let probability = if positives == 0 { 0.0 } else { 1.0 };
                return Ok((BinaryHead::Constant { probability }, true));
            }
            let spec = match spec {
                HeadSpec::Forest(c) => HeadSpec::Forest(ForestConfig { seed: label_seed(c.seed, label), ..*c }),
                other => other.clone(),
            };
            train_binary(&spec, x, &y)
                .map(|h| (h, false))
                .map_err(|e| HeadError::Label { label, source: Box::new(e) })
        })
        .collect();
    let mut heads = Vec::with_capacity(n_labels);
    let mut constant_labels = Vec::new();
    for (label, result) in trained.into_iter().enumerate() {
        let (head, constant) = result?;
        if constant {
            constant_labels.push(label);
        }
        heads.push(head);
    }
    Ok(OneVsRestClassifier { heads, threshold, dim, constant_labels })
}

impl OneVsRestClassifier {
    pub fn n_labels(&self) -> usize {
        self.heads.len()
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, HeadError> {
        if x.len() != self.dim {
            return Err(HeadError::DimMismatch { expected: self.dim, found: x.len() });
        }
        Ok(self.heads.iter().map(|h| h.predict_proba(x)).collect())
    }

    /// Never returns an empty set.
    pub fn predict(&self, x: &[f64]) -> Result<LabelSet, HeadError> {
        Ok(decide_labels(&self.probabilities(x)?, self.threshold))
    }
}

pub fn ovr_predict(classifier: &OneVsRestClassifier, x: &[f64]) -> Result<LabelSet, HeadError> {
    classifier.predict(x)
}

/// A trained multi-label model for one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelModel {
    OneVsRest(OneVsRestClassifier),
    /// Multi-class model; each sentence gets exactly one label.
    NaiveBayes(NaiveBayesModel),
}

impl LabelModel {
    /// Naive Bayes trains on each sentence's lowest label index, and needs
    /// sparse counts. Binary heads densify sparse input.
    pub fn train(
        features: &[FeatureVector],
        labels: &[LabelSet],
        n_labels: usize,
        spec: &HeadSpec,
        threshold: f64,
    ) -> Result<Self, HeadError> {
        match spec {
            HeadSpec::NaiveBayes { alpha } => {
                let x = features
                    .iter()
                    .map(|f| match f {
                        FeatureVector::Sparse(v) => Ok(v.clone()),
                        FeatureVector::Dense(_) => {
                            Err(HeadError::FeatureKind { head: "naive bayes", needed: "bag-of-words count" })
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let y = labels
                    .iter()
                    .map(|s| s.first().ok_or(HeadError::InvalidParameter("sentence without labels".into())))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LabelModel::NaiveBayes(train_naive_bayes(&x, &y, *alpha)?))
            }
            _ => {
                let x: Vec<Vec<f64>> = features.iter().map(FeatureVector::to_dense).collect();
                Ok(LabelModel::OneVsRest(ovr_train(&x, labels, n_labels, spec, threshold)?))
            }
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<LabelSet, HeadError> {
        match (self, features) {
            (LabelModel::OneVsRest(m), FeatureVector::Dense(d)) => m.predict(&d.0),
            (LabelModel::OneVsRest(m), FeatureVector::Sparse(s)) => m.predict(&s.to_dense()),
            (LabelModel::NaiveBayes(m), FeatureVector::Sparse(s)) => Ok(LabelSet::single(m.predict(s)?)),
            (LabelModel::NaiveBayes(_), FeatureVector::Dense(_)) => {
                Err(HeadError::FeatureKind { head: "naive bayes", needed: "bag-of-words count" })
            }
        }
    }

    pub fn constant_labels(&self) -> &[usize] {
        match self {
            LabelModel::OneVsRest(m) => &m.constant_labels,
            LabelModel::NaiveBayes(_) => &[],
        }
    }
}
