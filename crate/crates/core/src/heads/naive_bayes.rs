//! Multinomial Naive Bayes over bag-of-words counts. Single-class output.

use serde::{Deserialize, Serialize};

use super::HeadError;
use crate::featurize::SparseCountVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Class ids seen in training, ascending. Row `k` of the tables below
    /// belongs to `classes[k]`.
    pub classes: Vec<usize>,
    pub log_priors: Vec<f64>,
    pub log_likelihoods: Vec<Vec<f64>>,
    pub alpha: f64,
    pub dim: usize,
}

/// `P(token | class) = (count + alpha) / (class_total + alpha * |V|)`,
/// priors are document fractions.
pub fn train_naive_bayes(x: &[SparseCountVector], y: &[usize], alpha: f64) -> Result<NaiveBayesModel, HeadError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(HeadError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if x.len() != y.len() {
        return Err(HeadError::LengthMismatch { features: x.len(), targets: y.len() });
    }
    if x.is_empty() {
        return Err(HeadError::EmptyInput);
    }
    let dim = x[0].dim;
    if dim == 0 {
        return Err(HeadError::EmptyVocabulary);
    }
    if let Some(bad) = x.iter().find(|v| v.dim != dim) {
        return Err(HeadError::DimMismatch { expected: dim, found: bad.dim });
    }

    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let mut docs = vec![0usize; k];
    let mut counts = vec![vec![0.0f64; dim]; k];
    for (v, &label) in x.iter().zip(y) {
        let row = classes.binary_search(&label).expect("class collected above");
        docs[row] += 1;
        for &(i, c) in &v.entries {
            counts[row][i] += c as f64;
        }
    }
    let n = x.len() as f64;
    let log_priors = docs.iter().map(|&d| (d as f64 / n).ln()).collect();
    let log_likelihoods = counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            let denom = (total + alpha * dim as f64).ln();
            row.iter().map(|c| (c + alpha).ln() - denom).collect()
        })
        .collect();
    Ok(NaiveBayesModel { classes, log_priors, log_likelihoods, alpha, dim })
}

impl NaiveBayesModel {
    /// Unnormalized log posterior per class row.
    pub fn joint_log_likelihood(&self, x: &SparseCountVector) -> Result<Vec<f64>, HeadError> {
        if x.dim != self.dim {
            return Err(HeadError::DimMismatch { expected: self.dim, found: x.dim });
        }
        Ok(self
            .log_priors
            .iter()
            .zip(&self.log_likelihoods)
            .map(|(prior, ll)| prior + x.entries.iter().map(|&(i, c)| c as f64 * ll[i]).sum::<f64>())
            .collect())
    }

    /// Normalized posterior per class row, via log-sum-exp.
    pub fn posterior(&self, x: &SparseCountVector) -> Result<Vec<f64>, HeadError> {
        let jll = self.joint_log_likelihood(x)?;
        let max = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + jll.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(jll.iter().map(|v| (v - log_norm).exp()).collect())
    }

    /// Most probable class id; ties go to the lowest id.
    pub fn predict(&self, x: &SparseCountVector) -> Result<usize, HeadError> {
        let jll = self.joint_log_likelihood(x)?;
        let mut best = 0;
        for (k, v) in jll.iter().enumerate() {
            if *v > jll[best] {
                best = k;
            }
        }
        Ok(self.classes[best])
    }
}
