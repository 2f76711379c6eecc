//! Per-label precision, recall and F1, and the cross-language average.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{taxonomy_for, LabelSet, Language};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{truth} ground-truth label sets but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no score for {language} label `{label}`")]
    MissingLabelScore { language: Language, label: String },
    #[error("unexpected score for {language} label index {label}")]
    UnexpectedLabel { language: Language, label: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(truth: &[LabelSet], predicted: &[LabelSet], label: usize) -> Result<ConfusionCounts, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    let mut c = ConfusionCounts::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t.contains(label), p.contains(label)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero-division yields 0 for precision, recall and F1 alike.
pub fn f1(label: usize, counts: &ConfusionCounts) -> LabelScore {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    LabelScore { label, precision, recall, f1 }
}

/// Scores every label of `language`'s taxonomy.
pub fn score_language(
    language: Language,
    truth: &[LabelSet],
    predicted: &[LabelSet],
) -> Result<Vec<LabelScore>, MetricsError> {
    (0..taxonomy_for(language).len())
        .map(|label| Ok(f1(label, &confusion(truth, predicted, label)?)))
        .collect()
}

/// How label scores are folded into a single average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Unweighted mean over all 19 (language, label) scores.
    #[default]
    Flat,
    /// Mean of the three per-language macro-F1 values.
    PerLanguageMacro,
}

impl std::str::FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "flat" => Ok(AggregationMode::Flat),
            "per_language" | "per_language_macro" => Ok(AggregationMode::PerLanguageMacro),
            other => Err(format!("unknown aggregation `{other}` (flat | per_language)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScores {
    pub language: Language,
    pub scores: Vec<LabelScore>,
}

impl LanguageScores {
    pub fn macro_f1(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().map(|s| s.f1).sum::<f64>() / self.scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// In [`Language::ALL`] order, labels in taxonomy order.
    pub languages: Vec<LanguageScores>,
    pub mode: AggregationMode,
    pub avg_f1: f64,
}

/// Requires exactly the taxonomy's labels for each of the three languages;
/// input order of languages and labels does not matter.
pub fn aggregate(per_language: &[LanguageScores], mode: AggregationMode) -> Result<AggregateReport, MetricsError> {
    let mut languages = Vec::with_capacity(3);
    for language in Language::ALL {
        let taxonomy = taxonomy_for(language);
        let mut scores: Vec<LabelScore> = per_language
            .iter()
            .filter(|l| l.language == language)
            .flat_map(|l| l.scores.iter().copied())
            .collect();
        if let Some(bad) = scores.iter().find(|s| s.label >= taxonomy.len()) {
            return Err(MetricsError::UnexpectedLabel { language, label: bad.label });
        }
        scores.sort_by_key(|s| s.label);
        for label in 0..taxonomy.len() {
            let hits = scores.iter().filter(|s| s.label == label).count();
            if hits == 0 {
                return Err(MetricsError::MissingLabelScore { language, label: taxonomy.labels[label].to_string() });
            }
            if hits > 1 {
                return Err(MetricsError::UnexpectedLabel { language, label });
            }
        }
        languages.push(LanguageScores { language, scores });
    }
    let avg_f1 = match mode {
        AggregationMode::Flat => {
            let all: Vec<f64> = languages.iter().flat_map(|l| l.scores.iter().map(|s| s.f1)).collect();
            all.iter().sum::<f64>() / all.len() as f64
        }
        AggregationMode::PerLanguageMacro => languages.iter().map(LanguageScores::macro_f1).sum::<f64>() / 3.0,
    };
    Ok(AggregateReport { languages, mode, avg_f1 })
}

impl AggregateReport {
    /// CSV with `language,label,precision,recall,f1` rows and a final
    /// `all,avg_f1,,,<value>` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language,label,precision,recall,f1\n");
        for lang in &self.languages {
            let taxonomy = taxonomy_for(lang.language);
            for s in &lang.scores {
                out.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6}\n",
                    lang.language, taxonomy.labels[s.label], s.precision, s.recall, s.f1
                ));
            }
        }
        out.push_str(&format!("all,avg_f1,,,{:.6}\n", self.avg_f1));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
