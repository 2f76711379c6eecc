//! Efficiency-weighted submission score, its per-term breakdown, and ranking.
//!
//! `score = 0.6 avg_f1 + 0.2 (5 - runtime_s) / 5 + 0.2 (5000 - gflops) / 5000`,
//! with no clamping: a configuration over budget gets negative terms.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{field} is not finite")]
    NonFinite { field: &'static str },
    #[error("{field} = {value} is out of range ({expected})")]
    OutOfRange { field: &'static str, value: f64, expected: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubmissionInputs {
    pub avg_f1: f64,
    pub avg_runtime_s: f64,
    pub avg_gflops: f64,
}

impl SubmissionInputs {
    pub fn new(avg_f1: f64, avg_runtime_s: f64, avg_gflops: f64) -> Self {
        SubmissionInputs { avg_f1, avg_runtime_s, avg_gflops }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        for (field, value) in [("avg_f1", self.avg_f1), ("avg_runtime_s", self.avg_runtime_s), ("avg_gflops", self.avg_gflops)]
        {
            if !value.is_finite() {
                return Err(ScoreError::NonFinite { field });
            }
        }
        if !(0.0..=1.0).contains(&self.avg_f1) {
            return Err(ScoreError::OutOfRange { field: "avg_f1", value: self.avg_f1, expected: "0 <= avg_f1 <= 1" });
        }
        if self.avg_runtime_s < 0.0 {
            return Err(ScoreError::OutOfRange { field: "avg_runtime_s", value: self.avg_runtime_s, expected: ">= 0" });
        }
        if self.avg_gflops < 0.0 {
            return Err(ScoreError::OutOfRange { field: "avg_gflops", value: self.avg_gflops, expected: ">= 0" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConstants {
    pub f1_weight: f64,
    pub runtime_weight: f64,
    pub gflops_weight: f64,
    pub runtime_budget_s: f64,
    pub gflops_budget: f64,
}

impl Default for ScoreConstants {
    fn default() -> Self {
        ScoreConstants {
            f1_weight: 0.6,
            runtime_weight: 0.2,
            gflops_weight: 0.2,
            runtime_budget_s: 5.0,
            gflops_budget: 5000.0,
        }
    }
}

impl ScoreConstants {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let all = [
            ("f1_weight", self.f1_weight),
            ("runtime_weight", self.runtime_weight),
            ("gflops_weight", self.gflops_weight),
            ("runtime_budget_s", self.runtime_budget_s),
            ("gflops_budget", self.gflops_budget),
        ];
        for (field, value) in all {
            if !value.is_finite() {
                return Err(ScoreError::NonFinite { field });
            }
        }
        for (field, value) in [("runtime_budget_s", self.runtime_budget_s), ("gflops_budget", self.gflops_budget)] {
            if value <= 0.0 {
                return Err(ScoreError::OutOfRange { field, value, expected: "> 0" });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub f1_term: f64,
    pub runtime_term: f64,
    pub gflops_term: f64,
    /// Exactly `f1_term + runtime_term + gflops_term`.
    pub total: f64,
}

impl fmt::Display for ScoreBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.total)
    }
}

pub fn submission_score(inputs: &SubmissionInputs) -> Result<ScoreBreakdown, ScoreError> {
    submission_score_with(inputs, &ScoreConstants::default())
}

pub fn submission_score_with(inputs: &SubmissionInputs, k: &ScoreConstants) -> Result<ScoreBreakdown, ScoreError> {
    inputs.validate()?;
    k.validate()?;
    let f1_term = k.f1_weight * inputs.avg_f1;
    let runtime_term = k.runtime_weight * (k.runtime_budget_s - inputs.avg_runtime_s) / k.runtime_budget_s;
    let gflops_term = k.gflops_weight * (k.gflops_budget - inputs.avg_gflops) / k.gflops_budget;
    Ok(ScoreBreakdown { f1_term, runtime_term, gflops_term, total: f1_term + runtime_term + gflops_term })
}

/// One configuration's outcome. A failed point keeps its name and reason but
/// has no numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub inputs: Option<SubmissionInputs>,
    pub breakdown: Option<ScoreBreakdown>,
    pub error: Option<String>,
}

impl LeaderboardEntry {
    pub fn scored(name: impl Into<String>, inputs: SubmissionInputs, breakdown: ScoreBreakdown) -> Self {
        LeaderboardEntry { name: name.into(), inputs: Some(inputs), breakdown: Some(breakdown), error: None }
    }

    pub fn failed(name: impl Into<String>, error: impl Into<String>) -> Self {
        LeaderboardEntry { name: name.into(), inputs: None, breakdown: None, error: Some(error.into()) }
    }

    pub fn status(&self) -> &'static str {
        if self.breakdown.is_some() {
            "ok"
        } else {
            "failed"
        }
    }
}

/// Descending total, then higher avg_f1, then name. Failed entries last, by name.
pub fn rank(mut entries: Vec<LeaderboardEntry>) -> Vec<LeaderboardEntry> {
    entries.sort_by(|a, b| match (&a.breakdown, &b.breakdown) {
        (Some(x), Some(y)) => y
            .total
            .total_cmp(&x.total)
            .then_with(|| {
                let fa = a.inputs.map_or(0.0, |i| i.avg_f1);
                let fb = b.inputs.map_or(0.0, |i| i.avg_f1);
                fb.total_cmp(&fa)
            })
            .then_with(|| a.name.cmp(&b.name)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.name.cmp(&b.name),
    });
    entries
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// Leaderboard CSV, 4 decimal places, with a trailing `status` column.
pub fn leaderboard_csv(entries: &[LeaderboardEntry]) -> String {
    let mut w = csv_writer();
    w.write_record([
        "name",
        "avg_f1",
        "avg_runtime_s",
        "avg_gflops",
        "f1_term",
        "runtime_term",
        "gflops_term",
        "total",
        "status",
    ])
    .expect("in-memory write");
    for e in entries {
        let mut row = vec![e.name.clone()];
        match (e.inputs, e.breakdown) {
            (Some(i), Some(b)) => row.extend(
                [i.avg_f1, i.avg_runtime_s, i.avg_gflops, b.f1_term, b.runtime_term, b.gflops_term, b.total]
                    .iter()
                    .map(|v| format!("{v:.4}")),
            ),
            _ => row.extend(std::iter::repeat_n(String::new(), 7)),
        }
        row.push(e.status().to_string());
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

pub fn write_leaderboard(entries: &[LeaderboardEntry], path: &Path) -> Result<(), ScoreError> {
    std::fs::File::create(path)?.write_all(leaderboard_csv(entries).as_bytes())?;
    Ok(())
}

/// Per-term CSV for plotting: `name,f1_term,runtime_term,gflops_term,total`
/// at full precision.
pub fn breakdown_csv(scores: &[(String, ScoreBreakdown)]) -> String {
    let mut w = csv_writer();
    w.write_record(["name", "f1_term", "runtime_term", "gflops_term", "total"]).expect("in-memory write");
    for (name, b) in scores {
        w.write_record([
            name.clone(),
            format!("{:?}", b.f1_term),
            format!("{:?}", b.runtime_term),
            format!("{:?}", b.gflops_term),
            format!("{:?}", b.total),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn breakdown_export(scores: &[(String, ScoreBreakdown)], path: &Path) -> Result<(), ScoreError> {
    std::fs::File::create(path)?.write_all(breakdown_csv(scores).as_bytes())?;
    Ok(())
}
