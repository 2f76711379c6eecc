//! Contrastive sentence pairs for external fine-tuning pipelines.
//!
//! Every iteration, each training sentence anchors one positive pair (a
//! partner sharing at least one label) and one negative pair (a partner with
//! a disjoint label set). Partners are drawn uniformly, never the anchor
//! itself, independently per anchor.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{CommentSentence, LabelSet};

#[derive(Debug, Error)]
pub enum PairError {
    #[error("sentence `{0}` has no partner sharing a label")]
    NoPositivePartner(String),
    #[error("sentence `{0}` has no partner with a disjoint label set")]
    NoNegativePartner(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContrastivePair {
    pub a_id: String,
    pub b_id: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPlan {
    pub num_iterations: usize,
    pub seed: u64,
}

/// Number of pairs `generate_pairs` emits.
pub fn expected_pair_count(num_iterations: usize, num_sentences: usize) -> usize {
    num_iterations * num_sentences * 2
}

struct Pools {
    positive: Vec<usize>,
    negative: Vec<usize>,
}

/// Draws uniformly from `pool \ {anchor}`; `pool` is sorted.
fn draw_excluding(pool: &[usize], anchor: usize, rng: &mut ChaCha8Rng) -> usize {
    match pool.binary_search(&anchor) {
        Ok(pos) => {
            let r = rng.random_range(0..pool.len() - 1);
            pool[if r >= pos { r + 1 } else { r }]
        }
        Err(_) => pool[rng.random_range(0..pool.len())],
    }
}

pub fn generate_pairs(train: &[CommentSentence], plan: PairPlan) -> Result<Vec<ContrastivePair>, PairError> {
    // Partner pools depend only on the label set, so group anchors by it.
    let mut groups: BTreeMap<LabelSet, Pools> = BTreeMap::new();
    for s in train {
        groups.entry(s.labels).or_insert_with(|| Pools {
            positive: (0..train.len()).filter(|&j| train[j].labels.intersects(s.labels)).collect(),
            negative: (0..train.len()).filter(|&j| !train[j].labels.intersects(s.labels)).collect(),
        });
    }
    for s in train {
        let pools = &groups[&s.labels];
        // The anchor always sits in its own positive pool.
        if pools.positive.len() < 2 {
            return Err(PairError::NoPositivePartner(s.id.clone()));
        }
        if pools.negative.is_empty() {
            return Err(PairError::NoNegativePartner(s.id.clone()));
        }
    }

    let per_iteration: Vec<Vec<ContrastivePair>> = (0..plan.num_iterations)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(iteration as u64);
            let mut out = Vec::with_capacity(train.len() * 2);
            for (i, s) in train.iter().enumerate() {
                let pools = &groups[&s.labels];
                let pos = draw_excluding(&pools.positive, i, &mut rng);
                let neg = draw_excluding(&pools.negative, i, &mut rng);
                out.push(ContrastivePair {
                    a_id: s.id.clone(),
                    b_id: train[pos].id.clone(),
                    polarity: Polarity::Positive,
                });
                out.push(ContrastivePair {
                    a_id: s.id.clone(),
                    b_id: train[neg].id.clone(),
                    polarity: Polarity::Negative,
                });
            }
            out
        })
        .collect();
    Ok(per_iteration.into_iter().flatten().collect())
}

/// TSV lines `a_id<TAB>b_id<TAB>1|0`, 1 for positive.
pub fn pairs_to_tsv(pairs: &[ContrastivePair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.a_id);
        out.push('\t');
        out.push_str(&p.b_id);
        out.push_str(match p.polarity {
            Polarity::Positive => "\t1\n",
            Polarity::Negative => "\t0\n",
        });
    }
    out
}

pub fn pairs_from_tsv(text: &str) -> Result<Vec<ContrastivePair>, PairError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| PairError::Parse { line: i + 1, message };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let polarity = match fields[2] {
                "1" => Polarity::Positive,
                "0" => Polarity::Negative,
                other => return Err(bad(format!("polarity must be 1 or 0, got `{other}`"))),
            };
            Ok(ContrastivePair { a_id: fields[0].into(), b_id: fields[1].into(), polarity })
        })
        .collect()
}

pub fn export_pairs(pairs: &[ContrastivePair], path: &Path) -> Result<(), PairError> {
    let mut file = fs::File::create(path)?;
    file.write_all(pairs_to_tsv(pairs).as_bytes())?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<ContrastivePair>, PairError> {
    pairs_from_tsv(&fs::read_to_string(path)?)
}
