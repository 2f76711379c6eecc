//! A small separable corpus covering all 19 labels of the three languages.
//!
//! Every label owns six words that no other label uses. Single-label
//! sentences draw four of their label's words; multi-label sentences take four
//! words from each of two neighbouring labels. The shared filler word
//! `comment` carries no label information.

use std::path::PathBuf;

use crate::corpus::{taxonomy_for, CommentSentence, LabelSet, Language};

const WORDS: [&str; 6] = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];

/// Single-label sentences per label.
pub const SINGLE_PER_LABEL: usize = 12;
/// Two-label sentences per neighbouring label pair.
pub const MULTI_PER_PAIR: usize = 4;

fn label_word(language: Language, label_name: &str, k: usize) -> String {
    format!("{}{}{}", language.as_str(), label_name.replace('_', ""), WORDS[k % WORDS.len()])
}

pub fn synthetic_corpus() -> Vec<CommentSentence> {
    let mut out = Vec::new();
    for language in Language::ALL {
        let taxonomy = taxonomy_for(language);
        let n = taxonomy.len();
        let mut next_id = 0;
        let mut push = |text: String, labels: LabelSet| {
            out.push(CommentSentence { id: format!("{language}-{next_id:03}"), language, text, labels });
            next_id += 1;
        };
        for j in 0..SINGLE_PER_LABEL {
            for (label, name) in taxonomy.labels.iter().enumerate() {
                let words: Vec<String> = (0..4).map(|k| label_word(language, name, j + k)).collect();
                push(format!("comment {}", words.join(" ")), LabelSet::single(label));
            }
        }
        for j in 0..MULTI_PER_PAIR {
            for label in 0..n {
                let other = (label + 1) % n;
                let mut words: Vec<String> = (0..4).map(|k| label_word(language, taxonomy.labels[label], j + k)).collect();
                words.extend((0..4).map(|k| label_word(language, taxonomy.labels[other], j + k + 2)));
                let labels = LabelSet::from_indices([label, other]).expect("indices within taxonomy");
                push(format!("{} comment", words.join(" ")), labels);
            }
        }
    }
    out
}

/// The checked-in copy of [`synthetic_corpus`].
pub fn synthetic_fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("synthetic.jsonl")
}

/// Hashed-embedding + logistic configuration over the checked-in fixture,
/// with runtime pinned so that every output is reproducible.
pub fn synthetic_config_text() -> String {
    format!(
        "[run]\nname = synthetic\nseed = 7\n\n[data]\ncorpus = {}\nsplit_ratio = 0.75\n\n\
         [featurize]\nkind = hashed\ndim = 256\n\n[head]\nkind = logistic\nc = 100.0\n\n\
         [cost]\nruntime = fixed:0.05\n",
        synthetic_fixture_path().display()
    )
}
