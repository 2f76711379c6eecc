//! Reference implementations written independently of the library code.

use std::cell::Cell;

use ccbench_core::corpus::LabelSet;
use ccbench_core::cost::EncoderSpec;

/// Scalar arithmetic that counts every multiply and add it performs.
#[derive(Default)]
pub struct Counter {
    ops: Cell<u64>,
}

impl Counter {
    pub fn mul(&self, a: f64, b: f64) -> f64 {
        self.ops.set(self.ops.get() + 1);
        a * b
    }

    pub fn add(&self, a: f64, b: f64) -> f64 {
        self.ops.set(self.ops.get() + 1);
        a + b
    }

    pub fn ops(&self) -> u64 {
        self.ops.get()
    }
}

pub type Matrix = Vec<Vec<f64>>;

pub fn filled(rows: usize, cols: usize, seed: u64) -> Matrix {
    (0..rows)
        .map(|i| (0..cols).map(|j| ((i * 31 + j * 17) as u64 ^ seed) as f64 * 1e-3).collect())
        .collect()
}

/// Textbook triple loop. Each inner step is one multiply plus one add.
pub fn matmul(c: &Counter, a: &Matrix, b: &Matrix) -> Matrix {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for t in 0..k {
                acc = c.add(acc, c.mul(a[i][t], b[t][j]));
            }
            out[i][j] = acc;
        }
    }
    out
}

fn transpose(a: &Matrix) -> Matrix {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

fn columns(a: &Matrix, from: usize, to: usize) -> Matrix {
    a.iter().map(|row| row[from..to].to_vec()).collect()
}

/// Runs a real encoder forward pass for one sentence, counting only the
/// scalar operations inside matrix products. Softmax, norms and activations
/// are applied uncounted so the data flow stays realistic.
pub fn instrumented_encoder(spec: &EncoderSpec, seq_len: usize) -> u64 {
    let c = Counter::default();
    let (d, f) = (spec.hidden_dim as usize, spec.ffn_dim as usize);
    let h = spec.heads as usize;
    assert_eq!(d % h, 0, "heads must divide the hidden size");
    let dh = d / h;
    let mut x = filled(seq_len, d, 1);
    for layer in 0..spec.layers as usize {
        let w = |s: u64| filled(d, d, s + layer as u64 * 10);
        let q = matmul(&c, &x, &w(2));
        let k = matmul(&c, &x, &w(3));
        let v = matmul(&c, &x, &w(4));
        let mut context = vec![vec![0.0; d]; seq_len];
        for head in 0..h {
            let (lo, hi) = (head * dh, (head + 1) * dh);
            let mut scores = matmul(&c, &columns(&q, lo, hi), &transpose(&columns(&k, lo, hi)));
            for row in &mut scores {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|s| (s - max).exp()).sum();
                for s in row.iter_mut() {
                    *s = (*s - max).exp() / z;
                }
            }
            let mixed = matmul(&c, &scores, &columns(&v, lo, hi));
            for (i, row) in mixed.iter().enumerate() {
                context[i][lo..hi].copy_from_slice(row);
            }
        }
        let attended = matmul(&c, &context, &w(5));
        let up = matmul(&c, &attended, &filled(d, f, 6));
        let relu: Matrix = up.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect();
        x = matmul(&c, &relu, &filled(f, d, 7));
    }
    if spec.out_dim != spec.hidden_dim {
        matmul(&c, &x, &filled(d, spec.out_dim as usize, 8));
    }
    c.ops()
}

/// Counts per label by looking at every sentence, then F1 as `2tp / (2tp + fp + fn)`.
pub struct BruteScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn brute_force_scores(truth: &[LabelSet], predicted: &[LabelSet], label: usize) -> BruteScore {
    let mut tp = 0u32;
    let mut predicted_pos = 0u32;
    let mut actual_pos = 0u32;
    for i in 0..truth.len() {
        let t = truth[i].iter().any(|l| l == label);
        let p = predicted[i].iter().any(|l| l == label);
        tp += (t && p) as u32;
        predicted_pos += p as u32;
        actual_pos += t as u32;
    }
    let div = |a: u32, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let fp_plus_fn = (predicted_pos - tp) + (actual_pos - tp);
    BruteScore {
        precision: div(tp, predicted_pos),
        recall: div(tp, actual_pos),
        f1: div(2 * tp, 2 * tp + fp_plus_fn),
    }
}

/// Central differences of `f` at `x`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Multinomial Naive Bayes posterior computed with plain products of
/// probabilities, straight from training documents given as token-count rows.
pub fn naive_bayes_posterior(docs: &[Vec<u32>], classes: &[usize], alpha: f64, query: &[u32]) -> Vec<(usize, f64)> {
    let mut distinct: Vec<usize> = classes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let v = query.len();
    let mut joint = Vec::new();
    for &class in &distinct {
        let members: Vec<&Vec<u32>> = docs.iter().zip(classes).filter(|(_, &c)| c == class).map(|(d, _)| d).collect();
        let prior = members.len() as f64 / docs.len() as f64;
        let total: f64 = members.iter().flat_map(|d| d.iter()).map(|&c| c as f64).sum();
        let mut p = prior;
        for (tok, &count) in query.iter().enumerate() {
            let tok_count: f64 = members.iter().map(|d| d[tok] as f64).sum();
            let theta = (tok_count + alpha) / (total + alpha * v as f64);
            for _ in 0..count {
                p *= theta;
            }
        }
        joint.push((class, p));
    }
    let z: f64 = joint.iter().map(|(_, p)| p).sum();
    joint.into_iter().map(|(c, p)| (c, p / z)).collect()
}

/// Character-by-character tokenizer: strip comment markers, lowercase, and
/// keep maximal alphanumeric runs.
pub fn reference_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::new();
    let mut i = 0;
    while i < chars.len() {
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if rest.starts_with("/**") {
            cleaned.push(' ');
            i += 3;
        } else if rest.starts_with("*/") || rest.starts_with("//") {
            cleaned.push(' ');
            i += 2;
        } else if chars[i] == '#' {
            cleaned.push(' ');
            i += 1;
        } else {
            cleaned.push(chars[i]);
            i += 1;
        }
    }
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in cleaned.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}
