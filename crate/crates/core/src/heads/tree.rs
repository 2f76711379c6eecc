//! Axis-aligned binary trees, bagged random forests and gradient boosting
//! on the logistic loss.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, HeadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl DecisionTree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Clone, Copy)]
enum Criterion {
    /// Binary targets in {0, 1}; leaves store the positive fraction.
    Gini,
    /// Real targets; leaves store the mean.
    SquaredError,
}

struct Grower<'a, R: Rng> {
    x: &'a [Vec<f64>],
    target: &'a [f64],
    criterion: Criterion,
    max_depth: usize,
    max_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Grower<'_, R> {
    fn impurity_sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(s, q), &r| {
            let t = self.target[r];
            (s + t, q + t * t)
        })
    }

    /// Criterion cost of a node with `n` rows, target sum `s` and square sum `q`.
    fn cost(&self, n: f64, s: f64, q: f64) -> f64 {
        if n == 0.0 {
            return 0.0;
        }
        match self.criterion {
            Criterion::Gini => {
                let p = s / n;
                n * 2.0 * p * (1.0 - p)
            }
            Criterion::SquaredError => q - s * s / n,
        }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len() as f64;
        let (s, q) = self.impurity_sums(rows);
        self.nodes.push(Node::Leaf { value: s / n });
        if depth >= self.max_depth || rows.len() < 2 {
            return id;
        }
        let parent = self.cost(n, s, q);
        if parent <= 1e-12 {
            return id;
        }

        let dim = self.x[0].len();
        let mut features: Vec<usize> = if self.max_features >= dim {
            (0..dim).collect()
        } else {
            sample(self.rng, dim, self.max_features).into_vec()
        };
        features.sort_unstable();

        // (cost, feature, threshold); the first strictly better split wins.
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features {
            rows.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut ls, mut lq) = (0.0, 0.0);
            for k in 0..rows.len() - 1 {
                let t = self.target[rows[k]];
                ls += t;
                lq += t * t;
                let here = self.x[rows[k]][f];
                let next = self.x[rows[k + 1]][f];
                if here == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let cost = self.cost(nl, ls, lq) + self.cost(n - nl, s - ls, q - lq);
                if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                    let mut threshold = here + (next - here) / 2.0;
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some((cost, f, threshold));
                }
            }
        }
        let Some((cost, feature, threshold)) = best else { return id };
        if cost >= parent - 1e-12 {
            return id;
        }

        rows.sort_by(|&a, &b| {
            (self.x[a][feature] > threshold)
                .cmp(&(self.x[b][feature] > threshold))
                .then(a.cmp(&b))
        });
        let split_at = rows.partition_point(|&r| self.x[r][feature] <= threshold);
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

fn grow_tree<R: Rng>(
    x: &[Vec<f64>],
    target: &[f64],
    rows: &mut [usize],
    criterion: Criterion,
    max_depth: usize,
    max_features: usize,
    rng: &mut R,
) -> DecisionTree {
    let mut grower = Grower { x, target, criterion, max_depth, max_features, rng, nodes: Vec::new() };
    grower.grow(rows, 0);
    DecisionTree { nodes: grower.nodes, max_depth }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// Candidate features per split; `None` means `floor(sqrt(dim))`, at least 1.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 9, seed: 0, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHead {
    pub trees: Vec<DecisionTree>,
    pub max_depth: usize,
    pub seed: u64,
}

impl ForestHead {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean of the trees' leaf positive fractions.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Each tree is grown on its own bootstrap sample with Gini splits over a
/// random feature subset drawn per node.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], config: &ForestConfig) -> Result<ForestHead, HeadError> {
    if config.n_trees == 0 {
        return Err(HeadError::InvalidParameter("n_trees must be at least 1".into()));
    }
    if config.max_depth == 0 {
        return Err(HeadError::InvalidParameter("max_depth must be at least 1".into()));
    }
    let dim = super::check_problem(x, y.len())?;
    let target: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let max_features = config
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
        .clamp(1, dim.max(1));
    let n = x.len();
    let trees = (0..config.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(x, &target, &mut rows, Criterion::Gini, config.max_depth, max_features, &mut rng)
        })
        .collect();
    Ok(ForestHead { trees, max_depth: config.max_depth, seed: config.seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostedConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for BoostedConfig {
    fn default() -> Self {
        BoostedConfig { rounds: 100, max_depth: 3, shrinkage: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedHead {
    pub initial_log_odds: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub trees: Vec<DecisionTree>,
}

impl BoostedHead {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.initial_log_odds + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

#[derive(Debug, Clone)]
pub struct BoostedFit {
    pub head: BoostedHead,
    /// Mean training log-loss before round 1 and after every round.
    pub loss_trace: Vec<f64>,
}

pub fn log_loss(y: &[bool], raw: &[f64]) -> f64 {
    y.iter()
        .zip(raw)
        .map(|(&yi, &f)| {
            // -log sigmoid(+-f), overflow-free
            let m = if yi { f } else { -f };
            if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() }
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Newton step `sum r / sum p (1 - p)` for one leaf.
pub fn newton_leaf_value(residuals: &[f64], probabilities: &[f64]) -> f64 {
    let num: f64 = residuals.iter().sum();
    let den: f64 = probabilities.iter().map(|p| p * (1.0 - p)).sum();
    if den.abs() < 1e-150 { 0.0 } else { num / den }
}

pub fn train_boosted(x: &[Vec<f64>], y: &[bool], config: &BoostedConfig) -> Result<BoostedHead, HeadError> {
    fit_boosted(x, y, config).map(|fit| fit.head)
}

/// Round `t` fits a squared-error regression tree to the residuals
/// `y_i - p_i` and replaces its leaves by Newton steps. A leaf value is halved
/// until it does not increase the loss of the rows it holds, so the training
/// loss never goes up.
pub fn fit_boosted(x: &[Vec<f64>], y: &[bool], config: &BoostedConfig) -> Result<BoostedFit, HeadError> {
    if config.max_depth == 0 {
        return Err(HeadError::InvalidParameter("max_depth must be at least 1".into()));
    }
    if !(config.shrinkage > 0.0 && config.shrinkage <= 1.0) {
        return Err(HeadError::InvalidParameter(format!(
            "shrinkage must lie in (0, 1], got {}",
            config.shrinkage
        )));
    }
    let dim = super::check_problem(x, y.len())?;
    let n = x.len();
    let positives = y.iter().filter(|&&b| b).count() as f64;
    let base = (positives / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let initial_log_odds = (base / (1.0 - base)).ln();
    let mut raw = vec![initial_log_odds; n];
    let mut trace = vec![log_loss(y, &raw)];
    let mut trees = Vec::with_capacity(config.rounds);
    // Feature subsampling is off for boosting, so the rng is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    for _ in 0..config.rounds {
        let probs: Vec<f64> = raw.iter().map(|&f| sigmoid(f)).collect();
        let residuals: Vec<f64> = y
            .iter()
            .zip(&probs)
            .map(|(&yi, p)| if yi { 1.0 } else { 0.0 } - p)
            .collect();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut tree = grow_tree(x, &residuals, &mut rows, Criterion::SquaredError, config.max_depth, dim, &mut rng);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
        for (i, xi) in x.iter().enumerate() {
            members[tree.leaf_index(xi)].push(i);
        }
        for (node, rows) in tree.nodes.iter_mut().zip(&members) {
            let Node::Leaf { value } = node else { continue };
            if rows.is_empty() {
                *value = 0.0;
                continue;
            }
            let r: Vec<f64> = rows.iter().map(|&i| residuals[i]).collect();
            let p: Vec<f64> = rows.iter().map(|&i| probs[i]).collect();
            let leaf_y: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
            let before: Vec<f64> = rows.iter().map(|&i| raw[i]).collect();
            let loss_before = log_loss(&leaf_y, &before);
            let mut gamma = newton_leaf_value(&r, &p);
            for _ in 0..60 {
                let after: Vec<f64> = before.iter().map(|f| f + config.shrinkage * gamma).collect();
                if log_loss(&leaf_y, &after) <= loss_before {
                    break;
                }
                gamma *= 0.5;
            }
            let after: Vec<f64> = before.iter().map(|f| f + config.shrinkage * gamma).collect();
            if log_loss(&leaf_y, &after) > loss_before {
                gamma = 0.0;
            }
            *value = gamma;
        }
        for (f, xi) in raw.iter_mut().zip(x) {
            *f += config.shrinkage * tree.predict(xi);
        }
        trace.push(log_loss(y, &raw));
        trees.push(tree);
    }
    Ok(BoostedFit {
        head: BoostedHead {
            initial_log_odds,
            shrinkage: config.shrinkage,
            max_depth: config.max_depth,
            trees,
        },
        loss_trace: trace,
    })
}
