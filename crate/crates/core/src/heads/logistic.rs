//! L2-regularized binary logistic regression, fit with L-BFGS.
//!
//! Objective: `0.5 * ||w||^2 + C * sum_i log(1 + exp(-y_i (w . x_i + b)))`
//! with `y_i` in {-1, +1}. The bias is not regularized.

use serde::{Deserialize, Serialize};

use super::{check_binary_problem, dot, sigmoid, HeadError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub c: f64,
    pub max_iters: usize,
    /// Stop once the gradient's Euclidean norm falls to this value.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { c: 1.0, max_iters: 500, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl LogisticHead {
    pub fn zeros(dim: usize, c: f64) -> Self {
        LogisticHead { weights: vec![0.0; dim], bias: 0.0, c }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

/// `log(1 + exp(-m))` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Objective value and gradient `(d/dw, d/db)` at `(weights, bias)`.
pub fn objective_and_gradient(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[bool],
    c: f64,
) -> (f64, Vec<f64>, f64) {
    let mut value = 0.5 * dot(weights, weights);
    let mut grad_w = weights.to_vec();
    let mut grad_b = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let sign = if yi { 1.0 } else { -1.0 };
        let margin = sign * (dot(weights, xi) + bias);
        value += c * softplus_neg(margin);
        // d/dm log(1+exp(-m)) = -sigmoid(-m)
        let coef = -c * sign * sigmoid(-margin);
        for (g, v) in grad_w.iter_mut().zip(xi) {
            *g += coef * v;
        }
        grad_b += coef;
    }
    (value, grad_w, grad_b)
}

/// Result of a logistic fit, including the objective after every accepted step.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub head: LogisticHead,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_logistic(x: &[Vec<f64>], y: &[bool], config: &LogisticConfig) -> Result<LogisticHead, HeadError> {
    fit_logistic(x, y, config).map(|fit| fit.head)
}

pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], config: &LogisticConfig) -> Result<LogisticFit, HeadError> {
    let dim = check_binary_problem(x, y)?;
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(HeadError::InvalidParameter(format!("C must be positive, got {}", config.c)));
    }
    const MEMORY: usize = 10;
    let n_params = dim + 1;

    let eval = |theta: &[f64]| {
        let (f, gw, gb) = objective_and_gradient(&theta[..dim], theta[dim], x, y, config.c);
        let mut g = gw;
        g.push(gb);
        (f, g)
    };

    let mut theta = vec![0.0; n_params];
    let (mut f, mut g) = eval(&theta);
    if !f.is_finite() {
        return Err(HeadError::NonFinite);
    }
    let mut trace = vec![f];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut direction = lbfgs_direction(&g, &s_hist, &y_hist);
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if s_hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        // Armijo backtracking keeps the objective non-increasing.
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect();
            let (fc, gc) = eval(&candidate);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            // No further decrease is representable.
            converged = dot(&g, &g).sqrt() <= config.tol;
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        theta = next;
        f = f_next;
        g = g_next;
        trace.push(f);
    }
    if !converged && dot(&g, &g).sqrt() <= config.tol {
        converged = true;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(HeadError::NonFinite);
    }
    let bias = theta.pop().expect("bias slot");
    Ok(LogisticFit {
        head: LogisticHead { weights: theta, bias, c: config.c },
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qv, yv) in q.iter_mut().zip(&y_hist[i]) {
            *qv -= alpha[i] * yv;
        }
    }
    if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
        let gamma = dot(s, yv) / dot(yv, yv);
        for qv in &mut q {
            *qv *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qv, sv) in q.iter_mut().zip(&s_hist[i]) {
            *qv += (alpha[i] - beta) * sv;
        }
    }
    q.iter().map(|v| -v).collect()
}
