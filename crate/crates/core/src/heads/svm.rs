//! Soft-margin kernel SVM trained by sequential minimal optimization.
//!
//! The dual `min 0.5 a^T Q a - e^T a` subject to `0 <= a_i <= C`,
//! `y^T a = 0` (with `Q_ij = y_i y_j K(x_i, x_j)`) is solved two variables at
//! a time, choosing the working pair by maximal violation for the first index
//! and second-order gain for the second. Probabilities come from a Platt
//! sigmoid fit on the training decision values.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_binary_problem, dot, HeadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Linear, Kernel::Poly, Kernel::Rbf, Kernel::Sigmoid];

    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Poly => "poly",
            Kernel::Rbf => "rbf",
            Kernel::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Kernel::Linear),
            "poly" | "polynomial" => Ok(Kernel::Poly),
            "rbf" => Ok(Kernel::Rbf),
            "sigmoid" => Ok(Kernel::Sigmoid),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

/// Kernel hyperparameters. `gamma: None` resolves to `1 / dim` at training time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub degree: u32,
    pub gamma: Option<f64>,
    pub coef0: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { degree: 3, gamma: None, coef0: 0.0 }
    }
}

/// A kernel with every parameter resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub kind: Kernel,
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl KernelFn {
    pub fn resolve(kind: Kernel, params: &KernelParams, dim: usize) -> Self {
        KernelFn {
            kind,
            degree: params.degree,
            gamma: params.gamma.unwrap_or(1.0 / dim.max(1) as f64),
            coef0: params.coef0,
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            Kernel::Linear => dot(a, b),
            Kernel::Poly => (self.gamma * dot(a, b) + self.coef0).powi(self.degree as i32),
            Kernel::Rbf => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * sq).exp()
            }
            Kernel::Sigmoid => (self.gamma * dot(a, b) + self.coef0).tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: Kernel,
    pub params: KernelParams,
    /// Maximal KKT violation tolerated at convergence.
    pub tol: f64,
    /// Iteration cap; `None` means `max(100_000, 100 * n)`.
    pub max_iter: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: Kernel::Rbf,
            params: KernelParams::default(),
            tol: 1e-3,
            max_iter: None,
        }
    }
}

/// Platt sigmoid `P(y=1 | f) = 1 / (1 + exp(a f + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHead {
    pub kernel: KernelFn,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i` of each support vector, in `(0, C]`.
    pub alphas: Vec<f64>,
    /// `+1.0` / `-1.0` class of each support vector.
    pub signs: Vec<f64>,
    pub bias: f64,
    pub platt: PlattScaling,
}

impl SvmHead {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.signs))
            .map(|(sv, (a, y))| a * y * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.platt.probability(self.decision(x))
    }

    /// `sum_i alpha_i y_i`; zero at a feasible dual point.
    pub fn dual_balance(&self) -> f64 {
        self.alphas.iter().zip(&self.signs).map(|(a, y)| a * y).sum()
    }
}

/// Diagnostics of an SMO run.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub head: SvmHead,
    /// Full dual vector, one entry per training point.
    pub alphas: Vec<f64>,
    pub iterations: usize,
    /// Maximal KKT violation `m(a) - M(a)` at exit.
    pub kkt_gap: f64,
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    kernel: KernelFn,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], kernel: KernelFn) -> Self {
        // Roughly 256 MiB of cached Q rows.
        let capacity = ((256usize << 20) / (8 * x.len().max(1))).max(2);
        KernelRows { x, y, kernel, rows: vec![None; x.len()], order: VecDeque::new(), capacity }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = &self.x[i];
            let yi = self.y[i];
            let row = self
                .x
                .iter()
                .zip(self.y)
                .map(|(xj, yj)| yi * yj * self.kernel.eval(xi, xj))
                .collect();
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("row cached above")
    }
}

const TAU: f64 = 1e-12;

pub fn train_svm(x: &[Vec<f64>], y: &[bool], config: &SvmConfig) -> Result<SvmHead, HeadError> {
    fit_svm(x, y, config).map(|fit| fit.head)
}

pub fn fit_svm(x: &[Vec<f64>], y: &[bool], config: &SvmConfig) -> Result<SvmFit, HeadError> {
    let dim = check_binary_problem(x, y)?;
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(HeadError::InvalidParameter(format!("C must be positive, got {}", config.c)));
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        return Err(HeadError::InvalidParameter("tol must be positive".into()));
    }
    let n = x.len();
    let c = config.c;
    let kernel = KernelFn::resolve(config.kernel, &config.params, dim);
    let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let diag: Vec<f64> = x.iter().map(|xi| kernel.eval(xi, xi)).collect();
    let max_iter = config.max_iter.unwrap_or_else(|| (100 * n).max(100_000));

    let mut rows = KernelRows::new(x, &ys, kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;

    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;

    let kkt_gap = loop {
        // First index: maximal violation over I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = if ys[t] > 0.0 {
                (!at_upper(alpha[t])).then(|| -grad[t])
            } else {
                (!at_lower(alpha[t])).then_some(grad[t])
            };
            if let Some(v) = v {
                if v > g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else { break 0.0 };

        let q_i = rows.row(i).to_vec();
        let mut g_max2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            let (eligible, grad_diff, violation, quad) = if ys[t] > 0.0 {
                (
                    !at_lower(alpha[t]),
                    g_max + grad[t],
                    grad[t],
                    diag[i] + diag[t] - 2.0 * ys[i] * q_i[t],
                )
            } else {
                (
                    !at_upper(alpha[t]),
                    g_max - grad[t],
                    -grad[t],
                    diag[i] + diag[t] + 2.0 * ys[i] * q_i[t],
                )
            };
            if !eligible {
                continue;
            }
            g_max2 = g_max2.max(violation);
            if grad_diff > 0.0 {
                let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj < obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let gap = g_max + g_max2;
        let Some(j) = j_sel else { break gap.max(0.0) };
        if gap < config.tol {
            break gap;
        }
        if iterations >= max_iter {
            return Err(HeadError::NoConvergence { iterations })
        }
        iterations += 1;

        let q_j = rows.row(j).to_vec();
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_ai, old_aj);
        if ys[i] != ys[j] {
            let quad = (diag[i] + diag[j] + 2.0 * q_i[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * q_i[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (dai, daj) = (ai - old_ai, aj - old_aj);
        for k in 0..n {
            grad[k] += q_i[k] * dai + q_j[k] * daj;
        }
    };

    // Offset from free vectors, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if at_upper(alpha[t]) {
            if ys[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if at_lower(alpha[t]) {
            if ys[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 { free_sum / free_count as f64 } else { (ub + lb) / 2.0 };

    let mut head = SvmHead {
        kernel,
        c,
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        signs: Vec::new(),
        bias: -rho,
        platt: PlattScaling { a: 0.0, b: 0.0 },
    };
    for t in 0..n {
        if alpha[t] > 0.0 {
            head.support_vectors.push(x[t].clone());
            head.alphas.push(alpha[t]);
            head.signs.push(ys[t]);
        }
    }
    if !head.bias.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(HeadError::NonFinite);
    }
    let decisions: Vec<f64> = x.iter().map(|xi| head.decision(xi)).collect();
    head.platt = fit_platt(&decisions, y);
    Ok(SvmFit { head, alphas: alpha, iterations, kkt_gap })
}

/// Newton fit of the Platt sigmoid with regularized targets.
pub fn fit_platt(decisions: &[f64], y: &[bool]) -> PlattScaling {
    let prior1 = y.iter().filter(|&&b| b).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = y.iter().map(|&b| if b { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(f, t)| {
                let z = f * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (f, t) in decisions.iter().zip(&targets) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    PlattScaling { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_self_similarity_is_one() {
        let k = KernelFn::resolve(Kernel::Rbf, &KernelParams { gamma: Some(0.7), ..Default::default() }, 3);
        for x in [[0.0, 0.0, 0.0], [1.5, -2.0, 3.0]] {
            assert_eq!(k.eval(&x, &x), 1.0);
        }
    }

    #[test]
    fn two_point_linear_margin() {
        let x = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let y = vec![false, true];
        let config = SvmConfig { c: 1.0, kernel: Kernel::Linear, tol: 1e-9, ..Default::default() };
        let fit = fit_svm(&x, &y, &config).unwrap();
        assert!(fit.head.decision(&x[0]) < 0.0);
        assert!(fit.head.decision(&x[1]) > 0.0);

        // Both duals must be equal; brute-force the 1-D dual 2a - 4a^2 on a grid.
        let best = (0..=100_000)
            .map(|k| k as f64 / 100_000.0)
            .max_by(|a, b| (2.0 * a - 4.0 * a * a).total_cmp(&(2.0 * b - 4.0 * b * b)))
            .unwrap();
        for a in &fit.alphas {
            assert!((a - best).abs() < 1e-4, "alpha {a} vs grid optimum {best}");
        }
        assert!((fit.head.decision(&x[0]) + 1.0).abs() < 1e-6);
        assert!((fit.head.decision(&x[1]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dual_constraints_hold_for_every_kernel() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 2.0, (t * 1.3).cos(), (i % 5) as f64 * 0.2]
            })
            .collect();
        let y: Vec<bool> = x.iter().map(|v| v[0] + 0.5 * v[1] > 0.1).collect();
        for kernel in Kernel::ALL {
            let config = SvmConfig { c: 0.5, kernel, ..Default::default() };
            let fit = fit_svm(&x, &y, &config).unwrap();
            assert!(fit.alphas.iter().all(|&a| (0.0..=0.5).contains(&a)));
            assert!(fit.head.dual_balance().abs() < 1e-6);
            assert!(fit.kkt_gap <= config.tol, "{kernel}: gap {}", fit.kkt_gap);
            assert!(!fit.head.support_vectors.is_empty());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![false, false, true, true];
        let config = SvmConfig { c: 1.0, ..Default::default() };
        assert_eq!(train_svm(&x, &y, &config).unwrap(), train_svm(&x, &y, &config).unwrap());
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let config = SvmConfig { max_iter: Some(1), tol: 1e-12, ..Default::default() };
        assert!(matches!(fit_svm(&x, &y, &config), Err(HeadError::NoConvergence { .. })));
    }

    #[test]
    fn platt_orders_probabilities() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..12).map(|i| i >= 6).collect();
        let head = train_svm(&x, &y, &SvmConfig { kernel: Kernel::Linear, ..Default::default() }).unwrap();
        assert!(head.predict_proba(&[11.0]) > 0.5);
        assert!(head.predict_proba(&[0.0]) < 0.5);
    }
}
