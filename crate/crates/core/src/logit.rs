//! Multinomial logit by damped Newton, with Wald tests and backward
//! elimination.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Action;

const MAX_ITERATIONS: usize = 100;
const LL_TOLERANCE: f64 = 1e-8;
const GRADIENT_TOLERANCE: f64 = 1e-7;
/// Largest plausible swing of a linear predictor over the data; beyond it the
/// fitted probabilities saturate and the data are (quasi-)separated.
const SEPARATION_SPAN: f64 = 40.0;

/// The likelihood of a multinomial logit with an intercept, parameterized as
/// one coefficient row per non-baseline class.
#[derive(Debug, Clone)]
pub struct LogitProblem {
    /// Rows with a leading 1 for the intercept.
    design: Vec<Vec<f64>>,
    /// Class index per row, `0..classes`.
    outcomes: Vec<usize>,
    classes: usize,
    baseline: usize,
}

impl LogitProblem {
    pub fn new(x: &[Vec<f64>], outcomes: &[usize], classes: usize, baseline: usize) -> Result<Self> {
        if x.len() != outcomes.len() {
            return Err(Error::Alignment(alloc::format!("{} rows vs {} outcomes", x.len(), outcomes.len())));
        }
        if classes < 2 || baseline >= classes || outcomes.iter().any(|&y| y >= classes) {
            return Err(Error::InvalidArgument("outcome index out of range".into()));
        }
        let p = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("ragged or non-finite design matrix".into()));
        }
        let design = x
            .iter()
            .map(|r| core::iter::once(1.0).chain(r.iter().copied()).collect())
            .collect();
        Ok(LogitProblem { design, outcomes: outcomes.to_vec(), classes, baseline })
    }

    /// Coefficients per equation, intercept included.
    pub fn width(&self) -> usize {
        self.design.first().map_or(1, Vec::len)
    }

    pub fn parameter_count(&self) -> usize {
        (self.classes - 1) * self.width()
    }

    /// Equation index of a class, `None` for the baseline.
    fn equation(&self, class: usize) -> Option<usize> {
        match class.cmp(&self.baseline) {
            core::cmp::Ordering::Less => Some(class),
            core::cmp::Ordering::Equal => None,
            core::cmp::Ordering::Greater => Some(class - 1),
        }
    }

    /// Linear predictors and class probabilities of one row.
    fn probabilities(&self, row: &[f64], beta: &[f64]) -> (Vec<f64>, f64) {
        let w = self.width();
        let mut eta = alloc::vec![0.0; self.classes];
        for c in 0..self.classes {
            if let Some(e) = self.equation(c) {
                eta[c] = row.iter().zip(&beta[e * w..(e + 1) * w]).map(|(x, b)| x * b).sum();
            }
        }
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = eta.iter().map(|e| libm::exp(e - m)).sum();
        let log_norm = m + libm::log(z);
        (eta.iter().map(|e| libm::exp(e - log_norm)).collect(), log_norm)
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let w = self.width();
        self.design
            .iter()
            .zip(&self.outcomes)
            .map(|(row, &y)| {
                let (_, log_norm) = self.probabilities(row, beta);
                let eta_y = self
                    .equation(y)
                    .map_or(0.0, |e| row.iter().zip(&beta[e * w..(e + 1) * w]).map(|(x, b)| x * b).sum());
                eta_y - log_norm
            })
            .sum()
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut g = alloc::vec![0.0; self.parameter_count()];
        for (row, &y) in self.design.iter().zip(&self.outcomes) {
            let (pi, _) = self.probabilities(row, beta);
            for c in 0..self.classes {
                if let Some(e) = self.equation(c) {
                    let r = if c == y { 1.0 } else { 0.0 } - pi[c];
                    for (j, x) in row.iter().enumerate() {
                        g[e * w + j] += r * x;
                    }
                }
            }
        }
        g
    }

    /// Observed information, the negated Hessian.
    pub fn information(&self, beta: &[f64]) -> DMatrix<f64> {
        let w = self.width();
        let n = self.parameter_count();
        let mut info = DMatrix::zeros(n, n);
        for row in &self.design {
            let (pi, _) = self.probabilities(row, beta);
            for a in 0..self.classes {
                let Some(ea) = self.equation(a) else { continue };
                for b in 0..self.classes {
                    let Some(eb) = self.equation(b) else { continue };
                    let k = pi[a] * (if a == b { 1.0 } else { 0.0 } - pi[b]);
                    for i in 0..w {
                        for j in 0..w {
                            info[(ea * w + i, eb * w + j)] += k * row[i] * row[j];
                        }
                    }
                }
            }
        }
        info
    }

    fn column_span(&self, j: usize) -> f64 {
        let (lo, hi) = self
            .design
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        (hi - lo).max(if j == 0 { 1.0 } else { 0.0 })
    }
}

/// Fitted model. Row `k` of every table belongs to `outcomes[k]`; column 0
/// is the intercept and column `j + 1` is `feature_names[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub feature_names: Vec<String>,
    pub baseline: Action,
    pub outcomes: Vec<Action>,
    pub coefficients: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub p_values: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_max_norm: f64,
}

impl LogitModel {
    /// Smallest p-value of feature `j` across the outcome equations.
    pub fn feature_p_value(&self, j: usize) -> f64 {
        self.p_values.iter().map(|r| r[j + 1]).fold(f64::INFINITY, f64::min)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

/// Two-sided Wald p-value of a coefficient.
pub fn wald_p_value(coef: f64, std_error: f64) -> f64 {
    if !(std_error > 0.0) {
        return if coef == 0.0 { 1.0 } else { 0.0 };
    }
    let z = (coef / std_error).abs();
    libm::erfc(z / core::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Maximizes the likelihood from zero by Newton steps with step halving.
/// Returns the coefficients, iterations and final gradient max-norm.
pub fn newton_fit(problem: &LogitProblem) -> Result<(Vec<f64>, usize, f64)> {
    let n = problem.parameter_count();
    let mut beta = alloc::vec![0.0; n];
    let mut ll = problem.log_likelihood(&beta);
    for iter in 1..=MAX_ITERATIONS {
        let g = problem.gradient(&beta);
        let info = problem.information(&beta);
        let chol = info.cholesky().ok_or(Error::RankDeficient)?;
        let gv = DVector::from_vec(g);
        let step = chol.solve(&gv);
        // Below this predicted gain the likelihood cannot resolve the step
        // against summation noise, so the full step is taken.
        let predicted = 0.5 * gv.dot(&step);
        let noise = 1e-12 * libm::fabs(ll).max(1.0);
        let mut t = 1.0;
        let (next, next_ll) = loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let cll = problem.log_likelihood(&cand);
            if cll >= ll - noise || predicted < noise || t < 1e-10 {
                break (cand, cll);
            }
            t *= 0.5;
        };
        let gain = next_ll - ll;
        beta = next;
        ll = next_ll;
        let gmax = problem.gradient(&beta).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gain.abs() < LL_TOLERANCE && gmax < GRADIENT_TOLERANCE {
            return Ok((beta, iter, gmax));
        }
    }
    Err(Error::NonConvergence(alloc::format!("no convergence after {MAX_ITERATIONS} Newton iterations")))
}

/// Fits a multinomial logit of `outcomes` on the named feature columns of
/// `x`, contrasting every other observed action with `baseline`.
pub fn fit_multinomial_logit(feature_names: &[String], x: &[Vec<f64>], outcomes: &[Action], baseline: Action) -> Result<LogitModel> {
    let mut labels: Vec<Action> = outcomes.to_vec();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::NoContrast);
    }
    let base = labels
        .iter()
        .position(|&a| a == baseline)
        .ok_or_else(|| Error::InvalidArgument(alloc::format!("baseline {baseline} does not occur")))?;
    if x.first().is_some_and(|r| r.len() != feature_names.len()) {
        return Err(Error::InvalidArgument("feature names do not match the columns".into()));
    }
    let y: Vec<usize> = outcomes.iter().map(|a| labels.iter().position(|l| l == a).expect("label")).collect();
    let problem = LogitProblem::new(x, &y, labels.len(), base)?;
    let (beta, iterations, gmax) = newton_fit(&problem)?;

    let w = problem.width();
    for e in 0..labels.len() - 1 {
        for j in 0..w {
            if (beta[e * w + j] * problem.column_span(j)).abs() > SEPARATION_SPAN {
                let name = if j == 0 { "intercept" } else { feature_names[j - 1].as_str() };
                return Err(Error::NonConvergence(alloc::format!(
                    "coefficient of {name} diverges ({:.3}); outcomes look separated",
                    beta[e * w + j]
                )));
            }
        }
    }
    let cov = problem.information(&beta).cholesky().ok_or(Error::RankDeficient)?.inverse();
    let outcome_labels: Vec<Action> = labels.iter().copied().filter(|&a| a != baseline).collect();
    let mut coefficients = Vec::new();
    let mut std_errors = Vec::new();
    let mut p_values = Vec::new();
    for e in 0..outcome_labels.len() {
        let c: Vec<f64> = beta[e * w..(e + 1) * w].to_vec();
        let s: Vec<f64> = (0..w).map(|j| libm::sqrt(cov[(e * w + j, e * w + j)].max(0.0))).collect();
        p_values.push(c.iter().zip(&s).map(|(&c, &s)| wald_p_value(c, s)).collect());
        coefficients.push(c);
        std_errors.push(s);
    }
    Ok(LogitModel {
        feature_names: feature_names.to_vec(),
        baseline,
        outcomes: outcome_labels,
        coefficients,
        std_errors,
        p_values,
        log_likelihood: problem.log_likelihood(&beta),
        iterations,
        gradient_max_norm: gmax,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub feature: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub retained: Vec<String>,
    pub model: LogitModel,
    pub log: Vec<EliminationStep>,
    /// The model fitted in every round, the first on all features.
    pub rounds: Vec<LogitModel>,
}

/// Repeatedly drops the feature with the largest p-value while it exceeds
/// `alpha`. Features named in `keep` are never dropped.
pub fn backward_eliminate(
    feature_names: &[String],
    x: &[Vec<f64>],
    outcomes: &[Action],
    baseline: Action,
    alpha: f64,
    keep: &[String],
) -> Result<Elimination> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut active: Vec<usize> = (0..feature_names.len()).collect();
    let mut log = Vec::new();
    let mut rounds = Vec::new();
    loop {
        let names: Vec<String> = active.iter().map(|&j| feature_names[j].clone()).collect();
        let cols: Vec<Vec<f64>> = x.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
        let model = fit_multinomial_logit(&names, &cols, outcomes, baseline)?;
        let worst = (0..names.len())
            .filter(|&k| !keep.contains(&names[k]))
            .map(|k| (k, model.feature_p_value(k)))
            .fold(None, |acc: Option<(usize, f64)>, (k, p)| match acc {
                Some((_, bp)) if bp >= p => acc,
                _ => Some((k, p)),
            });
        rounds.push(model.clone());
        match worst {
            Some((k, p)) if p > alpha => {
                log.push(EliminationStep { feature: names[k].clone(), p_value: p });
                active.remove(k);
            }
            _ => return Ok(Elimination { retained: names, model, log, rounds }),
        }
    }
}
