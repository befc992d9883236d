//! Binary-outcome GLMs with logit and complementary log-log links.
//!
//! Maximum likelihood is by Fisher scoring (IRLS) with step-halving. Both links
//! use the expected information `X' W X` with `w = (dμ/dη)² / (μ(1-μ))`, which
//! is always positive semidefinite; for the logit link it coincides with the
//! observed information.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fitted probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Standardized-scale coefficient magnitude above which a failed fit is
/// reported as suspected separation.
pub const SEPARATION_BOUND: f64 = 15.0;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Logit,
    Cloglog,
}

impl LinkKind {
    pub const ALL: [LinkKind; 2] = [LinkKind::Logit, LinkKind::Cloglog];

    /// Mean function, clamped away from 0 and 1.
    pub fn inverse(self, eta: f64) -> f64 {
        let p = match self {
            LinkKind::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkKind::Cloglog => -(-eta.exp()).exp_m1(),
        };
        p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    /// dμ/dη, unclamped.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let a = (-eta.abs()).exp();
                a / ((1.0 + a) * (1.0 + a))
            }
            LinkKind::Cloglog => (eta - eta.exp()).exp(),
        }
    }

    /// d²μ/dη².
    pub fn mu_eta_deriv(self, eta: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let p = self.inverse(eta);
                self.mu_eta(eta) * (1.0 - 2.0 * p)
            }
            LinkKind::Cloglog => self.mu_eta(eta) * (1.0 - eta.exp()),
        }
    }

    /// The link function itself, η = g(μ).
    pub fn link(self, mu: f64) -> f64 {
        let mu = mu.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        match self {
            LinkKind::Logit => (mu / (1.0 - mu)).ln(),
            LinkKind::Cloglog => (-(-mu).ln_1p()).ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Logit => "logit",
            LinkKind::Cloglog => "cloglog",
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "cloglog" => Ok(LinkKind::Cloglog),
            other => Err(format!("unknown link `{other}` (expected logit or cloglog)")),
        }
    }
}

pub fn link_inverse(eta: f64, link: LinkKind) -> f64 {
    link.inverse(eta)
}

/// Bernoulli log-likelihood of `y` at linear predictor `eta`.
pub fn log_likelihood(y: &[f64], eta: &[f64], link: LinkKind) -> f64 {
    assert_eq!(y.len(), eta.len(), "y and eta lengths differ");
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let p = link.inverse(e);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum()
}

/// Binomial deviance of binary data; the saturated log-likelihood is zero.
pub fn binomial_deviance(y: &[f64], eta: &[f64], link: LinkKind) -> f64 {
    -2.0 * log_likelihood(y, eta, link)
}

pub fn aic_from(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

/// Per-observation factor `(y - μ) μ' / (μ(1-μ))`; the score is `X' r`.
pub fn score_residuals(y: &[f64], eta: &[f64], link: LinkKind) -> Vec<f64> {
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let p = link.inverse(e);
            (yi - p) * link.mu_eta(e) / (p * (1.0 - p))
        })
        .collect()
}

/// Expected-information IRLS weights.
pub fn irls_weights(eta: &[f64], link: LinkKind) -> Vec<f64> {
    eta.iter()
        .map(|&e| {
            let p = link.inverse(e);
            let d = link.mu_eta(e);
            d * d / (p * (1.0 - p))
        })
        .collect()
}

/// Gradient of the log-likelihood with respect to `beta`.
pub fn score(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, link: LinkKind) -> DVector<f64> {
    let eta = x * beta;
    let r = score_residuals(y, eta.as_slice(), link);
    x.tr_mul(&DVector::from_vec(r))
}

/// `X' diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for mut col in xw.column_iter_mut() {
        for (v, wi) in col.iter_mut().zip(w) {
            *v *= wi;
        }
    }
    x.tr_mul(&xw)
}

#[derive(Debug, Error, Clone)]
pub enum GlmError {
    #[error("IRLS did not converge after {iters} iterations (last max |step| {last_step:.3e})")]
    NonConvergence {
        iters: usize,
        last_step: f64,
        beta: Vec<f64>,
        loglik_trace: Vec<f64>,
    },
    #[error("suspected separation: term {term} has standardized coefficient {value:.2}")]
    SeparationSuspected { term: usize, value: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("outcome must be coded 0/1")]
    NonBinaryOutcome,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            max_halvings: 30,
        }
    }
}

/// An unpenalized maximum-likelihood fit. `beta[0]` is the intercept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmFit {
    pub link: LinkKind,
    pub terms: Vec<String>,
    pub beta: DVector<f64>,
    /// Inverse expected information at the optimum.
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    pub deviance: f64,
    pub aic: f64,
    pub converged: bool,
    pub iters: usize,
    pub n_obs: usize,
    pub loglik_trace: Vec<f64>,
}

impl GlmFit {
    pub fn n_params(&self) -> usize {
        self.beta.len()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.n_params())
            .map(|j| self.vcov[(j, j)].max(0.0).sqrt())
            .collect()
    }

    /// Replace the default term labels.
    pub fn with_terms(mut self, terms: Vec<String>) -> Self {
        assert_eq!(terms.len(), self.beta.len(), "term count");
        self.terms = terms;
        self
    }

    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.beta
    }
}

pub fn deviance(fit: &GlmFit) -> f64 {
    fit.deviance
}

pub fn aic(fit: &GlmFit) -> f64 {
    aic_from(fit.loglik, fit.n_params())
}

fn default_terms(p: usize) -> Vec<String> {
    std::iter::once(INTERCEPT.to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect()
}

/// Smallest eigenvalue of the column-normalized Gram matrix, as a rank test.
fn is_rank_deficient(x: &DMatrix<f64>) -> bool {
    if x.nrows() < x.ncols() {
        return true;
    }
    let g = x.tr_mul(x);
    let d: Vec<f64> = (0..g.nrows()).map(|j| g[(j, j)]).collect();
    if d.iter().any(|&v| v <= 0.0) {
        return true;
    }
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]).sqrt());
    let min_eig = scaled
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    min_eig < 1e-10
}

/// Decreases this small are floating-point noise, not a worse fit.
fn ll_slack(ll: f64) -> f64 {
    1e-12 * (1.0 + ll.abs())
}

fn separated_term(x: &DMatrix<f64>, beta: &DVector<f64>) -> Option<GlmError> {
    (1..x.ncols())
        .map(|j| (j, beta[j] * column_sd(x, j)))
        .find(|(_, v)| v.abs() > SEPARATION_BOUND)
        .map(|(term, value)| GlmError::SeparationSuspected { term, value })
}

fn column_sd(x: &DMatrix<f64>, j: usize) -> f64 {
    let col = x.column(j);
    let n = col.len() as f64;
    let m = col.sum() / n;
    (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Fit a binary GLM by IRLS. `x` carries a leading column of ones.
pub fn irls_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    link: LinkKind,
    opts: &IrlsOptions,
) -> Result<GlmFit, GlmError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(GlmError::Dimension(format!("{n} design rows vs {} outcomes", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(GlmError::NonBinaryOutcome);
    }
    if p == 0 || is_rank_deficient(x) {
        return Err(GlmError::RankDeficient);
    }

    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut beta = DVector::zeros(p);
    beta[0] = link.link(ybar);
    let mut eta = x * &beta;
    let mut ll = log_likelihood(y, eta.as_slice(), link);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iters = 0;
    let mut last_step = f64::INFINITY;

    while iters < opts.max_iter {
        iters += 1;
        let w = irls_weights(eta.as_slice(), link);
        let info = weighted_gram(x, &w);
        let u = x.tr_mul(&DVector::from_vec(score_residuals(y, eta.as_slice(), link)));
        let step = match info.cholesky() {
            Some(ch) => ch.solve(&u),
            None => return Err(separated_term(x, &beta).unwrap_or(GlmError::RankDeficient)),
        };
        last_step = step.amax();
        if last_step < opts.tol {
            beta += &step;
            eta = x * &beta;
            let new_ll = log_likelihood(y, eta.as_slice(), link);
            if new_ll >= ll - ll_slack(ll) {
                ll = new_ll;
            } else {
                // numerically at the optimum; keep the previous point
                beta -= &step;
                eta = x * &beta;
            }
            trace.push(ll);
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step * t;
            let cand_eta = x * &cand;
            let cand_ll = log_likelihood(y, cand_eta.as_slice(), link);
            if cand_ll >= ll - ll_slack(ll) {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(ll);
        if !accepted {
            // no ascent direction left at floating-point resolution
            converged = last_step * t < opts.tol;
            break;
        }
    }

    if !converged {
        if let Some(e) = separated_term(x, &beta) {
            return Err(e);
        }
        return Err(GlmError::NonConvergence {
            iters,
            last_step,
            beta: beta.as_slice().to_vec(),
            loglik_trace: trace,
        });
    }

    let w = irls_weights(eta.as_slice(), link);
    let info = weighted_gram(x, &w);
    let vcov = match info.clone().cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            (&inv + inv.transpose()) * 0.5
        }
        None => return Err(separated_term(x, &beta).unwrap_or(GlmError::RankDeficient)),
    };
    Ok(GlmFit {
        link,
        terms: default_terms(p),
        beta,
        vcov,
        loglik: ll,
        deviance: -2.0 * ll,
        aic: aic_from(ll, p),
        converged,
        iters,
        n_obs: n,
        loglik_trace: trace,
    })
}
