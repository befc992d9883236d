//! L1-penalized binary GLMs along a decreasing λ path.
//!
//! Objective on the standardized scale:
//!
//! ```text
//!   F(b0, β) = -loglik(b0, β) / n + λ ‖β‖₁
//! ```
//!
//! Each outer iteration forms the IRLS quadratic approximation of the
//! log-likelihood at the current point and minimizes the penalized quadratic by
//! cyclic coordinate descent (active set first, then a full sweep to catch
//! violators). The resulting move is accepted with step-halving on `F`, so `F`
//! never increases across outer iterations. The intercept is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

use crate::glm::{irls_weights, log_likelihood, score_residuals, LinkKind, INTERCEPT};

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("column `{0}` is constant on the estimation rows")]
    ConstantColumn(String),
    #[error("outcome is constant; both classes are needed")]
    DegenerateOutcome,
    #[error("lambda sequence must be non-negative and strictly decreasing")]
    BadLambdas,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Column-standardized covariates (population variance) and the transform
/// back to the original scale.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    pub xs: DMatrix<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub names: Vec<String>,
}

impl StandardizedDesign {
    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn p(&self) -> usize {
        self.xs.ncols()
    }

    pub fn destandardize(&self) -> DMatrix<f64> {
        let mut x = self.xs.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = *v * self.sds[j] + self.means[j];
            }
        }
        x
    }

    /// Map `(b0, β)` on the standardized scale to original-scale coefficients.
    pub fn to_original(&self, b0: f64, beta: &[f64]) -> DVector<f64> {
        let p = self.p();
        let mut out = DVector::zeros(p + 1);
        let mut intercept = b0;
        for j in 0..p {
            out[j + 1] = beta[j] / self.sds[j];
            intercept -= out[j + 1] * self.means[j];
        }
        out[0] = intercept;
        out
    }

    fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.xs.as_slice()[j * n..(j + 1) * n]
    }
}

pub fn standardize(x: &DMatrix<f64>, names: &[String]) -> Result<StandardizedDesign, LassoError> {
    let (n, p) = x.shape();
    if names.len() != p {
        return Err(LassoError::Dimension(format!("{p} columns vs {} names", names.len())));
    }
    let mut xs = x.clone();
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + m.abs())) {
            return Err(LassoError::ConstantColumn(names[j].clone()));
        }
        for v in col.iter_mut() {
            *v = (*v - m) / sd;
        }
        means.push(m);
        sds.push(sd);
    }
    Ok(StandardizedDesign {
        xs,
        means,
        sds,
        names: names.to_vec(),
    })
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn check_binary(y: &[f64]) -> Result<f64, LassoError> {
    let events = y.iter().filter(|&&v| v == 1.0).count();
    if events == 0 || events == y.len() {
        return Err(LassoError::DegenerateOutcome);
    }
    Ok(events as f64 / y.len() as f64)
}

/// Gradient of `loglik / n` with respect to the standardized coefficients.
fn penalized_gradient(design: &StandardizedDesign, y: &[f64], eta: &[f64], link: LinkKind) -> Vec<f64> {
    let r = score_residuals(y, eta, link);
    let n = design.n() as f64;
    (0..design.p())
        .map(|j| design.col(j).iter().zip(&r).map(|(x, ri)| x * ri).sum::<f64>() / n)
        .collect()
}

/// Smallest λ at which the intercept-only model satisfies every KKT
/// condition: `max_j |∂(loglik/n)/∂β_j|` at the null fit. For the logit link
/// this is `max_j |<x_j, y - ȳ>| / n`.
pub fn lambda_max(design: &StandardizedDesign, y: &[f64], link: LinkKind) -> Result<f64, LassoError> {
    let ybar = check_binary(y)?;
    let eta0 = vec![link.link(ybar); y.len()];
    Ok(penalized_gradient(design, y, &eta0, link)
        .into_iter()
        .fold(0.0, |a, g| a.max(g.abs())))
}

/// `n_lambda` log-spaced values from `lmax` down to `lmax * min_ratio`.
pub fn lambda_grid(lmax: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * min_ratio).ln());
    let mut grid: Vec<f64> = (0..n_lambda)
        .map(|k| (hi + (lo - hi) * k as f64 / (n_lambda - 1) as f64).exp())
        .collect();
    // exp(ln x) can land an ulp below x
    grid[0] = lmax;
    grid[n_lambda - 1] = lmax * min_ratio;
    grid
}

#[derive(Debug, Clone)]
pub struct PathOptions {
    /// Explicit λ sequence; a log-spaced grid is built when `None`.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambda: usize,
    /// Defaults to 1e-4 when n > p and 1e-2 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            lambdas: None,
            n_lambda: 100,
            lambda_min_ratio: None,
            tol: 1e-7,
            max_outer: 100,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoPath {
    pub link: LinkKind,
    pub names: Vec<String>,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    /// Original-scale coefficients, intercept first.
    pub coefs: Vec<DVector<f64>>,
    /// Standardized-scale `(b0, β)`.
    pub std_coefs: Vec<DVector<f64>>,
    pub active_sets: Vec<Vec<usize>>,
    pub converged: Vec<bool>,
    /// Largest KKT residual at each λ.
    pub kkt_violation: Vec<f64>,
    /// Penalized objective after each outer iteration, per λ.
    pub objective_traces: Vec<Vec<f64>>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn active_names(&self, k: usize) -> Vec<String> {
        self.active_sets[k].iter().map(|&j| self.names[j].clone()).collect()
    }

    /// Original-scale linear predictor at path point `k`.
    pub fn predict_eta(&self, k: usize, x: &DMatrix<f64>) -> Vec<f64> {
        let c = &self.coefs[k];
        (0..x.nrows())
            .map(|i| c[0] + (0..x.ncols()).map(|j| x[(i, j)] * c[j + 1]).sum::<f64>())
            .collect()
    }

    /// Long-format dump: `lambda, term, coefficient`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LassoError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["lambda", "term", "coefficient"])?;
        for (lam, coef) in self.lambdas.iter().zip(&self.coefs) {
            for (j, c) in coef.iter().enumerate() {
                let term = if j == 0 { INTERCEPT } else { self.names[j - 1].as_str() };
                w.write_record([format!("{lam:e}"), term.to_string(), format!("{c:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Penalized-objective value on the standardized scale.
pub fn penalized_objective(
    design: &StandardizedDesign,
    y: &[f64],
    link: LinkKind,
    b0: f64,
    beta: &[f64],
    lambda: f64,
) -> f64 {
    let eta = linear_predictor(design, b0, beta);
    -log_likelihood(y, &eta, link) / design.n() as f64
        + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn linear_predictor(design: &StandardizedDesign, b0: f64, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![b0; design.n()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (e, x) in eta.iter_mut().zip(design.col(j)) {
                *e += b * x;
            }
        }
    }
    eta
}

/// Coordinate descent on `(1/2n) Σ w (z - b0 - xβ)² + λ‖β‖₁`, starting from
/// `(b0, β)`; `resid` holds `z - b0 - xβ` and is kept in sync.
struct Quadratic<'a> {
    design: &'a StandardizedDesign,
    w: Vec<f64>,
    /// Σ w x_j² / n
    xw2: Vec<f64>,
    sw: f64,
    lambda: f64,
}

impl Quadratic<'_> {
    fn sweep(&self, b0: &mut f64, beta: &mut [f64], resid: &mut [f64], coords: &[usize]) -> f64 {
        let n = self.design.n() as f64;
        let mut max_change: f64 = 0.0;
        for &j in coords {
            let x = self.design.col(j);
            let g = x
                .iter()
                .zip(self.w.iter().zip(resid.iter()))
                .map(|(xi, (wi, ri))| xi * wi * ri)
                .sum::<f64>()
                / n;
            let old = beta[j];
            let new = soft_threshold(g + self.xw2[j] * old, self.lambda) / self.xw2[j];
            let d = new - old;
            if d != 0.0 {
                beta[j] = new;
                for (r, xi) in resid.iter_mut().zip(x) {
                    *r -= d * xi;
                }
                max_change = max_change.max(d.abs());
            }
        }
        let d0 = self.w.iter().zip(resid.iter()).map(|(w, r)| w * r).sum::<f64>() / n / self.sw;
        if d0 != 0.0 {
            *b0 += d0;
            for r in resid.iter_mut() {
                *r -= d0;
            }
            max_change = max_change.max(d0.abs());
        }
        max_change
    }

    fn solve(&self, b0: &mut f64, beta: &mut [f64], resid: &mut [f64], tol: f64, max_sweeps: usize) -> usize {
        let all: Vec<usize> = (0..beta.len()).collect();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            if self.sweep(b0, beta, resid, &all) < tol {
                break;
            }
            let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < max_sweeps {
                sweeps += 1;
                if self.sweep(b0, beta, resid, &active) < tol {
                    break;
                }
            }
        }
        sweeps
    }
}

struct PointFit {
    b0: f64,
    beta: Vec<f64>,
    converged: bool,
    objective: Vec<f64>,
}

fn fit_at_lambda(
    design: &StandardizedDesign,
    y: &[f64],
    link: LinkKind,
    lambda: f64,
    start_b0: f64,
    start_beta: &[f64],
    opts: &PathOptions,
) -> PointFit {
    let n = design.n();
    let mut b0 = start_b0;
    let mut beta = start_beta.to_vec();
    let mut f = penalized_objective(design, y, link, b0, &beta, lambda);
    let mut objective = vec![f];
    let mut converged = false;
    for _ in 0..opts.max_outer {
        let eta = linear_predictor(design, b0, &beta);
        let w = irls_weights(&eta, link);
        let resid: Vec<f64> = eta
            .iter()
            .zip(y)
            .zip(&w)
            .map(|((&e, &yi), &wi)| {
                let p = link.inverse(e);
                // working response minus the current fit: (y - μ) / μ'
                if wi > 0.0 {
                    (yi - p) / link.mu_eta(e)
                } else {
                    0.0
                }
            })
            .collect();
        let xw2: Vec<f64> = (0..design.p())
            .map(|j| {
                design
                    .col(j)
                    .iter()
                    .zip(&w)
                    .map(|(x, wi)| wi * x * x)
                    .sum::<f64>()
                    / n as f64
                    + 1e-300
            })
            .collect();
        let sw = w.iter().sum::<f64>() / n as f64 + 1e-300;
        let quad = Quadratic {
            design,
            w,
            xw2,
            sw,
            lambda,
        };
        let (mut nb0, mut nbeta, mut r) = (b0, beta.clone(), resid);
        quad.solve(&mut nb0, &mut nbeta, &mut r, opts.tol, opts.max_sweeps);

        // step-halving on the true objective
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let cb0 = b0 + t * (nb0 - b0);
            let cbeta: Vec<f64> = beta.iter().zip(&nbeta).map(|(o, nw)| o + t * (nw - o)).collect();
            let cf = penalized_objective(design, y, link, cb0, &cbeta, lambda);
            if cf <= f {
                accepted = Some((cb0, cbeta, cf));
                break;
            }
            t *= 0.5;
        }
        let Some((cb0, cbeta, cf)) = accepted else {
            converged = (nb0 - b0)
                .abs()
                .max(nbeta.iter().zip(&beta).fold(0.0, |a, (x, y)| a.max((x - y).abs())))
                * t
                < opts.tol;
            break;
        };
        let change = (cb0 - b0)
            .abs()
            .max(cbeta.iter().zip(&beta).fold(0.0, |a, (x, y)| a.max((x - y).abs())));
        b0 = cb0;
        beta = cbeta;
        f = cf;
        objective.push(f);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    PointFit {
        b0,
        beta,
        converged,
        objective,
    }
}

/// KKT residual: for active j, `|g_j - λ sign(β_j)|`; for inactive j, the
/// excess `max(|g_j| - λ, 0)`.
pub fn kkt_residual(
    design: &StandardizedDesign,
    y: &[f64],
    link: LinkKind,
    b0: f64,
    beta: &[f64],
    lambda: f64,
) -> f64 {
    let eta = linear_predictor(design, b0, beta);
    let g = penalized_gradient(design, y, &eta, link);
    g.iter()
        .zip(beta)
        .map(|(&gj, &bj)| {
            if bj != 0.0 {
                (gj - lambda * bj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Fit the whole path with warm starts.
pub fn fit_path(
    design: &StandardizedDesign,
    y: &[f64],
    link: LinkKind,
    opts: &PathOptions,
) -> Result<LassoPath, LassoError> {
    if y.len() != design.n() {
        return Err(LassoError::Dimension(format!("{} rows vs {} outcomes", design.n(), y.len())));
    }
    let ybar = check_binary(y)?;
    let lmax = lambda_max(design, y, link)?;
    let lambdas = match &opts.lambdas {
        Some(l) => {
            if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite())
                || l.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(LassoError::BadLambdas);
            }
            l.clone()
        }
        None => {
            let ratio = opts
                .lambda_min_ratio
                .unwrap_or(if design.n() > design.p() { 1e-4 } else { 1e-2 });
            lambda_grid(lmax, opts.n_lambda, ratio)
        }
    };

    let p = design.p();
    let null_b0 = link.link(ybar);
    let mut b0 = null_b0;
    let mut beta = vec![0.0; p];
    let mut path = LassoPath {
        link,
        names: design.names.clone(),
        lambda_max: lmax,
        lambdas: lambdas.clone(),
        coefs: Vec::with_capacity(lambdas.len()),
        std_coefs: Vec::with_capacity(lambdas.len()),
        active_sets: Vec::with_capacity(lambdas.len()),
        converged: Vec::with_capacity(lambdas.len()),
        kkt_violation: Vec::with_capacity(lambdas.len()),
        objective_traces: Vec::with_capacity(lambdas.len()),
    };
    for &lambda in &lambdas {
        let (converged, trace) = if lambda >= lmax {
            // the null model is the exact solution
            b0 = null_b0;
            beta.iter_mut().for_each(|b| *b = 0.0);
            (true, vec![penalized_objective(design, y, link, b0, &beta, lambda)])
        } else {
            let fit = fit_at_lambda(design, y, link, lambda, b0, &beta, opts);
            b0 = fit.b0;
            beta = fit.beta;
            if !fit.converged {
                log::warn!("lasso path: no convergence at lambda {lambda:e}");
            }
            (fit.converged, fit.objective)
        };
        let mut std = DVector::zeros(p + 1);
        std[0] = b0;
        std.rows_mut(1, p).copy_from_slice(&beta);
        path.coefs.push(design.to_original(b0, &beta));
        path.std_coefs.push(std);
        path.active_sets.push((0..p).filter(|&j| beta[j] != 0.0).collect());
        path.converged.push(converged);
        path.kkt_violation
            .push(kkt_residual(design, y, link, b0, &beta, lambda));
        path.objective_traces.push(trace);
    }
    Ok(path)
}
