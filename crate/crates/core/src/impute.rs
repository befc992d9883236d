//! Bootstrap-EM multiple imputation under a multivariate normal model.
//!
//! Each completed dataset comes from its own bootstrap resample: EM is run on
//! the resample to get `(mean, covariance)`, and every missing cell of the
//! original rows is then drawn from the conditional normal given that row's
//! observed cells. Observed cells are never touched.
//!
//! The EM works with the precision matrix `K = Σ⁻¹`. For a row with observed
//! block `o` and missing block `m`, the conditional of the missing cells is
//! `N(μ_m - K_mm⁻¹ K_mo (x_o - μ_o), K_mm⁻¹)`, so only the small `K_mm` block
//! is factorized per row.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{OnsetSeries, PanelDataset};
use crate::rng::{rng_from_seed, stream_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("column {0} has fewer than two observed values")]
    ColumnFullyMissing(usize),
    #[error("EM did not converge in {iters} iterations (last delta {last_delta:.3e})")]
    NonConvergence { iters: usize, last_delta: f64 },
    #[error("covariance is singular even after ridge correction")]
    Singular,
    #[error("at least two imputations are required, got {0}")]
    TooFewImputations(usize),
    #[error("onset series does not match the panel")]
    Misaligned,
    #[error("imputation {index}: {source}")]
    Job {
        index: usize,
        #[source]
        source: Box<ImputeError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Row-major matrix with missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<Option<f64>>,
}

impl IncompleteMatrix {
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self {
            nrows: rows.len(),
            ncols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_columns(cols: &[Vec<Option<f64>>]) -> Self {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for c in cols {
                data.push(c[i]);
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.data[i * self.ncols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = Some(v);
    }

    pub fn n_missing(&self) -> usize {
        self.data.iter().filter(|v| v.is_none()).count()
    }

    fn resample(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            nrows: idx.len(),
            ncols: self.ncols,
            data,
        }
    }

    fn observed_count(&self, j: usize) -> usize {
        (0..self.nrows).filter(|&i| self.get(i, j).is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnParams {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

/// Per-iteration record of one EM run. `loglik[i]` is the observed-data
/// log-likelihood at the parameters entering iteration `i`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmTrace {
    pub deltas: Vec<f64>,
    pub loglik: Vec<f64>,
    pub ridge_applied: bool,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }
}

/// Precision matrix and log-determinant of Σ, ridged if near-singular.
fn precision(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool), ImputeError> {
    let p = cov.nrows();
    let try_factor = |m: &DMatrix<f64>| -> Option<(DMatrix<f64>, f64)> {
        let ch = m.clone().cholesky()?;
        let l = ch.l_dirty();
        let diag: Vec<f64> = (0..p).map(|i| l[(i, i)]).collect();
        let max = diag.iter().fold(0.0f64, |a, &b| a.max(b));
        let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min <= 0.0 || (min / max).powi(2) < 1e-12 {
            return None;
        }
        let logdet = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        Some((ch.inverse(), logdet))
    };
    if let Some((k, ld)) = try_factor(cov) {
        return Ok((k, ld, false));
    }
    let eps = 1e-6 * cov.trace().max(f64::MIN_POSITIVE) / p as f64;
    let ridged = cov + DMatrix::identity(p, p) * eps;
    let (k, ld) = ridged
        .clone()
        .cholesky()
        .map(|ch| {
            let l = ch.l_dirty();
            let ld = 2.0 * (0..p).map(|i| l[(i, i)].ln()).sum::<f64>();
            (ch.inverse(), ld)
        })
        .ok_or(ImputeError::Singular)?;
    Ok((k, ld, true))
}

/// Conditional mean and covariance of the missing block of one row.
struct Conditional {
    missing: Vec<usize>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Contribution of the observed block to the log-likelihood.
    loglik: f64,
}

fn conditional(
    row: &[Option<f64>],
    mean: &DVector<f64>,
    prec: &DMatrix<f64>,
    logdet: f64,
) -> Result<Conditional, ImputeError> {
    let p = row.len();
    let missing: Vec<usize> = (0..p).filter(|&j| row[j].is_none()).collect();
    let observed: Vec<usize> = (0..p).filter(|&j| row[j].is_some()).collect();
    let d_o: Vec<f64> = observed.iter().map(|&j| row[j].unwrap() - mean[j]).collect();
    // d_oᵀ K_oo d_o
    let mut quad = 0.0;
    for (a, &ja) in observed.iter().enumerate() {
        for (b, &jb) in observed.iter().enumerate() {
            quad += d_o[a] * prec[(ja, jb)] * d_o[b];
        }
    }
    if missing.is_empty() {
        let loglik = -0.5 * (p as f64 * LN_2PI + logdet + quad);
        return Ok(Conditional {
            missing,
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
            loglik,
        });
    }
    let q = missing.len();
    let k_mm = DMatrix::from_fn(q, q, |a, b| prec[(missing[a], missing[b])]);
    // K_mo d_o
    let k_mo_d = DVector::from_fn(q, |a, _| {
        observed
            .iter()
            .zip(&d_o)
            .map(|(&jb, d)| prec[(missing[a], jb)] * d)
            .sum::<f64>()
    });
    let ch = k_mm.cholesky().ok_or(ImputeError::Singular)?;
    let l = ch.l_dirty();
    let logdet_kmm = 2.0 * (0..q).map(|i| l[(i, i)].ln()).sum::<f64>();
    let shift = ch.solve(&k_mo_d);
    let cov = ch.inverse();
    let cmean = DVector::from_fn(q, |a, _| mean[missing[a]] - shift[a]);
    let loglik = if observed.is_empty() {
        0.0
    } else {
        let quad_o = quad - k_mo_d.dot(&shift);
        -0.5 * (observed.len() as f64 * LN_2PI + logdet + logdet_kmm + quad_o)
    };
    Ok(Conditional {
        missing,
        mean: cmean,
        cov,
        loglik,
    })
}

/// EM estimate of a multivariate normal from data missing at random.
pub fn em_mvn(
    data: &IncompleteMatrix,
    opts: &EmOptions,
) -> Result<(MvnParams, EmTrace), ImputeError> {
    let (n, p) = (data.nrows(), data.ncols());
    for j in 0..p {
        if data.observed_count(j) < 2 {
            return Err(ImputeError::ColumnFullyMissing(j));
        }
    }
    // start from observed-cell means and a diagonal covariance
    let mut mean = DVector::zeros(p);
    let mut cov = DMatrix::zeros(p, p);
    for j in 0..p {
        let vals: Vec<f64> = (0..n).filter_map(|i| data.get(i, j)).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        mean[j] = m;
        cov[(j, j)] = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
    }

    let mut trace = EmTrace::default();
    for _ in 0..opts.max_iter {
        let (prec, logdet, ridged) = precision(&cov)?;
        trace.ridge_applied |= ridged;
        let mut t1 = DVector::<f64>::zeros(p);
        let mut t2 = DMatrix::<f64>::zeros(p, p);
        let mut loglik = 0.0;
        let mut xhat = vec![0.0; p];
        for i in 0..n {
            let row = data.row(i);
            let c = conditional(row, &mean, &prec, logdet)?;
            loglik += c.loglik;
            for j in 0..p {
                if let Some(v) = row[j] {
                    xhat[j] = v;
                }
            }
            for (a, &j) in c.missing.iter().enumerate() {
                xhat[j] = c.mean[a];
            }
            for a in 0..p {
                t1[a] += xhat[a];
                for b in 0..=a {
                    t2[(a, b)] += xhat[a] * xhat[b];
                }
            }
            for (a, &ja) in c.missing.iter().enumerate() {
                for (b, &jb) in c.missing.iter().enumerate() {
                    if jb <= ja {
                        t2[(ja, jb)] += c.cov[(a, b)];
                    }
                }
            }
        }
        let nf = n as f64;
        let new_mean = t1 / nf;
        let mut new_cov = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..=a {
                let v = t2[(a, b)] / nf - new_mean[a] * new_mean[b];
                new_cov[(a, b)] = v;
                new_cov[(b, a)] = v;
            }
        }
        let delta = (&new_mean - &mean)
            .amax()
            .max((&new_cov - &cov).amax());
        mean = new_mean;
        cov = new_cov;
        trace.deltas.push(delta);
        trace.loglik.push(loglik);
        if delta < opts.tol {
            return Ok((MvnParams { mean, covariance: cov }, trace));
        }
    }
    Err(ImputeError::NonConvergence {
        iters: opts.max_iter,
        last_delta: trace.deltas.last().copied().unwrap_or(f64::NAN),
    })
}

/// Fill every missing cell with a draw from its conditional normal.
pub fn draw_missing(
    data: &IncompleteMatrix,
    params: &MvnParams,
    rng: &mut Rng,
) -> Result<IncompleteMatrix, ImputeError> {
    let (prec, logdet, _) = precision(&params.covariance)?;
    let mut out = data.clone();
    for i in 0..data.nrows() {
        let row = data.row(i);
        if row.iter().all(Option::is_some) {
            continue;
        }
        let c = conditional(row, &params.mean, &prec, logdet)?;
        let q = c.missing.len();
        let l = c
            .cov
            .clone()
            .cholesky()
            .ok_or(ImputeError::Singular)?
            .unpack();
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = &c.mean + l * z;
        for (a, &j) in c.missing.iter().enumerate() {
            out.set(i, j, draw[a]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeOptions {
    pub em: EmOptions,
    /// Attempts at drawing a bootstrap sample in which every column has at
    /// least two observed values.
    pub max_resamples: usize,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self {
            em: EmOptions {
                max_iter: 1000,
                tol: 1e-4,
            },
            max_resamples: 50,
        }
    }
}

/// M completed copies of a panel.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub datasets: Vec<PanelDataset>,
    pub seeds: Vec<u64>,
    pub traces: Vec<EmTrace>,
}

impl ImputationSet {
    pub fn m(&self) -> usize {
        self.datasets.len()
    }

    /// One JSON object per EM iteration per imputation.
    pub fn write_em_log<W: Write>(&self, mut w: W) -> Result<(), ImputeError> {
        #[derive(Serialize)]
        struct Line<'a> {
            imputation: usize,
            seed: u64,
            iteration: usize,
            delta: f64,
            loglik: f64,
            ridge_applied: &'a bool,
        }
        for (k, (trace, seed)) in self.traces.iter().zip(&self.seeds).enumerate() {
            for (it, (delta, ll)) in trace.deltas.iter().zip(&trace.loglik).enumerate() {
                let line = Line {
                    imputation: k + 1,
                    seed: *seed,
                    iteration: it + 1,
                    delta: *delta,
                    loglik: *ll,
                    ridge_applied: &trace.ridge_applied,
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Imputation model variables: every covariate, then the onset outcome and the
/// year. Columns are centered and scaled by their observed moments.
struct ModelMatrix {
    matrix: IncompleteMatrix,
    center: Vec<f64>,
    scale: Vec<f64>,
    n_covariates: usize,
}

fn model_matrix(data: &PanelDataset, onset: &OnsetSeries) -> ModelMatrix {
    let mut cols: Vec<Vec<Option<f64>>> = data.columns.iter().map(|c| c.values.clone()).collect();
    cols.push(onset.as_f64());
    cols.push(data.years.iter().map(|&y| Some(f64::from(y))).collect());
    let mut center = Vec::with_capacity(cols.len());
    let mut scale = Vec::with_capacity(cols.len());
    for col in &mut cols {
        let obs: Vec<f64> = col.iter().flatten().copied().collect();
        let (m, s) = if obs.is_empty() {
            (0.0, 1.0)
        } else {
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            let v = obs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / obs.len() as f64;
            (m, if v > 0.0 { v.sqrt() } else { 1.0 })
        };
        for v in col.iter_mut().flatten() {
            *v = (*v - m) / s;
        }
        center.push(m);
        scale.push(s);
    }
    ModelMatrix {
        matrix: IncompleteMatrix::from_columns(&cols),
        center,
        scale,
        n_covariates: data.columns.len(),
    }
}

fn impute_one(
    data: &PanelDataset,
    model: &ModelMatrix,
    seed: u64,
    opts: &ImputeOptions,
) -> Result<(PanelDataset, EmTrace), ImputeError> {
    let n = model.matrix.nrows();
    let mut rng = rng_from_seed(seed);
    let mut sample = None;
    let mut last_err = None;
    for _ in 0..opts.max_resamples.max(1) {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let boot = model.matrix.resample(&idx);
        if let Some(j) = (0..boot.ncols()).find(|&j| boot.observed_count(j) < 2) {
            last_err = Some(ImputeError::ColumnFullyMissing(j));
            continue;
        }
        sample = Some(boot);
        break;
    }
    let sample = sample.ok_or_else(|| last_err.unwrap_or(ImputeError::ColumnFullyMissing(0)))?;
    let (params, trace) = em_mvn(&sample, &opts.em)?;
    let filled = draw_missing(&model.matrix, &params, &mut rng)?;
    let mut out = data.clone();
    for (j, col) in out.columns.iter_mut().enumerate().take(model.n_covariates) {
        for (i, v) in col.values.iter_mut().enumerate() {
            if v.is_none() {
                let z = filled.get(i, j).expect("drawn");
                *v = Some(model.center[j] + model.scale[j] * z);
            }
        }
    }
    Ok((out, trace))
}

/// Produce `m` completed datasets. Imputation `k` uses the seed stream
/// `("impute", k)` of `root_seed`.
pub fn bootstrap_impute(
    data: &PanelDataset,
    onset: &OnsetSeries,
    m: usize,
    root_seed: u64,
    opts: &ImputeOptions,
) -> Result<ImputationSet, ImputeError> {
    if m < 2 {
        return Err(ImputeError::TooFewImputations(m));
    }
    if onset.y.len() != data.n_rows() {
        return Err(ImputeError::Misaligned);
    }
    let seeds: Vec<u64> = (0..m as u64).map(|k| stream_seed(root_seed, "impute", k)).collect();
    let any_missing = data.columns.iter().any(|c| c.n_missing() > 0);
    if !any_missing {
        return Ok(ImputationSet {
            datasets: vec![data.clone(); m],
            seeds,
            traces: vec![EmTrace::default(); m],
        });
    }
    let model = model_matrix(data, onset);
    let results: Vec<_> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            impute_one(data, &model, seed, opts).map_err(|e| ImputeError::Job {
                index: k + 1,
                source: Box::new(e),
            })
        })
        .collect();
    let mut datasets = Vec::with_capacity(m);
    let mut traces = Vec::with_capacity(m);
    for r in results {
        let (d, t) = r?;
        datasets.push(d);
        traces.push(t);
    }
    Ok(ImputationSet {
        datasets,
        seeds,
        traces,
    })
}
