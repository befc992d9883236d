//! Variable selection: event-stratified k-fold CV for the lasso penalty,
//! per-imputation selection with a cross-imputation vote, and forward
//! stepwise AIC as the alternate selector.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::AnalysisMatrix;
use crate::glm::{binomial_deviance, irls_fit, GlmError, IrlsOptions, LinkKind};
use crate::lasso::{fit_path, lambda_grid, lambda_max, standardize, LassoError, LassoPath, PathOptions};
use crate::rng::rng_from_seed;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("cannot split {n} rows into {k} folds")]
    TooFewRows { n: usize, k: usize },
    #[error("no usable fold split after {attempts} attempts: {reason}")]
    FoldDegenerate { attempts: usize, reason: String },
    #[error("threshold {threshold} exceeds the number of imputations {m}")]
    BadThreshold { threshold: usize, m: usize },
    #[error("{failed} of {m} imputations failed; first failure: {first}")]
    TooManyFailures { failed: usize, m: usize, first: String },
    #[error("designs differ across imputations")]
    InconsistentDesigns,
    #[error("no imputed designs given")]
    Empty,
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error(transparent)]
    Glm(#[from] GlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Lasso,
    Stepwise,
}

impl Selector {
    pub const ALL: [Selector; 2] = [Selector::Lasso, Selector::Stepwise];

    /// Short label used in report column names and model tags.
    pub fn tag(self) -> &'static str {
        match self {
            Selector::Lasso => "lasso",
            Selector::Stepwise => "step",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Lasso => "lasso",
            Selector::Stepwise => "stepwise",
        })
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(Selector::Lasso),
            "stepwise" | "step" => Ok(Selector::Stepwise),
            other => Err(format!("unknown selector `{other}` (expected lasso or stepwise)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldWarning {
    /// Fewer events than folds, so some folds hold no event.
    DegenerateStratum { events: usize, k: usize },
}

/// Fold labels are `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
    pub warnings: Vec<FoldWarning>,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn event_counts(&self, y: &[f64]) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for (i, &f) in self.fold_of.iter().enumerate() {
            if y[i] == 1.0 {
                c[f] += 1;
            }
        }
        c
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &f in &self.fold_of {
            c[f] += 1;
        }
        c
    }
}

/// Shuffle events and non-events separately, then deal each stratum
/// round-robin. Non-events continue the deal where the events stopped, so
/// total fold sizes stay within one of each other as well.
pub fn make_stratified_folds(y: &[f64], k: usize, seed: u64) -> Result<FoldAssignment, SelectionError> {
    if k < 2 {
        return Err(SelectionError::BadK(k));
    }
    let n = y.len();
    if k > n {
        return Err(SelectionError::TooFewRows { n, k });
    }
    let mut rng = rng_from_seed(seed);
    let mut events: Vec<usize> = (0..n).filter(|&i| y[i] == 1.0).collect();
    let mut others: Vec<usize> = (0..n).filter(|&i| y[i] != 1.0).collect();
    events.shuffle(&mut rng);
    others.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (pos, &i) in events.iter().chain(others.iter()).enumerate() {
        fold_of[i] = pos % k;
    }
    let mut warnings = Vec::new();
    if events.len() < k {
        log::warn!("only {} events for {k} folds", events.len());
        warnings.push(FoldWarning::DegenerateStratum {
            events: events.len(),
            k,
        });
    }
    Ok(FoldAssignment {
        k,
        fold_of,
        seed,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub path: PathOptions,
    pub max_redeals: usize,
    /// Imputation `m` deals its folds with `seed + m * fold_seed_stride`;
    /// 0 reuses one deal everywhere.
    pub fold_seed_stride: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 3,
            seed: 0,
            path: PathOptions::default(),
            max_redeals: 10,
            fold_seed_stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Held-out deviance per observation, averaged over folds.
    pub mean_dev: Vec<f64>,
    pub se_dev: Vec<f64>,
    pub fold_dev: Vec<Vec<f64>>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub folds: FoldAssignment,
    pub fold_paths: Vec<LassoPath>,
    /// Full-data path down to the chosen λ.
    pub full_path: LassoPath,
    pub active: Vec<String>,
}

impl CvResult {
    /// Largest KKT residual over every fitted path point (folds and full data).
    pub fn max_kkt_violation(&self) -> f64 {
        self.fold_paths
            .iter()
            .chain(std::iter::once(&self.full_path))
            .flat_map(|p| p.kkt_violation.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn fold_problem(x: &AnalysisMatrix, folds: &FoldAssignment) -> Option<String> {
    for f in 0..folds.k {
        let train = x.subset_rows(&folds.train_rows(f));
        let events = train.n_events();
        if events == 0 || events == train.n() {
            return Some(format!("training fold {} has a single class", f + 1));
        }
        if let Err(e) = standardize(&train.x, &train.names) {
            return Some(format!("training fold {}: {e}", f + 1));
        }
    }
    None
}

/// Pick λ by minimum mean held-out deviance over stratified folds.
///
/// The grid is shared by all folds and anchored at the largest λ_max among
/// the full data and the training folds, so its first point is the null
/// model everywhere. Ties go to the smallest λ.
pub fn cv_choose_lambda(x: &AnalysisMatrix, link: LinkKind, opts: &CvOptions) -> Result<CvResult, SelectionError> {
    let full = standardize(&x.x, &x.names)?;
    let lmax_full = lambda_max(&full, &x.y, link)?;

    let mut folds = None;
    let mut reason = String::new();
    for attempt in 0..=opts.max_redeals {
        let f = make_stratified_folds(&x.y, opts.k, opts.seed.wrapping_add(attempt as u64))?;
        match fold_problem(x, &f) {
            None => {
                folds = Some(f);
                break;
            }
            Some(r) => reason = r,
        }
    }
    let folds = folds.ok_or(SelectionError::FoldDegenerate {
        attempts: opts.max_redeals + 1,
        reason,
    })?;

    let train_sets: Vec<_> = (0..folds.k)
        .map(|f| {
            let train = x.subset_rows(&folds.train_rows(f));
            let design = standardize(&train.x, &train.names)?;
            let lmax = lambda_max(&design, &train.y, link)?;
            Ok::<_, SelectionError>((train, design, lmax))
        })
        .collect::<Result<_, _>>()?;
    let anchor = train_sets.iter().fold(lmax_full, |a, t| a.max(t.2));
    let lambdas = match &opts.path.lambdas {
        Some(l) => l.clone(),
        None => {
            let ratio = opts
                .path
                .lambda_min_ratio
                .unwrap_or(if x.n() > x.p() { 1e-4 } else { 1e-2 });
            lambda_grid(anchor, opts.path.n_lambda, ratio)
        }
    };
    let path_opts = PathOptions {
        lambdas: Some(lambdas.clone()),
        ..opts.path.clone()
    };

    let mut fold_paths = Vec::with_capacity(folds.k);
    let mut fold_dev = Vec::with_capacity(folds.k);
    for (f, (train, design, _)) in train_sets.iter().enumerate() {
        let path = fit_path(design, &train.y, link, &path_opts)?;
        let test = x.subset_rows(&folds.test_rows(f));
        let dev: Vec<f64> = (0..lambdas.len())
            .map(|l| binomial_deviance(&test.y, &path.predict_eta(l, &test.x), link) / test.n() as f64)
            .collect();
        fold_paths.push(path);
        fold_dev.push(dev);
    }
    let k = folds.k as f64;
    let mean_dev: Vec<f64> = (0..lambdas.len())
        .map(|l| fold_dev.iter().map(|d| d[l]).sum::<f64>() / k)
        .collect();
    let se_dev: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let m = mean_dev[l];
            let var = fold_dev.iter().map(|d| (d[l] - m).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    let mut chosen_index = 0;
    for l in 0..lambdas.len() {
        if mean_dev[l].is_finite() && mean_dev[l] <= mean_dev[chosen_index] {
            chosen_index = l;
        }
    }
    let full_opts = PathOptions {
        lambdas: Some(lambdas[..=chosen_index].to_vec()),
        ..opts.path.clone()
    };
    let full_path = fit_path(&full, &x.y, link, &full_opts)?;
    let active = full_path.active_names(chosen_index);
    Ok(CvResult {
        chosen_lambda: lambdas[chosen_index],
        lambdas,
        mean_dev,
        se_dev,
        fold_dev,
        chosen_index,
        folds,
        fold_paths,
        full_path,
        active,
    })
}

/// Terms with at least `threshold` votes, in input order.
pub fn consensus_select(counts: &[(String, usize)], m: usize, threshold: usize) -> Result<Vec<String>, SelectionError> {
    if threshold > m {
        return Err(SelectionError::BadThreshold { threshold, m });
    }
    Ok(counts
        .iter()
        .filter(|(_, c)| *c >= threshold)
        .map(|(t, _)| t.clone())
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub method: Selector,
    pub link: LinkKind,
    pub m: usize,
    pub threshold: usize,
    /// Candidate terms in design order.
    pub terms: Vec<String>,
    /// Selected set per imputation; `None` where that imputation failed.
    pub per_imputation_active: Vec<Option<Vec<String>>>,
    pub counts: Vec<(String, usize)>,
    pub retained: Vec<String>,
    pub failures: Vec<(usize, String)>,
    /// Chosen λ per imputation (lasso only).
    pub chosen_lambdas: Vec<Option<f64>>,
}

impl SelectionResult {
    pub fn count_map(&self) -> BTreeMap<&str, usize> {
        self.counts.iter().map(|(t, c)| (t.as_str(), *c)).collect()
    }
}

fn check_designs(designs: &[AnalysisMatrix]) -> Result<(), SelectionError> {
    let first = designs.first().ok_or(SelectionError::Empty)?;
    if designs
        .iter()
        .any(|d| d.names != first.names || d.y != first.y)
    {
        return Err(SelectionError::InconsistentDesigns);
    }
    Ok(())
}

/// Active set and chosen λ of one imputation, or its error message.
type Outcome = Result<(Vec<String>, Option<f64>), String>;

fn aggregate(
    method: Selector,
    link: LinkKind,
    designs: &[AnalysisMatrix],
    threshold: usize,
    outcomes: Vec<Outcome>,
) -> Result<SelectionResult, SelectionError> {
    let m = designs.len();
    if threshold > m {
        return Err(SelectionError::BadThreshold { threshold, m });
    }
    let failures: Vec<(usize, String)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (i + 1, e.clone())))
        .collect();
    if failures.len() > m.div_ceil(2) {
        return Err(SelectionError::TooManyFailures {
            failed: failures.len(),
            m,
            first: failures[0].1.clone(),
        });
    }
    for (i, e) in &failures {
        log::warn!("{method} {link}: imputation {i} failed: {e}");
    }
    let terms = designs[0].names.clone();
    let counts: Vec<(String, usize)> = terms
        .iter()
        .map(|t| {
            let c = outcomes
                .iter()
                .filter(|r| matches!(r, Ok((a, _)) if a.contains(t)))
                .count();
            (t.clone(), c)
        })
        .collect();
    let retained = consensus_select(&counts, m, threshold)?;
    Ok(SelectionResult {
        method,
        link,
        m,
        threshold,
        terms,
        per_imputation_active: outcomes.iter().map(|r| r.as_ref().ok().map(|(a, _)| a.clone())).collect(),
        chosen_lambdas: outcomes.iter().map(|r| r.as_ref().ok().and_then(|(_, l)| *l)).collect(),
        counts,
        retained,
        failures,
    })
}

/// Run CV lasso on every imputed design (fold seed `seed + m` for the m-th)
/// and keep the terms active in at least `threshold` of them.
pub fn lasso_select(
    designs: &[AnalysisMatrix],
    link: LinkKind,
    opts: &CvOptions,
    threshold: usize,
) -> Result<(SelectionResult, Vec<Option<CvResult>>), SelectionError> {
    check_designs(designs)?;
    let runs: Vec<Result<CvResult, String>> = designs
        .par_iter()
        .enumerate()
        .map(|(m, d)| {
            let o = CvOptions {
                seed: opts.seed.wrapping_add((m as u64).wrapping_mul(opts.fold_seed_stride)),
                ..opts.clone()
            };
            cv_choose_lambda(d, link, &o).map_err(|e| e.to_string())
        })
        .collect();
    let outcomes = runs
        .iter()
        .map(|r| match r {
            Ok(cv) => Ok((cv.active.clone(), Some(cv.chosen_lambda))),
            Err(e) => Err(e.clone()),
        })
        .collect();
    let result = aggregate(Selector::Lasso, link, designs, threshold, outcomes)?;
    Ok((result, runs.into_iter().map(Result::ok).collect()))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepwiseResult {
    pub selected: Vec<String>,
    /// AIC of the current model after each accepted step, starting with the
    /// intercept-only model.
    pub aic_trace: Vec<f64>,
    pub skipped: Vec<(usize, String, String)>,
}

/// Forward selection by AIC from the intercept-only model. Each round adds the
/// candidate with the lowest AIC if it beats the current model; ties go to the
/// earliest column. Candidates whose fit fails are skipped for that round.
pub fn stepwise_aic(
    x: &AnalysisMatrix,
    link: LinkKind,
    candidates: &[String],
    irls: &IrlsOptions,
) -> Result<StepwiseResult, SelectionError> {
    let base = x.select(&[]).expect("empty selection");
    let mut current = irls_fit(&base.with_intercept(), &x.y, link, irls)?.aic;
    let mut selected: Vec<String> = Vec::new();
    let mut aic_trace = vec![current];
    let mut skipped = Vec::new();
    let cand_idx: Vec<usize> = candidates
        .iter()
        .filter_map(|c| x.index_of(c))
        .collect();
    let mut in_model: Vec<usize> = Vec::new();
    for round in 1.. {
        let mut best: Option<(usize, f64)> = None;
        for &j in &cand_idx {
            if in_model.contains(&j) {
                continue;
            }
            let mut cols = in_model.clone();
            cols.push(j);
            let sub = x.select_indices(&cols);
            match irls_fit(&sub.with_intercept(), &x.y, link, irls) {
                Ok(fit) => {
                    if best.is_none_or(|(_, a)| fit.aic < a) {
                        best = Some((j, fit.aic));
                    }
                }
                Err(e) => {
                    log::warn!("stepwise round {round}: skipping `{}`: {e}", x.names[j]);
                    skipped.push((round, x.names[j].clone(), e.to_string()));
                }
            }
        }
        match best {
            Some((j, a)) if a < current => {
                in_model.push(j);
                selected.push(x.names[j].clone());
                current = a;
                aic_trace.push(a);
            }
            _ => break,
        }
    }
    Ok(StepwiseResult {
        selected,
        aic_trace,
        skipped,
    })
}

/// Stepwise AIC on every imputed design, with the same vote as the lasso.
pub fn stepwise_select(
    designs: &[AnalysisMatrix],
    link: LinkKind,
    irls: &IrlsOptions,
    threshold: usize,
) -> Result<SelectionResult, SelectionError> {
    check_designs(designs)?;
    let outcomes = designs
        .par_iter()
        .map(|d| {
            stepwise_aic(d, link, &d.names, irls)
                .map(|r| (r.selected, None))
                .map_err(|e| e.to_string())
        })
        .collect();
    aggregate(Selector::Stepwise, link, designs, threshold, outcomes)
}
