//! Post-selection inference: unpenalized refits per imputation, Rubin pooling
//! and average marginal effects with delta-method standard errors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::design::AnalysisMatrix;
use crate::glm::{irls_fit, GlmError, GlmFit, IrlsOptions, LinkKind};
use crate::panel::ColumnKind;

pub const Z90: f64 = 1.644_853_626_951_472_2;
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("imputation {index}: {source}")]
    Fit {
        index: usize,
        #[source]
        source: GlmError,
    },
    #[error("pooling needs at least two fits, got {0}")]
    TooFewFits(usize),
    #[error("fits disagree on terms")]
    MismatchedTerms,
    #[error("term `{0}` is not in the fit")]
    UnknownTerm(String),
    #[error("{fits} fits but {designs} designs")]
    Misaligned { fits: usize, designs: usize },
    #[error("fit for imputation {0} did not converge")]
    NotConverged(usize),
    #[error(transparent)]
    Design(#[from] crate::design::DesignError),
}

/// Fit the retained terms on every imputed design.
pub fn refit_selected(
    designs: &[AnalysisMatrix],
    retained: &[String],
    link: LinkKind,
    irls: &IrlsOptions,
) -> Result<Vec<GlmFit>, InferenceError> {
    if retained.is_empty() {
        log::warn!("no retained terms; fitting intercept-only models");
    }
    designs
        .iter()
        .enumerate()
        .map(|(m, d)| {
            let sub = d.select(retained)?;
            irls_fit(&sub.with_intercept(), &sub.y, link, irls)
                .map(|f| f.with_terms(sub.terms()))
                .map_err(|source| InferenceError::Fit { index: m + 1, source })
        })
        .collect()
}

/// Rubin-pooled estimates. `total = within + (1 + 1/M) between`.
#[derive(Debug, Clone, Serialize)]
pub struct PooledFit {
    pub terms: Vec<String>,
    pub qbar: Vec<f64>,
    pub within: Vec<f64>,
    pub between: Vec<f64>,
    pub total: Vec<f64>,
    pub se: Vec<f64>,
    pub m: usize,
    pub link: LinkKind,
    /// Complete-data residual degrees of freedom, when known.
    pub df_complete: Option<f64>,
}

impl PooledFit {
    pub fn z(&self) -> Vec<f64> {
        self.qbar.iter().zip(&self.se).map(|(q, s)| q / s).collect()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Barnard–Rubin small-sample degrees of freedom per term.
    pub fn barnard_rubin_df(&self) -> Vec<f64> {
        let m = self.m as f64;
        (0..self.terms.len())
            .map(|j| {
                let gamma = if self.total[j] > 0.0 {
                    (1.0 + 1.0 / m) * self.between[j] / self.total[j]
                } else {
                    0.0
                };
                let df_old = if gamma > 0.0 {
                    (m - 1.0) / (gamma * gamma)
                } else {
                    f64::INFINITY
                };
                match self.df_complete {
                    Some(dfc) => {
                        let df_obs = (dfc + 1.0) / (dfc + 3.0) * dfc * (1.0 - gamma);
                        1.0 / (1.0 / df_old + 1.0 / df_obs)
                    }
                    None => df_old,
                }
            })
            .collect()
    }
}

/// Rubin's rule for per-imputation estimates and variances.
pub fn pool_estimates(
    terms: Vec<String>,
    estimates: &[Vec<f64>],
    variances: &[Vec<f64>],
    link: LinkKind,
) -> Result<PooledFit, InferenceError> {
    let m = estimates.len();
    if m < 2 {
        return Err(InferenceError::TooFewFits(m));
    }
    let p = terms.len();
    if estimates.iter().chain(variances).any(|v| v.len() != p) || variances.len() != m {
        return Err(InferenceError::MismatchedTerms);
    }
    let mf = m as f64;
    let mut qbar = vec![0.0; p];
    let mut within = vec![0.0; p];
    let mut between = vec![0.0; p];
    for j in 0..p {
        qbar[j] = estimates.iter().map(|e| e[j]).sum::<f64>() / mf;
        within[j] = variances.iter().map(|v| v[j]).sum::<f64>() / mf;
        between[j] = estimates.iter().map(|e| (e[j] - qbar[j]).powi(2)).sum::<f64>() / (mf - 1.0);
    }
    let total: Vec<f64> = within
        .iter()
        .zip(&between)
        .map(|(w, b)| w + (1.0 + 1.0 / mf) * b)
        .collect();
    Ok(PooledFit {
        terms,
        se: total.iter().map(|t| t.sqrt()).collect(),
        qbar,
        within,
        between,
        total,
        m,
        link,
        df_complete: None,
    })
}

pub fn rubin_pool(fits: &[GlmFit]) -> Result<PooledFit, InferenceError> {
    if fits.len() < 2 {
        return Err(InferenceError::TooFewFits(fits.len()));
    }
    let terms = fits[0].terms.clone();
    if fits.iter().any(|f| f.terms != terms) {
        return Err(InferenceError::MismatchedTerms);
    }
    let est: Vec<Vec<f64>> = fits.iter().map(|f| f.beta.as_slice().to_vec()).collect();
    let var: Vec<Vec<f64>> = fits
        .iter()
        .map(|f| (0..f.n_params()).map(|j| f.vcov[(j, j)]).collect())
        .collect();
    let mut pooled = pool_estimates(terms, &est, &var, fits[0].link)?;
    pooled.df_complete = Some((fits[0].n_obs as f64 - fits[0].n_params() as f64).max(1.0));
    Ok(pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    /// Mean derivative of the predicted probability.
    Slope,
    /// Mean change in predicted probability from x = 0 to x = 1.
    Discrete,
}

/// AME of one term on one fitted design, with its gradient in β.
pub fn marginal_effect(
    fit: &GlmFit,
    x: &DMatrix<f64>,
    term: usize,
    kind: EffectKind,
) -> (f64, DVector<f64>) {
    let (n, p) = x.shape();
    let link = fit.link;
    let beta = &fit.beta;
    let nf = n as f64;
    let mut grad = DVector::zeros(p);
    let mut ame = 0.0;
    match kind {
        EffectKind::Slope => {
            let eta = x * beta;
            for i in 0..n {
                let f = link.mu_eta(eta[i]);
                let df = link.mu_eta_deriv(eta[i]);
                ame += beta[term] * f;
                for k in 0..p {
                    grad[k] += beta[term] * df * x[(i, k)];
                }
                grad[term] += f;
            }
        }
        EffectKind::Discrete => {
            for i in 0..n {
                let row = x.row(i);
                let base: f64 = (0..p).filter(|&k| k != term).map(|k| row[k] * beta[k]).sum();
                let (e1, e0) = (base + beta[term], base);
                ame += link.inverse(e1) - link.inverse(e0);
                let (f1, f0) = (link.mu_eta(e1), link.mu_eta(e0));
                for k in 0..p {
                    if k == term {
                        grad[k] += f1;
                    } else {
                        grad[k] += (f1 - f0) * row[k];
                    }
                }
            }
        }
    }
    (ame / nf, grad / nf)
}

#[derive(Debug, Clone, Serialize)]
pub struct AmeRow {
    pub term: String,
    pub kind: EffectKind,
    pub ame: f64,
    pub se: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    /// Degrees of freedom used for the intervals; `None` means normal.
    pub df: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmeTable {
    pub link: LinkKind,
    pub m: usize,
    pub rows: Vec<AmeRow>,
}

impl AmeTable {
    pub fn get(&self, term: &str) -> Option<&AmeRow> {
        self.rows.iter().find(|r| r.term == term)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, serde::Deserialize)]
pub struct AmeOptions {
    /// Use Barnard–Rubin t intervals instead of normal ones.
    pub small_sample_df: bool,
}

/// Per-imputation AMEs for the retained terms, Rubin-pooled, with normal (or
/// optionally Barnard–Rubin t) 90% and 95% intervals.
pub fn average_marginal_effects(
    fits: &[GlmFit],
    designs: &[AnalysisMatrix],
    retained: &[String],
    opts: &AmeOptions,
) -> Result<AmeTable, InferenceError> {
    if fits.len() != designs.len() {
        return Err(InferenceError::Misaligned {
            fits: fits.len(),
            designs: designs.len(),
        });
    }
    if fits.len() < 2 {
        return Err(InferenceError::TooFewFits(fits.len()));
    }
    let mut est = vec![Vec::with_capacity(retained.len()); fits.len()];
    let mut var = vec![Vec::with_capacity(retained.len()); fits.len()];
    let mut kinds = Vec::with_capacity(retained.len());
    for (m, (fit, design)) in fits.iter().zip(designs).enumerate() {
        if !fit.converged {
            return Err(InferenceError::NotConverged(m + 1));
        }
        let sub = design.select(retained)?;
        let x = sub.with_intercept();
        for (t, term) in retained.iter().enumerate() {
            let idx = fit
                .terms
                .iter()
                .position(|s| s == term)
                .ok_or_else(|| InferenceError::UnknownTerm(term.clone()))?;
            let kind = match sub.kinds[t] {
                ColumnKind::Binary => EffectKind::Discrete,
                ColumnKind::Continuous => EffectKind::Slope,
            };
            if m == 0 {
                kinds.push(kind);
            }
            let (ame, g) = marginal_effect(fit, &x, idx, kind);
            est[m].push(ame);
            var[m].push((g.transpose() * &fit.vcov * &g)[(0, 0)].max(0.0));
        }
    }
    let mut pooled = pool_estimates(retained.to_vec(), &est, &var, fits[0].link)?;
    pooled.df_complete = Some((fits[0].n_obs as f64 - fits[0].n_params() as f64).max(1.0));
    let dfs = opts.small_sample_df.then(|| pooled.barnard_rubin_df());
    let rows = retained
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let (q90, q95, df) = match &dfs {
                Some(d) if d[j].is_finite() => {
                    let t = StudentsT::new(0.0, 1.0, d[j]).expect("positive df");
                    (t.inverse_cdf(0.95), t.inverse_cdf(0.975), Some(d[j]))
                }
                _ => (Z90, Z95, None),
            };
            let (a, s) = (pooled.qbar[j], pooled.se[j]);
            AmeRow {
                term: term.clone(),
                kind: kinds[j],
                ame: a,
                se: s,
                ci90: (a - q90 * s, a + q90 * s),
                ci95: (a - q95 * s, a + q95 * s),
                df,
            }
        })
        .collect();
    Ok(AmeTable {
        link: fits[0].link,
        m: fits.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fake_fit(beta: &[f64], var: &[f64], link: LinkKind) -> GlmFit {
        let p = beta.len();
        GlmFit {
            link,
            terms: (0..p).map(|j| format!("t{j}")).collect(),
            beta: DVector::from_row_slice(beta),
            vcov: DMatrix::from_diagonal(&DVector::from_row_slice(var)),
            loglik: -1.0,
            deviance: 2.0,
            aic: 2.0 + 2.0 * p as f64,
            converged: true,
            iters: 1,
            n_obs: 100,
            loglik_trace: vec![],
        }
    }

    #[test]
    fn identical_fits_pool_to_within_se() {
        let fits = vec![fake_fit(&[0.3, -1.2], &[0.04, 0.09], LinkKind::Logit); 5];
        let p = rubin_pool(&fits).unwrap();
        assert_eq!(p.qbar, vec![0.3, -1.2]);
        assert_eq!(p.between, vec![0.0, 0.0]);
        assert_eq!(p.se, vec![0.2, 0.3]);
    }

    #[test]
    fn two_point_example() {
        let fits = vec![
            fake_fit(&[0.0], &[0.0], LinkKind::Logit),
            fake_fit(&[1.0], &[0.0], LinkKind::Logit),
        ];
        let p = rubin_pool(&fits).unwrap();
        assert_eq!(p.between[0], 0.5);
        assert_eq!(p.total[0], 0.75);
        assert_abs_diff_eq!(p.se[0], 0.866_025_403_784_438_6, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_terms_are_rejected() {
        let a = fake_fit(&[0.0, 1.0], &[1.0, 1.0], LinkKind::Logit);
        let mut b = a.clone();
        b.terms[1] = "other".into();
        assert!(matches!(rubin_pool(&[a.clone(), b]), Err(InferenceError::MismatchedTerms)));
        assert!(matches!(rubin_pool(&[a]), Err(InferenceError::TooFewFits(1))));
    }

    #[test]
    fn slope_ame_at_zero_eta() {
        // intercept 0, slope 1, covariate identically 0 so every eta is 0
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let (a, _) = marginal_effect(&fake_fit(&[0.0, 1.0], &[1.0, 1.0], LinkKind::Logit), &x, 1, EffectKind::Slope);
        assert_abs_diff_eq!(a, 0.25, epsilon = 1e-12);
        let (a, _) = marginal_effect(&fake_fit(&[0.0, 1.0], &[1.0, 1.0], LinkKind::Cloglog), &x, 1, EffectKind::Slope);
        assert_abs_diff_eq!(a, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn discrete_ame_is_probability_difference() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let fit = fake_fit(&[-1.0, 2.0], &[1.0, 1.0], LinkKind::Logit);
        let (a, g) = marginal_effect(&fit, &x, 1, EffectKind::Discrete);
        let expect = LinkKind::Logit.inverse(1.0) - LinkKind::Logit.inverse(-1.0);
        assert_abs_diff_eq!(a, expect, epsilon = 1e-14);
        // gradient by central differences
        for k in 0..2 {
            let h = 1e-6;
            let mut up = fit.clone();
            up.beta[k] += h;
            let mut dn = fit.clone();
            dn.beta[k] -= h;
            let fd = (marginal_effect(&up, &x, 1, EffectKind::Discrete).0
                - marginal_effect(&dn, &x, 1, EffectKind::Discrete).0)
                / (2.0 * h);
            assert_abs_diff_eq!(g[k], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn barnard_rubin_df_is_infinite_without_between_variance_and_no_complete_df() {
        let fits = vec![fake_fit(&[0.3], &[0.04], LinkKind::Logit); 3];
        let mut p = rubin_pool(&fits).unwrap();
        p.df_complete = None;
        assert!(p.barnard_rubin_df()[0].is_infinite());
    }
}
