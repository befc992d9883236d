//! Rare-event variable selection and inference for country-year panels.
//!
//! The pipeline codes a first-occurrence outcome from an existence indicator,
//! lags the covariates, multiply imputes them with bootstrap EM, selects terms
//! with an event-stratified cross-validated lasso (or forward stepwise AIC)
//! on each completed dataset, keeps the terms chosen in enough imputations,
//! refits unpenalized logit or cloglog models and pools them with Rubin's
//! rule, reporting coefficients and average marginal effects.
//!
//! Each stage is usable on its own:
//!
//! | module | role |
//! |---|---|
//! | [`panel`] | CSV ingest, onset coding, lags, differences, clocks |
//! | [`impute`] | bootstrap-EM multivariate normal imputation |
//! | [`glm`] | logit/cloglog likelihood and IRLS |
//! | [`lasso`] | coordinate-descent lasso path |
//! | [`selection`] | stratified CV, consensus, stepwise AIC |
//! | [`inference`] | refits, Rubin pooling, marginal effects |
//! | [`simgen`] | synthetic panels and brute-force oracles |
//! | [`report`] | configuration, pipeline driver, report files |

pub mod design;
pub mod glm;
pub mod impute;
pub mod inference;
pub mod lasso;
pub mod panel;
pub mod report;
pub mod rng;
pub mod selection;
pub mod simgen;

pub use design::AnalysisMatrix;
pub use glm::{irls_fit, GlmFit, IrlsOptions, LinkKind};
pub use impute::{bootstrap_impute, em_mvn, ImputationSet, MvnParams};
pub use inference::{average_marginal_effects, refit_selected, rubin_pool, AmeTable, PooledFit};
pub use lasso::{fit_path, standardize, LassoPath, PathOptions};
pub use panel::{code_onset, load_panel, ColumnKind, OnsetSeries, PanelDataset, Schema};
pub use report::{run_pipeline, PipelineConfig, ReportBundle};
pub use selection::{cv_choose_lambda, lasso_select, make_stratified_folds, stepwise_aic, SelectionResult, Selector};
pub use simgen::{brute_force_mle, generate, SimScenario, SimTruth};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "RARESIGHT_THREADS";

/// Size the global rayon pool from `RARESIGHT_THREADS` when it is set.
/// Results do not depend on the thread count.
pub fn init_threads_from_env() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("thread pool already initialized");
        }
    }
}
