//! End-to-end pipeline, configuration and report files.
//!
//! Stages run in a fixed order: ingest → impute → select → fit → ame. Each
//! stage writes its files into the output directory; a `manifest.json`
//! records the configuration, every derived seed and stage timings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::AnalysisMatrix;
use crate::glm::{GlmFit, IrlsOptions, LinkKind, INTERCEPT};
use crate::impute::{bootstrap_impute, EmOptions, ImputationSet, ImputeOptions};
use crate::inference::{average_marginal_effects, refit_selected, rubin_pool, AmeOptions, AmeTable, PooledFit};
use crate::lasso::PathOptions;
use crate::panel::{
    code_onset, first_difference, lag_covariates, load_panel, write_panel, ColumnKind, OnsetSeries, PanelDataset,
    Schema,
};
use crate::rng::stream_seed;
use crate::selection::{lasso_select, stepwise_select, CvOptions, SelectionResult, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Impute,
    Select,
    Fit,
    Ame,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Impute => "impute",
            Stage::Select => "select",
            Stage::Fit => "fit",
            Stage::Ame => "ame",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn at(stage: Stage) -> impl FnOnce(Box<dyn std::error::Error>) -> Self {
        move |e| Self {
            stage,
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "stage": self.stage, "error": self.message }).to_string()
    }
}

fn stage_err<E: std::error::Error + 'static>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::at(stage)(Box::new(e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
    /// Candidate covariates; empty means every non-key column.
    pub covariates: Vec<String>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("panel.csv"),
            schema: Schema::default(),
            covariates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Lag horizon in years; 0 disables lagging.
    pub lag: usize,
    pub first_difference: Vec<String>,
    /// Add first differences of every continuous candidate.
    pub first_difference_all: bool,
    pub years_since: Vec<String>,
    /// Add clocks for every binary candidate.
    pub years_since_all: bool,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            lag: 1,
            first_difference: Vec::new(),
            first_difference_all: false,
            years_since: Vec::new(),
            years_since_all: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputationConfig {
    pub m: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub write_datasets: bool,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            m: 5,
            max_iter: 1000,
            tol: 1e-4,
            write_datasets: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub k: usize,
    pub threshold: usize,
    pub links: Vec<LinkKind>,
    pub selectors: Vec<Selector>,
    pub n_lambda: usize,
    pub lambda_min_ratio: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 3,
            threshold: 3,
            links: vec![LinkKind::Logit, LinkKind::Cloglog],
            selectors: vec![Selector::Lasso, Selector::Stepwise],
            n_lambda: 100,
            lambda_min_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub transforms: TransformConfig,
    pub imputation: ImputationConfig,
    pub selection: SelectionConfig,
    pub inference: AmeOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            input: InputConfig::default(),
            transforms: TransformConfig::default(),
            imputation: ImputationConfig::default(),
            selection: SelectionConfig::default(),
            inference: AmeOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(stage_err(Stage::Config))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative input paths resolve against the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(stage_err(Stage::Config))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.input.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.input.path = dir.join(&cfg.input.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| {
            Err(PipelineError {
                stage: Stage::Config,
                message: m,
            })
        };
        let s = &self.selection;
        if self.imputation.m < 2 {
            return fail(format!("imputation.m must be at least 2, got {}", self.imputation.m));
        }
        if s.threshold > self.imputation.m {
            return fail(format!("threshold {} exceeds m = {}", s.threshold, self.imputation.m));
        }
        if s.k < 2 {
            return fail(format!("k must be at least 2, got {}", s.k));
        }
        if s.links.is_empty() || s.selectors.is_empty() {
            return fail("at least one link and one selector are required".into());
        }
        Ok(())
    }

    /// `(selector, link)` pairs in report order: selectors outer, links inner.
    pub fn models(&self) -> Vec<(Selector, LinkKind)> {
        let mut out = Vec::new();
        for sel in Selector::ALL {
            if !self.selection.selectors.contains(&sel) {
                continue;
            }
            for link in LinkKind::ALL {
                if self.selection.links.contains(&link) {
                    out.push((sel, link));
                }
            }
        }
        out
    }

    pub fn imputation_seed(&self) -> u64 {
        stream_seed(self.seed, "imputation", 0)
    }

    pub fn cv_seed(&self) -> u64 {
        stream_seed(self.seed, "cv", 0)
    }
}

pub fn model_tag(selector: Selector, link: LinkKind) -> String {
    format!("{}_{}", selector.tag(), link)
}

/// Panel after onset coding and transforms, ready for imputation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub panel: PanelDataset,
    pub onset: OnsetSeries,
    pub covariates: Vec<String>,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    let raw = load_panel(&cfg.input.path, &cfg.input.schema).map_err(stage_err(Stage::Ingest))?;
    prepare_panel(raw, cfg)
}

/// Onset coding and transforms on an already loaded panel. Differences and
/// clocks are built on the unlagged values, then everything is lagged.
pub fn prepare_panel(raw: PanelDataset, cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    let err = stage_err(Stage::Ingest);
    let onset = code_onset(&raw).map_err(stage_err(Stage::Ingest))?;
    let mut covariates = if cfg.input.covariates.is_empty() {
        raw.column_names()
    } else {
        cfg.input.covariates.clone()
    };
    for c in &covariates {
        if raw.column(c).is_none() {
            return Err(PipelineError {
                stage: Stage::Ingest,
                message: format!("unknown covariate `{c}`"),
            });
        }
    }
    let t = &cfg.transforms;
    let of_kind = |kind: ColumnKind| -> Vec<String> {
        covariates
            .iter()
            .filter(|c| raw.column(c).is_some_and(|col| col.kind == kind))
            .cloned()
            .collect()
    };
    let fd_cols = if t.first_difference_all {
        of_kind(ColumnKind::Continuous)
    } else {
        t.first_difference.clone()
    };
    let ys_cols = if t.years_since_all {
        of_kind(ColumnKind::Binary)
    } else {
        t.years_since.clone()
    };
    let mut panel = first_difference(&raw, &fd_cols).map_err(stage_err(Stage::Ingest))?;
    panel = crate::panel::years_since(&panel, &ys_cols).map_err(stage_err(Stage::Ingest))?;
    covariates.extend(fd_cols.iter().map(|c| format!("{c}_fd")));
    covariates.extend(ys_cols.iter().map(|c| format!("{c}_ys")));
    if t.lag > 0 {
        panel = lag_covariates(&panel, t.lag).map_err(err)?;
    }
    // only candidates enter imputation and estimation
    panel.columns.retain(|c| covariates.contains(&c.name));
    log::info!(
        "ingest: {} rows, {} onsets, {} estimation rows, {} candidates",
        panel.n_rows(),
        onset.n_events(),
        onset.n_observed(),
        covariates.len()
    );
    Ok(Prepared {
        panel,
        onset,
        covariates,
    })
}

pub fn impute(prepared: &Prepared, cfg: &PipelineConfig) -> Result<ImputationSet, PipelineError> {
    let opts = ImputeOptions {
        em: EmOptions {
            max_iter: cfg.imputation.max_iter,
            tol: cfg.imputation.tol,
        },
        ..Default::default()
    };
    bootstrap_impute(
        &prepared.panel,
        &prepared.onset,
        cfg.imputation.m,
        cfg.imputation_seed(),
        &opts,
    )
    .map_err(stage_err(Stage::Impute))
}

pub fn designs(prepared: &Prepared, imputations: &ImputationSet) -> Result<Vec<AnalysisMatrix>, PipelineError> {
    imputations
        .datasets
        .iter()
        .map(|d| AnalysisMatrix::from_panel(d, &prepared.onset, &prepared.covariates))
        .collect::<Result<_, _>>()
        .map_err(stage_err(Stage::Impute))
}

pub fn select(designs: &[AnalysisMatrix], cfg: &PipelineConfig) -> Result<Vec<SelectionResult>, PipelineError> {
    let cv = CvOptions {
        k: cfg.selection.k,
        seed: cfg.cv_seed(),
        path: PathOptions {
            n_lambda: cfg.selection.n_lambda,
            lambda_min_ratio: cfg.selection.lambda_min_ratio,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.models()
        .into_iter()
        .map(|(sel, link)| {
            log::info!("select: {}", model_tag(sel, link));
            match sel {
                Selector::Lasso => lasso_select(designs, link, &cv, cfg.selection.threshold).map(|r| r.0),
                Selector::Stepwise => {
                    stepwise_select(designs, link, &IrlsOptions::default(), cfg.selection.threshold)
                }
            }
        })
        .collect::<Result<_, _>>()
        .map_err(stage_err(Stage::Select))
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub tag: String,
    pub selection: SelectionResult,
    pub fits: Vec<GlmFit>,
    pub pooled: PooledFit,
    pub ame: Option<AmeTable>,
}

pub fn fit(designs: &[AnalysisMatrix], selections: Vec<SelectionResult>) -> Result<Vec<ModelReport>, PipelineError> {
    selections
        .into_iter()
        .map(|sel| {
            let fits = refit_selected(designs, &sel.retained, sel.link, &IrlsOptions::default())
                .map_err(stage_err(Stage::Fit))?;
            let pooled = rubin_pool(&fits).map_err(stage_err(Stage::Fit))?;
            Ok(ModelReport {
                tag: model_tag(sel.method, sel.link),
                selection: sel,
                fits,
                pooled,
                ame: None,
            })
        })
        .collect()
}

pub fn ame(designs: &[AnalysisMatrix], models: &mut [ModelReport], opts: &AmeOptions) -> Result<(), PipelineError> {
    for m in models.iter_mut() {
        let table = average_marginal_effects(&m.fits, designs, &m.selection.retained, opts)
            .map_err(stage_err(Stage::Ame))?;
        m.ame = Some(table);
    }
    Ok(())
}

/// Full-precision, platform-independent number formatting.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_selection_csv<W: Write>(models: &[&SelectionResult], terms: &[String], w: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let tags: Vec<String> = models.iter().map(|s| model_tag(s.method, s.link)).collect();
    let mut header = vec!["term".to_string()];
    header.extend(tags.iter().map(|t| format!("count_{t}")));
    header.extend(tags.iter().map(|t| format!("retained_{t}")));
    w.write_record(&header)?;
    let maps: Vec<BTreeMap<&str, usize>> = models.iter().map(|s| s.count_map()).collect();
    for term in terms {
        let mut rec = vec![term.clone()];
        rec.extend(maps.iter().map(|m| m.get(term.as_str()).copied().unwrap_or(0).to_string()));
        rec.extend(
            models
                .iter()
                .map(|s| u8::from(s.retained.contains(term)).to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pooled_csv<W: Write>(models: &[(&str, &PooledFit)], w: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["term", "estimate", "se", "z", "model"])?;
    for (tag, p) in models {
        let z = p.z();
        for j in 0..p.terms.len() {
            w.write_record([p.terms[j].clone(), num(p.qbar[j]), num(p.se[j]), num(z[j]), tag.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ame_csv<W: Write>(models: &[(&str, &AmeTable)], w: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["term", "ame", "se", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi", "model"])?;
    for (tag, t) in models {
        for r in &t.rows {
            w.write_record([
                r.term.clone(),
                num(r.ame),
                num(r.se),
                num(r.ci90.0),
                num(r.ci90.1),
                num(r.ci95.0),
                num(r.ci95.1),
                tag.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot data for the marginal-effects figure: one row per model and
/// candidate term, with unselected terms as zero rows.
pub fn write_fig_data_csv<W: Write>(models: &[(&str, &AmeTable)], terms: &[String], w: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "model", "term", "selected", "ame", "se", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi",
    ])?;
    for (tag, t) in models {
        for term in terms {
            let rec = match t.get(term) {
                Some(r) => vec![
                    tag.to_string(),
                    term.clone(),
                    "1".into(),
                    num(r.ame),
                    num(r.se),
                    num(r.ci90.0),
                    num(r.ci90.1),
                    num(r.ci95.0),
                    num(r.ci95.1),
                ],
                None => {
                    let mut v = vec![tag.to_string(), term.clone(), "0".into()];
                    v.extend(std::iter::repeat_n("0".to_string(), 6));
                    v
                }
            };
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    Text,
    Csv,
}

const DASH: &str = "\u{2014}";

/// Regression table: estimates with standard errors in parentheses on the
/// line below, one column per model, a dash where a model did not select
/// the term. Rows are the intercept and then every term selected by at least
/// one model, in `order`.
pub fn render_table(models: &[(&str, &PooledFit)], order: &[String], style: TableStyle) -> String {
    let mut rows: Vec<String> = vec![INTERCEPT.to_string()];
    for t in order {
        if models.iter().any(|(_, p)| p.index_of(t).is_some()) && !rows.contains(t) {
            rows.push(t.clone());
        }
    }
    for (_, p) in models {
        for t in &p.terms {
            if !rows.contains(t) {
                rows.push(t.clone());
            }
        }
    }
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Variable".to_string()];
    header.extend(models.iter().map(|(t, _)| t.to_string()));
    grid.push(header);
    for term in &rows {
        let mut est = vec![term.clone()];
        let mut se = vec![String::new()];
        for (_, p) in models {
            match p.index_of(term) {
                Some(j) => {
                    est.push(format!("{:.4}", p.qbar[j]));
                    se.push(format!("({:.4})", p.se[j]));
                }
                None => {
                    est.push(DASH.to_string());
                    se.push(String::new());
                }
            }
        }
        grid.push(est);
        grid.push(se);
    }
    let mut out = String::new();
    match style {
        TableStyle::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &grid {
                w.write_record(r).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        }
        TableStyle::Text => {
            let ncol = grid[0].len();
            let widths: Vec<usize> = (0..ncol)
                .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
                .collect();
            for (i, r) in grid.iter().enumerate() {
                let mut line = String::new();
                for c in 0..ncol {
                    let pad = widths[c] - r[c].chars().count();
                    if c == 0 {
                        line.push_str(&r[c]);
                        line.push_str(&" ".repeat(pad));
                    } else {
                        line.push_str("  ");
                        line.push_str(&" ".repeat(pad));
                        line.push_str(&r[c]);
                    }
                }
                let _ = writeln!(out, "{}", line.trim_end());
                if i == 0 {
                    let total = widths.iter().sum::<usize>() + 2 * (ncol - 1);
                    let _ = writeln!(out, "{}", "-".repeat(total));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub tag: String,
    pub retained: Vec<String>,
    pub counts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub models: Vec<ModelSummary>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    last_stage: Stage,
    config: &'a PipelineConfig,
    seeds: BTreeMap<&'static str, serde_json::Value>,
    n_rows: usize,
    n_onsets: usize,
    n_estimation_rows: usize,
    candidates: &'a [String],
    outputs: Vec<String>,
    timings_ms: BTreeMap<String, u128>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>, PipelineError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(stage_err(Stage::Write))?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }
}

/// Run the pipeline through `last` and write every file produced on the way.
pub fn run_through(cfg: &PipelineConfig, last: Stage) -> Result<ReportBundle, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(stage_err(Stage::Write))?;
    let mut out = Writer {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, u128>| {
        timings.insert(name.to_string(), clock.elapsed().as_millis());
        clock = Instant::now();
    };

    let prepared = prepare(cfg)?;
    write_panel(&prepared.panel, Some(&prepared.onset), out.file("panel_prepared.csv")?)
        .map_err(stage_err(Stage::Write))?;
    lap("ingest", &mut timings);

    let mut seeds: BTreeMap<&'static str, serde_json::Value> = BTreeMap::new();
    seeds.insert("root", cfg.seed.into());
    let mut models: Vec<ModelReport> = Vec::new();
    let mut n_est = prepared.onset.n_observed();

    if last >= Stage::Impute {
        let imputations = impute(&prepared, cfg)?;
        seeds.insert("imputation", serde_json::json!(imputations.seeds));
        if cfg.imputation.write_datasets {
            for (k, d) in imputations.datasets.iter().enumerate() {
                write_panel(d, Some(&prepared.onset), out.file(&format!("imputed_m{}.csv", k + 1))?)
                    .map_err(stage_err(Stage::Write))?;
            }
        }
        imputations
            .write_em_log(out.file("em_log.jsonl")?)
            .map_err(stage_err(Stage::Write))?;
        let designs = designs(&prepared, &imputations)?;
        n_est = designs[0].n();
        lap("impute", &mut timings);

        if last >= Stage::Select {
            let cv_seeds: Vec<u64> = (0..cfg.imputation.m as u64)
                .map(|m| cfg.cv_seed().wrapping_add(m))
                .collect();
            seeds.insert("cv_folds", serde_json::json!(cv_seeds));
            let selections = select(&designs, cfg)?;
            let refs: Vec<&SelectionResult> = selections.iter().collect();
            write_selection_csv(&refs, &prepared.covariates, out.file("selection.csv")?)
                .map_err(stage_err(Stage::Write))?;
            lap("select", &mut timings);

            if last >= Stage::Fit {
                models = fit(&designs, selections)?;
                let pooled: Vec<(&str, &PooledFit)> = models.iter().map(|m| (m.tag.as_str(), &m.pooled)).collect();
                write_pooled_csv(&pooled, out.file("pooled_coefs.csv")?).map_err(stage_err(Stage::Write))?;
                out.file("table.txt")?
                    .write_all(render_table(&pooled, &prepared.covariates, TableStyle::Text).as_bytes())
                    .map_err(stage_err(Stage::Write))?;
                out.file("table.csv")?
                    .write_all(render_table(&pooled, &prepared.covariates, TableStyle::Csv).as_bytes())
                    .map_err(stage_err(Stage::Write))?;
                lap("fit", &mut timings);

                if last >= Stage::Ame {
                    ame(&designs, &mut models, &cfg.inference)?;
                    let tables: Vec<(&str, &AmeTable)> = models
                        .iter()
                        .map(|m| (m.tag.as_str(), m.ame.as_ref().expect("computed")))
                        .collect();
                    write_ame_csv(&tables, out.file("ame.csv")?).map_err(stage_err(Stage::Write))?;
                    write_fig_data_csv(&tables, &prepared.covariates, out.file("fig1_data.csv")?)
                        .map_err(stage_err(Stage::Write))?;
                    lap("ame", &mut timings);
                }
            } else {
                models = selections
                    .into_iter()
                    .map(|s| ModelReport {
                        tag: model_tag(s.method, s.link),
                        pooled: PooledFit {
                            terms: vec![],
                            qbar: vec![],
                            within: vec![],
                            between: vec![],
                            total: vec![],
                            se: vec![],
                            m: s.m,
                            link: s.link,
                            df_complete: None,
                        },
                        selection: s,
                        fits: vec![],
                        ame: None,
                    })
                    .collect();
            }
        }
    }

    let manifest_path = cfg.output_dir.join("manifest.json");
    let mut outputs: Vec<String> = out
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "raresight",
        version: env!("CARGO_PKG_VERSION"),
        last_stage: last,
        config: cfg,
        seeds,
        n_rows: prepared.panel.n_rows(),
        n_onsets: prepared.onset.n_events(),
        n_estimation_rows: n_est,
        candidates: &prepared.covariates,
        outputs,
        timings_ms: timings,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(stage_err(Stage::Write))?;
    fs::write(&manifest_path, text + "\n").map_err(stage_err(Stage::Write))?;
    out.files.push(manifest_path);

    Ok(ReportBundle {
        out_dir: cfg.output_dir.clone(),
        files: out.files,
        models: models
            .iter()
            .map(|m| ModelSummary {
                tag: m.tag.clone(),
                retained: m.selection.retained.clone(),
                counts: m.selection.counts.clone(),
            })
            .collect(),
    })
}

/// The whole pipeline.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    run_through(cfg, Stage::Ame)
}
