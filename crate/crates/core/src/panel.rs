//! Country-year panels: CSV ingest, onset coding and the lag / difference /
//! clock transforms applied before imputation.
//!
//! Rows are kept sorted by `(country, year)` so every country occupies one
//! contiguous block. Year gaps inside a block break every chain (onsets, lags,
//! differences, clocks); nothing is bridged across a gap.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("duplicate row for ({country}, {year})")]
    DuplicateKey { country: String, year: i32 },
    #[error("line {line}: cannot parse year `{value}`")]
    BadYear { line: usize, value: String },
    #[error("line {line}: column `{column}` has non-numeric value `{value}`")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },
    #[error("({country}, {year}): existence value {value} is not 0, 1 or missing")]
    BadExistence {
        country: String,
        year: i32,
        value: f64,
    },
    #[error("column `{column}` is {actual}, expected {expected}")]
    WrongKind {
        column: String,
        expected: ColumnKind,
        actual: ColumnKind,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("lag horizon must be at least 1")]
    BadHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnKind::Continuous => f.write_str("continuous"),
            ColumnKind::Binary => f.write_str("binary"),
        }
    }
}

/// A covariate column. `None` marks an unobserved cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Column names and kind overrides used when reading a panel CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub country: String,
    pub year: String,
    pub dv: String,
    /// Kind overrides; columns not listed are inferred.
    pub kinds: BTreeMap<String, ColumnKind>,
    /// Columns read from the file but not kept as covariates.
    pub drop: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            country: "country".into(),
            year: "year".into(),
            dv: "dv_exists".into(),
            kinds: BTreeMap::new(),
            drop: Vec::new(),
        }
    }
}

/// Long-format country-year table.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub countries: Vec<String>,
    pub years: Vec<i32>,
    pub dv_name: String,
    /// Raw existence indicator of the outcome institution.
    pub existence: Vec<Option<f64>>,
    pub columns: Vec<Column>,
}

impl PanelDataset {
    /// Build a dataset from unsorted parts, sorting rows by `(country, year)`.
    pub fn new(
        countries: Vec<String>,
        years: Vec<i32>,
        dv_name: impl Into<String>,
        existence: Vec<Option<f64>>,
        columns: Vec<Column>,
    ) -> Result<Self, PanelError> {
        let n = countries.len();
        assert_eq!(years.len(), n, "years length");
        assert_eq!(existence.len(), n, "existence length");
        for c in &columns {
            assert_eq!(c.values.len(), n, "column `{}` length", c.name);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            countries[a]
                .cmp(&countries[b])
                .then(years[a].cmp(&years[b]))
        });
        for w in order.windows(2) {
            if countries[w[0]] == countries[w[1]] && years[w[0]] == years[w[1]] {
                return Err(PanelError::DuplicateKey {
                    country: countries[w[0]].clone(),
                    year: years[w[0]],
                });
            }
        }
        let pick = |v: &[Option<f64>]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            countries: order.iter().map(|&i| countries[i].clone()).collect(),
            years: order.iter().map(|&i| years[i]).collect(),
            dv_name: dv_name.into(),
            existence: pick(&existence),
            columns: columns
                .into_iter()
                .map(|c| Column {
                    values: pick(&c.values),
                    ..c
                })
                .collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.years.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Contiguous row ranges, one per country.
    pub fn country_blocks(&self) -> Vec<Range<usize>> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=self.n_rows() {
            if i == self.n_rows() || self.countries[i] != self.countries[start] {
                blocks.push(start..i);
                start = i;
            }
        }
        blocks
    }

    /// Index of the row exactly `h` years before row `k` of the same country,
    /// provided every intermediate year is present.
    fn predecessor(&self, block: &Range<usize>, k: usize, h: usize) -> Option<usize> {
        let j = k.checked_sub(h)?;
        (j >= block.start && self.years[j] == self.years[k] - h as i32).then_some(j)
    }

    fn push_column(&mut self, column: Column) {
        if let Some(existing) = self.columns.iter_mut().find(|c| c.name == column.name) {
            *existing = column;
        } else {
            self.columns.push(column);
        }
    }

    fn require_kind(&self, name: &str, expected: ColumnKind) -> Result<&Column, PanelError> {
        let col = self
            .column(name)
            .ok_or_else(|| PanelError::UnknownColumn(name.to_string()))?;
        if col.kind != expected {
            return Err(PanelError::WrongKind {
                column: name.to_string(),
                expected,
                actual: col.kind,
            });
        }
        Ok(col)
    }
}

fn parse_cell(raw: &str) -> Result<Option<f64>, ()> {
    let s = raw.trim();
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| ())
}

fn infer_kind(values: &[Option<f64>]) -> ColumnKind {
    let mut any = false;
    for v in values.iter().flatten() {
        any = true;
        if *v != 0.0 && *v != 1.0 {
            return ColumnKind::Continuous;
        }
    }
    if any {
        ColumnKind::Binary
    } else {
        ColumnKind::Continuous
    }
}

/// Read a panel CSV from any reader.
pub fn read_panel<R: Read>(reader: R, schema: &Schema) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let ci = find(&schema.country)?;
    let yi = find(&schema.year)?;
    let di = find(&schema.dv)?;
    let drop: HashSet<&str> = schema.drop.iter().map(String::as_str).collect();
    let cov_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| j != ci && j != yi && j != di && !drop.contains(&headers[j]))
        .collect();

    let mut countries = Vec::new();
    let mut years = Vec::new();
    let mut existence = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); cov_idx.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = r + 2;
        countries.push(record[ci].to_string());
        let year_raw = &record[yi];
        let year = year_raw
            .trim()
            .parse::<i32>()
            .map_err(|_| PanelError::BadYear {
                line,
                value: year_raw.to_string(),
            })?;
        years.push(year);
        existence.push(parse_cell(&record[di]).map_err(|_| PanelError::NonNumeric {
            line,
            column: schema.dv.clone(),
            value: record[di].to_string(),
        })?);
        for (slot, &j) in values.iter_mut().zip(&cov_idx) {
            slot.push(parse_cell(&record[j]).map_err(|_| PanelError::NonNumeric {
                line,
                column: headers[j].to_string(),
                value: record[j].to_string(),
            })?);
        }
    }
    let columns = cov_idx
        .iter()
        .zip(values)
        .map(|(&j, values)| {
            let name = headers[j].to_string();
            let kind = schema
                .kinds
                .get(&name)
                .copied()
                .unwrap_or_else(|| infer_kind(&values));
            Column { name, kind, values }
        })
        .collect();
    PanelDataset::new(countries, years, schema.dv.clone(), existence, columns)
}

pub fn load_panel(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset, PanelError> {
    let file = std::fs::File::open(path)?;
    read_panel(std::io::BufReader::new(file), schema)
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

/// Write the panel back out with the same key columns plus every covariate,
/// and the coded onset column when given.
pub fn write_panel<W: Write>(
    data: &PanelDataset,
    onset: Option<&OnsetSeries>,
    writer: W,
) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["country".to_string(), "year".to_string(), data.dv_name.clone()];
    if onset.is_some() {
        header.push("onset".to_string());
    }
    header.extend(data.column_names());
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec = vec![
            data.countries[i].clone(),
            data.years[i].to_string(),
            fmt_cell(data.existence[i]),
        ];
        if let Some(o) = onset {
            rec.push(fmt_cell(o.y[i].map(|b| if b { 1.0 } else { 0.0 })));
        }
        rec.extend(data.columns.iter().map(|c| fmt_cell(c.values[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// First-occurrence outcome aligned with the rows of the source panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnsetSeries {
    pub y: Vec<Option<bool>>,
}

impl OnsetSeries {
    pub fn n_events(&self) -> usize {
        self.y.iter().filter(|v| **v == Some(true)).count()
    }

    pub fn n_observed(&self) -> usize {
        self.y.iter().filter(|v| v.is_some()).count()
    }

    pub fn as_f64(&self) -> Vec<Option<f64>> {
        self.y
            .iter()
            .map(|v| v.map(|b| if b { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// Recode the existence indicator into onsets.
///
/// `y = 1` only when existence moves from an observed 0 at `t-1` to 1 at `t`.
/// Existence 1 in any other position (ongoing spell, first year in the data,
/// first year after a gap) is censored to missing, as is missing existence.
pub fn code_onset(data: &PanelDataset) -> Result<OnsetSeries, PanelError> {
    let mut y = vec![None; data.n_rows()];
    for (i, v) in data.existence.iter().enumerate() {
        if let Some(x) = v {
            if *x != 0.0 && *x != 1.0 {
                return Err(PanelError::BadExistence {
                    country: data.countries[i].clone(),
                    year: data.years[i],
                    value: *x,
                });
            }
        }
    }
    for block in data.country_blocks() {
        for k in block.clone() {
            y[k] = match data.existence[k] {
                None => None,
                Some(0.0) => Some(false),
                Some(_) => match data.predecessor(&block, k, 1).and_then(|j| data.existence[j]) {
                    Some(0.0) => Some(true),
                    _ => None,
                },
            };
        }
    }
    Ok(OnsetSeries { y })
}

/// Replace every covariate by its value `horizon` years earlier within the
/// same country; missing when that year is absent or the chain has a gap.
pub fn lag_covariates(data: &PanelDataset, horizon: usize) -> Result<PanelDataset, PanelError> {
    if horizon == 0 {
        return Err(PanelError::BadHorizon);
    }
    let blocks = data.country_blocks();
    let mut out = data.clone();
    for (src, dst) in data.columns.iter().zip(out.columns.iter_mut()) {
        for block in &blocks {
            for k in block.clone() {
                dst.values[k] = data
                    .predecessor(block, k, horizon)
                    .and_then(|j| src.values[j]);
            }
        }
    }
    Ok(out)
}

/// Add `<name>_fd = x[t] - x[t-1]` for each named continuous column.
pub fn first_difference(data: &PanelDataset, columns: &[String]) -> Result<PanelDataset, PanelError> {
    let blocks = data.country_blocks();
    let mut out = data.clone();
    for name in columns {
        let col = data.require_kind(name, ColumnKind::Continuous)?;
        let mut values = vec![None; data.n_rows()];
        for block in &blocks {
            for k in block.clone() {
                values[k] = data.predecessor(block, k, 1).and_then(|j| {
                    Some(col.values[k]? - col.values[j]?)
                });
            }
        }
        out.push_column(Column {
            name: format!("{name}_fd"),
            kind: ColumnKind::Continuous,
            values,
        });
    }
    Ok(out)
}

/// Add `<name>_ys`, the number of years since the last observed 1 of each
/// named binary column. Zero in realization years, missing until the first
/// realization and again after a year gap. Missing cells neither reset nor
/// stop the clock.
pub fn years_since(data: &PanelDataset, columns: &[String]) -> Result<PanelDataset, PanelError> {
    let blocks = data.country_blocks();
    let mut out = data.clone();
    for name in columns {
        let col = data.require_kind(name, ColumnKind::Binary)?;
        let mut values = vec![None; data.n_rows()];
        for block in &blocks {
            let mut last: Option<i32> = None;
            for k in block.clone() {
                if k > block.start && data.years[k] - data.years[k - 1] != 1 {
                    last = None;
                }
                if col.values[k] == Some(1.0) {
                    last = Some(data.years[k]);
                }
                values[k] = last.map(|y| f64::from(data.years[k] - y));
            }
        }
        out.push_column(Column {
            name: format!("{name}_ys"),
            kind: ColumnKind::Continuous,
            values,
        });
    }
    Ok(out)
}
