//! Estimation-ready designs cut from a completed panel.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::panel::{ColumnKind, OnsetSeries, PanelDataset};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("unknown covariate `{0}`")]
    UnknownColumn(String),
    #[error("covariate `{column}` is missing at ({country}, {year}); impute before building a design")]
    Incomplete {
        column: String,
        country: String,
        year: i32,
    },
    #[error("onset series has {got} rows, panel has {expected}")]
    Misaligned { expected: usize, got: usize },
}

/// Outcome vector in {0,1}, covariates without the intercept column, and the
/// names and kinds of those covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisMatrix {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    /// Source panel row of each design row.
    pub rows: Vec<usize>,
}

impl AnalysisMatrix {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, names: Vec<String>, kinds: Vec<ColumnKind>) -> Self {
        assert_eq!(x.nrows(), y.len());
        assert_eq!(x.ncols(), names.len());
        assert_eq!(kinds.len(), names.len());
        let rows = (0..y.len()).collect();
        Self {
            y,
            x,
            names,
            kinds,
            rows,
        }
    }

    /// Keep the rows whose onset is observed and the listed covariates.
    pub fn from_panel(
        data: &PanelDataset,
        onset: &OnsetSeries,
        covariates: &[String],
    ) -> Result<Self, DesignError> {
        if onset.y.len() != data.n_rows() {
            return Err(DesignError::Misaligned {
                expected: data.n_rows(),
                got: onset.y.len(),
            });
        }
        let cols = covariates
            .iter()
            .map(|name| {
                data.column(name)
                    .ok_or_else(|| DesignError::UnknownColumn(name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| onset.y[i].is_some()).collect();
        let mut x = DMatrix::zeros(rows.len(), cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (r, &i) in rows.iter().enumerate() {
                x[(r, j)] = col.values[i].ok_or_else(|| DesignError::Incomplete {
                    column: col.name.clone(),
                    country: data.countries[i].clone(),
                    year: data.years[i],
                })?;
            }
        }
        let y = rows
            .iter()
            .map(|&i| if onset.y[i] == Some(true) { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            y,
            x,
            names: covariates.to_vec(),
            kinds: cols.iter().map(|c| c.kind).collect(),
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn n_events(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Restrict to the named covariates, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self, DesignError> {
        let idx = names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| DesignError::UnknownColumn(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_indices(&idx))
    }

    pub fn select_indices(&self, idx: &[usize]) -> Self {
        Self {
            y: self.y.clone(),
            x: self.x.select_columns(idx),
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
            kinds: idx.iter().map(|&j| self.kinds[j]).collect(),
            rows: self.rows.clone(),
        }
    }

    pub fn subset_rows(&self, idx: &[usize]) -> Self {
        Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(idx),
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    /// Covariates with a leading column of ones.
    pub fn with_intercept(&self) -> DMatrix<f64> {
        let (n, p) = self.x.shape();
        let mut out = DMatrix::from_element(n, p + 1, 1.0);
        out.view_mut((0, 1), (n, p)).copy_from(&self.x);
        out
    }

    /// Term labels of a fit on this design, intercept first.
    pub fn terms(&self) -> Vec<String> {
        std::iter::once(crate::glm::INTERCEPT.to_string())
            .chain(self.names.iter().cloned())
            .collect()
    }
}
