use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multivariate real-valued time series.
///
/// Stored column-major: one `Vec<f64>` per variable, each holding `n_t`
/// samples spaced `dt` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    dt: f64,
}

impl SignalMatrix {
    /// Builds a signal from per-variable columns.
    pub fn from_columns(columns: Vec<Vec<f64>>, names: Vec<String>, dt: f64) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSignal("at least one variable is required".into()));
        }
        if columns.len() != names.len() {
            return Err(Error::InvalidSignal(format!("{} columns but {} names", columns.len(), names.len())));
        }
        let n_t = columns[0].len();
        if n_t < 2 {
            return Err(Error::InvalidSignal(format!("need at least 2 samples, got {n_t}")));
        }
        for (v, col) in columns.iter().enumerate() {
            if col.len() != n_t {
                return Err(Error::InvalidSignal(format!("column {v} has {} samples, expected {n_t}", col.len())));
            }
            if let Some(t) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidSignal(format!(
                    "non-finite value at sample {t} of variable {v} ({})",
                    names[v]
                )));
            }
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSignal(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { columns, names, dt })
    }

    /// Builds a signal from row-major samples (`rows[t][v]`).
    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>, dt: f64) -> Result<Self> {
        let n_v = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); n_v];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n_v {
                return Err(Error::InvalidSignal(format!("row {t} has {} values, expected {n_v}", row.len())));
            }
            for (col, &x) in columns.iter_mut().zip(row) {
                col.push(x);
            }
        }
        Self::from_columns(columns, names, dt)
    }

    /// Convenience constructor naming variables `x0, x1, ...`.
    pub fn unnamed(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..columns.len()).map(|i| format!("x{i}")).collect();
        Self::from_columns(columns, names, 1.0)
    }

    pub fn n_samples(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn column(&self, v: usize) -> &[f64] {
        &self.columns[v]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn value(&self, t: usize, v: usize) -> f64 {
        self.columns[v][t]
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    /// Index of the variable with the given label.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// New signal restricted to the given variables, in the given order.
    pub fn select(&self, vars: &[usize]) -> Result<Self> {
        let mut columns = Vec::with_capacity(vars.len());
        let mut names = Vec::with_capacity(vars.len());
        for &v in vars {
            if v >= self.n_vars() {
                return Err(Error::InvalidSelection(format!(
                    "variable {v} out of range ({} variables)",
                    self.n_vars()
                )));
            }
            columns.push(self.columns[v].clone());
            names.push(self.names[v].clone());
        }
        Self::from_columns(columns, names, self.dt)
    }
}
