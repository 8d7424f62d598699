//! Mean imputation, one-hot encoding and standardization, fitted on training
//! rows and frozen for reuse on unseen rows.

use log::warn;
use serde::{Deserialize, Serialize};

use super::ingest::{ColumnData, RawTable};
use super::schema::ColumnKind;
use crate::error::{GsneError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub kind: FeatureKind,
    /// Missing training values replaced by the mean.
    pub imputed_count: usize,
    pub mean: f64,
    pub stddev: f64,
    /// One-hot categories, in output column order.
    pub categories: Vec<String>,
}

impl ColumnTransform {
    pub fn width(&self) -> usize {
        match self.kind {
            FeatureKind::Numeric => 1,
            FeatureKind::Categorical => self.categories.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTransform {
    pub rows_fitted: usize,
    pub columns: Vec<ColumnTransform>,
}

fn coordinate_names(table: &RawTable) -> Vec<String> {
    table
        .schema
        .of_kind(ColumnKind::Coordinate)
        .map(|c| c.name.clone())
        .collect()
}

/// Coordinates first, then the feature columns in schema order.
fn numeric_view(table: &RawTable) -> Vec<(String, Vec<Option<f64>>)> {
    let names = coordinate_names(table);
    vec![
        (names[0].clone(), table.coords.iter().map(|p| Some(p.x)).collect()),
        (names[1].clone(), table.coords.iter().map(|p| Some(p.y)).collect()),
    ]
}

fn column_values(table: &RawTable) -> Vec<(String, ColumnData)> {
    let mut cols: Vec<(String, ColumnData)> = numeric_view(table)
        .into_iter()
        .map(|(n, v)| (n, ColumnData::Numeric(v)))
        .collect();
    cols.extend(table.features.iter().cloned());
    cols
}

impl TableTransform {
    /// Fit on the rows `rows` of `table`. Coordinates are used as numeric
    /// features alongside the declared feature columns.
    pub fn fit(table: &RawTable, rows: &[usize]) -> Result<Self> {
        let mut columns = Vec::new();
        for (name, data) in column_values(table) {
            match data {
                ColumnData::Numeric(v) => {
                    let seen: Vec<f64> = rows.iter().filter_map(|&r| v[r]).collect();
                    if seen.is_empty() {
                        return Err(GsneError::Input(format!(
                            "column `{name}` has no values in the fitting rows"
                        )));
                    }
                    let mean = seen.iter().sum::<f64>() / seen.len() as f64;
                    // imputed values sit at the mean and add nothing to the sum of squares
                    let ss: f64 = seen.iter().map(|x| (x - mean) * (x - mean)).sum();
                    let sd = (ss / rows.len() as f64).sqrt();
                    columns.push(ColumnTransform {
                        name,
                        kind: FeatureKind::Numeric,
                        imputed_count: rows.len() - seen.len(),
                        mean,
                        stddev: if sd > 1e-12 { sd } else { 1.0 },
                        categories: Vec::new(),
                    });
                }
                ColumnData::Categorical(v) => {
                    let spec = table.schema.columns.iter().find(|c| c.name == name);
                    let categories = match spec.and_then(|c| c.vocabulary.clone()) {
                        Some(vocab) => vocab,
                        None => {
                            let mut cats: Vec<String> = rows.iter().filter_map(|&r| v[r].clone()).collect();
                            cats.sort();
                            cats.dedup();
                            cats
                        }
                    };
                    columns.push(ColumnTransform {
                        name,
                        kind: FeatureKind::Categorical,
                        imputed_count: rows.iter().filter(|&&r| v[r].is_none()).count(),
                        mean: 0.0,
                        stddev: 1.0,
                        categories,
                    });
                }
            }
        }
        Ok(TableTransform {
            rows_fitted: rows.len(),
            columns,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnTransform::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c.kind {
                FeatureKind::Numeric => out.push(c.name.clone()),
                FeatureKind::Categorical => out.extend(c.categories.iter().map(|k| format!("{}={k}", c.name))),
            }
        }
        out
    }

    /// Transform every row of `table`. Missing categoricals and categories
    /// unseen at fit time become all-zero one-hot blocks.
    pub fn apply(&self, table: &RawTable) -> Result<Matrix> {
        let values = column_values(table);
        let n = table.len();
        let mut m = Matrix::zeros(n, self.width());
        let mut offset = 0;
        for c in &self.columns {
            let data = &values
                .iter()
                .find(|(name, _)| name == &c.name)
                .ok_or_else(|| GsneError::Schema(format!("column `{}` missing from table", c.name)))?
                .1;
            match (c.kind, data) {
                (FeatureKind::Numeric, ColumnData::Numeric(v)) => {
                    for (r, x) in v.iter().enumerate() {
                        m.set(r, offset, (x.unwrap_or(c.mean) - c.mean) / c.stddev);
                    }
                }
                (FeatureKind::Categorical, ColumnData::Categorical(v)) => {
                    let mut unknown = 0;
                    for (r, x) in v.iter().enumerate() {
                        if let Some(x) = x {
                            match c.categories.iter().position(|k| k == x) {
                                Some(k) => m.set(r, offset + k, 1.0),
                                None => unknown += 1,
                            }
                        }
                    }
                    if unknown > 0 {
                        warn!("column `{}`: {unknown} rows with unknown categories encoded as zeros", c.name);
                    }
                }
                _ => return Err(GsneError::Schema(format!("column `{}` changed type", c.name))),
            }
            offset += c.width();
        }
        Ok(m)
    }
}

/// Natural-log price transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PriceTransform;

impl PriceTransform {
    pub fn forward(&self, prices: &[f64]) -> Result<Vec<f64>> {
        log_normalize_price(prices)
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v.exp()).collect()
    }
}

pub fn log_normalize_price(prices: &[f64]) -> Result<Vec<f64>> {
    prices
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > 0.0 && p.is_finite() {
                Ok(p.ln())
            } else {
                Err(GsneError::Input(format!("price at row {i} is not positive: {p}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub houses: TableTransform,
    pub regions: TableTransform,
    pub schools: Option<TableTransform>,
    pub stations: Option<TableTransform>,
    pub price_transform: String,
}

impl PreprocessReport {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| GsneError::io(path, e))
    }
}
