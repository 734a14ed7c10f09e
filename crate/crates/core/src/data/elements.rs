use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};
use crate::periodic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub symbol: String,
    pub atomic_number: u32,
}

/// What to do with a feature column that has blank cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop the column and log a warning.
    #[default]
    DropColumn,
    /// Fail with the list of offending columns.
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Rows with a larger atomic number are discarded before the missing-value scan.
    pub max_atomic_number: u32,
    /// Also use the `atomic_number` identity column as a feature.
    pub atomic_number_as_feature: bool,
    /// Feature columns to keep, in order. `None` keeps every column.
    pub features: Option<Vec<String>>,
    pub missing: MissingPolicy,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_atomic_number: 54,
            atomic_number_as_feature: true,
            features: None,
            missing: MissingPolicy::DropColumn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    /// Divide by N.
    Population,
}

/// Column moments removed by [`ElementTable::standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub convention: VarianceConvention,
}

impl Standardization {
    /// Map a standardized value of feature `d` back to original units.
    pub fn restore(&self, d: usize, value: f64) -> f64 {
        value * self.scales[d] + self.means[d]
    }
}

/// N elements by D features.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTable {
    elements: Vec<Element>,
    features: DMatrix<f64>,
    feature_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl ElementTable {
    pub fn new(
        elements: Vec<Element>,
        features: DMatrix<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != elements.len() {
            return Err(PtgError::DimensionMismatch {
                expected: elements.len(),
                found: features.nrows(),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(PtgError::DimensionMismatch {
                expected: feature_names.len(),
                found: features.ncols(),
            });
        }
        let mut seen = HashSet::new();
        for e in &elements {
            if !(1..=118).contains(&e.atomic_number) {
                return Err(PtgError::Config(format!(
                    "atomic number {} of {} outside [1, 118]",
                    e.atomic_number, e.symbol
                )));
            }
            if !seen.insert(e.atomic_number) {
                return Err(PtgError::Config(format!(
                    "duplicate atomic number {}",
                    e.atomic_number
                )));
            }
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite(format!("feature value {bad}")));
        }
        Ok(Self {
            elements,
            features,
            feature_names,
            standardization: None,
        })
    }

    pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| PtgError::io(path, e))?;
        Self::from_reader(file, options)
    }

    /// Parse `symbol,atomic_number,<feature...>` CSV.
    pub fn from_reader<R: Read>(reader: R, options: &LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        if headers.len() < 2 || headers[0] != "symbol" || headers[1] != "atomic_number" {
            return Err(PtgError::Parse {
                line: 1,
                message: "header must start with `symbol,atomic_number`".into(),
            });
        }

        let mut names = Vec::new();
        if options.atomic_number_as_feature {
            names.push("atomic_number".to_string());
        }
        names.extend(headers[2..].iter().cloned());

        let mut elements = Vec::new();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| csv_error(e, line))?;
            let symbol = record[0].to_string();
            if symbol.is_empty() {
                return Err(PtgError::Parse {
                    line,
                    message: "empty element symbol".into(),
                });
            }
            let z: u32 = record[1].parse().map_err(|_| PtgError::Parse {
                line,
                message: format!("invalid atomic number `{}`", &record[1]),
            })?;
            if z > options.max_atomic_number {
                continue;
            }
            let mut row = Vec::with_capacity(names.len());
            if options.atomic_number_as_feature {
                row.push(Some(f64::from(z)));
            }
            for (j, cell) in record.iter().enumerate().skip(2) {
                if cell.is_empty() {
                    row.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| PtgError::Parse {
                        line,
                        message: format!("column `{}`: `{cell}` is not a number", headers[j]),
                    })?;
                    if !v.is_finite() {
                        return Err(PtgError::Parse {
                            line,
                            message: format!("column `{}`: non-finite value", headers[j]),
                        });
                    }
                    row.push(Some(v));
                }
            }
            elements.push(Element {
                symbol,
                atomic_number: z,
            });
            rows.push(row);
        }

        let mut keep: Vec<usize> = match &options.features {
            None => (0..names.len()).collect(),
            Some(wanted) => wanted
                .iter()
                .map(|w| {
                    names.iter().position(|n| n == w).ok_or_else(|| {
                        PtgError::Config(format!("expected feature column `{w}` not found"))
                    })
                })
                .collect::<Result<_>>()?,
        };

        let gappy: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|&j| rows.iter().any(|r| r[j].is_none()))
            .collect();
        if !gappy.is_empty() {
            let listed: Vec<String> = gappy.iter().map(|&j| names[j].clone()).collect();
            match options.missing {
                MissingPolicy::Error => return Err(PtgError::MissingValues(listed)),
                MissingPolicy::DropColumn => {
                    warn!("dropping columns with missing values: {}", listed.join(", "));
                    keep.retain(|j| !gappy.contains(j));
                }
            }
        }

        let n = rows.len();
        let features = DMatrix::from_fn(n, keep.len(), |i, j| rows[i][keep[j]].unwrap());
        let feature_names = keep.iter().map(|&j| names[j].clone()).collect();
        Self::new(elements, features, feature_names)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn element_index(&self, symbol: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.symbol == symbol)
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Zero-mean, unit population-variance columns.
    pub fn standardize(&self) -> Result<Self> {
        if self.is_standardized() {
            return Err(PtgError::AlreadyStandardized);
        }
        let n = self.features.nrows() as f64;
        let mut means = Vec::with_capacity(self.n_features());
        let mut scales = Vec::with_capacity(self.n_features());
        let mut out = self.features.clone();
        for (j, name) in self.feature_names.iter().enumerate() {
            let col = self.features.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let scale = var.sqrt();
            if !(scale > 0.0) || scale <= 1e-12 * mean.abs().max(1.0) {
                return Err(PtgError::ZeroVariance(name.clone()));
            }
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - mean) / scale;
            }
            means.push(mean);
            scales.push(scale);
        }
        Ok(Self {
            elements: self.elements.clone(),
            features: out,
            feature_names: self.feature_names.clone(),
            standardization: Some(Standardization {
                feature_names: self.feature_names.clone(),
                means,
                scales,
                convention: VarianceConvention::Population,
            }),
        })
    }

    /// Inverse of [`standardize`](Self::standardize); identity on raw tables.
    pub fn destandardize(&self) -> Self {
        let Some(s) = &self.standardization else {
            return self.clone();
        };
        let mut out = self.features.clone();
        for j in 0..out.ncols() {
            for v in out.column_mut(j).iter_mut() {
                *v = s.restore(j, *v);
            }
        }
        Self {
            elements: self.elements.clone(),
            features: out,
            feature_names: self.feature_names.clone(),
            standardization: None,
        }
    }

    /// Period of every element in the standard table (1-based).
    pub fn periods(&self) -> Vec<u32> {
        self.elements
            .iter()
            .map(|e| periodic::period(e.atomic_number).unwrap_or(0))
            .collect()
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> PtgError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    PtgError::Parse {
        line,
        message: e.to_string(),
    }
}
