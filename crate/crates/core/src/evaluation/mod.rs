//! Table quality: compositional descriptors, random-forest regression with
//! repeated k-fold cross-validation, and element enrichment of error subsets.

mod cv;
mod enrichment;
mod forest;

use serde::{Deserialize, Serialize};

use crate::assignment::PeriodicTable;
use crate::data::{Composition, ElementTable};
use crate::error::{PtgError, Result};
use crate::periodic;

pub use cv::{cross_validate, stratified_folds, CvConfig, EvalReport};
pub use enrichment::{enrichment, EnrichmentReport, EnrichmentRow, EnrichmentThresholds};
pub use forest::{ForestParams, RandomForest};

/// Per-element coordinates used to featurize compositions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub name: String,
    pub symbols: Vec<String>,
    pub coords: Vec<Vec<f64>>,
}

impl Descriptor {
    pub fn new(name: impl Into<String>, symbols: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if symbols.len() != coords.len() {
            return Err(PtgError::DimensionMismatch {
                expected: symbols.len(),
                found: coords.len(),
            });
        }
        let dim = coords.first().map_or(0, Vec::len);
        if dim == 0 || coords.iter().any(|c| c.len() != dim) {
            return Err(PtgError::Config("descriptor coordinates must share a positive length".into()));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite("descriptor coordinate".into()));
        }
        Ok(Self {
            name: name.into(),
            symbols,
            coords,
        })
    }

    /// Node coordinates of each element in a generated table.
    pub fn from_table(name: impl Into<String>, table: &PeriodicTable) -> Result<Self> {
        let coords = (0..table.len()).map(|n| table.coords(n).to_vec()).collect();
        Self::new(name, table.symbols.clone(), coords)
    }

    /// (group, period) of each element, each axis mapped linearly onto
    /// [−1, 1] over the elements present.
    pub fn standard(elements: &ElementTable) -> Result<Self> {
        let mut raw = Vec::with_capacity(elements.n_elements());
        for e in elements.elements() {
            let group = periodic::group(e.atomic_number);
            let period = periodic::period(e.atomic_number);
            match (group, period) {
                (Some(g), Some(p)) => raw.push([g as f64, p as f64]),
                _ => {
                    return Err(PtgError::Config(format!(
                        "{} has no group in the standard table",
                        e.symbol
                    )))
                }
            }
        }
        let mut coords = vec![vec![0.0; 2]; raw.len()];
        for axis in 0..2 {
            let lo = raw.iter().map(|r| r[axis]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|r| r[axis]).fold(f64::NEG_INFINITY, f64::max);
            for (c, r) in coords.iter_mut().zip(&raw) {
                c[axis] = if hi > lo {
                    2.0 * (r[axis] - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                };
            }
        }
        let symbols = elements.elements().iter().map(|e| e.symbol.clone()).collect();
        Self::new("standard", symbols, coords)
    }

    pub fn dim(&self) -> usize {
        self.coords[0].len()
    }

    pub fn get(&self, symbol: &str) -> Option<&[f64]> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map(|i| self.coords[i].as_slice())
    }
}

/// Fraction-weighted mean of the element coordinates of `composition`.
pub fn phi(composition: &Composition, descriptor: &Descriptor) -> Result<Vec<f64>> {
    let mut out = vec![0.0; descriptor.dim()];
    for (sym, w) in composition.terms() {
        let u = descriptor
            .get(sym)
            .ok_or_else(|| PtgError::UnknownSymbol(sym.clone()))?;
        for (o, c) in out.iter_mut().zip(u) {
            *o += w * c;
        }
    }
    Ok(out)
}
