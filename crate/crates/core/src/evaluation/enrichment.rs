use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::data::CompoundDataset;
use crate::error::{PtgError, Result};
use crate::periodic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentThresholds {
    /// Upper bound on the favoured descriptor's error.
    pub low: f64,
    /// Minimum excess of the other descriptor's error.
    pub gap: f64,
}

impl Default for EnrichmentThresholds {
    fn default() -> Self {
        Self { low: 0.3, gap: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub symbol: String,
    /// Compounds in the subset containing the element.
    pub observed: usize,
    /// Subset size times the element's background incidence rate.
    pub expected: f64,
    /// `observed / expected`; `None` when the subset is empty.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    /// Indices of compounds favouring report A, then report B.
    pub subset_a: Vec<usize>,
    pub subset_b: Vec<usize>,
    pub rows_a: Vec<EnrichmentRow>,
    pub rows_b: Vec<EnrichmentRow>,
}

impl EnrichmentReport {
    /// `symbol,observed,expected,ratio`, with `NA` for undefined ratios.
    pub fn write_csv<W: Write>(rows: &[EnrichmentRow], mut out: W) -> Result<()> {
        let io = |e| PtgError::io("enrichment", e);
        writeln!(out, "symbol,observed,expected,ratio").map_err(io)?;
        for r in rows {
            let ratio = r.ratio.map_or("NA".to_string(), |v| v.to_string());
            writeln!(out, "{},{},{},{}", r.symbol, r.observed, r.expected, ratio).map_err(io)?;
        }
        Ok(())
    }
}

/// Compare per-compound errors of two descriptors. A compound favours A when
/// `err_a < low` and `err_b − err_a > gap`. Each element is counted once per
/// compound containing it, in the subset and in `background`.
pub fn enrichment(
    a: &EvalReport,
    b: &EvalReport,
    thresholds: &EnrichmentThresholds,
    background: &CompoundDataset,
) -> Result<EnrichmentReport> {
    if a.formulas != b.formulas {
        return Err(PtgError::Config("reports cover different compounds".into()));
    }
    if background.is_empty() {
        return Err(PtgError::Config("empty background dataset".into()));
    }
    let pick = |x: &[f64], y: &[f64]| -> Vec<usize> {
        (0..x.len())
            .filter(|i| x[*i] < thresholds.low && y[*i] - x[*i] > thresholds.gap)
            .collect()
    };
    let subset_a = pick(&a.compound_errors, &b.compound_errors);
    let subset_b = pick(&b.compound_errors, &a.compound_errors);

    let mut bg: BTreeMap<(u32, String), usize> = BTreeMap::new();
    for r in &background.records {
        for (s, _) in r.composition.terms() {
            let z = periodic::atomic_number(s).unwrap_or(u32::MAX);
            *bg.entry((z, s.clone())).or_default() += 1;
        }
    }
    let compositions: BTreeMap<&str, _> = background
        .records
        .iter()
        .map(|r| (r.formula.as_str(), &r.composition))
        .collect();
    let rows = |subset: &[usize]| -> Result<Vec<EnrichmentRow>> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for i in subset {
            let f = a.formulas[*i].as_str();
            let comp = compositions
                .get(f)
                .ok_or_else(|| PtgError::Config(format!("{f} missing from background")))?;
            for (s, _) in comp.terms() {
                *counts.entry(s.as_str()).or_default() += 1;
            }
        }
        let total = background.len() as f64;
        Ok(bg
            .iter()
            .map(|((_, s), n)| {
                let expected = subset.len() as f64 * *n as f64 / total;
                let observed = counts.get(s.as_str()).copied().unwrap_or(0);
                EnrichmentRow {
                    symbol: s.clone(),
                    observed,
                    expected,
                    ratio: (!subset.is_empty()).then(|| observed as f64 / expected),
                }
            })
            .collect())
    };
    Ok(EnrichmentReport {
        rows_a: rows(&subset_a)?,
        rows_b: rows(&subset_b)?,
        subset_a,
        subset_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Composition, CompoundRecord};
    use crate::evaluation::CvConfig;

    fn dataset(formulas: &[&str]) -> CompoundDataset {
        CompoundDataset {
            records: formulas
                .iter()
                .map(|f| CompoundRecord {
                    formula: f.to_string(),
                    composition: Composition::parse(f).unwrap(),
                    target: 0.0,
                })
                .collect(),
            unit: String::new(),
        }
    }

    fn report(formulas: &[&str], errors: &[f64]) -> EvalReport {
        EvalReport {
            descriptor: "x".into(),
            config: CvConfig::default(),
            mae_mean: 0.0,
            mae_std: 0.0,
            rmse_mean: 0.0,
            rmse_std: 0.0,
            per_repeat: Vec::new(),
            folds: Vec::new(),
            formulas: formulas.iter().map(|s| s.to_string()).collect(),
            targets: vec![0.0; formulas.len()],
            compound_errors: errors.to_vec(),
        }
    }

    #[test]
    fn iron_pair_is_doubly_enriched() {
        let f = ["FeO", "Fe2O3", "NaCl", "MgO"];
        let a = report(&f, &[0.1, 0.2, 0.5, 0.4]);
        let b = report(&f, &[1.5, 1.6, 0.5, 0.3]);
        let out = enrichment(&a, &b, &EnrichmentThresholds::default(), &dataset(&f)).unwrap();
        assert_eq!(out.subset_a, vec![0, 1]);
        assert!(out.subset_b.is_empty());
        let fe = out.rows_a.iter().find(|r| r.symbol == "Fe").unwrap();
        assert_eq!((fe.observed, fe.expected, fe.ratio), (2, 1.0, Some(2.0)));
        let na = out.rows_a.iter().find(|r| r.symbol == "Na").unwrap();
        assert_eq!(na.ratio, Some(0.0));
        assert!(out.rows_b.iter().all(|r| r.ratio.is_none()));
    }

    #[test]
    fn identical_reports_give_empty_subsets() {
        let f = ["FeO", "NaCl"];
        let a = report(&f, &[0.1, 2.0]);
        let out = enrichment(&a, &a.clone(), &EnrichmentThresholds::default(), &dataset(&f)).unwrap();
        assert!(out.subset_a.is_empty() && out.subset_b.is_empty());
        let mut csv = Vec::new();
        EnrichmentReport::write_csv(&out.rows_a, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "symbol,observed,expected,ratio\nO,0,0,NA\nNa,0,0,NA\nCl,0,0,NA\nFe,0,0,NA\n"
        );
    }

    #[test]
    fn mismatched_reports() {
        let a = report(&["FeO"], &[0.1]);
        let b = report(&["NaCl"], &[0.1]);
        assert!(enrichment(&a, &b, &EnrichmentThresholds::default(), &dataset(&["FeO"])).is_err());
    }
}
