use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Composition, ElementTable};
use crate::error::{PtgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundRecord {
    pub formula: String,
    pub composition: Composition,
    pub target: f64,
}

/// Compounds with a scalar target, e.g. formation energy per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundDataset {
    pub records: Vec<CompoundRecord>,
    /// Declared unit of `target`, taken verbatim from the header; never converted.
    pub unit: String,
}

impl CompoundDataset {
    pub fn load(path: impl AsRef<Path>, table: &ElementTable) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| PtgError::io(path, e))?;
        Self::from_reader(file, table)
    }

    /// Parse `formula,target` CSV. The target header may carry a unit as
    /// `target[eV/atom]`.
    pub fn from_reader<R: Read>(reader: R, table: &ElementTable) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if headers.len() != 2 || &headers[0] != "formula" {
            return Err(parse_err(1, "header must be `formula,target`"));
        }
        let unit = match &headers[1] {
            "target" => String::new(),
            h if h.starts_with("target[") && h.ends_with(']') => h[7..h.len() - 1].to_string(),
            h => return Err(parse_err(1, format!("unexpected target column `{h}`"))),
        };

        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(i + 2, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(i + 2, |p| p.line() as usize);
            let formula = rec[0].to_string();
            let composition = Composition::parse(&formula)
                .map_err(|e| parse_err(line, e.to_string()))?;
            composition
                .weights(table)
                .map_err(|e| parse_err(line, format!("{formula}: {e}")))?;
            let target: f64 = rec[1]
                .parse()
                .map_err(|_| parse_err(line, format!("target `{}` is not a number", &rec[1])))?;
            if !target.is_finite() {
                return Err(parse_err(line, "target must be finite"));
            }
            records.push(CompoundRecord {
                formula,
                composition,
                target,
            });
        }
        Ok(Self { records, unit })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target).collect()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> PtgError {
    PtgError::Parse {
        line,
        message: message.into(),
    }
}
