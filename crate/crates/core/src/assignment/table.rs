use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};
use crate::layouts::NodeSet;

/// Where a table came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub restart: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Joint log-likelihood of the fine-tuned state.
    pub log_likelihood: f64,
    pub fine_tune_best_iteration: usize,
    pub r_acceptance_rate: f64,
    /// How `g` is set during fine-tuning.
    pub g_update: String,
}

/// A one-to-one assignment of elements to layout nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTable {
    pub symbols: Vec<String>,
    pub atomic_numbers: Vec<u32>,
    /// Node index of each element.
    pub assignment: Vec<usize>,
    pub nodes: NodeSet,
    pub provenance: Provenance,
}

impl PeriodicTable {
    pub fn new(
        symbols: Vec<String>,
        atomic_numbers: Vec<u32>,
        assignment: Vec<usize>,
        nodes: NodeSet,
        provenance: Provenance,
    ) -> Result<Self> {
        let t = Self {
            symbols,
            atomic_numbers,
            assignment,
            nodes,
            provenance,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.symbols.len();
        for len in [self.atomic_numbers.len(), self.assignment.len()] {
            if len != n {
                return Err(PtgError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let mut used = vec![false; self.nodes.len()];
        for (e, k) in self.assignment.iter().enumerate() {
            let slot = used.get_mut(*k).ok_or(PtgError::OutOfRange {
                index: *k,
                len: self.nodes.len(),
            })?;
            if std::mem::replace(slot, true) {
                return Err(PtgError::Config(format!(
                    "node {k} assigned twice (second: {})",
                    self.symbols[e]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Latent coordinates of element `n`.
    pub fn coords(&self, n: usize) -> &[f64] {
        self.nodes.point(self.assignment[n])
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    /// `symbol,atomic_number,node_index,u1,u2[,u3]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| PtgError::io("table", e);
        let dim = self.nodes.dim();
        let mut header = String::from("symbol,atomic_number,node_index");
        for a in 1..=dim {
            header.push_str(&format!(",u{a}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for n in 0..self.len() {
            let mut line = format!(
                "{},{},{}",
                self.symbols[n], self.atomic_numbers[n], self.assignment[n]
            );
            for c in self.coords(n) {
                line.push_str(&format!(",{c}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layouts::square_grid;

    fn provenance() -> Provenance {
        Provenance {
            restart: 0,
            seed: 1,
            config_hash: "abc".into(),
            log_likelihood: -1.0,
            fine_tune_best_iteration: 1,
            r_acceptance_rate: 0.5,
            g_update: "clamped conditional mean".into(),
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let nodes = square_grid(2, (-1.0, 1.0)).unwrap();
        let t = PeriodicTable::new(
            vec!["H".into(), "He".into()],
            vec![1, 2],
            vec![3, 0],
            nodes,
            provenance(),
        )
        .unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "symbol,atomic_number,node_index,u1,u2\nH,1,3,1,1\nHe,2,0,-1,-1\n"
        );
        assert_eq!(PeriodicTable::from_json(&t.to_json().unwrap()).unwrap(), t);
    }

    #[test]
    fn rejects_shared_nodes() {
        let nodes = square_grid(2, (-1.0, 1.0)).unwrap();
        let r = PeriodicTable::new(
            vec!["H".into(), "He".into()],
            vec![1, 2],
            vec![1, 1],
            nodes,
            provenance(),
        );
        assert!(r.is_err());
    }
}
