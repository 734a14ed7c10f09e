//! Chemical formula parsing.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! formula := unit (('·' | '*') number? unit)*
//! unit    := group+
//! group   := (symbol | '(' unit ')' | '[' unit ']') number?
//! symbol  := [A-Z][a-z]?
//! number  := [0-9]+ ('.' [0-9]+)? | '.' [0-9]+
//! ```
//!
//! Hydrate-style separators multiply the following unit by its leading number,
//! so `CuSO4·5H2O` expands to Cu1 S1 O9 H10.

use serde::{Deserialize, Serialize};

use crate::data::ElementTable;
use crate::error::{PtgError, Result};
use crate::periodic;

/// Element fractions of a compound, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    terms: Vec<(String, f64)>,
}

impl Composition {
    /// Build from raw counts, merging repeated symbols and normalizing.
    pub fn from_counts<S: AsRef<str>>(counts: &[(S, f64)]) -> Result<Self> {
        let mut terms: Vec<(String, f64)> = Vec::new();
        for (sym, c) in counts {
            let sym = sym.as_ref();
            if !(c.is_finite() && *c > 0.0) {
                return Err(PtgError::Formula {
                    formula: sym.to_string(),
                    reason: format!("count {c} must be positive"),
                });
            }
            if periodic::atomic_number(sym).is_none() {
                return Err(PtgError::UnknownSymbol(sym.to_string()));
            }
            match terms.iter_mut().find(|(s, _)| s == sym) {
                Some((_, acc)) => *acc += c,
                None => terms.push((sym.to_string(), *c)),
            }
        }
        if terms.is_empty() {
            return Err(PtgError::Formula {
                formula: String::new(),
                reason: "empty composition".into(),
            });
        }
        let total: f64 = terms.iter().map(|(_, c)| c).sum();
        for (_, c) in &mut terms {
            *c /= total;
        }
        Ok(Self { terms })
    }

    pub fn parse(formula: &str) -> Result<Self> {
        let chars: Vec<char> = formula.chars().filter(|c| !c.is_whitespace()).collect();
        let mut p = Parser {
            src: formula,
            chars: &chars,
            pos: 0,
        };
        let counts = p.formula()?;
        Self::from_counts(&counts).map_err(|e| match e {
            PtgError::Formula { reason, .. } => PtgError::Formula {
                formula: formula.to_string(),
                reason,
            },
            other => other,
        })
    }

    /// (symbol, fraction) pairs; fractions sum to one.
    pub fn terms(&self) -> &[(String, f64)] {
        &self.terms
    }

    pub fn fraction(&self, symbol: &str) -> f64 {
        self.terms
            .iter()
            .find(|(s, _)| s == symbol)
            .map_or(0.0, |(_, w)| *w)
    }

    /// Weight vector aligned with the rows of `table`.
    pub fn weights(&self, table: &ElementTable) -> Result<Vec<f64>> {
        let mut w = vec![0.0; table.n_elements()];
        for (sym, frac) in &self.terms {
            let i = table
                .element_index(sym)
                .ok_or_else(|| PtgError::UnknownSymbol(sym.clone()))?;
            w[i] += frac;
        }
        Ok(w)
    }

    /// Mix two compositions: `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Self {
        let mut terms: Vec<(String, f64)> = Vec::new();
        let scaled = self
            .terms
            .iter()
            .map(|(s, w)| (s, alpha * w))
            .chain(other.terms.iter().map(|(s, w)| (s, (1.0 - alpha) * w)));
        for (s, w) in scaled {
            match terms.iter_mut().find(|(t, _)| t == s) {
                Some((_, acc)) => *acc += w,
                None => terms.push((s.clone(), w)),
            }
        }
        terms.retain(|(_, w)| *w > 0.0);
        Self { terms }
    }
}

/// Parse and check every symbol against `table`.
pub fn parse_formula(formula: &str, table: &ElementTable) -> Result<Composition> {
    let comp = Composition::parse(formula)?;
    comp.weights(table)?;
    Ok(comp)
}

struct Parser<'a> {
    src: &'a str,
    chars: &'a [char],
    pos: usize,
}

type Counts = Vec<(String, f64)>;

impl Parser<'_> {
    fn err(&self, reason: impl Into<String>) -> PtgError {
        PtgError::Formula {
            formula: self.src.to_string(),
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn formula(&mut self) -> Result<Counts> {
        let mut out = self.unit()?;
        while let Some(c) = self.peek() {
            if c != '·' && c != '*' {
                return Err(self.err(format!("unexpected `{c}` at position {}", self.pos)));
            }
            self.pos += 1;
            let mult = self.number()?.unwrap_or(1.0);
            let part = self.unit()?;
            out.extend(part.into_iter().map(|(s, c)| (s, c * mult)));
        }
        Ok(out)
    }

    fn unit(&mut self) -> Result<Counts> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_uppercase() => {
                    let sym = self.symbol()?;
                    let n = self.number()?.unwrap_or(1.0);
                    out.push((sym, n));
                }
                Some(open @ ('(' | '[')) => {
                    let close = if open == '(' { ')' } else { ']' };
                    self.pos += 1;
                    let inner = self.unit()?;
                    if self.peek() != Some(close) {
                        return Err(self.err("unbalanced parentheses"));
                    }
                    self.pos += 1;
                    let n = self.number()?.unwrap_or(1.0);
                    out.extend(inner.into_iter().map(|(s, c)| (s, c * n)));
                }
                Some(')' | ']') if out.is_empty() => {
                    return Err(self.err("unbalanced parentheses"));
                }
                _ => break,
            }
        }
        if out.is_empty() {
            return Err(match self.peek() {
                None => self.err("empty formula"),
                Some(c) => self.err(format!("unexpected `{c}` at position {}", self.pos)),
            });
        }
        Ok(out)
    }

    fn symbol(&mut self) -> Result<String> {
        let mut sym = String::new();
        sym.push(self.chars[self.pos]);
        self.pos += 1;
        if let Some(c) = self.peek().filter(char::is_ascii_lowercase) {
            sym.push(c);
            self.pos += 1;
        }
        if periodic::atomic_number(&sym).is_none() {
            return Err(PtgError::UnknownSymbol(sym));
        }
        Ok(sym)
    }

    fn number(&mut self) -> Result<Option<f64>> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Ok(None);
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let v: f64 = text
            .parse()
            .map_err(|_| self.err(format!("bad count `{text}`")))?;
        if !(v > 0.0) {
            return Err(self.err(format!("count `{text}` must be positive")));
        }
        Ok(Some(v))
    }
}
