//! Feature landscapes over a layout and SVG rendering of tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::PeriodicTable;
use crate::data::Standardization;
use crate::error::{PtgError, Result};
use crate::layouts::{LayoutKind, NodeSet};
use crate::periodic;
use crate::sampler::LatentState;

/// One feature reconstructed at every node, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub feature: String,
    pub feature_index: usize,
    pub values: Vec<f64>,
    pub nodes: NodeSet,
}

/// `g_k · h_kd`, mapped back through the column scale and mean of feature `d`.
pub fn landscape(
    d: usize,
    state: &LatentState,
    nodes: &NodeSet,
    standardization: &Standardization,
) -> Result<Landscape> {
    let n_features = standardization.means.len();
    if d >= n_features || d >= state.h.ncols() {
        return Err(PtgError::OutOfRange {
            index: d,
            len: n_features.min(state.h.ncols()),
        });
    }
    if state.h.nrows() != nodes.len() {
        return Err(PtgError::DimensionMismatch {
            expected: nodes.len(),
            found: state.h.nrows(),
        });
    }
    let values: Vec<f64> = (0..nodes.len())
        .map(|k| state.g[k] * state.h[(k, d)] * standardization.scales[d] + standardization.means[d])
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite(format!("landscape of feature {d}")));
    }
    Ok(Landscape {
        feature: standardization.feature_names[d].clone(),
        feature_index: d,
        values,
        nodes: nodes.clone(),
    })
}

impl Landscape {
    /// `node_index,u1,u2[,u3],value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| PtgError::io("landscape", e);
        let mut header = String::from("node_index");
        for a in 1..=self.nodes.dim() {
            write!(header, ",u{a}").unwrap();
        }
        writeln!(out, "{header},value").map_err(io)?;
        for (k, v) in self.values.iter().enumerate() {
            let mut line = k.to_string();
            for c in self.nodes.point(k) {
                write!(line, ",{c}").unwrap();
            }
            writeln!(out, "{line},{v}").map_err(io)?;
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

const PANEL: f64 = 480.0;
const MARGIN: f64 = 40.0;
const LEGEND: f64 = 60.0;
const PERIOD_COLORS: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
];
const COOL: (f64, f64, f64) = (59.0, 76.0, 192.0);
const WARM: (f64, f64, f64) = (180.0, 4.0, 38.0);

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn lerp_white(c: (f64, f64, f64), t: f64) -> String {
    let mix = |a: f64| (255.0 + (a - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(c.0), mix(c.1), mix(c.2))
}

/// Two-color diverging scale: white at the median, saturated at the extremes.
fn heat_color(v: f64, lo: f64, median: f64, hi: f64) -> String {
    if v >= median {
        let t = if hi > median { (v - median) / (hi - median) } else { 0.0 };
        lerp_white(WARM, t.clamp(0.0, 1.0))
    } else {
        let t = if median > lo { (median - v) / (median - lo) } else { 0.0 };
        lerp_white(COOL, t.clamp(0.0, 1.0))
    }
}

struct View {
    name: &'static str,
    x_axis: usize,
    y_axis: Option<usize>,
}

fn views(nodes: &NodeSet) -> Vec<View> {
    match nodes.dim() {
        1 => vec![View {
            name: "line",
            x_axis: 0,
            y_axis: None,
        }],
        2 => vec![View {
            name: "plane",
            x_axis: 0,
            y_axis: Some(1),
        }],
        _ => vec![
            View {
                name: "top",
                x_axis: 0,
                y_axis: Some(1),
            },
            View {
                name: "side",
                x_axis: 0,
                y_axis: Some(2),
            },
        ],
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the table as SVG: one panel per projection (two for 3-D layouts),
/// a cell per node, element symbols colored by period and, optionally, the
/// landscape as per-node fill with a min/median/max legend.
pub fn table_svg(table: &PeriodicTable, heat: Option<&Landscape>) -> Result<String> {
    table.validate()?;
    let nodes = &table.nodes;
    if let Some(l) = heat {
        if l.values.len() != nodes.len() {
            return Err(PtgError::DimensionMismatch {
                expected: nodes.len(),
                found: l.values.len(),
            });
        }
    }
    let views = views(nodes);
    let width = MARGIN + views.len() as f64 * (PANEL + MARGIN);
    let height = 2.0 * MARGIN + PANEL + if heat.is_some() { LEGEND } else { 0.0 };
    let bounds = nodes.bounds();
    let square = matches!(nodes.kind(), LayoutKind::Square { .. });
    let cell = match nodes.kind() {
        LayoutKind::Square { side } if *side > 0 => PANEL / *side as f64,
        _ => {
            let extent = bounds.iter().map(|(a, b)| b - a).fold(0.0, f64::max);
            if extent > 0.0 {
                (nodes.min_spacing() / extent * PANEL).clamp(8.0, 48.0)
            } else {
                48.0
            }
        }
    };
    let stats = heat.map(|l| {
        let (lo, hi) = l.range();
        (lo, l.median(), hi)
    });

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    )
    .unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    if let Some(l) = heat {
        writeln!(s, "<title>{}</title>", escape(&l.feature)).unwrap();
    }

    for (v, view) in views.iter().enumerate() {
        let ox = MARGIN + v as f64 * (PANEL + MARGIN);
        let oy = MARGIN;
        let inner = PANEL - cell;
        let frac = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let map = |p: &[f64]| -> (f64, f64) {
            let x = ox + cell / 2.0 + frac(p[view.x_axis], bounds[view.x_axis]) * inner;
            let y = match view.y_axis {
                Some(a) => oy + cell / 2.0 + (1.0 - frac(p[a], bounds[a])) * inner,
                None => oy + PANEL / 2.0,
            };
            (x, y)
        };
        writeln!(s, r#"<g class="view" id="view-{}">"#, view.name).unwrap();
        writeln!(
            s,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#333333">{}</text>"##,
            fmt(ox),
            fmt(oy - 10.0),
            view.name
        )
        .unwrap();
        for k in 0..nodes.len() {
            let (x, y) = map(nodes.point(k));
            let fill = match (heat, stats) {
                (Some(l), Some((lo, med, hi))) => heat_color(l.values[k], lo, med, hi),
                _ => "#f2f2f2".to_string(),
            };
            if square {
                writeln!(
                    s,
                    r##"<rect class="cell" data-node="{k}" x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="#bbbbbb" stroke-width="0.5"/>"##,
                    fmt(x - cell / 2.0),
                    fmt(y - cell / 2.0),
                    fmt(cell),
                    fmt(cell)
                )
                .unwrap();
            } else {
                writeln!(
                    s,
                    r##"<circle class="cell" data-node="{k}" cx="{}" cy="{}" r="{}" fill="{fill}" stroke="#bbbbbb" stroke-width="0.5"/>"##,
                    fmt(x),
                    fmt(y),
                    fmt(cell * 0.45)
                )
                .unwrap();
            }
        }
        for n in 0..table.len() {
            let (x, y) = map(table.coords(n));
            let period = periodic::period(table.atomic_numbers[n]).unwrap_or(1) as usize;
            let color = PERIOD_COLORS[(period - 1).min(PERIOD_COLORS.len() - 1)];
            writeln!(
                s,
                r#"<g class="element" data-symbol="{sym}" data-node="{node}"><text x="{}" y="{}" font-family="sans-serif" font-size="{}" font-weight="bold" text-anchor="middle" dominant-baseline="central" fill="{color}">{sym}</text></g>"#,
                fmt(x),
                fmt(y),
                fmt((cell * 0.4).clamp(6.0, 16.0)),
                sym = escape(&table.symbols[n]),
                node = table.assignment[n],
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }

    if let (Some(l), Some((lo, med, hi))) = (heat, stats) {
        let y = MARGIN + PANEL + 20.0;
        writeln!(s, r#"<g class="legend">"#).unwrap();
        for (i, (label, v)) in [("min", lo), ("median", med), ("max", hi)].iter().enumerate() {
            let x = MARGIN + i as f64 * 160.0;
            writeln!(
                s,
                r##"<rect x="{}" y="{}" width="16" height="16" fill="{}" stroke="#888888" stroke-width="0.5"/>"##,
                fmt(x),
                fmt(y),
                heat_color(*v, lo, med, hi)
            )
            .unwrap();
            writeln!(
                s,
                r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#333333">{label} {}: {v:.4}</text>"##,
                fmt(x + 22.0),
                fmt(y + 12.0),
                escape(&l.feature)
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Provenance;
    use crate::layouts::square_grid;
    use nalgebra::{DMatrix, DVector};

    fn state(k: usize) -> LatentState {
        LatentState::new(
            vec![0],
            1.0,
            DVector::from_fn(k, |i, _| 1.0 + i as f64),
            DMatrix::from_fn(k, 2, |i, d| i as f64 - d as f64),
            DVector::zeros(k),
        )
        .unwrap()
    }

    fn standardization() -> Standardization {
        Standardization {
            feature_names: vec!["a".into(), "b".into()],
            means: vec![10.0, -1.0],
            scales: vec![2.0, 0.5],
            convention: crate::data::VarianceConvention::Population,
        }
    }

    #[test]
    fn destandardized_reconstruction() {
        let nodes = square_grid(2, (-1.0, 1.0)).unwrap();
        let s = state(4);
        let l = landscape(1, &s, &nodes, &standardization()).unwrap();
        for k in 0..4 {
            assert_eq!(l.values[k], s.g[k] * s.h[(k, 1)] * 0.5 - 1.0);
        }
        assert_eq!(l.feature, "b");
        assert!(matches!(
            landscape(2, &s, &nodes, &standardization()),
            Err(PtgError::OutOfRange { .. })
        ));
        let mut csv = Vec::new();
        l.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("node_index,u1,u2,value\n0,-1,-1,-1.5\n"));
    }

    #[test]
    fn diverging_scale_endpoints() {
        assert_eq!(heat_color(0.0, 0.0, 1.0, 2.0), "#3b4cc0");
        assert_eq!(heat_color(1.0, 0.0, 1.0, 2.0), "#ffffff");
        assert_eq!(heat_color(2.0, 0.0, 1.0, 2.0), "#b40426");
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"<a & "b">"#), "&lt;a &amp; &quot;b&quot;&gt;");
    }

    #[test]
    fn two_element_table() {
        let nodes = square_grid(2, (-1.0, 1.0)).unwrap();
        let t = PeriodicTable::new(
            vec!["H".into(), "Na".into()],
            vec![1, 11],
            vec![0, 3],
            nodes,
            Provenance {
                restart: 0,
                seed: 0,
                config_hash: String::new(),
                log_likelihood: 0.0,
                fine_tune_best_iteration: 0,
                r_acceptance_rate: 0.0,
                g_update: String::new(),
            },
        )
        .unwrap();
        let svg = table_svg(&t, None).unwrap();
        assert_eq!(svg.matches(r#"<g class="element""#).count(), 2);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert_eq!(svg, table_svg(&t, None).unwrap());
    }
}
