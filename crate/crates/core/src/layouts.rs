//! Latent node layouts and their coarse-to-fine expansions.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};

const MIN_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutKind {
    Square { side: usize },
    Cone { rings: Vec<usize> },
    Custom,
}

/// K points in an L-dimensional latent box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    points: Vec<Vec<f64>>,
    kind: LayoutKind,
    bounds: Vec<(f64, f64)>,
    /// 0 = coarse, 1 = expanded.
    generation: u8,
}

impl NodeSet {
    pub fn new(
        points: Vec<Vec<f64>>,
        kind: LayoutKind,
        bounds: Vec<(f64, f64)>,
        generation: u8,
    ) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(PtgError::Layout("empty node set".into()));
        };
        let dim = first.len();
        if dim == 0 || dim > 3 {
            return Err(PtgError::Layout(format!("latent dimension {dim} not in 1..=3")));
        }
        if bounds.len() != dim {
            return Err(PtgError::DimensionMismatch {
                expected: dim,
                found: bounds.len(),
            });
        }
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(PtgError::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            for (x, (lo, hi)) in p.iter().zip(&bounds) {
                if !x.is_finite() || *x < lo - 1e-12 || *x > hi + 1e-12 {
                    return Err(PtgError::Layout(format!(
                        "node {k} coordinate {x} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if sq_dist(&points[i], &points[j]).sqrt() <= MIN_SEPARATION {
                    return Err(PtgError::Layout(format!("nodes {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            points,
            kind,
            bounds,
            generation,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn kind(&self) -> &LayoutKind {
        &self.kind
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn generation(&self) -> u8 {
        self.generation
    }

    /// Index of the node nearest to `p` (lowest index on ties).
    pub fn nearest(&self, p: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, q) in self.points.iter().enumerate() {
            let d = sq_dist(p, q);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Smallest distance between two distinct nodes.
    pub fn min_spacing(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..i {
                m = m.min(sq_dist(&self.points[i], &self.points[j]));
            }
        }
        m.sqrt()
    }

    /// Check that every element can receive its own node.
    pub fn ensure_capacity(&self, elements: usize) -> Result<()> {
        if self.len() < elements {
            return Err(PtgError::Infeasible {
                elements,
                nodes: self.len(),
            });
        }
        Ok(())
    }

    /// Read `x,y[,z]` CSV. Bounds default to the per-axis extent of the points.
    pub fn from_csv<R: Read>(reader: R, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| PtgError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_owned)
            .collect();
        let expected = ["x", "y", "z"];
        if headers.is_empty() || headers.len() > 3 || headers.iter().zip(expected).any(|(h, e)| h != e)
        {
            return Err(PtgError::Parse {
                line: 1,
                message: "header must be `x,y` or `x,y,z`".into(),
            });
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| PtgError::Parse {
                line,
                message: e.to_string(),
            })?;
            let p = rec
                .iter()
                .map(|c| {
                    c.parse::<f64>().map_err(|_| PtgError::Parse {
                        line,
                        message: format!("`{c}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            points.push(p);
        }
        if points.is_empty() {
            return Err(PtgError::Layout("custom layout has no nodes".into()));
        }
        match bounds {
            Some(b) => NodeSet::new(points, LayoutKind::Custom, b, 0),
            None => NodeSet::from_points(points),
        }
    }

    /// Custom node set bounded by the per-axis extent of its points.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let bounds = (0..dim)
            .map(|a| {
                points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let v = p.get(a).copied().unwrap_or(f64::NAN);
                    (lo.min(v), hi.max(v))
                })
            })
            .collect();
        NodeSet::new(points, LayoutKind::Custom, bounds, 0)
    }

    pub fn load_csv(path: impl AsRef<Path>, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| PtgError::io(path, e))?;
        Self::from_csv(file, bounds)
    }

    pub(crate) fn with_generation(mut self, generation: u8) -> Self {
        self.generation = generation;
        self
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn linspace(lo: f64, hi: f64, m: usize, j: usize) -> f64 {
    if j == m - 1 {
        hi
    } else {
        lo + (hi - lo) * j as f64 / (m - 1) as f64
    }
}

/// `m × m` evenly spaced nodes on `bounds × bounds`; x varies fastest.
pub fn square_grid(m: usize, bounds: (f64, f64)) -> Result<NodeSet> {
    if m < 2 {
        return Err(PtgError::Layout(format!("square grid needs m >= 2, got {m}")));
    }
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(PtgError::Layout(format!("empty interval [{lo}, {hi}]")));
    }
    let mut points = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            points.push(vec![linspace(lo, hi, m, j), linspace(lo, hi, m, i)]);
        }
    }
    NodeSet::new(points, LayoutKind::Square { side: m }, vec![bounds, bounds], 0)
}

/// Insert midpoints between neighbouring grid nodes: `m × m` becomes
/// `(2m-1) × (2m-1)`. Returns the new set and, for each old node, its new index.
pub fn expand_square(nodes: &NodeSet) -> Result<(NodeSet, Vec<usize>)> {
    let LayoutKind::Square { side: m } = *nodes.kind() else {
        return Err(PtgError::Layout("expand_square needs a square layout".into()));
    };
    if nodes.generation() != 0 {
        return Err(PtgError::Layout("layout has already been expanded".into()));
    }
    let m2 = 2 * m - 1;
    let old = |i: usize, j: usize| nodes.point(i * m + j);
    let mut points = Vec::with_capacity(m2 * m2);
    let mut mapping = vec![0; m * m];
    for i2 in 0..m2 {
        for j2 in 0..m2 {
            let (i, j) = (i2 / 2, j2 / 2);
            let p = match (i2 % 2, j2 % 2) {
                (0, 0) => {
                    mapping[i * m + j] = points.len();
                    old(i, j).to_vec()
                }
                (0, 1) => midpoint(old(i, j), old(i, j + 1)),
                (1, 0) => midpoint(old(i, j), old(i + 1, j)),
                _ => midpoint(old(i, j), old(i + 1, j + 1)),
            };
            points.push(p);
        }
    }
    let expanded = NodeSet::new(
        points,
        LayoutKind::Square { side: m2 },
        nodes.bounds().to_vec(),
        1,
    )?;
    Ok((expanded, mapping))
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Nodes on the lateral surface of a cone inscribed in the `bounds` cube.
///
/// Slice `j` of `S` sits at `z = top - (top - bottom) j / (S - 1)` with radius
/// growing linearly from 0 at the apex to half the x-extent at the base. Ring
/// nodes are equally spaced in angle starting at angle 0.
pub fn cone_layout(ring_sizes: &[usize], bounds: (f64, f64)) -> Result<NodeSet> {
    if ring_sizes.is_empty() {
        return Err(PtgError::Layout("empty ring schedule".into()));
    }
    if ring_sizes[0] != 1 {
        return Err(PtgError::Layout("first ring must be the single apex node".into()));
    }
    if ring_sizes.contains(&0) {
        return Err(PtgError::Layout("ring sizes must be positive".into()));
    }
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(PtgError::Layout(format!("empty interval [{lo}, {hi}]")));
    }
    let centre = 0.5 * (lo + hi);
    let base_radius = 0.5 * (hi - lo);
    let slices = ring_sizes.len();
    let mut points = Vec::new();
    for (j, &n) in ring_sizes.iter().enumerate() {
        let frac = if slices == 1 {
            0.0
        } else {
            j as f64 / (slices - 1) as f64
        };
        let z = if j == slices - 1 && slices > 1 {
            lo
        } else {
            hi - (hi - lo) * frac
        };
        let radius = base_radius * frac;
        for i in 0..n {
            let theta = 2.0 * PI * i as f64 / n as f64;
            let (x, y) = if radius == 0.0 {
                (centre, centre)
            } else {
                (
                    (centre + radius * theta.cos()).clamp(lo, hi),
                    (centre + radius * theta.sin()).clamp(lo, hi),
                )
            };
            points.push(vec![x, y, z]);
        }
    }
    NodeSet::new(
        points,
        LayoutKind::Cone {
            rings: ring_sizes.to_vec(),
        },
        vec![bounds; 3],
        0,
    )
}

/// Radius of the cone surface at height `z` for [`cone_layout`] in `bounds`.
pub fn cone_radius(z: f64, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = bounds;
    0.5 * (hi - lo) * (hi - z) / (hi - lo)
}

/// Build the fine cone and, for each fine node, the nearest coarse node.
pub fn expand_cone(coarse: &NodeSet, fine_rings: &[usize]) -> Result<(NodeSet, Vec<usize>)> {
    if !matches!(coarse.kind(), LayoutKind::Cone { .. }) {
        return Err(PtgError::Layout("expand_cone needs a cone layout".into()));
    }
    if coarse.generation() != 0 {
        return Err(PtgError::Layout("layout has already been expanded".into()));
    }
    let fine = cone_layout(fine_rings, coarse.bounds()[0])?.with_generation(1);
    let nearest = fine.points().iter().map(|p| coarse.nearest(p)).collect();
    Ok((fine, nearest))
}

/// Which layouts to use for the coarse and expanded stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutSpec {
    Square {
        side: usize,
        #[serde(default = "default_bounds")]
        bounds: (f64, f64),
    },
    Cone {
        coarse_rings: Vec<usize>,
        fine_rings: Vec<usize>,
        #[serde(default = "default_bounds")]
        bounds: (f64, f64),
    },
    Custom {
        coarse: std::path::PathBuf,
        fine: std::path::PathBuf,
    },
}

fn default_bounds() -> (f64, f64) {
    (-1.0, 1.0)
}

impl LayoutSpec {
    pub fn reference_square() -> Self {
        LayoutSpec::Square {
            side: 5,
            bounds: default_bounds(),
        }
    }

    pub fn reference_cone() -> Self {
        LayoutSpec::Cone {
            coarse_rings: vec![1, 4, 8, 12],
            fine_rings: vec![1, 4, 8, 12, 16, 20, 24],
            bounds: default_bounds(),
        }
    }

    /// Coarse and expanded node sets.
    pub fn build(&self) -> Result<(NodeSet, NodeSet)> {
        match self {
            LayoutSpec::Square { side, bounds } => {
                let coarse = square_grid(*side, *bounds)?;
                let (fine, _) = expand_square(&coarse)?;
                Ok((coarse, fine))
            }
            LayoutSpec::Cone {
                coarse_rings,
                fine_rings,
                bounds,
            } => {
                let coarse = cone_layout(coarse_rings, *bounds)?;
                let (fine, _) = expand_cone(&coarse, fine_rings)?;
                Ok((coarse, fine))
            }
            LayoutSpec::Custom { coarse, fine } => {
                let c = NodeSet::load_csv(coarse, None)?;
                let f = NodeSet::load_csv(fine, None)?.with_generation(1);
                if c.dim() != f.dim() {
                    return Err(PtgError::DimensionMismatch {
                        expected: c.dim(),
                        found: f.dim(),
                    });
                }
                Ok((c, f))
            }
        }
    }
}
