//! Bagged regression trees with random feature subsets at each split.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_leaf: 5,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    params: ForestParams,
    n_features: usize,
    seed: u64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|i| self.y[*i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            size: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn build<R: Rng>(&mut self, idx: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let n = idx.len();
        let first = self.y[idx[0]];
        if n < 2 * self.min_leaf || depth >= self.max_depth || idx.iter().all(|i| self.y[*i] == first)
        {
            return self.leaf(idx);
        }
        let p = self.x[0].len();
        let total: f64 = idx.iter().map(|i| self.y[*i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for feature in sample(rng, p, self.mtry).into_iter() {
            order.sort_by(|a, b| self.x[*a][feature].total_cmp(&self.x[*b][feature]).then(a.cmp(b)));
            let mut left_sum = 0.0;
            for split in 1..n {
                left_sum += self.y[order[split - 1]];
                let (lo, hi) = (self.x[order[split - 1]][feature], self.x[order[split]][feature]);
                if split < self.min_leaf || n - split < self.min_leaf || lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                // Maximizing this is minimizing the within-child squared error.
                let score = left_sum * left_sum / split as f64 + right_sum * right_sum / (n - split) as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    // The midpoint of adjacent floats can round up to `hi`.
                    let mid = 0.5 * (lo + hi);
                    best = Some((score, feature, if mid < hi { mid } else { lo }));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        let mut cut = 0;
        for i in 0..n {
            if self.x[idx[i]][feature] <= threshold {
                idx.swap(i, cut);
                cut += 1;
            }
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, size: 0 });
        let (l, r) = idx.split_at_mut(cut);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

impl RandomForest {
    /// Fit on rows `x` and targets `y`. Tree `t` draws its bootstrap sample
    /// and feature subsets from its own stream of the master `seed`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(PtgError::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if params.n_trees == 0 || params.min_leaf == 0 {
            return Err(PtgError::Config("forest needs at least one tree and min_leaf ≥ 1".into()));
        }
        if x.len() < 2 * params.min_leaf {
            return Err(PtgError::Config(format!(
                "{} samples is fewer than twice the minimum leaf size {}",
                x.len(),
                params.min_leaf
            )));
        }
        let p = x[0].len();
        if p == 0 || x.iter().any(|r| r.len() != p) {
            return Err(PtgError::Config("feature rows must share a positive length".into()));
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite("forest training data".into()));
        }
        let mtry = params.max_features.unwrap_or(p.div_ceil(3)).clamp(1, p);
        let n = x.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    mtry,
                    min_leaf: params.min_leaf,
                    max_depth: params.max_depth.unwrap_or(usize::MAX),
                    nodes: Vec::new(),
                };
                b.build(&mut idx, 0, &mut rng);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            params: *params,
            n_features: p,
            seed,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Smallest leaf over all trees.
    pub fn min_leaf_size(&self) -> usize {
        self.trees
            .iter()
            .flat_map(|t| &t.nodes)
            .filter_map(|n| match n {
                Node::Leaf { size, .. } => Some(*size),
                Node::Split { .. } => None,
            })
            .min()
            .unwrap_or(0)
    }
}
