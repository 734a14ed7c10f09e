//! Rectangular linear assignment by shortest augmenting paths with potentials.

use nalgebra::DMatrix;

use crate::error::{PtgError, Result};

/// An injective element → node map and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

/// Minimize `Σ_n cost[n, k(n)]` over injective maps from the `N` rows to the
/// `K ≥ N` columns.
///
/// Rows are inserted in order; each insertion grows a shortest path tree over
/// the columns, scanning them in index order and keeping the first minimum,
/// so the result is deterministic and prefers lower node indices on ties.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Result<Assignment> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(PtgError::Infeasible {
            elements: n,
            nodes: m,
        });
    }
    if let Some(bad) = cost.iter().find(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite(format!("cost entry {bad}")));
    }
    if n == 0 {
        return Ok(Assignment {
            nodes: Vec::new(),
            cost: 0.0,
        });
    }

    // 1-based rows/columns; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut nodes = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            nodes[owner[j] - 1] = j - 1;
        }
    }
    let total = nodes.iter().enumerate().map(|(i, k)| cost[(i, *k)]).sum();
    Ok(Assignment { nodes, cost: total })
}
