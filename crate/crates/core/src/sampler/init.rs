//! Starting state from principal components of the data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{sq_distances, LatentState, Model};
use crate::error::Result;

/// Nodes mapped onto the top principal axes of `X` so that each latent axis
/// spans the data's standard deviation along the matching component;
/// `g = 1`, `H = Y`, `r = 0`, `β = D / mean nearest squared distance` and
/// nearest-node assignments.
pub fn initial_state(model: &Model) -> Result<LatentState> {
    let x = model.x();
    let (n, d) = x.shape();
    let k = model.n_nodes();
    let l = model.nodes().dim();

    let mean = x.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &mean;
    }
    let cov = xc.transpose() * &xc / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(b)));

    let pts = model.nodes().points();
    let mut y = DMatrix::from_fn(k, d, |_, j| mean[j]);
    for (axis, &comp) in order.iter().take(l.min(d)).enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(comp).into_owned();
        // Fix the sign so the largest component is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        let sd = eig.eigenvalues[comp].max(0.0).sqrt();
        let coords: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
        let cm = coords.iter().sum::<f64>() / k as f64;
        let cs = (coords.iter().map(|c| (c - cm).powi(2)).sum::<f64>() / k as f64).sqrt();
        if cs == 0.0 {
            continue;
        }
        for (kk, c) in coords.iter().enumerate() {
            let t = (c - cm) / cs * sd;
            for j in 0..d {
                y[(kk, j)] += t * v[j];
            }
        }
    }

    let d2 = sq_distances(x, &y);
    let mut assignment = Vec::with_capacity(n);
    let mut msd = 0.0;
    for i in 0..n {
        let row = d2.row(i);
        let (best, val) = row
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, v)| if *v < acc.1 { (j, *v) } else { acc });
        assignment.push(best);
        msd += val;
    }
    msd /= n as f64;
    let beta = d as f64 / msd.max(1e-12);
    LatentState::new(assignment, beta, DVector::from_element(k, 1.0), y, DVector::zeros(k))
}
