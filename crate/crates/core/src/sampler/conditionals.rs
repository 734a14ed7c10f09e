//! Conjugate conditional updates for `Z`, `β`, `g` and `H`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::truncnorm::truncated_std_normal;
use super::{LatentState, Model};
use crate::error::{PtgError, Result};
use crate::linalg::GaussianConditional;

/// Squared distances `‖x_n − y_k‖²` as an `N × K` matrix.
pub fn sq_distances(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k, d) = (x.nrows(), y.nrows(), x.ncols());
    let mut out = DMatrix::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            let mut acc = 0.0;
            for c in 0..d {
                let e = x[(i, c)] - y[(j, c)];
                acc += e * e;
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Posterior probabilities `γ_k(x_n)` over the nodes for one element.
pub fn responsibilities(x_n: &[f64], state: &LatentState) -> Result<DVector<f64>> {
    if let Some(bad) = x_n.iter().find(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite(format!("feature value {bad}")));
    }
    let y = state.y();
    if x_n.len() != y.ncols() {
        return Err(PtgError::DimensionMismatch {
            expected: y.ncols(),
            found: x_n.len(),
        });
    }
    let d2: Vec<f64> = (0..y.nrows())
        .map(|k| {
            x_n.iter()
                .enumerate()
                .map(|(c, v)| (v - y[(k, c)]).powi(2))
                .sum()
        })
        .collect();
    Ok(normalize_log_weights(&d2, state.beta))
}

/// Softmax of `−(β/2) d2` by log-sum-exp.
pub(crate) fn normalize_log_weights(d2: &[f64], beta: f64) -> DVector<f64> {
    let logw: Vec<f64> = d2.iter().map(|v| -0.5 * beta * v).collect();
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = DVector::from_iterator(logw.len(), logw.iter().map(|v| (v - m).exp()));
    let s = p.sum();
    p /= s;
    p
}

/// Draw each element's node from its responsibilities.
pub fn sample_z<R: Rng + ?Sized>(model: &Model, state: &LatentState, rng: &mut R) -> Vec<usize> {
    let d2 = sq_distances(model.x(), state.y());
    let k = d2.ncols();
    let mut row = vec![0.0; k];
    (0..d2.nrows())
        .map(|n| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = d2[(n, j)];
            }
            let p = normalize_log_weights(&row, state.beta);
            categorical(p.as_slice(), rng)
        })
        .collect()
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // Rounding left `u` above the final partial sum.
    p.iter().rposition(|v| *v > 0.0).unwrap_or(p.len() - 1)
}

/// Shape and rate of the Gamma conditional of `β`.
pub fn beta_posterior(model: &Model, state: &LatentState) -> (f64, f64) {
    let pr = model.priors();
    let nd = (model.n_elements() * model.n_features()) as f64;
    (
        pr.beta_shape + 0.5 * nd,
        pr.beta_rate + 0.5 * model.residual(state),
    )
}

pub fn sample_beta<R: Rng + ?Sized>(model: &Model, state: &LatentState, rng: &mut R) -> Result<f64> {
    let (shape, rate) = beta_posterior(model, state);
    if !rate.is_finite() {
        return Err(PtgError::NonFinite(format!("beta rate {rate}")));
    }
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| PtgError::NonFinite(format!("beta posterior: {e}")))?;
    Ok(dist.sample(rng).max(f64::MIN_POSITIVE))
}

/// Untruncated Gaussian conditional of `g` and its mean `μ_g`.
pub fn g_posterior(model: &Model, state: &LatentState) -> Result<(GaussianConditional, DVector<f64>)> {
    let (counts, sums) = model.node_sums(&state.assignment);
    let k = model.n_nodes();
    let precision: Vec<f64> = (0..k)
        .map(|j| state.beta * counts[j] * state.h.row(j).norm_squared())
        .collect();
    let b = DVector::from_fn(k, |j, _| state.beta * state.h.row(j).dot(&sums.row(j)));
    let cond = GaussianConditional::new(model.gram_g(), &precision)?;
    let mean = cond.apply_vec(&b);
    Ok((cond, mean))
}

/// One Gibbs sweep over the positive-truncated conditional of `g`, in the
/// whitened coordinates `w` with `g = μ + R w`.
pub fn sample_g<R: Rng + ?Sized>(
    model: &Model,
    state: &LatentState,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (cond, mean) = g_posterior(model, state)?;
    let root = cond.root();
    let k = mean.len();
    let mut w = cond.whiten(&(&state.g - &mean));
    let mut g = state.g.clone();
    for j in 0..k {
        let col = root.column(j);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..k {
            let a = col[i];
            if a == 0.0 {
                continue;
            }
            // g_i without coordinate j, then g_i + a t > 0.
            let t = -(g[i] - a * w[j]) / a;
            if a > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
        if !(lo < hi) {
            continue;
        }
        let t = truncated_std_normal(lo, hi, rng);
        let delta = t - w[j];
        w[j] = t;
        for i in 0..k {
            g[i] += col[i] * delta;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite("g draw".into()));
    }
    g.apply(|v| *v = v.max(f64::MIN_POSITIVE));
    Ok(g)
}

/// Gaussian conditional shared by the columns of `H` and the `K × D` mean.
pub fn h_posterior(model: &Model, state: &LatentState) -> Result<(GaussianConditional, DMatrix<f64>)> {
    let (counts, sums) = model.node_sums(&state.assignment);
    let k = model.n_nodes();
    let precision: Vec<f64> = (0..k)
        .map(|j| state.beta * counts[j] * state.g[j] * state.g[j])
        .collect();
    let mut b = sums;
    for j in 0..k {
        b.row_mut(j).scale_mut(state.beta * state.g[j]);
    }
    let ch = model.gram_h(&state.r)?;
    let cond = GaussianConditional::new(&ch, &precision)?;
    let mean = cond.apply(&b);
    Ok((cond, mean))
}

pub fn sample_h<R: Rng + ?Sized>(
    model: &Model,
    state: &LatentState,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (cond, mean) = h_posterior(model, state)?;
    let (k, d) = mean.shape();
    let eps = DMatrix::from_fn(k, d, |_, _| StandardNormal.sample(rng));
    let h = mean + cond.root() * eps;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite("H draw".into()));
    }
    Ok(h)
}
