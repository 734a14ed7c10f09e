//! GTM-LDLV posterior sampling: Gibbs updates of `Z`, `β`, `g`, `H` and a
//! Laplace-proposal Metropolis–Hastings update of the log length-scales `r`.

mod chain;
mod conditionals;
mod init;
mod length_scale;
pub mod truncnorm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};
use crate::kernels::{gibbs, gram, GramMatrix, JitterPolicy, StationaryKernelParams};
use crate::layouts::{sq_dist, NodeSet};

pub use chain::{
    run_chain, write_trace_csv, Accumulators, Chain, ChainConfig, Checkpoint, CheckpointConfig,
    PosteriorSummary, TraceRecord, CHECKPOINT_VERSION,
};
pub use conditionals::{
    beta_posterior, g_posterior, h_posterior, responsibilities, sample_beta, sample_g, sample_h,
    sample_z, sq_distances,
};
pub use init::initial_state;
pub use length_scale::{
    mh_step, newton_ascent, sample_r, AscentOptions, LengthScaleTarget, LogTarget, MhOutcome,
};

/// Hyperparameters of the priors on `g`, `r` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub xi_g: StationaryKernelParams,
    pub xi_r: StationaryKernelParams,
    /// Gamma shape `d_β0`.
    pub beta_shape: f64,
    /// Gamma rate `s_β0`.
    pub beta_rate: f64,
}

impl Priors {
    /// `ξ_g = ξ_r = (1/3, 3)` and `β ~ Gam(2, 2D)`.
    pub fn reference(n_features: usize) -> Self {
        let xi = StationaryKernelParams::new(1.0 / 3.0, 3.0).expect("valid constants");
        Self {
            xi_g: xi,
            xi_r: xi,
            beta_shape: 2.0,
            beta_rate: 2.0 * n_features as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.xi_g.validate()?;
        self.xi_r.validate()?;
        for (name, v) in [("beta_shape", self.beta_shape), ("beta_rate", self.beta_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PtgError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Full parameter state `θ = {Z, β, g, H, r}` of one chain.
///
/// `Z` is stored as the node index of each element; `y` caches `g_k h_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub assignment: Vec<usize>,
    pub beta: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DVector<f64>,
    y: DMatrix<f64>,
}

impl LatentState {
    pub fn new(
        assignment: Vec<usize>,
        beta: f64,
        g: DVector<f64>,
        h: DMatrix<f64>,
        r: DVector<f64>,
    ) -> Result<Self> {
        let mut s = Self {
            assignment,
            beta,
            g,
            h,
            r,
            y: DMatrix::zeros(0, 0),
        };
        s.refresh();
        s.validate()?;
        Ok(s)
    }

    pub fn n_nodes(&self) -> usize {
        self.g.len()
    }

    pub fn n_elements(&self) -> usize {
        self.assignment.len()
    }

    /// Node images `y_k = g_k h_k`, one row per node.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Recompute the cached `Y` after editing `g` or `H`.
    pub fn refresh(&mut self) {
        let mut y = self.h.clone();
        for (k, gk) in self.g.iter().enumerate() {
            y.row_mut(k).scale_mut(*gk);
        }
        self.y = y;
    }

    /// The `K × N` one-hot matrix `Z`.
    pub fn z_matrix(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n_nodes(), self.n_elements());
        for (n, k) in self.assignment.iter().enumerate() {
            z[(*k, n)] = 1.0;
        }
        z
    }

    /// Element counts `N_k` per node.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_nodes()];
        for k in &self.assignment {
            c[*k] += 1;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.g.len();
        for (name, rows) in [("H", self.h.nrows()), ("r", self.r.len())] {
            if rows != k {
                return Err(PtgError::Config(format!(
                    "{name} has {rows} rows but g has {k}"
                )));
            }
        }
        if let Some(bad) = self.assignment.iter().find(|a| **a >= k) {
            return Err(PtgError::OutOfRange { index: *bad, len: k });
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(PtgError::NonFinite(format!("beta = {}", self.beta)));
        }
        if let Some(bad) = self.g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(PtgError::NonFinite(format!("g entry {bad}")));
        }
        if self.h.iter().any(|v| !v.is_finite()) || self.r.iter().any(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite("H or r entry".into()));
        }
        Ok(())
    }
}

/// Data, nodes and the fixed prior Gram matrices shared by every update.
#[derive(Debug, Clone)]
pub struct Model {
    x: DMatrix<f64>,
    nodes: NodeSet,
    priors: Priors,
    jitter: JitterPolicy,
    cg: GramMatrix,
    cr: GramMatrix,
    node_d2: DMatrix<f64>,
}

impl Model {
    pub fn new(x: DMatrix<f64>, nodes: NodeSet, priors: Priors, jitter: JitterPolicy) -> Result<Self> {
        priors.validate()?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(PtgError::Config("empty data matrix".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite("data matrix entry".into()));
        }
        let pts = nodes.points();
        let cg = gram(pts, |a, b| priors.xi_g.eval_sq(sq_dist(a, b)), &jitter)?;
        let cr = gram(pts, |a, b| priors.xi_r.eval_sq(sq_dist(a, b)), &jitter)?;
        let k = nodes.len();
        let node_d2 = DMatrix::from_fn(k, k, |i, j| sq_dist(&pts[i], &pts[j]));
        Ok(Self {
            x,
            nodes,
            priors,
            jitter,
            cg,
            cr,
            node_d2,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn jitter(&self) -> &JitterPolicy {
        &self.jitter
    }

    pub fn n_elements(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn gram_g(&self) -> &GramMatrix {
        &self.cg
    }

    pub fn gram_r(&self) -> &GramMatrix {
        &self.cr
    }

    /// Squared latent distances between nodes.
    pub fn node_sq_distances(&self) -> &DMatrix<f64> {
        &self.node_d2
    }

    /// Unfactorized Gibbs-kernel matrix `C_h` for log length-scales `r`.
    pub fn kernel_h_matrix(&self, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = self.n_nodes();
        if r.len() != k {
            return Err(PtgError::DimensionMismatch {
                expected: k,
                found: r.len(),
            });
        }
        if let Some(bad) = r
            .iter()
            .find(|v| !v.is_finite() || v.abs() > crate::kernels::MAX_LOG_LENGTH_SCALE)
        {
            return Err(PtgError::NonFinite(format!("log length-scale {bad}")));
        }
        let l: Vec<f64> = r.iter().map(|v| v.exp()).collect();
        let dim = self.nodes.dim();
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let v = gibbs(self.node_d2[(i, j)], l[i], l[j], dim);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    pub fn gram_h(&self, r: &DVector<f64>) -> Result<GramMatrix> {
        GramMatrix::from_matrix(self.kernel_h_matrix(r)?, &self.jitter)
    }

    /// Per-node counts `N_k` and feature sums `Σ_{n: k(n)=k} x_n` (K × D).
    pub fn node_sums(&self, assignment: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.n_nodes();
        let mut counts = vec![0.0; k];
        let mut sums = DMatrix::zeros(k, self.n_features());
        for (n, kn) in assignment.iter().enumerate() {
            counts[*kn] += 1.0;
            for d in 0..self.n_features() {
                sums[(*kn, d)] += self.x[(n, d)];
            }
        }
        (counts, sums)
    }

    /// `Σ_n ‖x_n − y_{k(n)}‖²`.
    pub fn residual(&self, state: &LatentState) -> f64 {
        let y = state.y();
        let mut acc = 0.0;
        for (n, k) in state.assignment.iter().enumerate() {
            for d in 0..self.n_features() {
                let e = self.x[(n, d)] - y[(*k, d)];
                acc += e * e;
            }
        }
        acc
    }

    fn check_state(&self, state: &LatentState) -> Result<()> {
        if state.n_nodes() != self.n_nodes() {
            return Err(PtgError::DimensionMismatch {
                expected: self.n_nodes(),
                found: state.n_nodes(),
            });
        }
        if state.n_elements() != self.n_elements() {
            return Err(PtgError::DimensionMismatch {
                expected: self.n_elements(),
                found: state.n_elements(),
            });
        }
        if state.h.ncols() != self.n_features() {
            return Err(PtgError::DimensionMismatch {
                expected: self.n_features(),
                found: state.h.ncols(),
            });
        }
        Ok(())
    }

    /// Mixture log-likelihood `Σ_n ln (1/K) Σ_k N(x_n | y_k, β⁻¹ I)`.
    pub fn marginal_log_likelihood(&self, state: &LatentState) -> f64 {
        let d2 = sq_distances(&self.x, state.y());
        let (n, k, d) = (self.n_elements(), self.n_nodes(), self.n_features() as f64);
        let norm = 0.5 * d * (state.beta / (2.0 * std::f64::consts::PI)).ln() - (k as f64).ln();
        let mut total = 0.0;
        for i in 0..n {
            let row = d2.row(i);
            let m = row.min();
            let s: f64 = row.iter().map(|v| (-0.5 * state.beta * (v - m)).exp()).sum();
            total += norm - 0.5 * state.beta * m + s.ln();
        }
        total
    }

    /// Joint log density `ln p(X, Z, β, g, H, r)` up to the constant prior on `Z`
    /// and the truncation normalizer of the prior on `g`.
    pub fn joint_log_likelihood(&self, state: &LatentState) -> Result<f64> {
        use std::f64::consts::PI;
        self.check_state(state)?;
        let (n, d, k) = (
            self.n_elements() as f64,
            self.n_features() as f64,
            self.n_nodes() as f64,
        );
        let beta = state.beta;
        let lik = 0.5 * n * d * (beta / (2.0 * PI)).ln() - 0.5 * beta * self.residual(state);
        let (a, b) = (self.priors.beta_shape, self.priors.beta_rate);
        let beta_prior = a * b.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * beta.ln()
            - b * beta;
        let gauss = |g: &GramMatrix, v: &DVector<f64>| {
            -0.5 * (k * (2.0 * PI).ln() + g.ln_det() + g.quad_form(v))
        };
        let g_prior = gauss(&self.cg, &state.g);
        let r_prior = gauss(&self.cr, &state.r);
        let ch = self.gram_h(&state.r)?;
        let h_prior: f64 = (0..self.n_features())
            .map(|j| gauss(&ch, &state.h.column(j).into_owned()))
            .sum();
        let total = lik + beta_prior + g_prior + h_prior + r_prior;
        if !total.is_finite() {
            return Err(PtgError::NonFinite("joint log-likelihood".into()));
        }
        Ok(total)
    }
}
