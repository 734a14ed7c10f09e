//! One-to-one element/node matching, MAP fine-tuning and the coarse-to-fine
//! pipeline that turns a chain into periodic tables.

mod hungarian;
mod pipeline;
mod table;

use nalgebra::{DMatrix, DVector};

use crate::error::{PtgError, Result};
use crate::sampler::{
    beta_posterior, g_posterior, h_posterior, newton_ascent, sq_distances, AscentOptions,
    LatentState, LengthScaleTarget, Model,
};

pub use hungarian::{solve_assignment, Assignment};
pub use pipeline::{interpolate_state, run_ptg, run_restart, PtgConfig, PtgRun};
pub use table::{PeriodicTable, Provenance};

/// Lower bound applied to `g` outside the sampler.
pub const G_FLOOR: f64 = 1e-6;

/// Squared distances `‖x_n − y_k‖²` between elements and node images.
pub fn cost_matrix(model: &Model, state: &LatentState) -> DMatrix<f64> {
    sq_distances(model.x(), state.y())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneResult {
    pub state: LatentState,
    pub log_likelihood: f64,
    /// Joint log-likelihood after each iteration.
    pub history: Vec<f64>,
    /// Iteration (1-based) of the returned state; 0 when no updates ran.
    pub best_iteration: usize,
}

/// Alternate exact assignment with conditional modes of `β`, `g`, `H` and a
/// Newton maximization of `r`, keeping the iterate of highest joint
/// log-likelihood.
///
/// `g` is set to `μ_g` clamped at [`G_FLOOR`], the coordinate-wise mode of
/// its truncated conditional.
pub fn fine_tune(model: &Model, init: LatentState, iterations: usize) -> Result<FineTuneResult> {
    let n = model.n_elements();
    if model.n_nodes() < n {
        return Err(PtgError::Infeasible {
            elements: n,
            nodes: model.n_nodes(),
        });
    }
    let mut s = init;
    if iterations == 0 {
        s.assignment = solve_assignment(&cost_matrix(model, &s))?.nodes;
        let ll = model.joint_log_likelihood(&s)?;
        return Ok(FineTuneResult {
            state: s,
            log_likelihood: ll,
            history: Vec::new(),
            best_iteration: 0,
        });
    }
    let opts = AscentOptions::default();
    let mut history = Vec::with_capacity(iterations);
    let mut best: Option<(LatentState, f64, usize)> = None;
    for it in 1..=iterations {
        s.assignment = solve_assignment(&cost_matrix(model, &s))?.nodes;

        let (shape, rate) = beta_posterior(model, &s);
        s.beta = ((shape - 1.0) / rate).max(f64::MIN_POSITIVE);

        let (_, mu_g) = g_posterior(model, &s)?;
        s.g = mu_g.map(|v| v.max(G_FLOOR));
        s.refresh();

        let (_, mu_h) = h_posterior(model, &s)?;
        s.h = mu_h;
        s.refresh();

        let target = LengthScaleTarget::new(model, &s.h)?;
        match newton_ascent(&target, &s.r, &opts) {
            Ok((r, _)) => s.r = r,
            Err(e) => log::warn!("fine-tune iteration {it}: length-scale ascent failed ({e}), r kept"),
        }
        s.validate()?;

        let ll = model.joint_log_likelihood(&s)?;
        history.push(ll);
        if best.as_ref().is_none_or(|(_, b, _)| ll > *b) {
            best = Some((s.clone(), ll, it));
        }
    }
    let (state, log_likelihood, best_iteration) = best.expect("at least one iteration");
    Ok(FineTuneResult {
        state,
        log_likelihood,
        history,
        best_iteration,
    })
}

/// Convenience: `g` clamped at [`G_FLOOR`].
pub(crate) fn floor_g(g: DVector<f64>) -> DVector<f64> {
    g.map(|v| if v.is_finite() { v.max(G_FLOOR) } else { G_FLOOR })
}
