//! The log length-scale target `s(r)`, Newton ascent and the Laplace-proposal
//! Metropolis–Hastings step.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LatentState, Model};
use crate::error::{PtgError, Result};
use crate::kernels::{GramMatrix, MAX_LOG_LENGTH_SCALE};
use crate::linalg::{symmetrize, FlooredEigen};

/// A smooth log density over `R^K`.
pub trait LogTarget {
    fn dim(&self) -> usize;

    fn value(&self, r: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, r: &DVector<f64>) -> Result<DVector<f64>>;

    /// Central differences of the gradient, symmetrized.
    fn hessian(&self, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = self.dim();
        let mut h = DMatrix::zeros(k, k);
        let mut x = r.clone();
        for j in 0..k {
            let step = 1e-5 * (1.0 + r[j].abs());
            x[j] = r[j] + step;
            let gp = self.gradient(&x)?;
            x[j] = r[j] - step;
            let gm = self.gradient(&x)?;
            x[j] = r[j];
            h.set_column(j, &((gp - gm) / (2.0 * step)));
        }
        symmetrize(&mut h);
        Ok(h)
    }
}

/// `s(r) = −D/2 ln|C_h| − ½ Σ_d h_dᵀ C_h⁻¹ h_d − ½ rᵀ C_r⁻¹ r` for fixed `H`.
pub struct LengthScaleTarget<'a> {
    model: &'a Model,
    h: &'a DMatrix<f64>,
}

/// Shared pieces of one evaluation of `s` and its derivatives.
struct Parts {
    c: DMatrix<f64>,
    cinv: DMatrix<f64>,
    /// `C⁻¹ H Hᵀ C⁻¹`.
    w: DMatrix<f64>,
    l2: Vec<f64>,
}

impl<'a> LengthScaleTarget<'a> {
    pub fn new(model: &'a Model, h: &'a DMatrix<f64>) -> Result<Self> {
        if h.nrows() != model.n_nodes() {
            return Err(PtgError::DimensionMismatch {
                expected: model.n_nodes(),
                found: h.nrows(),
            });
        }
        Ok(Self { model, h })
    }

    fn parts(&self, r: &DVector<f64>) -> Result<Parts> {
        let c = self.model.kernel_h_matrix(r)?;
        let cinv = GramMatrix::from_matrix(c.clone(), self.model.jitter())?.inverse();
        let a = &cinv * self.h;
        let w = &a * a.transpose();
        let l2 = r.iter().map(|v| (2.0 * v).exp()).collect();
        Ok(Parts {
            c,
            cinv,
            w,
            l2,
        })
    }

    fn prior_term(&self, r: &DVector<f64>) -> f64 {
        -0.5 * self.model.gram_r().quad_form(r)
    }

    /// `∂ ln C_ik / ∂ r_k` for `i ≠ k`.
    fn dlog(&self, p: &Parts, i: usize, k: usize) -> f64 {
        let half_l = 0.5 * self.model.nodes().dim() as f64;
        let d2 = self.model.node_sq_distances()[(i, k)];
        let s = p.l2[i] + p.l2[k];
        half_l * (1.0 - 2.0 * p.l2[k] / s) + 2.0 * d2 * p.l2[k] / (s * s)
    }

    /// `Q_ik = ∂ C_ik / ∂ r_k` (zero on the diagonal).
    fn q_matrix(&self, p: &Parts) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                0.0
            } else {
                p.c[(i, j)] * self.dlog(p, i, j)
            }
        })
    }

    fn gradient_from(&self, p: &Parts, q: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        let k = self.dim();
        let dd = self.h.ncols() as f64;
        let prior = self.model.gram_r().solve(r);
        DVector::from_fn(k, |j, _| {
            let mut acc = 0.0;
            for i in 0..k {
                acc += q[(i, j)] * (p.w[(i, j)] - dd * p.cinv[(i, j)]);
            }
            acc - prior[j]
        })
    }
}

impl LogTarget for LengthScaleTarget<'_> {
    fn dim(&self) -> usize {
        self.model.n_nodes()
    }

    fn value(&self, r: &DVector<f64>) -> Result<f64> {
        let c = self.model.gram_h(r)?;
        let dd = self.h.ncols() as f64;
        let data: f64 = (0..self.h.ncols())
            .map(|j| c.quad_form(&self.h.column(j).into_owned()))
            .sum();
        let v = -0.5 * dd * c.ln_det() - 0.5 * data + self.prior_term(r);
        if !v.is_finite() {
            return Err(PtgError::NonFinite(format!("s(r) = {v}")));
        }
        Ok(v)
    }

    fn gradient(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.parts(r)?;
        let q = self.q_matrix(&p);
        Ok(self.gradient_from(&p, &q, r))
    }

    /// With `G = W − D C⁻¹` and `E_k = ∂C/∂r_k = e_k q_kᵀ + q_k e_kᵀ`:
    /// `∂²s/∂r_k∂r_m = −tr(C⁻¹ E_m W E_k) + (D/2) tr(C⁻¹ E_m C⁻¹ E_k)
    ///  + ½ tr(G ∂²C/∂r_k∂r_m) − (C_r⁻¹)_km`.
    fn hessian(&self, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.parts(r)?;
        let q = self.q_matrix(&p);
        let k = self.dim();
        let dd = self.h.ncols() as f64;
        let half_l = 0.5 * self.model.nodes().dim() as f64;
        let g = &p.w - &p.cinv * dd;

        // tr(P E_m S E_k) for symmetric P, S.
        let cross = |pm: &DMatrix<f64>, sm: &DMatrix<f64>| {
            let pq = pm * &q;
            let sq = sm * &q;
            let qsq = q.transpose() * &sq;
            let qpq = q.transpose() * &pq;
            DMatrix::from_fn(k, k, |kk, m| {
                pq[(m, kk)] * sq[(kk, m)]
                    + pm[(kk, m)] * qsq[(m, kk)]
                    + qpq[(kk, m)] * sm[(m, kk)]
                    + pq[(kk, m)] * sq[(m, kk)]
            })
        };
        let t_w = cross(&p.cinv, &p.w);
        let t_c = cross(&p.cinv, &p.cinv);

        let mut hess = DMatrix::zeros(k, k);
        for kk in 0..k {
            for m in 0..k {
                let second = if kk == m {
                    // Entries (i, k) and (k, i) depend on r_k.
                    let mut acc = 0.0;
                    for i in 0..k {
                        if i == kk {
                            continue;
                        }
                        let (a, b) = (p.l2[i], p.l2[kk]);
                        let s = a + b;
                        let d2 = self.model.node_sq_distances()[(i, kk)];
                        let dl = self.dlog(&p, i, kk);
                        let d2l = -4.0 * half_l * a * b / (s * s) + 4.0 * d2 * b * (a - b) / (s * s * s);
                        acc += 2.0 * g[(i, kk)] * p.c[(i, kk)] * (d2l + dl * dl);
                    }
                    acc
                } else {
                    let (a, b) = (p.l2[m], p.l2[kk]);
                    let s = a + b;
                    let d2 = self.model.node_sq_distances()[(m, kk)];
                    let d2l = 4.0 * half_l * a * b / (s * s) - 8.0 * a * b * d2 / (s * s * s);
                    let dk = self.dlog(&p, m, kk);
                    let dm = self.dlog(&p, kk, m);
                    2.0 * g[(kk, m)] * p.c[(kk, m)] * (d2l + dk * dm)
                };
                hess[(kk, m)] = -t_w[(kk, m)] + 0.5 * dd * t_c[(kk, m)] + 0.5 * second;
            }
        }
        hess -= self.model.gram_r().inverse();
        symmetrize(&mut hess);
        if hess.iter().any(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite("Hessian of s(r)".into()));
        }
        Ok(hess)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub max_iterations: usize,
    pub eigen_floor: f64,
    pub max_halvings: usize,
    pub tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            eigen_floor: 1e-6,
            max_halvings: 30,
            tolerance: 1e-10,
        }
    }
}

fn within_guard(r: &DVector<f64>) -> bool {
    r.iter().all(|v| v.is_finite() && v.abs() <= MAX_LOG_LENGTH_SCALE)
}

/// Damped Newton ascent from `start`: eigenvalue-floored `−∇²s`, step halving
/// until `s` strictly increases. Returns the local maximizer and `s` there.
pub fn newton_ascent<T: LogTarget + ?Sized>(
    target: &T,
    start: &DVector<f64>,
    opts: &AscentOptions,
) -> Result<(DVector<f64>, f64)> {
    let mut r = start.clone();
    let mut value = target.value(&r)?;
    for _ in 0..opts.max_iterations {
        let grad = target.gradient(&r)?;
        let neg_h = -target.hessian(&r)?;
        let step = FlooredEigen::new(neg_h, opts.eigen_floor)?.solve(&grad);
        if step.amax() < 1e-12 {
            break;
        }
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..=opts.max_halvings {
            let cand = &r + &step * scale;
            if within_guard(&cand) {
                if let Ok(v) = target.value(&cand) {
                    if v > value {
                        improved = Some((cand, v));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        let Some((cand, v)) = improved else {
            break;
        };
        let gain = v - value;
        r = cand;
        value = v;
        if gain < opts.tolerance * (1.0 + value.abs()) {
            break;
        }
    }
    Ok((r, value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhOutcome {
    pub value: DVector<f64>,
    pub accepted: bool,
    /// Set when the ascent or proposal could not be formed.
    pub failed: bool,
}

/// One MH step with the Laplace proposal `N(r̂ + V ∇s(r̂), V)`,
/// `V = (−∇²s(r̂))⁻¹`, where `r̂` is found by ascending from `current`.
pub fn mh_step<T: LogTarget + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &DVector<f64>,
    opts: &AscentOptions,
    rng: &mut R,
) -> MhOutcome {
    let reject = |failed| MhOutcome {
        value: current.clone(),
        accepted: false,
        failed,
    };
    let proposal = (|| -> Result<_> {
        let s_cur = target.value(current)?;
        let (mode, _) = newton_ascent(target, current, opts)?;
        let grad = target.gradient(&mode)?;
        let prec = FlooredEigen::new(-target.hessian(&mode)?, opts.eigen_floor)?;
        let mean = &mode + prec.solve(&grad);
        Ok((s_cur, mean, prec))
    })();
    let (s_cur, mean, prec) = match proposal {
        Ok(p) => p,
        Err(e) => {
            debug!("length-scale proposal failed: {e}");
            return reject(true);
        }
    };
    let z = DVector::from_fn(target.dim(), |_, _| StandardNormal.sample(rng));
    let cand = &mean + prec.inv_sqrt_apply(&z);
    let u: f64 = rng.random();
    if !within_guard(&cand) {
        return reject(false);
    }
    let s_cand = match target.value(&cand) {
        Ok(v) => v,
        Err(_) => return reject(false),
    };
    let log_q = |x: &DVector<f64>| -0.5 * prec.quad(&(x - &mean));
    let log_alpha = s_cand - s_cur + log_q(current) - log_q(&cand);
    if u.ln() < log_alpha {
        MhOutcome {
            value: cand,
            accepted: true,
            failed: false,
        }
    } else {
        reject(false)
    }
}

/// MH update of `r` given the current `H`.
pub fn sample_r<R: Rng + ?Sized>(
    model: &Model,
    state: &LatentState,
    rng: &mut R,
) -> Result<MhOutcome> {
    let target = LengthScaleTarget::new(model, &state.h)?;
    Ok(mh_step(&target, &state.r, &AscentOptions::default(), rng))
}
