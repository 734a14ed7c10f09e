//! Covariance functions, Gram matrices with jitter, and noise-free GP interpolation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{PtgError, Result};
use crate::layouts::sq_dist;

/// Largest admissible |r| for a log length-scale.
pub const MAX_LOG_LENGTH_SCALE: f64 = 50.0;

/// How the length-scale enters the squared-exponential denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthScaleForm {
    /// `exp(-d² / (2 l))`.
    #[default]
    Linear,
    /// `exp(-d² / (2 l²))`.
    Squared,
}

/// Variance and length-scale of a squared-exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryKernelParams {
    pub variance: f64,
    pub length_scale: f64,
    #[serde(default)]
    pub form: LengthScaleForm,
}

impl StationaryKernelParams {
    pub fn new(variance: f64, length_scale: f64) -> Result<Self> {
        let p = Self {
            variance,
            length_scale,
            form: LengthScaleForm::Linear,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_form(mut self, form: LengthScaleForm) -> Self {
        self.form = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(PtgError::Config(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(PtgError::NonPositiveLengthScale(self.length_scale));
        }
        Ok(())
    }

    fn denominator(&self) -> f64 {
        match self.form {
            LengthScaleForm::Linear => 2.0 * self.length_scale,
            LengthScaleForm::Squared => 2.0 * self.length_scale * self.length_scale,
        }
    }

    /// Kernel value from a squared distance.
    pub fn eval_sq(&self, d2: f64) -> f64 {
        self.variance * (-d2 / self.denominator()).exp()
    }
}

/// Stationary kernel `c_g(u_i, u_j) = ν exp(-‖u_i - u_j‖² / (2 l))`.
pub fn kernel_g(ui: &[f64], uj: &[f64], params: &StationaryKernelParams) -> Result<f64> {
    check_dims(ui, uj)?;
    Ok(params.eval_sq(sq_dist(ui, uj)))
}

/// Gibbs non-stationary kernel with point-wise length-scales `li`, `lj`.
pub fn kernel_h(ui: &[f64], uj: &[f64], li: f64, lj: f64) -> Result<f64> {
    check_dims(ui, uj)?;
    for l in [li, lj] {
        if !(l > 0.0 && l.is_finite()) {
            return Err(PtgError::NonPositiveLengthScale(l));
        }
    }
    Ok(gibbs(sq_dist(ui, uj), li, lj, ui.len()))
}

/// Unchecked Gibbs kernel from a squared distance in `dim` latent dimensions.
#[inline]
pub(crate) fn gibbs(d2: f64, li: f64, lj: f64, dim: usize) -> f64 {
    let s = li * li + lj * lj;
    let pre = 2.0 * li * lj / s;
    let pre = match dim {
        2 => pre,
        _ => pre.powf(0.5 * dim as f64),
    };
    pre * (-d2 / s).exp()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(PtgError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Log length-scales `r_k` at the nodes; `l_k = exp(r_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthScaleField {
    r: Vec<f64>,
}

impl LengthScaleField {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(bad) = r
            .iter()
            .find(|v| !v.is_finite() || v.abs() > MAX_LOG_LENGTH_SCALE)
        {
            return Err(PtgError::NonFinite(format!("log length-scale {bad}")));
        }
        Ok(Self { r })
    }

    pub fn log_scales(&self) -> &[f64] {
        &self.r
    }

    pub fn scales(&self) -> Vec<f64> {
        self.r.iter().map(|v| v.exp()).collect()
    }
}

/// Relative jitter schedule: start at `initial * mean(diag)` and multiply by
/// `factor` until the Cholesky factorization succeeds or `max` is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
    pub factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            max: 1e-4,
            factor: 10.0,
        }
    }
}

/// Symmetric kernel matrix together with the factorization of `matrix + jitter I`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
}

impl GramMatrix {
    /// Factorize an already assembled symmetric matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, policy: &JitterPolicy) -> Result<Self> {
        let (chol, jitter) = jittered_cholesky(&matrix, policy)?;
        Ok(Self {
            matrix,
            jitter,
            chol,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Absolute jitter added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The factorized matrix, i.e. with jitter on the diagonal.
    pub fn regularized(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.jitter;
        }
        m
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `vᵀ (C + jitter I)⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut w = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut w);
        w.norm_squared()
    }
}

/// Cholesky of `m + jitter I` with escalating relative jitter.
pub fn jittered_cholesky(
    m: &DMatrix<f64>,
    policy: &JitterPolicy,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
        return Err(PtgError::NonFinite(format!("kernel matrix entry {bad}")));
    }
    let n = m.nrows();
    let mean_diag = (m.diagonal().sum() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = policy.initial;
    let mut work = m.clone();
    loop {
        let jitter = rel * mean_diag;
        work.copy_from(m);
        for i in 0..n {
            work[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(work.clone()) {
            if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((chol, jitter));
            }
        }
        if rel >= policy.max * (1.0 - 1e-9) {
            return Err(PtgError::SingularKernel { jitter });
        }
        rel = (rel * policy.factor).min(policy.max);
    }
}

/// Gram matrix of `kernel` over `points`. The kernel is evaluated once per
/// unordered pair and mirrored, so the result is exactly symmetric.
pub fn gram<P, F>(points: &[P], kernel: F, policy: &JitterPolicy) -> Result<GramMatrix>
where
    F: Fn(&P, &P) -> f64,
{
    if points.is_empty() {
        return Err(PtgError::Layout("gram matrix of an empty point set".into()));
    }
    GramMatrix::from_matrix(assemble(points, &kernel), policy)
}

pub(crate) fn assemble<P, F>(points: &[P], kernel: &F) -> DMatrix<f64>
where
    F: Fn(&P, &P) -> f64,
{
    let k = points.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = kernel(&points[i], &points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Posterior mean `k_*ᵀ (C + jitter I)⁻¹ v` of a zero-mean noise-free GP.
pub fn gp_interpolate<P, F>(
    train: &[P],
    values: &[f64],
    query: &[P],
    kernel: F,
    policy: &JitterPolicy,
) -> Result<Vec<f64>>
where
    F: Fn(&P, &P) -> f64,
{
    if train.len() != values.len() {
        return Err(PtgError::DimensionMismatch {
            expected: train.len(),
            found: values.len(),
        });
    }
    let g = gram(train, &kernel, policy)?;
    let alpha = g.solve(&DVector::from_column_slice(values));
    Ok(query
        .iter()
        .map(|q| {
            train
                .iter()
                .zip(alpha.iter())
                .map(|(t, a)| kernel(q, t) * a)
                .sum()
        })
        .collect())
}

/// A point of a non-stationary field: coordinates plus local length-scale.
#[derive(Debug, Clone)]
pub struct ScaledPoint<'a> {
    pub coords: &'a [f64],
    pub length_scale: f64,
}

pub fn gibbs_kernel(a: &ScaledPoint<'_>, b: &ScaledPoint<'_>) -> f64 {
    gibbs(
        sq_dist(a.coords, b.coords),
        a.length_scale,
        b.length_scale,
        a.coords.len(),
    )
}
