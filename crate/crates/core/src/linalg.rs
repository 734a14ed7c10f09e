//! Dense helpers shared by the conditional samplers.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{PtgError, Result};
use crate::kernels::GramMatrix;

/// Gaussian `N(mean, root rootᵀ)` arising from a GP prior with covariance `C`
/// and a diagonal likelihood precision `P`: covariance `(P + C⁻¹)⁻¹`.
///
/// With `C = L Lᵀ` and `A = I + Lᵀ P L = M Mᵀ`, the covariance is
/// `L A⁻¹ Lᵀ = R Rᵀ` for `R = L M⁻ᵀ`, which avoids forming `C⁻¹`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    prior_l: DMatrix<f64>,
    a_l: DMatrix<f64>,
    root: DMatrix<f64>,
}

impl GaussianConditional {
    pub fn new(prior: &GramMatrix, precision: &[f64]) -> Result<Self> {
        let k = prior.dim();
        if precision.len() != k {
            return Err(PtgError::DimensionMismatch {
                expected: k,
                found: precision.len(),
            });
        }
        let l = prior.cholesky().l();
        // Lᵀ P L
        let mut pl = l.clone();
        for (i, p) in precision.iter().enumerate() {
            pl.row_mut(i).scale_mut(*p);
        }
        let mut a = l.transpose() * pl;
        for i in 0..k {
            a[(i, i)] += 1.0;
        }
        symmetrize(&mut a);
        let a_l = Cholesky::new(a)
            .ok_or(PtgError::SingularKernel { jitter: 0.0 })?
            .l();
        // R = L M⁻ᵀ  <=>  Rᵀ = M⁻¹ Lᵀ
        let mut rt = l.transpose();
        a_l.solve_lower_triangular_mut(&mut rt);
        let root = rt.transpose();
        Ok(Self {
            prior_l: l,
            a_l,
            root,
        })
    }

    /// Covariance square root `R`.
    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.root * self.root.transpose()
    }

    /// `Σ b` for each column `b` of `linear`.
    pub fn apply(&self, linear: &DMatrix<f64>) -> DMatrix<f64> {
        &self.root * (self.root.transpose() * linear)
    }

    pub fn apply_vec(&self, linear: &DVector<f64>) -> DVector<f64> {
        &self.root * (self.root.transpose() * linear)
    }

    /// Whitened coordinates `R⁻¹ v = Mᵀ L⁻¹ v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = v.clone();
        self.prior_l.solve_lower_triangular_mut(&mut w);
        self.a_l.tr_mul(&w)
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues floored at `floor`.
#[derive(Debug, Clone)]
pub struct FlooredEigen {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl FlooredEigen {
    pub fn new(mut m: DMatrix<f64>, floor: f64) -> Result<Self> {
        if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
            return Err(PtgError::NonFinite(format!("matrix entry {bad}")));
        }
        symmetrize(&mut m);
        let eig = SymmetricEigen::new(m);
        let values = eig.eigenvalues.map(|v| v.max(floor));
        Ok(Self {
            vectors: eig.eigenvectors,
            values,
        })
    }

    /// `M⁻¹ v` with the floored spectrum.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = self.vectors.transpose() * v;
        &self.vectors * c.component_div(&self.values)
    }

    /// `vᵀ M v` with the floored spectrum.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        let c = self.vectors.transpose() * v;
        c.iter().zip(self.values.iter()).map(|(c, l)| c * c * l).sum()
    }

    /// `M^{-1/2} z`, a draw from `N(0, M⁻¹)` when `z` is standard normal.
    pub fn inv_sqrt_apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.vectors * z.component_div(&self.values.map(f64::sqrt))
    }

    pub fn ln_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::JitterPolicy;
    use approx::assert_relative_eq;

    #[test]
    fn conditional_matches_explicit_inverse() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let g = GramMatrix::from_matrix(c.clone(), &JitterPolicy { initial: 0.0, ..Default::default() })
            .unwrap();
        let p = [0.7, 0.0, 3.0];
        let cond = GaussianConditional::new(&g, &p).unwrap();
        let explicit = (DMatrix::from_diagonal(&DVector::from_column_slice(&p))
            + c.clone().try_inverse().unwrap())
        .try_inverse()
        .unwrap();
        assert_relative_eq!(cond.covariance(), explicit, epsilon = 1e-12);
        let v = DVector::from_column_slice(&[0.3, -1.0, 2.0]);
        let w = cond.whiten(&v);
        assert_relative_eq!(cond.root() * w, v, epsilon = 1e-12);
    }

    #[test]
    fn floored_eigen_solves() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let e = FlooredEigen::new(m.clone(), 1e-6).unwrap();
        let v = DVector::from_column_slice(&[1.0, 2.0]);
        assert_relative_eq!(&m * e.solve(&v), v, epsilon = 1e-12);
        assert_relative_eq!(e.quad(&v), v.dot(&(&m * &v)), epsilon = 1e-12);
        let neg = FlooredEigen::new(DMatrix::from_row_slice(1, 1, &[-5.0]), 1e-6).unwrap();
        assert_eq!(neg.values[0], 1e-6);
    }
}
