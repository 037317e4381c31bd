//! Squared-exponential correlation function, its derivative covariances, and the
//! linear mean basis.
//!
//! For inputs `x`, `y` and positive length scales `Λ = diag(λ_1, …, λ_d)` the
//! correlation is `c(x, y) = exp(-½ (x-y)ᵀ Λ⁻¹ (x-y))`. Differentiating the process
//! gives the cross covariances used by the derivative posterior: the column of
//! `Σ₁₂(x*)` for data point `x_j` is `-Λ⁻¹ (x* - x_j) c(x*, x_j)`, and
//! `Σ₁₁ = Λ⁻¹` at every point. Only this kernel is implemented; the derivative
//! formulas are kernel-specific.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Diagonal length scales of the squared-exponential kernel (units of squared
/// input length). All entries strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthScales {
    lambda: DVector<f64>,
}

impl LengthScales {
    pub fn new(lambda: DVector<f64>) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig(
                "length scales must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { lambda })
    }

    /// Shared scale `λ` across all coordinates.
    pub fn isotropic(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, lambda))
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// `Λ⁻¹` as a vector of reciprocals.
    pub fn inv(&self) -> DVector<f64> {
        self.lambda.map(|l| 1.0 / l)
    }
}

/// The grid of shared length scales tried by [`crate::gp::grid_search_lengthscale`].
pub const LS_GRID: [f64; 6] = [0.1, 0.5, 1.0, 5.0, 10.0, 50.0];

fn check_dim(ls: &LengthScales, x: &[f64], y: &[f64]) -> Result<()> {
    let d = ls.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    Ok(())
}

/// `c(x, y) = exp(-½ Σ_i (x_i - y_i)² / λ_i)`, in `(0, 1]`, symmetric, 1 iff `x = y`.
pub fn correlation(x: &[f64], y: &[f64], ls: &LengthScales) -> Result<f64> {
    check_dim(ls, x, y)?;
    let mut q = 0.0;
    for i in 0..x.len() {
        let dxy = x[i] - y[i];
        q += dxy * dxy / ls.lambda[i];
    }
    Ok((-0.5 * q).exp())
}

/// Column of `Σ₁₂(x*)` for data point `x_j`: `σ⁻² Cov(g'(x*), g(x_j)) = -Λ⁻¹(x*-x_j) c(x*,x_j)`.
pub fn cross_cov_column(x_star: &[f64], x_j: &[f64], ls: &LengthScales) -> Result<DVector<f64>> {
    let c = correlation(x_star, x_j, ls)?;
    Ok(DVector::from_fn(ls.dim(), |i, _| {
        -(x_star[i] - x_j[i]) / ls.lambda[i] * c
    }))
}

/// `σ⁻² Cov(g'(x*), g'(x*)) = Λ⁻¹`, the same diagonal matrix at every `x*`.
pub fn grad_grad_cov(ls: &LengthScales) -> DMatrix<f64> {
    DMatrix::from_diagonal(&ls.inv())
}

/// Linear mean basis `h(x)ᵀ = (1, x_1, …, x_d)`.
pub fn mean_basis(x: &[f64]) -> DVector<f64> {
    let mut h = DVector::zeros(x.len() + 1);
    h[0] = 1.0;
    for (i, &xi) in x.iter().enumerate() {
        h[i + 1] = xi;
    }
    h
}

/// Basis matrix `H` with row `i` equal to `h(x_i)ᵀ`, for an `n×d` input matrix.
pub fn basis_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Correlation matrix `Σ₂₂` of the data inputs (rows of `x`).
pub fn corr_matrix(x: &DMatrix<f64>, ls: &LengthScales) -> DMatrix<f64> {
    let n = x.nrows();
    let mut s = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut q = 0.0;
            for k in 0..x.ncols() {
                let dxy = x[(i, k)] - x[(j, k)];
                q += dxy * dxy / ls.lambda[k];
            }
            let c = (-0.5 * q).exp();
            s[(i, j)] = c;
            s[(j, i)] = c;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn correlation_at_zero_distance_is_one() {
        let ls = LengthScales::isotropic(3, 2.0).unwrap();
        let x = [0.3, -1.0, 4.0];
        assert_eq!(correlation(&x, &x, &ls).unwrap(), 1.0);
    }

    #[test]
    fn correlation_scalar_value() {
        // d=1, λ=1, x=0, y=1 → exp(−0.5)
        let ls = LengthScales::isotropic(1, 1.0).unwrap();
        let c = correlation(&[0.0], &[1.0], &ls).unwrap();
        assert_relative_eq!(c, 0.6065306597126334, epsilon = 1e-12);
    }

    #[test]
    fn correlation_anisotropic_value() {
        // d=2, λ=(1,4), x=(0,0), y=(1,2) → exp(−½(1 + 4/4)) = exp(−1)
        let ls = LengthScales::new(DVector::from_vec(vec![1.0, 4.0])).unwrap();
        let c = correlation(&[0.0, 0.0], &[1.0, 2.0], &ls).unwrap();
        assert_relative_eq!(c, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn correlation_dimension_mismatch_is_error() {
        let ls = LengthScales::isotropic(2, 1.0).unwrap();
        assert!(correlation(&[0.0], &[1.0, 2.0], &ls).is_err());
    }

    #[test]
    fn cross_cov_zero_at_coincident_points() {
        let ls = LengthScales::isotropic(2, 1.5).unwrap();
        let col = cross_cov_column(&[1.0, -2.0], &[1.0, -2.0], &ls).unwrap();
        assert_eq!(col, DVector::zeros(2));
    }

    #[test]
    fn cross_cov_scalar_value() {
        // d=1, λ=1, x*=1, x_j=0 → −exp(−0.5)
        let ls = LengthScales::isotropic(1, 1.0).unwrap();
        let col = cross_cov_column(&[1.0], &[0.0], &ls).unwrap();
        assert_relative_eq!(col[0], -0.6065306597126334, epsilon = 1e-12);
    }

    #[test]
    fn cross_cov_matches_finite_difference() {
        // derivative of c(·, x_j) in the first argument, central difference
        let ls = LengthScales::isotropic(1, 1.0).unwrap();
        let h = 1e-5;
        let fd = (correlation(&[1.0 + h], &[0.0], &ls).unwrap()
            - correlation(&[1.0 - h], &[0.0], &ls).unwrap())
            / (2.0 * h);
        let col = cross_cov_column(&[1.0], &[0.0], &ls).unwrap();
        assert_relative_eq!(col[0], fd, epsilon = 1e-8);
    }

    #[test]
    fn grad_grad_cov_is_lambda_inverse() {
        let ls = LengthScales::new(DVector::from_vec(vec![2.0, 4.0])).unwrap();
        let m = grad_grad_cov(&ls);
        assert_eq!(m[(0, 0)], 0.5);
        assert_eq!(m[(1, 1)], 0.25);
        assert_eq!(m[(0, 1)], 0.0);
        let id = grad_grad_cov(&LengthScales::isotropic(3, 1.0).unwrap());
        assert_eq!(id, DMatrix::identity(3, 3));
    }

    #[test]
    fn mean_basis_layout() {
        let h = mean_basis(&[2.0, -3.0]);
        assert_eq!(h.as_slice(), &[1.0, 2.0, -3.0]);
    }
}
