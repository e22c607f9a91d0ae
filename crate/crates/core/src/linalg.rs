//! Dense linear-algebra helpers shared by both filters.
//!
//! Everything here works on `nalgebra` dynamic matrices. The covariance type
//! checks symmetry and positive semi-definiteness once at construction; the
//! filters then keep their outputs symmetric by averaging with the transpose.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type StateVector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Absolute tolerance for the symmetry check on covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalues down to this value are accepted as numerical noise.
pub const PSD_TOL: f64 = 1e-9;
/// Jitter levels tried, in order, when a Cholesky factorization fails.
pub const JITTER_LEVELS: [f64; 2] = [1e-9, 1e-6];
/// Innovation covariances with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Symmetric positive semi-definite covariance in mm².
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(Matrix);

impl CovarianceMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !all_finite(matrix.iter()) {
            return Err(Error::Numeric("covariance contains NaN or infinity".into()));
        }
        let asym = max_asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidState(format!(
                "covariance is not symmetric (max |P - P^T| = {asym:e})"
            )));
        }
        let min_eigenvalue = min_eigenvalue(&matrix);
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(CovarianceMatrix(matrix))
    }

    /// `scale · I` of the given dimension.
    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "covariance scale must be finite and nonnegative, got {scale}"
            )));
        }
        Ok(CovarianceMatrix(Matrix::identity(dim, dim) * scale))
    }

    pub fn from_diagonal(diagonal: &StateVector) -> Result<Self> {
        if diagonal.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "covariance diagonal must be finite and nonnegative".into(),
            ));
        }
        Ok(CovarianceMatrix(Matrix::from_diagonal(diagonal)))
    }

    pub fn zeros(dim: usize) -> Self {
        CovarianceMatrix(Matrix::zeros(dim, dim))
    }

    /// Wraps a matrix produced by the filters after symmetrization. Skips the
    /// eigenvalue check, which would dominate the cost of a filter step.
    pub(crate) fn from_symmetrized(matrix: Matrix) -> Self {
        debug_assert!(matrix.is_square());
        CovarianceMatrix(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == 0.0))
    }
}

impl AsRef<Matrix> for CovarianceMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

pub(crate) fn all_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    values.all(|v| v.is_finite())
}

fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrize(m);
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular `L` with `L·Lᵀ = P`.
///
/// Plain Cholesky first; if that fails the factorization is retried on
/// `P + 1e-9·I` and then `P + 1e-6·I`. When all three attempts fail the error
/// carries the smallest eigenvalue of `P`.
pub fn matrix_sqrt(p: &Matrix) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::Dimension(format!(
            "matrix square root needs a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    if !all_finite(p.iter()) {
        return Err(Error::Numeric(
            "matrix square root of non-finite matrix".into(),
        ));
    }
    let asym = max_asymmetry(p);
    if asym > SYMMETRY_TOL * (1.0 + p.amax()) {
        return Err(Error::InvalidState(format!(
            "matrix square root needs a symmetric matrix (max |P - P^T| = {asym:e})"
        )));
    }
    let sym = symmetrize(p);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(chol.unpack());
    }
    let n = sym.nrows();
    for jitter in JITTER_LEVELS {
        let shifted = &sym + Matrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(chol.unpack());
        }
    }
    Err(Error::NotPsd {
        min_eigenvalue: min_eigenvalue(&sym),
    })
}

/// Cholesky factor of an innovation covariance, rejecting ill-conditioned
/// matrices.
///
/// The condition estimate is `(max Lᵢᵢ / min Lᵢᵢ)²`, a lower bound on the
/// 2-norm condition number that costs nothing once the factor exists.
pub(crate) fn factor_innovation(s: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(s.clone()).ok_or(Error::SingularUpdate {
        condition: f64::INFINITY,
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| {
        (lo.min(*d), hi.max(*d))
    });
    let condition = if lo > 0.0 {
        (hi / lo).powi(2)
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::SingularUpdate { condition });
    }
    Ok(chol)
}

/// `K = C · S⁻¹` for symmetric positive definite `S`, computed as the solve
/// `S · Kᵀ = Cᵀ` instead of forming the inverse.
pub(crate) fn gain_from(cross: &Matrix, chol: &Cholesky<f64, Dyn>) -> Matrix {
    chol.solve(&cross.transpose()).transpose()
}

pub(crate) fn check_square(m: &Matrix, dim: usize, what: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_len(v: &StateVector, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {len}",
            v.len()
        )));
    }
    Ok(())
}
