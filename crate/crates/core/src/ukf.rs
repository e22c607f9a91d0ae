//! Unscented Kalman filter.
//!
//! A Gaussian `(x̂, P)` in `n` dimensions is represented by `2n + 1` sigma
//! points
//!
//! ```text
//! χ₀     = x̂
//! χᵢ     = x̂ + (√((n+λ)P))ᵢ     i = 1..n
//! χᵢ₊ₙ   = x̂ − (√((n+λ)P))ᵢ
//! ```
//!
//! with weights `W₀ = λ/(n+λ)` and `Wᵢ = 1/(2(n+λ))`. The matrix square root
//! is the lower Cholesky factor.
//!
//! **Covariance weights equal the mean weights.** There is no separate
//! `W⁽ᶜ⁾₀` and no `(α, β, κ)` parameterization; `λ` is the only tuning knob.
//! With this choice the sigma set reproduces `P` exactly for every `λ` with
//! `n + λ > 0`.
//!
//! Prediction pushes the sigma points through `f` and re-averages
//! (adding `Q`). The update regenerates sigma points from the predicted
//! `(x̂⁻, P⁻)`, pushes them through `h`, and forms
//!
//! ```text
//! ẑ   = Σ Wᵢ h(χᵢ)
//! S   = Σ Wᵢ (h(χᵢ) − ẑ)(h(χᵢ) − ẑ)ᵀ + R
//! Pxz = Σ Wᵢ (χᵢ − x̂⁻)(h(χᵢ) − ẑ)ᵀ
//! K   = Pxz·S⁻¹
//! x̂   = x̂⁻ + K·(z − ẑ)
//! P   = P⁻ − K·S·Kᵀ
//! ```

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, check_len, check_square, factor_innovation, gain_from, matrix_sqrt, symmetrize,
    CovarianceMatrix, Matrix, StateVector, SYMMETRY_TOL,
};
use crate::statespace::{MeasurementModel, ProcessModel};

/// Default sigma-point spread. Keeps every weight positive for any `n`.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfConfig {
    pub lambda: f64,
    pub state_dim: usize,
}

impl UkfConfig {
    pub fn new(state_dim: usize, lambda: f64) -> Result<Self> {
        let config = UkfConfig { lambda, state_dim };
        config.validate()?;
        Ok(config)
    }

    pub fn with_default_lambda(state_dim: usize) -> Result<Self> {
        Self::new(state_dim, DEFAULT_LAMBDA)
    }

    fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::InvalidConfig(
                "UKF state dimension must be >= 1".into(),
            ));
        }
        let spread = self.spread();
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "n + lambda must be > 0, got {} + {} = {spread}",
                self.state_dim, self.lambda
            )));
        }
        Ok(())
    }

    /// `n + λ`.
    pub fn spread(&self) -> f64 {
        self.state_dim as f64 + self.lambda
    }

    pub fn num_points(&self) -> usize {
        2 * self.state_dim + 1
    }
}

/// Mean and covariance weights, `2n + 1` each. The two are identical.
pub fn compute_weights(config: &UkfConfig) -> Result<(DVector<f64>, DVector<f64>)> {
    config.validate()?;
    let spread = config.spread();
    let mut w = DVector::from_element(config.num_points(), 1.0 / (2.0 * spread));
    w[0] = config.lambda / spread;
    Ok((w.clone(), w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    /// One sigma point per column, `χ₀` first.
    pub points: Matrix,
    pub mean_weights: DVector<f64>,
    pub cov_weights: DVector<f64>,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn point(&self, i: usize) -> StateVector {
        self.points.column(i).into_owned()
    }

    pub fn weighted_mean(&self) -> StateVector {
        &self.points * &self.mean_weights
    }

    /// `Σ W⁽ᶜ⁾ᵢ (χᵢ − c)(χᵢ − c)ᵀ` around `center`.
    pub fn weighted_cov(&self, center: &StateVector) -> Matrix {
        weighted_outer(
            &self.points,
            center,
            &self.points,
            center,
            &self.cov_weights,
        )
    }
}

pub fn generate_sigma_points(
    mean: &StateVector,
    cov: &CovarianceMatrix,
    config: &UkfConfig,
) -> Result<SigmaPointSet> {
    config.validate()?;
    let n = config.state_dim;
    check_len(mean, n, "mean")?;
    check_square(cov.as_matrix(), n, "covariance")?;

    let root = matrix_sqrt(&(cov.as_matrix() * config.spread()))?;
    let mut points = Matrix::zeros(n, config.num_points());
    points.set_column(0, mean);
    for i in 0..n {
        let col = root.column(i);
        points.set_column(1 + i, &(mean + col));
        points.set_column(1 + n + i, &(mean - col));
    }
    let (mean_weights, cov_weights) = compute_weights(config)?;
    Ok(SigmaPointSet {
        points,
        mean_weights,
        cov_weights,
    })
}

/// Output of [`unscented_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMoments {
    pub mean: StateVector,
    pub cov: Matrix,
    /// `f(χᵢ)`, one per column.
    pub points: Matrix,
}

pub fn unscented_transform<F>(
    sigma: &SigmaPointSet,
    f: F,
    additive_cov: &CovarianceMatrix,
) -> Result<TransformedMoments>
where
    F: Fn(&StateVector) -> Result<StateVector>,
{
    if !all_finite(sigma.points.iter()) {
        return Err(Error::Numeric(
            "sigma points contain NaN or infinity".into(),
        ));
    }
    let points = propagate(sigma, f)?;
    check_square(
        additive_cov.as_matrix(),
        points.nrows(),
        "additive covariance",
    )?;
    let mean = &points * &sigma.mean_weights;
    let cov = symmetrize(
        &(weighted_outer(&points, &mean, &points, &mean, &sigma.cov_weights)
            + additive_cov.as_matrix()),
    );
    Ok(TransformedMoments { mean, cov, points })
}

fn propagate<F>(sigma: &SigmaPointSet, f: F) -> Result<Matrix>
where
    F: Fn(&StateVector) -> Result<StateVector>,
{
    let mut out: Option<Matrix> = None;
    for i in 0..sigma.len() {
        let y = f(&sigma.point(i)).map_err(|e| match e {
            Error::Dimension(_) => e,
            other => Error::Evaluation(other.to_string()),
        })?;
        if !all_finite(y.iter()) {
            return Err(Error::Evaluation(format!(
                "sigma point {i} mapped to NaN or infinity"
            )));
        }
        let out = out.get_or_insert_with(|| Matrix::zeros(y.len(), sigma.len()));
        check_len(&y, out.nrows(), "transformed sigma point")?;
        out.set_column(i, &y);
    }
    out.ok_or_else(|| Error::InvalidConfig("empty sigma point set".into()))
}

/// `Σ wᵢ (aᵢ − ā)(bᵢ − b̄)ᵀ` with columns `aᵢ`, `bᵢ`.
fn weighted_outer(
    a: &Matrix,
    a_center: &StateVector,
    b: &Matrix,
    b_center: &StateVector,
    weights: &DVector<f64>,
) -> Matrix {
    let mut da = a.clone();
    for (mut col, w) in da.column_iter_mut().zip(weights.iter()) {
        col -= a_center;
        col *= *w;
    }
    let mut db = b.clone();
    for mut col in db.column_iter_mut() {
        col -= b_center;
    }
    da * db.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub mean: StateVector,
    pub cov: CovarianceMatrix,
    /// Number of measurement updates applied so far.
    pub step_index: u64,
}

impl UkfState {
    pub fn new(mean: StateVector, cov: CovarianceMatrix) -> Result<Self> {
        check_len(&mean, cov.dim(), "initial mean")?;
        if !all_finite(mean.iter()) {
            return Err(Error::InvalidState(
                "initial mean contains NaN or infinity".into(),
            ));
        }
        Ok(UkfState {
            mean,
            cov,
            step_index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfUpdateDiagnostics {
    pub innovation: StateVector,
    pub innovation_cov: Matrix,
    pub cross_cov: Matrix,
    pub gain: Matrix,
    pub predicted_measurement: StateVector,
}

pub fn ukf_predict(
    state: &UkfState,
    model: &dyn ProcessModel,
    q: &CovarianceMatrix,
    dt: f64,
    config: &UkfConfig,
) -> Result<UkfState> {
    check_square(q.as_matrix(), state.dim(), "process covariance")?;
    let sigma = generate_sigma_points(&state.mean, &state.cov, config)?;
    let moments = unscented_transform(&sigma, |x| model.transition(x, dt), q)?;
    check_len(&moments.mean, state.dim(), "predicted mean")?;
    Ok(UkfState {
        mean: moments.mean,
        cov: CovarianceMatrix::from_symmetrized(moments.cov),
        step_index: state.step_index,
    })
}

pub fn ukf_update(
    state: &UkfState,
    z: &StateVector,
    model: &dyn MeasurementModel,
    r: &CovarianceMatrix,
    config: &UkfConfig,
) -> Result<(UkfState, UkfUpdateDiagnostics)> {
    let m = model.dimension();
    check_len(z, m, "measurement")?;
    check_square(r.as_matrix(), m, "measurement covariance")?;

    let sigma = generate_sigma_points(&state.mean, &state.cov, config)?;
    let projected = unscented_transform(&sigma, |x| model.observe(x), r)?;
    check_len(&projected.mean, m, "predicted measurement")?;
    let predicted_measurement = projected.mean;
    let innovation_cov = projected.cov;
    let cross_cov = weighted_outer(
        &sigma.points,
        &state.mean,
        &projected.points,
        &predicted_measurement,
        &sigma.cov_weights,
    );
    let innovation = z - &predicted_measurement;

    debug_assert!((&innovation_cov - innovation_cov.transpose()).amax() <= SYMMETRY_TOL);
    let chol = factor_innovation(&innovation_cov)?;
    let gain = gain_from(&cross_cov, &chol);

    let mean = &state.mean + &gain * &innovation;
    let cov = symmetrize(&(state.cov.as_matrix() - &gain * &innovation_cov * gain.transpose()));
    if !all_finite(mean.iter()) || !all_finite(cov.iter()) {
        return Err(Error::Numeric(format!(
            "UKF update at step {} produced NaN or infinity",
            state.step_index
        )));
    }
    // The next sigma generation needs a factorizable covariance; fail here
    // instead of one step later.
    matrix_sqrt(&cov)?;

    Ok((
        UkfState {
            mean,
            cov: CovarianceMatrix::from_symmetrized(cov),
            step_index: state.step_index + 1,
        },
        UkfUpdateDiagnostics {
            innovation,
            innovation_cov,
            cross_cov,
            gain,
            predicted_measurement,
        },
    ))
}
