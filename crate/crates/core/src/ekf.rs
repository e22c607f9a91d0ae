//! Extended Kalman filter.
//!
//! Predict:
//!
//! ```text
//! x̂⁻ = f(x̂, Δt)
//! P⁻ = F·P·Fᵀ + Q            F = ∂f/∂x at x̂
//! ```
//!
//! Update:
//!
//! ```text
//! S  = H·P⁻·Hᵀ + R           H = ∂h/∂x at x̂⁻
//! K  = P⁻·Hᵀ·S⁻¹
//! x̂  = x̂⁻ + K·(z − h(x̂⁻))
//! P  = (I − K·H)·P⁻
//! ```
//!
//! The gain is obtained from a Cholesky solve against `S` rather than an
//! explicit inverse, and both covariances are symmetrized as `(M + Mᵀ)/2`.

use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, check_len, check_square, factor_innovation, gain_from, symmetrize,
    CovarianceMatrix, Matrix, StateVector,
};
use crate::statespace::{MeasurementModel, ProcessModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: StateVector,
    pub cov: CovarianceMatrix,
    /// Number of measurement updates applied so far.
    pub step_index: u64,
}

impl EkfState {
    pub fn new(mean: StateVector, cov: CovarianceMatrix) -> Result<Self> {
        check_len(&mean, cov.dim(), "initial mean")?;
        if !all_finite(mean.iter()) {
            return Err(Error::InvalidState(
                "initial mean contains NaN or infinity".into(),
            ));
        }
        Ok(EkfState {
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
pub struct EkfUpdateDiagnostics {
    /// State-dim × measurement-dim.
    pub gain: Matrix,
    pub innovation: StateVector,
    pub predicted_measurement: StateVector,
}

pub fn ekf_predict(
    state: &EkfState,
    model: &dyn ProcessModel,
    q: &CovarianceMatrix,
    dt: f64,
) -> Result<EkfState> {
    let n = state.dim();
    check_square(q.as_matrix(), n, "process covariance")?;

    let f = model.jacobian(&state.mean, dt)?;
    check_square(&f, n, "process jacobian")?;
    let mean = model.transition(&state.mean, dt)?;
    check_len(&mean, n, "predicted mean")?;

    let p = state.cov.as_matrix();
    let cov = symmetrize(&(&f * p * f.transpose() + q.as_matrix()));
    if !all_finite(mean.iter()) || !all_finite(cov.iter()) {
        return Err(Error::Numeric(format!(
            "EKF prediction at step {} produced NaN or infinity",
            state.step_index
        )));
    }
    Ok(EkfState {
        mean,
        cov: CovarianceMatrix::from_symmetrized(cov),
        step_index: state.step_index,
    })
}

pub fn ekf_update(
    state: &EkfState,
    z: &StateVector,
    model: &dyn MeasurementModel,
    r: &CovarianceMatrix,
) -> Result<(EkfState, EkfUpdateDiagnostics)> {
    let n = state.dim();
    let m = model.dimension();
    check_len(z, m, "measurement")?;
    check_square(r.as_matrix(), m, "measurement covariance")?;

    let h = model.jacobian(&state.mean)?;
    if h.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "measurement jacobian is {}x{}, expected {m}x{n}",
            h.nrows(),
            h.ncols()
        )));
    }
    let predicted_measurement = model.observe(&state.mean)?;
    check_len(&predicted_measurement, m, "predicted measurement")?;
    let innovation = z - &predicted_measurement;

    let p = state.cov.as_matrix();
    let pht = p * h.transpose();
    let s = symmetrize(&(&h * &pht + r.as_matrix()));
    let chol = factor_innovation(&s)?;
    let gain = gain_from(&pht, &chol);

    let mean = &state.mean + &gain * &innovation;
    let cov = symmetrize(&((Matrix::identity(n, n) - &gain * &h) * p));
    if !all_finite(mean.iter()) || !all_finite(cov.iter()) {
        return Err(Error::Numeric(format!(
            "EKF update at step {} produced NaN or infinity",
            state.step_index
        )));
    }

    Ok((
        EkfState {
            mean,
            cov: CovarianceMatrix::from_symmetrized(cov),
            step_index: state.step_index + 1,
        },
        EkfUpdateDiagnostics {
            gain,
            innovation,
            predicted_measurement,
        },
    ))
}
