//! Process and measurement models.
//!
//! States are flattened landmark-major vectors `[x₁, y₁, z₁, …, x_N, y_N, z_N]`
//! in millimeters. Noise is additive: a model's `transition` is the
//! noise-free map, and process noise enters through the covariance `Q` handed
//! to the filter.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, check_len, CovarianceMatrix, Matrix, StateVector};

/// Default time between frames, in seconds.
pub const DEFAULT_DT: f64 = 0.01;
/// Step used by [`finite_difference_jacobian`] when a model has no analytic
/// Jacobian.
pub const DEFAULT_FD_EPS: f64 = 1e-6;

pub trait ProcessModel: Send + Sync {
    fn name(&self) -> &str;

    fn transition(&self, x: &StateVector, dt: f64) -> Result<StateVector>;

    /// `∂f/∂x` at `x`. Defaults to central differences.
    fn jacobian(&self, x: &StateVector, dt: f64) -> Result<Matrix> {
        try_finite_difference_jacobian(|p| self.transition(p, dt), x, DEFAULT_FD_EPS)
    }
}

pub trait MeasurementModel: Send + Sync {
    fn name(&self) -> &str;

    /// Length of the measurement vector.
    fn dimension(&self) -> usize;

    fn observe(&self, x: &StateVector) -> Result<StateVector>;

    /// `∂h/∂x` at `x`. Defaults to central differences.
    fn jacobian(&self, x: &StateVector) -> Result<Matrix> {
        try_finite_difference_jacobian(|p| self.observe(p), x, DEFAULT_FD_EPS)
    }
}

fn ensure_finite(x: &StateVector, what: &str) -> Result<()> {
    if all_finite(x.iter()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "{what} contains NaN or infinity"
        )))
    }
}

/// Noise-free constant-position step: the state is carried over unchanged.
pub fn constant_position_transition(x: &StateVector, dt: f64) -> Result<StateVector> {
    let _ = dt;
    ensure_finite(x, "state")?;
    Ok(x.clone())
}

/// `x + v·dt + w`, the random-velocity motion model.
pub fn random_walk_transition(
    x: &StateVector,
    v: &StateVector,
    w: &StateVector,
    dt: f64,
) -> Result<StateVector> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "dt must be positive, got {dt}"
        )));
    }
    check_len(v, x.len(), "velocity")?;
    check_len(w, x.len(), "process noise")?;
    ensure_finite(x, "state")?;
    let next = x + v * dt + w;
    if !all_finite(next.iter()) {
        return Err(Error::Numeric("random walk step overflowed".into()));
    }
    Ok(next)
}

pub fn identity_measurement(x: &StateVector) -> Result<StateVector> {
    ensure_finite(x, "state")?;
    Ok(x.clone())
}

/// Central-difference Jacobian of `f` at `x`:
/// `J[i][j] = (f(x + eps·e_j)[i] − f(x − eps·e_j)[i]) / (2·eps)`.
pub fn finite_difference_jacobian<F>(f: F, x: &StateVector, eps: f64) -> Result<Matrix>
where
    F: Fn(&StateVector) -> StateVector,
{
    try_finite_difference_jacobian(|p| Ok(f(p)), x, eps)
}

pub(crate) fn try_finite_difference_jacobian<F>(f: F, x: &StateVector, eps: f64) -> Result<Matrix>
where
    F: Fn(&StateVector) -> Result<StateVector>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let eval = |p: &StateVector| -> Result<StateVector> {
        let y = f(p).map_err(|e| Error::Evaluation(e.to_string()))?;
        if !all_finite(y.iter()) {
            return Err(Error::Evaluation(
                "jacobian probe returned NaN or infinity".into(),
            ));
        }
        Ok(y)
    };
    let n = x.len();
    let mut jac: Option<Matrix> = None;
    let mut probe = x.clone();
    for j in 0..n {
        probe[j] = x[j] + eps;
        let plus = eval(&probe)?;
        probe[j] = x[j] - eps;
        let minus = eval(&probe)?;
        probe[j] = x[j];
        if plus.len() != minus.len() {
            return Err(Error::Evaluation("function output length changed".into()));
        }
        let jac = jac.get_or_insert_with(|| Matrix::zeros(plus.len(), n));
        if jac.nrows() != plus.len() {
            return Err(Error::Evaluation("function output length changed".into()));
        }
        jac.set_column(j, &((plus - minus) / (2.0 * eps)));
    }
    match jac {
        Some(jac) => Ok(jac),
        None => {
            let rows = eval(x)?.len();
            Ok(Matrix::zeros(rows, 0))
        }
    }
}

/// The noise-free deterministic model: the state never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantPosition;

impl ProcessModel for ConstantPosition {
    fn name(&self) -> &str {
        "constant-position"
    }

    fn transition(&self, x: &StateVector, dt: f64) -> Result<StateVector> {
        constant_position_transition(x, dt)
    }

    fn jacobian(&self, x: &StateVector, _dt: f64) -> Result<Matrix> {
        Ok(Matrix::identity(x.len(), x.len()))
    }
}

/// Filter-side view of the random-velocity model.
///
/// The velocity and process noise are unknown to the filter, so its mean
/// prediction uses `v = 0, w = 0`; their spread is carried by `Q`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomWalk;

impl ProcessModel for RandomWalk {
    fn name(&self) -> &str {
        "random-walk"
    }

    fn transition(&self, x: &StateVector, dt: f64) -> Result<StateVector> {
        let zeros = StateVector::zeros(x.len());
        random_walk_transition(x, &zeros, &zeros, dt)
    }

    fn jacobian(&self, x: &StateVector, _dt: f64) -> Result<Matrix> {
        Ok(Matrix::identity(x.len(), x.len()))
    }
}

/// `f(x) = A·x`.
#[derive(Debug, Clone)]
pub struct LinearProcess {
    pub transition: Matrix,
}

impl LinearProcess {
    pub fn new(transition: Matrix) -> Result<Self> {
        if !transition.is_square() {
            return Err(Error::Dimension("transition matrix must be square".into()));
        }
        Ok(LinearProcess { transition })
    }
}

impl ProcessModel for LinearProcess {
    fn name(&self) -> &str {
        "linear"
    }

    fn transition(&self, x: &StateVector, _dt: f64) -> Result<StateVector> {
        check_len(x, self.transition.ncols(), "state")?;
        Ok(&self.transition * x)
    }

    fn jacobian(&self, _x: &StateVector, _dt: f64) -> Result<Matrix> {
        Ok(self.transition.clone())
    }
}

/// Wraps a closure as a process model; the Jacobian comes from central
/// differences.
pub struct FnProcess<F> {
    name: String,
    f: F,
}

impl<F> FnProcess<F>
where
    F: Fn(&StateVector, f64) -> StateVector + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnProcess {
            name: name.into(),
            f,
        }
    }
}

impl<F> ProcessModel for FnProcess<F>
where
    F: Fn(&StateVector, f64) -> StateVector + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn transition(&self, x: &StateVector, dt: f64) -> Result<StateVector> {
        let y = (self.f)(x, dt);
        if !all_finite(y.iter()) {
            return Err(Error::Evaluation(format!(
                "{} returned NaN or infinity",
                self.name
            )));
        }
        Ok(y)
    }
}

/// `h(x) = x`, observing every coordinate directly.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMeasurement {
    pub dim: usize,
}

impl IdentityMeasurement {
    pub fn new(dim: usize) -> Self {
        IdentityMeasurement { dim }
    }
}

impl MeasurementModel for IdentityMeasurement {
    fn name(&self) -> &str {
        "identity"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn observe(&self, x: &StateVector) -> Result<StateVector> {
        check_len(x, self.dim, "state")?;
        identity_measurement(x)
    }

    fn jacobian(&self, _x: &StateVector) -> Result<Matrix> {
        Ok(Matrix::identity(self.dim, self.dim))
    }
}

/// `h(x) = H·x`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    pub observation: Matrix,
}

impl LinearMeasurement {
    pub fn new(observation: Matrix) -> Self {
        LinearMeasurement { observation }
    }
}

impl MeasurementModel for LinearMeasurement {
    fn name(&self) -> &str {
        "linear"
    }

    fn dimension(&self) -> usize {
        self.observation.nrows()
    }

    fn observe(&self, x: &StateVector) -> Result<StateVector> {
        check_len(x, self.observation.ncols(), "state")?;
        Ok(&self.observation * x)
    }

    fn jacobian(&self, _x: &StateVector) -> Result<Matrix> {
        Ok(self.observation.clone())
    }
}

pub struct FnMeasurement<F> {
    name: String,
    dim: usize,
    h: F,
}

impl<F> FnMeasurement<F>
where
    F: Fn(&StateVector) -> StateVector + Send + Sync,
{
    pub fn new(name: impl Into<String>, dim: usize, h: F) -> Self {
        FnMeasurement {
            name: name.into(),
            dim,
            h,
        }
    }
}

impl<F> MeasurementModel for FnMeasurement<F>
where
    F: Fn(&StateVector) -> StateVector + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn observe(&self, x: &StateVector) -> Result<StateVector> {
        let z = (self.h)(x);
        if z.len() != self.dim {
            return Err(Error::Dimension(format!(
                "{} returned {} values, expected {}",
                self.name,
                z.len(),
                self.dim
            )));
        }
        if !all_finite(z.iter()) {
            return Err(Error::Evaluation(format!(
                "{} returned NaN or infinity",
                self.name
            )));
        }
        Ok(z)
    }
}

/// Process and measurement noise for one experiment.
///
/// `velocity_sigma` (mm/s) drives the random velocity of the truth process;
/// it is not part of `Q`. `measurement_sigma` (mm) is kept alongside `R` for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub process_cov: CovarianceMatrix,
    pub measurement_cov: CovarianceMatrix,
    pub velocity_sigma: f64,
    pub measurement_sigma: f64,
}

impl NoiseSpec {
    /// `Q = σ²_process·I`, `R = σ²_measurement·I`.
    pub fn isotropic(
        dim: usize,
        velocity_sigma: f64,
        process_sigma: f64,
        measurement_sigma: f64,
    ) -> Result<Self> {
        for (name, s) in [
            ("velocity sigma", velocity_sigma),
            ("process sigma", process_sigma),
            ("measurement sigma", measurement_sigma),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be >= 0, got {s}"
                )));
            }
        }
        Ok(NoiseSpec {
            process_cov: CovarianceMatrix::scaled_identity(dim, process_sigma * process_sigma)?,
            measurement_cov: CovarianceMatrix::scaled_identity(
                dim,
                measurement_sigma * measurement_sigma,
            )?,
            velocity_sigma,
            measurement_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.process_cov.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn constant_position_is_identity() {
        let x = dvector![1.0, 2.0, 3.0];
        assert_eq!(constant_position_transition(&x, 0.01).unwrap(), x);
        let z = StateVector::zeros(162);
        assert_eq!(constant_position_transition(&z, 1.0).unwrap(), z);
        assert_eq!(
            ConstantPosition.jacobian(&z, 0.01).unwrap(),
            Matrix::identity(162, 162)
        );
    }

    #[test]
    fn constant_position_rejects_nan() {
        let x = dvector![1.0, f64::NAN];
        assert!(matches!(
            constant_position_transition(&x, 0.01),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn random_walk_examples() {
        let out = random_walk_transition(
            &dvector![1.0, 1.0],
            &dvector![0.0, 0.0],
            &dvector![0.0, 0.0],
            0.01,
        )
        .unwrap();
        assert_eq!(out, dvector![1.0, 1.0]);

        let out = random_walk_transition(
            &dvector![0.0, 0.0],
            &dvector![100.0, -100.0],
            &dvector![0.5, 0.5],
            0.01,
        )
        .unwrap();
        assert!((out - dvector![1.5, -0.5]).amax() < 1e-12);

        assert!(
            random_walk_transition(&dvector![2.0], &dvector![1.0], &dvector![-0.01], 0.0).is_err()
        );
        assert!(matches!(
            random_walk_transition(&dvector![2.0], &dvector![1.0, 0.0], &dvector![0.0], 0.1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn identity_measurement_examples() {
        let x = dvector![1.0, 2.0, 3.0];
        assert_eq!(identity_measurement(&x).unwrap(), x);
        let m = IdentityMeasurement::new(162);
        let z = StateVector::zeros(162);
        assert_eq!(m.observe(&z).unwrap(), z);
        assert_eq!(m.jacobian(&z).unwrap(), Matrix::identity(162, 162));
    }

    #[test]
    fn finite_difference_examples() {
        let x = dvector![0.3, -1.2, 4.0];
        let j = finite_difference_jacobian(|p| p.clone(), &x, 1e-6).unwrap();
        assert!((j - Matrix::identity(3, 3)).amax() < 1e-9);

        let j =
            finite_difference_jacobian(|p| dvector![p[0] * p[0]], &dvector![3.0], 1e-5).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-6);

        let j = finite_difference_jacobian(|_| dvector![7.0, -2.0], &x, 1e-6).unwrap();
        assert_eq!(j.shape(), (2, 3));
        assert!(j.amax() < 1e-12);
    }

    #[test]
    fn finite_difference_reports_non_finite_evaluations() {
        // ln of the negative probe is NaN
        let r = finite_difference_jacobian(|p| dvector![p[0].ln()], &dvector![0.0], 1e-6);
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn fn_process_uses_numeric_jacobian() {
        let model = FnProcess::new("square", |x: &StateVector, _dt| x.map(|v| v * v));
        let j = model.jacobian(&dvector![1.0, -2.0], 0.01).unwrap();
        assert!((j - dmatrix![2.0, 0.0; 0.0, -4.0]).amax() < 1e-6);
    }

    #[test]
    fn isotropic_noise_is_diagonal() {
        let n = NoiseSpec::isotropic(6, 1.0, 0.1, 0.5).unwrap();
        assert!(n.process_cov.is_diagonal());
        assert!(n.measurement_cov.is_diagonal());
        assert_eq!(n.measurement_cov.as_matrix()[(5, 5)], 0.25);
        assert!(NoiseSpec::isotropic(6, -1.0, 0.1, 0.5).is_err());
    }

    fn small_matrix(n: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0..3.0_f64, n * n)
            .prop_map(move |v| Matrix::from_row_slice(n, n, &v))
    }

    proptest! {
        #[test]
        fn fd_jacobian_of_linear_map_recovers_matrix(
            a in small_matrix(4),
            x in proptest::collection::vec(-10.0..10.0_f64, 4),
        ) {
            let x = StateVector::from_vec(x);
            let eps = DEFAULT_FD_EPS;
            let j = finite_difference_jacobian(|p| &a * p, &x, eps).unwrap();
            prop_assert!((j - &a).amax() <= 10.0 * eps);
        }

        #[test]
        fn constant_position_is_idempotent(
            x in proptest::collection::vec(-1e3..1e3_f64, 1..20),
            k in 1usize..6,
        ) {
            let x = StateVector::from_vec(x);
            let once = constant_position_transition(&x, DEFAULT_DT).unwrap();
            let mut many = x.clone();
            for _ in 0..k {
                many = constant_position_transition(&many, DEFAULT_DT).unwrap();
            }
            prop_assert_eq!(once, many);
        }

        #[test]
        fn still_random_walk_is_constant_position(
            x in proptest::collection::vec(-1e3..1e3_f64, 1..20),
            dt in 1e-4..10.0_f64,
        ) {
            let x = StateVector::from_vec(x);
            let zeros = StateVector::zeros(x.len());
            prop_assert_eq!(
                random_walk_transition(&x, &zeros, &zeros, dt).unwrap(),
                constant_position_transition(&x, dt).unwrap()
            );
        }
    }
}
