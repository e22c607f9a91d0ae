//! Extended and unscented Kalman filters for tracking 3D facial landmarks.
//!
//! The filters work on flattened landmark states `[x₁, y₁, z₁, …]` in
//! millimeters and come with a harness that runs both over a landmark
//! trajectory, in a noise-free and a Monte Carlo setting, and scores them
//! per frame by mean squared error.
//!
//! ```
//! use facefilter::{ekf_predict, ekf_update, ConstantPosition, CovarianceMatrix,
//!                  EkfState, IdentityMeasurement};
//! use nalgebra::dvector;
//!
//! let prior = EkfState::new(dvector![0.0, 0.0], CovarianceMatrix::scaled_identity(2, 1.0)?)?;
//! let q = CovarianceMatrix::scaled_identity(2, 0.0)?;
//! let r = CovarianceMatrix::scaled_identity(2, 1.0)?;
//! let predicted = ekf_predict(&prior, &ConstantPosition, &q, 0.01)?;
//! let (posterior, _) = ekf_update(&predicted, &dvector![2.0, 2.0], &IdentityMeasurement::new(2), &r)?;
//! assert!((posterior.mean[0] - 1.0).abs() < 1e-12);
//! # Ok::<(), facefilter::Error>(())
//! ```

pub mod cli;
pub mod dataio;
pub mod ekf;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod statespace;
pub mod synth;
pub mod ukf;

pub use dataio::{
    flatten_frame, load_trajectory, parse_landmark_file, synthesize_measurements, unflatten_frame,
    write_results_csv, LandmarkFrame, Trajectory,
};
pub use ekf::{ekf_predict, ekf_update, EkfState, EkfUpdateDiagnostics};
pub use error::{Error, Result};
pub use experiments::{
    compare_filters, run_deterministic, run_stochastic, Comparison, ExperimentConfig, FilterKind,
    FilterRunResult, Mode,
};
pub use linalg::{matrix_sqrt, CovarianceMatrix, Matrix, StateVector};
pub use metrics::{average_series, mse_at_step, MseSeries};
pub use statespace::{
    constant_position_transition, finite_difference_jacobian, identity_measurement,
    random_walk_transition, ConstantPosition, IdentityMeasurement, LinearMeasurement,
    LinearProcess, MeasurementModel, NoiseSpec, ProcessModel, RandomWalk,
};
pub use ukf::{
    compute_weights, generate_sigma_points, ukf_predict, ukf_update, unscented_transform,
    SigmaPointSet, UkfConfig, UkfState, UkfUpdateDiagnostics,
};
