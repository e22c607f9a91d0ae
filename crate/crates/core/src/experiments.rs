//! Tracking experiments: both filters over one trajectory, scored per frame.
//!
//! Every run follows the same loop. The filter starts at the first
//! measurement with covariance `initial_cov_scale·I`; frame 0 is a pure
//! update (zero innovation when the measurement is exact), and every later
//! frame is a predict over `dt` followed by an update. MSE and MAE are taken
//! against the ground-truth state after each update.
//!
//! * **Deterministic**: constant-position model, identity measurement,
//!   measurements equal to the frames, `Q = q_det·I`, `R = r_det·I`.
//! * **Stochastic**: each realization perturbs the frames by a random walk
//!   `dₖ₊₁ = dₖ + vₖ·dt + wₖ` with `vₖ ~ N(0, σ²_velocity·I)` and
//!   `wₖ ~ N(0, σ²_process·I)`, observes the perturbed truth through
//!   `N(0, σ²_measurement·I)` noise, and runs both filters on the same
//!   measurements with `Q = max(σ²_process, q_det)·I` and
//!   `R = max(σ²_measurement, r_det)·I`. Per-frame series are averaged over
//!   realizations in realization order.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{synthesize_measurements, Trajectory};
use crate::ekf::{ekf_predict, ekf_update, EkfState};
use crate::error::{Error, Result};
use crate::linalg::{CovarianceMatrix, Matrix, StateVector};
use crate::metrics::{average_columns, average_series, mae_at_step, mse_at_step, MseSeries};
use crate::rng::{realization_seed, standard_normal_vector, stream, Purpose};
use crate::statespace::{
    random_walk_transition, ConstantPosition, IdentityMeasurement, MeasurementModel, NoiseSpec,
    ProcessModel, RandomWalk, DEFAULT_DT,
};
use crate::ukf::{ukf_predict, ukf_update, UkfConfig, UkfState, DEFAULT_LAMBDA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Deterministic,
    Stochastic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Deterministic => "deterministic",
            Mode::Stochastic => "stochastic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "UKF")]
    Ukf,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Ekf => "EKF",
            FilterKind::Ukf => "UKF",
        })
    }
}

pub const DEFAULT_Q_DET: f64 = 1e-6;
pub const DEFAULT_R_DET: f64 = 1e-6;
pub const DEFAULT_SIGMA_VELOCITY: f64 = 1.0;
pub const DEFAULT_SIGMA_PROCESS: f64 = 0.1;
pub const DEFAULT_SIGMA_MEASUREMENT: f64 = 0.5;
pub const DEFAULT_REALIZATIONS: usize = 100;
pub const DEFAULT_INITIAL_COV_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Seconds between frames.
    pub dt: f64,
    /// UKF sigma-point spread.
    pub lambda: f64,
    /// Deterministic-mode process noise floor (mm²).
    pub q_det: f64,
    /// Deterministic-mode measurement noise floor (mm²).
    pub r_det: f64,
    /// mm/s
    pub sigma_velocity: f64,
    /// mm
    pub sigma_process: f64,
    /// mm
    pub sigma_measurement: f64,
    pub realizations: usize,
    pub seed: u64,
    pub initial_cov_scale: f64,
    /// Keep per-step gains and innovations (deterministic runs only).
    #[serde(skip)]
    pub record_diagnostics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Deterministic,
            dt: DEFAULT_DT,
            lambda: DEFAULT_LAMBDA,
            q_det: DEFAULT_Q_DET,
            r_det: DEFAULT_R_DET,
            sigma_velocity: DEFAULT_SIGMA_VELOCITY,
            sigma_process: DEFAULT_SIGMA_PROCESS,
            sigma_measurement: DEFAULT_SIGMA_MEASUREMENT,
            realizations: DEFAULT_REALIZATIONS,
            seed: 0,
            initial_cov_scale: DEFAULT_INITIAL_COV_SCALE,
            record_diagnostics: false,
        }
    }
}

impl ExperimentConfig {
    pub fn deterministic() -> Self {
        ExperimentConfig::default()
    }

    pub fn stochastic() -> Self {
        ExperimentConfig {
            mode: Mode::Stochastic,
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !self.lambda.is_finite() {
            return bad(format!("lambda must be finite, got {}", self.lambda));
        }
        if !(self.q_det > 0.0 && self.q_det.is_finite()) {
            return bad(format!("q_det must be > 0, got {}", self.q_det));
        }
        if !(self.r_det > 0.0 && self.r_det.is_finite()) {
            return bad(format!("r_det must be > 0, got {}", self.r_det));
        }
        for (name, v) in [
            ("sigma_velocity", self.sigma_velocity),
            ("sigma_process", self.sigma_process),
            ("sigma_measurement", self.sigma_measurement),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.realizations < 1 {
            return bad(format!(
                "realizations must be >= 1, got {}",
                self.realizations
            ));
        }
        if !(self.initial_cov_scale > 0.0 && self.initial_cov_scale.is_finite()) {
            return bad(format!(
                "initial_cov_scale must be > 0, got {}",
                self.initial_cov_scale
            ));
        }
        Ok(())
    }

    /// `key = value` lines for the comment block atop result files.
    pub fn describe(&self) -> Vec<String> {
        let mut lines = vec![
            format!("mode = {}", self.mode),
            format!("dt = {}", self.dt),
            format!("lambda = {}", self.lambda),
            format!("q_det = {:e}", self.q_det),
            format!("r_det = {:e}", self.r_det),
            format!("initial_cov_scale = {}", self.initial_cov_scale),
        ];
        if self.mode == Mode::Stochastic {
            lines.extend([
                format!("sigma_velocity = {}", self.sigma_velocity),
                format!("sigma_process = {}", self.sigma_process),
                format!("sigma_measurement = {}", self.sigma_measurement),
                format!("realizations = {}", self.realizations),
                format!("seed = {}", self.seed),
            ]);
        }
        lines
    }

    fn require_mode(&self, mode: Mode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::InvalidConfig(format!(
                "{mode} run requested with a {} configuration",
                self.mode
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub gain: Matrix,
    pub innovation: StateVector,
    pub predicted_measurement: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRunResult {
    pub filter: FilterKind,
    pub user_label: String,
    /// Post-update estimate per frame. Averaged over realizations for
    /// stochastic runs.
    pub estimates: Vec<StateVector>,
    /// Ground truth per frame, averaged the same way.
    pub truth: Vec<StateVector>,
    pub mse: MseSeries,
    pub mae: Vec<f64>,
    pub diagnostics: Option<Vec<StepDiagnostics>>,
}

/// Models and noise for one filter run.
pub struct FilterSetup<'a> {
    pub process: &'a dyn ProcessModel,
    pub measurement: &'a dyn MeasurementModel,
    pub process_cov: &'a CovarianceMatrix,
    pub measurement_cov: &'a CovarianceMatrix,
    pub initial_cov: &'a CovarianceMatrix,
    pub dt: f64,
    pub lambda: f64,
    pub record_diagnostics: bool,
}

enum FilterState {
    Ekf(EkfState),
    Ukf(UkfState, UkfConfig),
}

impl FilterState {
    fn mean(&self) -> &StateVector {
        match self {
            FilterState::Ekf(s) => &s.mean,
            FilterState::Ukf(s, _) => &s.mean,
        }
    }

    fn predict(&mut self, setup: &FilterSetup<'_>) -> Result<()> {
        match self {
            FilterState::Ekf(s) => *s = ekf_predict(s, setup.process, setup.process_cov, setup.dt)?,
            FilterState::Ukf(s, c) => {
                *s = ukf_predict(s, setup.process, setup.process_cov, setup.dt, c)?
            }
        }
        Ok(())
    }

    fn update(&mut self, z: &StateVector, setup: &FilterSetup<'_>) -> Result<StepDiagnostics> {
        Ok(match self {
            FilterState::Ekf(s) => {
                let (next, d) = ekf_update(s, z, setup.measurement, setup.measurement_cov)?;
                *s = next;
                StepDiagnostics {
                    gain: d.gain,
                    innovation: d.innovation,
                    predicted_measurement: d.predicted_measurement,
                }
            }
            FilterState::Ukf(s, c) => {
                let (next, d) = ukf_update(s, z, setup.measurement, setup.measurement_cov, c)?;
                *s = next;
                StepDiagnostics {
                    gain: d.gain,
                    innovation: d.innovation,
                    predicted_measurement: d.predicted_measurement,
                }
            }
        })
    }
}

/// Runs one filter over a measurement sequence and scores it against
/// `truth`. The filter is initialized at `measurements[0]`.
pub fn track(
    filter: FilterKind,
    setup: &FilterSetup<'_>,
    truth: &[StateVector],
    measurements: &[StateVector],
    user_label: &str,
) -> Result<FilterRunResult> {
    if measurements.is_empty() {
        return Err(Error::InvalidConfig("no measurements to track".into()));
    }
    if truth.len() != measurements.len() {
        return Err(Error::Dimension(format!(
            "{} truth frames but {} measurements",
            truth.len(),
            measurements.len()
        )));
    }
    let x0 = measurements[0].clone();
    let mut state = match filter {
        FilterKind::Ekf => FilterState::Ekf(EkfState::new(x0, setup.initial_cov.clone())?),
        FilterKind::Ukf => {
            let config = UkfConfig::new(x0.len(), setup.lambda)?;
            FilterState::Ukf(UkfState::new(x0, setup.initial_cov.clone())?, config)
        }
    };

    let mut estimates = Vec::with_capacity(measurements.len());
    let mut mse = Vec::with_capacity(measurements.len());
    let mut mae = Vec::with_capacity(measurements.len());
    let mut diagnostics = setup.record_diagnostics.then(Vec::new);
    for (k, (z, x)) in measurements.iter().zip(truth).enumerate() {
        let step = (|| {
            if k > 0 {
                state.predict(setup)?;
            }
            state.update(z, setup)
        })()
        .map_err(|e| e.context(format!("{filter} at frame {k}")))?;
        if let Some(d) = diagnostics.as_mut() {
            d.push(step);
        }
        let estimate = state.mean().clone();
        mse.push(mse_at_step(&estimate, x)?);
        mae.push(mae_at_step(&estimate, x)?);
        estimates.push(estimate);
    }
    Ok(FilterRunResult {
        filter,
        user_label: user_label.to_string(),
        estimates,
        truth: truth.to_vec(),
        mse: MseSeries::new(mse, filter.to_string(), user_label)?,
        mae,
        diagnostics,
    })
}

fn check_trajectory(trajectory: &Trajectory) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::InvalidConfig("trajectory has no frames".into()));
    }
    Ok(())
}

fn run_both(
    setup: &FilterSetup<'_>,
    truth: &[StateVector],
    measurements: &[StateVector],
    user_label: &str,
) -> Result<(FilterRunResult, FilterRunResult)> {
    Ok((
        track(FilterKind::Ekf, setup, truth, measurements, user_label)?,
        track(FilterKind::Ukf, setup, truth, measurements, user_label)?,
    ))
}

/// Noise-free tracking: measurements are the frames themselves.
pub fn run_deterministic(
    trajectory: &Trajectory,
    config: &ExperimentConfig,
) -> Result<(FilterRunResult, FilterRunResult)> {
    config.require_mode(Mode::Deterministic)?;
    config.validate()?;
    check_trajectory(trajectory)?;
    let dim = trajectory.state_dim();
    let q = CovarianceMatrix::scaled_identity(dim, config.q_det)?;
    let r = CovarianceMatrix::scaled_identity(dim, config.r_det)?;
    let p0 = CovarianceMatrix::scaled_identity(dim, config.initial_cov_scale)?;
    let measurement = IdentityMeasurement::new(dim);
    let setup = FilterSetup {
        process: &ConstantPosition,
        measurement: &measurement,
        process_cov: &q,
        measurement_cov: &r,
        initial_cov: &p0,
        dt: config.dt,
        lambda: config.lambda,
        record_diagnostics: config.record_diagnostics,
    };
    let truth = trajectory.states();
    run_both(&setup, &truth, &truth, &trajectory.user_label)
}

/// Truth and measurements of one Monte Carlo realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationInputs {
    pub truth: Vec<StateVector>,
    pub measurements: Vec<StateVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutcome {
    pub inputs: RealizationInputs,
    pub ekf: FilterRunResult,
    pub ukf: FilterRunResult,
}

/// Draws the perturbed truth and its noisy measurements for realization
/// `realization`. Depends only on the trajectory, the noise settings, `dt`,
/// `seed` and `realization`.
pub fn realization_inputs(
    trajectory: &Trajectory,
    config: &ExperimentConfig,
    realization: u64,
) -> Result<RealizationInputs> {
    check_trajectory(trajectory)?;
    let dim = trajectory.state_dim();
    let seed = realization_seed(config.seed, realization);
    let mut velocity_rng = stream(seed, Purpose::Velocity);
    let mut process_rng = stream(seed, Purpose::ProcessNoise);

    let frames = trajectory.states();
    let mut offset = StateVector::zeros(dim);
    let mut truth = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        if k > 0 {
            let v = standard_normal_vector(&mut velocity_rng, dim) * config.sigma_velocity;
            let w = standard_normal_vector(&mut process_rng, dim) * config.sigma_process;
            offset = random_walk_transition(&offset, &v, &w, config.dt)?;
        }
        truth.push(frame + &offset);
    }
    let truth_trajectory =
        Trajectory::from_states(&truth, trajectory.user_label.clone(), config.dt)?;
    let noise = NoiseSpec::isotropic(
        dim,
        config.sigma_velocity,
        config.sigma_process,
        config.sigma_measurement,
    )?;
    let measurements = synthesize_measurements(&truth_trajectory, &noise, seed)?;
    Ok(RealizationInputs {
        truth,
        measurements,
    })
}

struct StochasticModels {
    measurement: IdentityMeasurement,
    q: CovarianceMatrix,
    r: CovarianceMatrix,
    p0: CovarianceMatrix,
}

impl StochasticModels {
    fn new(dim: usize, config: &ExperimentConfig) -> Result<Self> {
        let q = (config.sigma_process * config.sigma_process).max(config.q_det);
        let r = (config.sigma_measurement * config.sigma_measurement).max(config.r_det);
        Ok(StochasticModels {
            measurement: IdentityMeasurement::new(dim),
            q: CovarianceMatrix::scaled_identity(dim, q)?,
            r: CovarianceMatrix::scaled_identity(dim, r)?,
            p0: CovarianceMatrix::scaled_identity(dim, config.initial_cov_scale)?,
        })
    }

    fn setup<'a>(&'a self, config: &ExperimentConfig) -> FilterSetup<'a> {
        FilterSetup {
            process: &RandomWalk,
            measurement: &self.measurement,
            process_cov: &self.q,
            measurement_cov: &self.r,
            initial_cov: &self.p0,
            dt: config.dt,
            lambda: config.lambda,
            record_diagnostics: false,
        }
    }
}

fn realization_with(
    trajectory: &Trajectory,
    config: &ExperimentConfig,
    models: &StochasticModels,
    realization: u64,
) -> Result<RealizationOutcome> {
    let inputs = realization_inputs(trajectory, config, realization)?;
    let setup = models.setup(config);
    // Both filters read the very same measurement vectors.
    let (ekf, ukf) = run_both(
        &setup,
        &inputs.truth,
        &inputs.measurements,
        &trajectory.user_label,
    )
    .map_err(|e| e.context(format!("realization {realization}")))?;
    Ok(RealizationOutcome { inputs, ekf, ukf })
}

/// One realization of the stochastic experiment, unaveraged.
pub fn run_realization(
    trajectory: &Trajectory,
    config: &ExperimentConfig,
    realization: u64,
) -> Result<RealizationOutcome> {
    config.require_mode(Mode::Stochastic)?;
    config.validate()?;
    check_trajectory(trajectory)?;
    let models = StochasticModels::new(trajectory.state_dim(), config)?;
    realization_with(trajectory, config, &models, realization)
}

/// Monte Carlo run; realizations execute in parallel and are averaged in
/// realization order, so the output does not depend on the thread count.
pub fn run_stochastic(
    trajectory: &Trajectory,
    config: &ExperimentConfig,
) -> Result<(FilterRunResult, FilterRunResult)> {
    config.require_mode(Mode::Stochastic)?;
    config.validate()?;
    check_trajectory(trajectory)?;
    let models = StochasticModels::new(trajectory.state_dim(), config)?;
    let outcomes = (0..config.realizations as u64)
        .into_par_iter()
        .map(|r| realization_with(trajectory, config, &models, r))
        .collect::<Result<Vec<_>>>()?;
    let ekf: Vec<&FilterRunResult> = outcomes.iter().map(|o| &o.ekf).collect();
    let ukf: Vec<&FilterRunResult> = outcomes.iter().map(|o| &o.ukf).collect();
    Ok((average_runs(&ekf)?, average_runs(&ukf)?))
}

fn average_states(
    runs: &[&FilterRunResult],
    pick: fn(&FilterRunResult) -> &[StateVector],
) -> Vec<StateVector> {
    let frames = pick(runs[0]).len();
    (0..frames)
        .map(|k| {
            let dim = pick(runs[0])[k].len();
            StateVector::from_vec(average_columns(
                runs.iter().map(|r| pick(r)[k].as_slice()),
                dim,
            ))
        })
        .collect()
}

fn average_runs(runs: &[&FilterRunResult]) -> Result<FilterRunResult> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Aggregation("no realizations to average".into()))?;
    let series: Vec<MseSeries> = runs.iter().map(|r| r.mse.clone()).collect();
    let mse = average_series(&series)?;
    let mae = average_columns(runs.iter().map(|r| r.mae.as_slice()), first.mae.len());
    Ok(FilterRunResult {
        filter: first.filter,
        user_label: first.user_label.clone(),
        estimates: average_states(runs, |r| &r.estimates),
        truth: average_states(runs, |r| &r.truth),
        mse,
        mae,
        diagnostics: None,
    })
}

/// Relative tolerance under which two per-frame MSE values count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Winner {
    Ekf,
    Ukf,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub per_frame: Vec<Winner>,
    pub ekf_wins: usize,
    pub ukf_wins: usize,
    pub ties: usize,
    pub ekf_mean_mse: f64,
    pub ukf_mean_mse: f64,
    /// `ukf_mean_mse / ekf_mean_mse`; 1 when both are zero.
    pub ratio: f64,
}

impl Comparison {
    /// The filter with the smaller mean MSE, or `Tie`.
    pub fn overall(&self) -> Winner {
        pick_winner(self.ekf_mean_mse, self.ukf_mean_mse)
    }
}

fn pick_winner(ekf: f64, ukf: f64) -> Winner {
    if (ekf - ukf).abs() <= TIE_TOLERANCE * ekf.abs().max(ukf.abs()) {
        Winner::Tie
    } else if ukf < ekf {
        Winner::Ukf
    } else {
        Winner::Ekf
    }
}

pub fn compare_filters(ekf: &FilterRunResult, ukf: &FilterRunResult) -> Result<Comparison> {
    compare_series(&ekf.mse.values, &ukf.mse.values)
}

pub fn compare_series(ekf: &[f64], ukf: &[f64]) -> Result<Comparison> {
    if ekf.len() != ukf.len() {
        return Err(Error::Dimension(format!(
            "EKF series has {} frames, UKF series has {}",
            ekf.len(),
            ukf.len()
        )));
    }
    let per_frame: Vec<Winner> = ekf
        .iter()
        .zip(ukf)
        .map(|(e, u)| pick_winner(*e, *u))
        .collect();
    let count = |w: Winner| per_frame.iter().filter(|x| **x == w).count();
    let mean = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    };
    let ekf_mean_mse = mean(ekf);
    let ukf_mean_mse = mean(ukf);
    let ratio = if ekf_mean_mse == ukf_mean_mse {
        1.0
    } else {
        ukf_mean_mse / ekf_mean_mse
    };
    Ok(Comparison {
        ekf_wins: count(Winner::Ekf),
        ukf_wins: count(Winner::Ukf),
        ties: count(Winner::Tie),
        per_frame,
        ekf_mean_mse,
        ukf_mean_mse,
        ratio,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mean MSE  EKF {:.6e}  UKF {:.6e}  (UKF/EKF = {:.6})",
            self.ekf_mean_mse, self.ukf_mean_mse, self.ratio
        )?;
        writeln!(
            f,
            "frames won  EKF {}  UKF {}  ties {}",
            self.ekf_wins, self.ukf_wins, self.ties
        )?;
        let overall = match self.overall() {
            Winner::Ekf => "EKF",
            Winner::Ukf => "UKF",
            Winner::Tie => "tie",
        };
        write!(f, "lower mean MSE: {overall}")
    }
}
