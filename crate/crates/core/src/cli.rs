//! The `facefilter` command line.
//!
//! Exit codes: 0 on success, 2 for usage, configuration and parse errors,
//! 3 when a filter fails numerically (singular update, loss of positive
//! semi-definiteness, non-finite state).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio::{
    discover_files, format_float, load_trajectory, read_estimates_csv, read_landmark_file,
    read_results_csv, write_estimates_csv, write_results_csv, write_results_json,
    DEFAULT_LANDMARKS,
};
use crate::error::{Error, Result};
use crate::experiments::{
    compare_filters, run_deterministic, run_stochastic, ExperimentConfig, FilterRunResult, Mode,
    DEFAULT_INITIAL_COV_SCALE, DEFAULT_Q_DET, DEFAULT_REALIZATIONS, DEFAULT_R_DET,
    DEFAULT_SIGMA_MEASUREMENT, DEFAULT_SIGMA_PROCESS, DEFAULT_SIGMA_VELOCITY,
};
use crate::statespace::DEFAULT_DT;
use crate::synth::{write_synthetic, SynthParams};
use crate::ukf::DEFAULT_LAMBDA;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "facefilter",
    version,
    about = "EKF/UKF tracking of 3D facial landmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise-free tracking: constant-position model, exact measurements.
    RunDet {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo tracking with random-velocity motion and noisy measurements.
    RunStoch {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a synthetic swaying-face trajectory as landmark files.
    Synth {
        #[arg(long, default_value_t = 54)]
        points: usize,
        #[arg(long, default_value_t = 12)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seconds between frames.
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Sway amplitude per axis, mm.
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Sway frequency, Hz.
        #[arg(long, default_value_t = 0.25)]
        frequency: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check landmark files for row and field errors without running filters.
    Validate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Turn a results CSV (and optionally an estimates dump) into a tidy
    /// `series,frame,value` table.
    Report {
        /// Results CSV written by run-det or run-stoch.
        #[arg(long)]
        results: PathBuf,
        /// Estimates dump written with --estimates.
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// 0-based landmark whose coordinates to trace (needs --estimates).
        #[arg(long)]
        landmark: Option<usize>,
        #[arg(long, value_enum)]
        coord: Option<Coord>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Landmark files, one frame each, in frame order.
    #[arg(long, num_args = 1.., conflicts_with = "dir")]
    pub frames: Vec<PathBuf>,
    /// Directory to take frame files from, in natural filename order.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// File pattern inside --dir.
    #[arg(long, default_value = "*.txt", requires = "dir")]
    pub glob: String,
    /// Landmarks per file.
    #[arg(long, default_value_t = DEFAULT_LANDMARKS)]
    pub points: usize,
    /// Label for the user column; defaults to the --dir name or "user".
    #[arg(long)]
    pub user: Option<String>,
}

impl InputArgs {
    fn paths(&self) -> Result<Vec<PathBuf>> {
        if let Some(dir) = &self.dir {
            let files = discover_files(dir, &self.glob)?;
            if files.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "no files match {:?} in {}",
                    self.glob,
                    dir.display()
                )));
            }
            Ok(files)
        } else if self.frames.is_empty() {
            Err(Error::InvalidConfig("give --frames or --dir".into()))
        } else {
            Ok(self.frames.clone())
        }
    }

    fn user_label(&self) -> String {
        if let Some(user) = &self.user {
            return user.clone();
        }
        self.dir
            .as_ref()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "user".to_string())
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Seconds between frames.
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// UKF sigma-point spread.
    #[arg(long, default_value_t = DEFAULT_LAMBDA, allow_hyphen_values = true)]
    pub lambda: f64,
    /// Process noise floor, mm².
    #[arg(long, default_value_t = DEFAULT_Q_DET, allow_hyphen_values = true)]
    pub q_det: f64,
    /// Measurement noise floor, mm².
    #[arg(long, default_value_t = DEFAULT_R_DET, allow_hyphen_values = true)]
    pub r_det: f64,
    /// Initial covariance P₀ = scale·I, mm².
    #[arg(long, default_value_t = DEFAULT_INITIAL_COV_SCALE)]
    pub initial_cov_scale: f64,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Random velocity scale, mm/s.
    #[arg(long, default_value_t = DEFAULT_SIGMA_VELOCITY, allow_hyphen_values = true)]
    pub sigma_velocity: f64,
    /// Process noise scale, mm.
    #[arg(long, default_value_t = DEFAULT_SIGMA_PROCESS, allow_hyphen_values = true)]
    pub sigma_process: f64,
    /// Measurement noise scale, mm.
    #[arg(long, default_value_t = DEFAULT_SIGMA_MEASUREMENT, allow_hyphen_values = true)]
    pub sigma_measurement: f64,
    #[arg(long, default_value_t = DEFAULT_REALIZATIONS)]
    pub realizations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Results file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also dump per-landmark estimates and ground truth to this CSV.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Coord {
    X,
    Y,
    Z,
}

impl Coord {
    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::RunDet {
            input,
            filter,
            output,
        } => {
            let config = experiment_config(Mode::Deterministic, &filter, None);
            run_experiment(&input, &config, &output, stdout, stderr)
        }
        Command::RunStoch {
            input,
            filter,
            noise,
            output,
        } => {
            let config = experiment_config(Mode::Stochastic, &filter, Some(&noise));
            run_experiment(&input, &config, &output, stdout, stderr)
        }
        Command::Synth {
            points,
            frames,
            seed,
            dt,
            amplitude,
            frequency,
            out,
        } => {
            let params = SynthParams {
                points,
                frames,
                seed,
                dt,
                amplitude,
                frequency,
            };
            let paths = write_synthetic(&params, &out)?;
            writeln!(
                stdout,
                "wrote {} frames of {points} landmarks to {}",
                paths.len(),
                out.display()
            )?;
            Ok(EXIT_OK)
        }
        Command::Validate { input } => validate(&input, stdout),
        Command::Report {
            results,
            estimates,
            landmark,
            coord,
            out,
        } => report(
            &results,
            estimates.as_deref(),
            landmark,
            coord,
            out.as_deref(),
            stdout,
        ),
    }
}

fn experiment_config(
    mode: Mode,
    filter: &FilterArgs,
    noise: Option<&NoiseArgs>,
) -> ExperimentConfig {
    let mut config = ExperimentConfig {
        mode,
        dt: filter.dt,
        lambda: filter.lambda,
        q_det: filter.q_det,
        r_det: filter.r_det,
        initial_cov_scale: filter.initial_cov_scale,
        ..ExperimentConfig::default()
    };
    if let Some(noise) = noise {
        config.sigma_velocity = noise.sigma_velocity;
        config.sigma_process = noise.sigma_process;
        config.sigma_measurement = noise.sigma_measurement;
        config.realizations = noise.realizations;
        config.seed = noise.seed;
    }
    config
}

fn run_experiment(
    input: &InputArgs,
    config: &ExperimentConfig,
    output: &OutputArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    config.validate()?;
    let paths = input.paths()?;
    let trajectory = load_trajectory(&paths, config.dt, input.user_label(), input.points)?;
    let (ekf, ukf) = match config.mode {
        Mode::Deterministic => run_deterministic(&trajectory, config)?,
        Mode::Stochastic => run_stochastic(&trajectory, config)?,
    };
    let comparison = compare_filters(&ekf, &ukf)?;
    let results = [ekf, ukf];

    let mut comments = vec![format!("facefilter {}", env!("CARGO_PKG_VERSION"))];
    comments.extend(config.describe());
    comments.push(format!("user = {}", trajectory.user_label));
    comments.push(format!("landmarks = {}", trajectory.num_landmarks()));
    comments.push(format!("frames = {}", trajectory.len()));

    let mut buf = Vec::new();
    match output.format {
        Format::Csv => write_results_csv(&results, &comments, &mut buf)?,
        Format::Json => write_results_json(&results, config, &mut buf)?,
    }
    let summary_sink: &mut dyn Write = match &output.out {
        Some(path) => {
            write_file(path, &buf)?;
            stdout
        }
        None => {
            stdout.write_all(&buf)?;
            stderr
        }
    };
    if let Some(path) = &output.estimates {
        write_estimates(&results, &comments, path)?;
    }
    writeln!(summary_sink, "{comparison}")?;
    Ok(EXIT_OK)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

fn write_estimates(results: &[FilterRunResult], comments: &[String], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_estimates_csv(results, comments, &mut buf)?;
    write_file(path, &buf)
}

fn validate(input: &InputArgs, stdout: &mut dyn Write) -> Result<i32> {
    let paths = input.paths()?;
    let mut bad = 0;
    for path in &paths {
        match read_landmark_file(path, input.points) {
            Ok(_) => writeln!(stdout, "ok    {}", path.display())?,
            Err(e) => {
                bad += 1;
                writeln!(stdout, "error {e}")?;
            }
        }
    }
    writeln!(
        stdout,
        "{} of {} files valid",
        paths.len() - bad,
        paths.len()
    )?;
    Ok(if bad == 0 { EXIT_OK } else { EXIT_USAGE })
}

fn report(
    results: &Path,
    estimates: Option<&Path>,
    landmark: Option<usize>,
    coord: Option<Coord>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p));
    let rows = read_results_csv(&read(results)?).map_err(|e| e.in_file(results))?;

    // BTreeMap keys keep the output order independent of input order.
    let mut series: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for row in &rows {
        series.insert(
            (format!("{}/{}/mse", row.user, row.filter), row.frame),
            row.mse,
        );
        series.insert(
            (format!("{}/{}/mae", row.user, row.filter), row.frame),
            row.mae,
        );
    }

    if coord.is_some() && landmark.is_none() {
        return Err(Error::InvalidConfig("--coord needs --landmark".into()));
    }
    if let Some(landmark) = landmark {
        let path =
            estimates.ok_or_else(|| Error::InvalidConfig("--landmark needs --estimates".into()))?;
        let est = read_estimates_csv(&read(path)?).map_err(|e| e.in_file(path))?;
        let count = est.iter().map(|r| r.landmark + 1).max().unwrap_or(0);
        if landmark >= count {
            return Err(Error::InvalidConfig(format!(
                "landmark {landmark} is out of range: the data has {count} landmarks (0..={})",
                count.saturating_sub(1)
            )));
        }
        let coords: Vec<Coord> = match coord {
            Some(c) => vec![c],
            None => vec![Coord::X, Coord::Y, Coord::Z],
        };
        for row in est.iter().filter(|r| r.landmark == landmark) {
            let xyz = [row.x, row.y, row.z];
            for c in &coords {
                series.insert(
                    (
                        format!(
                            "{}/{}/landmark{}.{}",
                            row.user,
                            row.filter,
                            landmark,
                            c.name()
                        ),
                        row.frame,
                    ),
                    xyz[c.index()],
                );
            }
        }
    }

    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(["series", "frame", "value"])?;
        for ((name, frame), value) in &series {
            w.write_record([name.clone(), frame.to_string(), format_float(*value)])?;
        }
        w.flush()?;
    }
    match out {
        Some(path) => write_file(path, &buf)?,
        None => stdout.write_all(&buf)?,
    }
    Ok(EXIT_OK)
}
