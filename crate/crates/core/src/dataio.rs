//! Landmark files in, result tables out.
//!
//! A landmark file holds one frame: `N` lines (54 for the face models) of
//! three whitespace-separated decimal numbers, x y z in millimeters. Blank
//! lines are ignored. Results are written as CSV with `#`-prefixed comment
//! lines carrying the resolved run configuration.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::FilterRunResult;
use crate::linalg::{check_len, matrix_sqrt, StateVector};
use crate::rng::{standard_normal_vector, stream, Purpose};
use crate::statespace::NoiseSpec;

/// Landmarks per face model.
pub const DEFAULT_LANDMARKS: usize = 54;
/// Significant digits used for every float written to disk.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    /// (x, y, z) per landmark, in millimeters.
    pub landmarks: Vec<[f64; 3]>,
    pub frame_index: usize,
}

impl LandmarkFrame {
    pub fn new(landmarks: Vec<[f64; 3]>, frame_index: usize) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(Error::InvalidState(
                "a frame needs at least one landmark".into(),
            ));
        }
        if landmarks.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(
                "landmark coordinates must be finite".into(),
            ));
        }
        Ok(LandmarkFrame {
            landmarks,
            frame_index,
        })
    }

    pub fn num_landmarks(&self) -> usize {
        self.landmarks.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<LandmarkFrame>,
    pub user_label: String,
    /// Seconds between frames.
    pub dt: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<LandmarkFrame>, user_label: impl Into<String>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if let Some(first) = frames.first() {
            let n = first.num_landmarks();
            for (k, frame) in frames.iter().enumerate() {
                if frame.num_landmarks() != n {
                    return Err(Error::InvalidState(format!(
                        "frame {k} has {} landmarks, frame 0 has {n}",
                        frame.num_landmarks()
                    )));
                }
                if frame.frame_index != k {
                    return Err(Error::InvalidState(format!(
                        "frame at position {k} has frame_index {}",
                        frame.frame_index
                    )));
                }
            }
        }
        Ok(Trajectory {
            frames,
            user_label: user_label.into(),
            dt,
        })
    }

    /// Builds a trajectory from flattened states, numbering frames from 0.
    pub fn from_states(
        states: &[StateVector],
        user_label: impl Into<String>,
        dt: f64,
    ) -> Result<Self> {
        let frames = states
            .iter()
            .enumerate()
            .map(|(k, s)| unflatten_frame(s, k))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(frames, user_label, dt)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_landmarks(&self) -> usize {
        self.frames.first().map_or(0, LandmarkFrame::num_landmarks)
    }

    pub fn state_dim(&self) -> usize {
        3 * self.num_landmarks()
    }

    pub fn states(&self) -> Vec<StateVector> {
        self.frames.iter().map(flatten_frame).collect()
    }
}

/// Parses one landmark file.
///
/// Fields are split on any run of spaces or tabs. Line numbers in errors are
/// 1-based and count blank lines.
pub fn parse_landmark_file(text: &str, landmark_count: usize) -> Result<LandmarkFrame> {
    let mut landmarks = Vec::with_capacity(landmark_count);
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line
            .trim_end_matches('\r')
            .split([' ', '\t'])
            .filter(|t| !t.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::FieldCount {
                line: line_no,
                found: fields.len(),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, token) in xyz.iter_mut().zip(&fields) {
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            *slot = v;
        }
        landmarks.push(xyz);
    }
    if landmarks.len() != landmark_count {
        return Err(Error::RowCount {
            expected: landmark_count,
            found: landmarks.len(),
        });
    }
    LandmarkFrame::new(landmarks, 0)
}

/// Inverse of [`parse_landmark_file`]: one `x y z` line per landmark.
pub fn format_landmark_file(frame: &LandmarkFrame) -> String {
    let mut out = String::new();
    for [x, y, z] in &frame.landmarks {
        out.push_str(&format!(
            "{} {} {}\n",
            format_float(*x),
            format_float(*y),
            format_float(*z)
        ));
    }
    out
}

pub fn read_landmark_file(path: &Path, landmark_count: usize) -> Result<LandmarkFrame> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_landmark_file(&text, landmark_count).map_err(|e| e.in_file(path))
}

/// Loads one frame per file, in the order given.
pub fn load_trajectory<P: AsRef<Path>>(
    paths: &[P],
    dt: f64,
    user_label: impl Into<String>,
    landmark_count: usize,
) -> Result<Trajectory> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig(
            "a trajectory needs at least one file".into(),
        ));
    }
    let frames = paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut frame = read_landmark_file(p.as_ref(), landmark_count)?;
            frame.frame_index = k;
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(frames, user_label, dt)
}

/// Files in `dir` matching `pattern`, in natural order (`f2` before `f10`).
pub fn discover_files(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let full = dir.join(pattern);
    let full = full
        .to_str()
        .ok_or_else(|| Error::InvalidConfig(format!("non-UTF-8 path {}", full.display())))?;
    let mut files = glob::glob(full)
        .map_err(|e| Error::InvalidConfig(format!("bad glob {pattern:?}: {e}")))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_file())
        .collect::<Vec<_>>();
    files.sort_by(|a, b| natural_cmp(&a.to_string_lossy(), &b.to_string_lossy()));
    Ok(files)
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let mut a = a.chars().peekable();
    let mut b = b.chars().peekable();
    loop {
        match (a.peek().copied(), b.peek().copied()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let mut da = String::new();
                while let Some(c) = a.peek().copied().filter(char::is_ascii_digit) {
                    da.push(c);
                    a.next();
                }
                let mut db = String::new();
                while let Some(c) = b.peek().copied().filter(char::is_ascii_digit) {
                    db.push(c);
                    b.next();
                }
                let ta = da.trim_start_matches('0');
                let tb = db.trim_start_matches('0');
                let ord = ta
                    .len()
                    .cmp(&tb.len())
                    .then_with(|| ta.cmp(tb))
                    .then_with(|| da.len().cmp(&db.len()));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(&y);
                }
                a.next();
                b.next();
            }
        }
    }
}

/// `[x₁, y₁, z₁, …, x_N, y_N, z_N]`.
pub fn flatten_frame(frame: &LandmarkFrame) -> StateVector {
    StateVector::from_iterator(
        3 * frame.num_landmarks(),
        frame.landmarks.iter().flat_map(|p| p.iter().copied()),
    )
}

pub fn unflatten_frame(state: &StateVector, frame_index: usize) -> Result<LandmarkFrame> {
    if state.is_empty() || !state.len().is_multiple_of(3) {
        return Err(Error::Dimension(format!(
            "state length {} is not a positive multiple of 3",
            state.len()
        )));
    }
    let landmarks = state
        .as_slice()
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    LandmarkFrame::new(landmarks, frame_index)
}

/// `zₖ = flatten(frameₖ) + vₖ`, `vₖ ~ N(0, R)`, one measurement per frame.
///
/// Draws come from the measurement-noise stream of `seed`. A diagonal `R` is
/// sampled coordinate-wise; a full `R` through its Cholesky factor.
pub fn synthesize_measurements(
    trajectory: &Trajectory,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<StateVector>> {
    let dim = trajectory.state_dim();
    let r = &noise.measurement_cov;
    if r.dim() != dim {
        return Err(Error::Dimension(format!(
            "measurement covariance is {0}x{0}, trajectory state has {dim} components",
            r.dim()
        )));
    }
    let root = if r.is_diagonal() {
        None
    } else {
        Some(matrix_sqrt(r.as_matrix())?)
    };
    let scales = r.as_matrix().diagonal().map(f64::sqrt);
    let mut rng = stream(seed, Purpose::MeasurementNoise);
    trajectory
        .frames
        .iter()
        .map(|frame| {
            let truth = flatten_frame(frame);
            let xi = standard_normal_vector(&mut rng, dim);
            let noise = match &root {
                Some(l) => l * xi,
                None => xi.component_mul(&scales),
            };
            check_len(&noise, dim, "noise sample")?;
            Ok(truth + noise)
        })
        .collect()
}

/// C's `%.12g`: 12 significant digits, trailing zeros dropped, scientific
/// notation (`1.5e-07`, `1.23456789012e+14`) outside `1e-4 ≤ |x| < 1e12`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One `user,filter,frame,mse,mae` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub user: String,
    pub filter: String,
    pub frame: usize,
    pub mse: f64,
    pub mae: f64,
}

pub fn result_rows(results: &[FilterRunResult]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for r in results {
        if r.mse.len() != r.mae.len() {
            return Err(Error::Dimension(format!(
                "{}/{}: {} MSE values but {} MAE values",
                r.user_label,
                r.filter,
                r.mse.len(),
                r.mae.len()
            )));
        }
        for (frame, (mse, mae)) in r.mse.values.iter().zip(&r.mae).enumerate() {
            rows.push(ResultRow {
                user: r.user_label.clone(),
                filter: r.filter.to_string(),
                frame,
                mse: *mse,
                mae: *mae,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.user
            .cmp(&b.user)
            .then_with(|| a.filter.cmp(&b.filter))
            .then_with(|| a.frame.cmp(&b.frame))
    });
    Ok(rows)
}

fn comment_block(comments: &[String]) -> String {
    comments.iter().map(|c| format!("# {c}\n")).collect()
}

/// Header `user,filter,frame,mse,mae`, rows sorted by (user, filter, frame),
/// LF line endings. `comments` become leading `# ` lines.
pub fn write_results_csv<W: Write>(
    results: &[FilterRunResult],
    comments: &[String],
    mut out: W,
) -> Result<()> {
    let rows = result_rows(results)?;
    out.write_all(comment_block(comments).as_bytes())?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["user", "filter", "frame", "mse", "mae"])?;
    for row in rows {
        w.write_record([
            row.user,
            row.filter,
            row.frame.to_string(),
            format_float(row.mse),
            format_float(row.mae),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_csv_file(
    results: &[FilterRunResult],
    comments: &[String],
    path: &Path,
) -> Result<()> {
    let mut buf = Vec::new();
    write_results_csv(results, comments, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::from(e).in_file(path))
}

#[derive(Serialize)]
struct JsonResults<'a, C: Serialize> {
    config: &'a C,
    rows: Vec<ResultRow>,
}

/// Same rows as the CSV, plus the configuration as a JSON object.
pub fn write_results_json<W: Write, C: Serialize>(
    results: &[FilterRunResult],
    config: &C,
    mut out: W,
) -> Result<()> {
    let doc = JsonResults {
        config,
        rows: result_rows(results)?,
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a results CSV written by [`write_results_csv`], skipping comments.
pub fn read_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user", "filter", "frame", "mse", "mae"] {
        return Err(Error::Format(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("bad results row: {e}"))))
        .collect()
}

/// One `user,filter,frame,landmark,x,y,z` row of an estimates dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub user: String,
    pub filter: String,
    pub frame: usize,
    pub landmark: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Per-landmark estimates for every result, plus the ground truth of each
/// user under the filter name `truth`.
pub fn write_estimates_csv<W: Write>(
    results: &[FilterRunResult],
    comments: &[String],
    mut out: W,
) -> Result<()> {
    let mut rows: Vec<(String, String, usize, &StateVector)> = Vec::new();
    let mut users_with_truth: Vec<&str> = Vec::new();
    for r in results {
        for (k, est) in r.estimates.iter().enumerate() {
            rows.push((r.user_label.clone(), r.filter.to_string(), k, est));
        }
        if !users_with_truth.contains(&r.user_label.as_str()) {
            users_with_truth.push(&r.user_label);
            for (k, t) in r.truth.iter().enumerate() {
                rows.push((r.user_label.clone(), "truth".to_string(), k, t));
            }
        }
    }
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    out.write_all(comment_block(comments).as_bytes())?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["user", "filter", "frame", "landmark", "x", "y", "z"])?;
    for (user, filter, frame, state) in rows {
        for (landmark, c) in state.as_slice().chunks_exact(3).enumerate() {
            w.write_record([
                user.clone(),
                filter.clone(),
                frame.to_string(),
                landmark.to_string(),
                format_float(c[0]),
                format_float(c[1]),
                format_float(c[2]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates_csv(text: &str) -> Result<Vec<EstimateRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Format(format!("bad estimates row: {e}"))))
        .collect()
}
