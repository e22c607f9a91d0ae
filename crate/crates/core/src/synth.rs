//! Synthetic face trajectories for running the harness without the dataset.
//!
//! A seeded random "face" of `N` landmarks is swayed rigidly along each axis
//! by `A·sin(2π·f·t + φ)`, with the phase `φ` drawn per axis. Landmark
//! coordinates are rounded to the 12 significant digits used on disk, so a
//! trajectory survives a write/read cycle unchanged.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{format_float, format_landmark_file, LandmarkFrame, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::statespace::DEFAULT_DT;

/// Half-widths (mm) of the box the base face is drawn from.
const FACE_HALF_EXTENT: [f64; 3] = [70.0, 90.0, 30.0];
/// Distance (mm) of the face from the sensor along z.
const FACE_DEPTH: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub points: usize,
    pub frames: usize,
    pub seed: u64,
    pub dt: f64,
    /// Sway amplitude per axis, mm.
    pub amplitude: f64,
    /// Sway frequency, Hz.
    pub frequency: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            points: 54,
            frames: 12,
            seed: 1,
            dt: DEFAULT_DT,
            amplitude: 1.0,
            frequency: 0.25,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.points < 1 {
            return Err(Error::InvalidConfig("points must be >= 1".into()));
        }
        if self.frames < 1 {
            return Err(Error::InvalidConfig("frames must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidConfig("amplitude must be >= 0".into()));
        }
        if !self.frequency.is_finite() {
            return Err(Error::InvalidConfig("frequency must be finite".into()));
        }
        Ok(())
    }
}

fn round_to_disk(v: f64) -> f64 {
    format_float(v).parse().expect("formatted float parses")
}

pub fn synthetic_trajectory(params: &SynthParams, user_label: &str) -> Result<Trajectory> {
    params.validate()?;
    let mut rng = stream(params.seed, Purpose::Synthesis);
    let base: Vec<[f64; 3]> = (0..params.points)
        .map(|_| {
            let mut p = [0.0; 3];
            for (axis, c) in p.iter_mut().enumerate() {
                let h = FACE_HALF_EXTENT[axis];
                *c = rng.random_range(-h..h);
            }
            p[2] += FACE_DEPTH;
            p
        })
        .collect();
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..TAU));

    let frames = (0..params.frames)
        .map(|k| {
            let t = k as f64 * params.dt;
            let sway: [f64; 3] = std::array::from_fn(|a| {
                params.amplitude * (TAU * params.frequency * t + phases[a]).sin()
            });
            let landmarks = base
                .iter()
                .map(|p| std::array::from_fn(|a| round_to_disk(p[a] + sway[a])))
                .collect();
            LandmarkFrame::new(landmarks, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(frames, user_label, params.dt)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    params: &'a SynthParams,
    files: Vec<String>,
}

/// Writes `frame_000.txt`, `frame_001.txt`, … plus `manifest.json` listing the
/// files in order. Returns the frame paths.
pub fn write_synthetic(params: &SynthParams, dir: &Path) -> Result<Vec<PathBuf>> {
    let traj = synthetic_trajectory(params, "synthetic")?;
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let width = params.frames.saturating_sub(1).to_string().len().max(3);
    let mut paths = Vec::with_capacity(traj.len());
    for frame in &traj.frames {
        let path = dir.join(format!("frame_{:0width$}.txt", frame.frame_index));
        fs::write(&path, format_landmark_file(frame)).map_err(|e| Error::from(e).in_file(&path))?;
        paths.push(path);
    }
    let manifest = Manifest {
        params,
        files: paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::from(e).in_file(&manifest_path))?;
    Ok(paths)
}
