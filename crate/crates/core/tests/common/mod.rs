//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls into the filter code paths under test: the linear
//! Kalman filter uses explicit inverses and no symmetrization, and the
//! scalar recursions are plain f64 arithmetic.

#![allow(dead_code)]

use facefilter::{Matrix, StateVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn randn_vector(rng: &mut ChaCha8Rng, len: usize) -> StateVector {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `B·Bᵀ + floor·I` with Gaussian `B`, scaled by `scale`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64, floor: f64) -> Matrix {
    let b = randn_matrix(rng, n, n);
    let m = &b * b.transpose() * (scale / n as f64) + Matrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

/// Random orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    randn_matrix(rng, n, n).qr().q()
}

/// `U·diag(eigs)·Uᵀ` for a random orthogonal `U`.
pub fn spd_with_spectrum(rng: &mut ChaCha8Rng, eigs: &[f64]) -> Matrix {
    let u = random_orthogonal(rng, eigs.len());
    let m = &u * Matrix::from_diagonal(&DVector::from_column_slice(eigs)) * u.transpose();
    (&m + m.transpose()) * 0.5
}

/// Textbook linear Kalman filter, written out directly.
pub struct LinearKf {
    pub a: Matrix,
    pub h: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub x: StateVector,
    pub p: Matrix,
}

impl LinearKf {
    pub fn predict(&mut self) {
        self.x = &self.a * &self.x;
        self.p = &self.a * &self.p * self.a.transpose() + &self.q;
    }

    pub fn update(&mut self, z: &StateVector) {
        let s = &self.h * &self.p * self.h.transpose() + &self.r;
        let s_inv = s.try_inverse().expect("invertible innovation covariance");
        let k = &self.p * self.h.transpose() * s_inv;
        self.x = &self.x + &k * (z - &self.h * &self.x);
        let n = self.x.len();
        self.p = (Matrix::identity(n, n) - &k * &self.h) * &self.p;
    }
}

/// Random linear Gaussian system: stable-ish transition, random
/// observation, SPD noise covariances.
pub struct LinearSystem {
    pub a: Matrix,
    pub h: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub x0: StateVector,
    pub p0: Matrix,
}

impl LinearSystem {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Self {
        let a = Matrix::identity(n, n) * 0.9 + randn_matrix(rng, n, n) * (0.1 / (n as f64).sqrt());
        LinearSystem {
            a,
            h: randn_matrix(rng, m, n),
            q: random_spd(rng, n, 0.2, 0.01),
            r: random_spd(rng, m, 0.5, 0.05),
            x0: randn_vector(rng, n),
            p0: random_spd(rng, n, 1.0, 0.1),
        }
    }

    /// Measurements of a simulated trajectory, `steps` long.
    pub fn simulate(&self, rng: &mut ChaCha8Rng, steps: usize) -> Vec<StateVector> {
        let lq = self.q.clone().cholesky().unwrap().unpack();
        let lr = self.r.clone().cholesky().unwrap().unpack();
        let mut x = &self.x0
            + self.p0.clone().cholesky().unwrap().unpack() * randn_vector(rng, self.x0.len());
        (0..steps)
            .map(|_| {
                x = &self.a * &x + &lq * randn_vector(rng, x.len());
                &self.h * &x + &lr * randn_vector(rng, self.h.nrows())
            })
            .collect()
    }

    pub fn kf(&self) -> LinearKf {
        LinearKf {
            a: self.a.clone(),
            h: self.h.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            x: self.x0.clone(),
            p: self.p0.clone(),
        }
    }
}

/// Steady-state posterior variance of the scalar random walk
/// `x' = x + w, z = x + v` with `Var w = q`, `Var v = r`, by iterating the
/// Riccati recursion to a fixed point.
pub fn scalar_riccati_posterior(q: f64, r: f64) -> f64 {
    let mut p = r;
    for _ in 0..100_000 {
        let prior = p + q;
        let next = prior * r / (prior + r);
        if (next - p).abs() <= 1e-16 * p.max(1e-300) {
            return next;
        }
        p = next;
    }
    p
}

/// `(1/N) Σ (aᵢ − bᵢ)²` with an explicit loop.
pub fn mse_loop(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sum += d * d;
    }
    sum / a.len() as f64
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).amax()
}
