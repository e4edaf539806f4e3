//! Homodyne records for the optimal unraveling and replay of recorded currents.
//!
//! With `u₁₂ = −e^{iθ}` the complex records are
//!
//! ```text
//! Y₁dt = √γ ⟨−e^{iθ}σ₊⁽²⁾ + σ₋⁽¹⁾⟩ dt + dξ₁
//! Y₂dt = √γ ⟨−e^{iθ}σ₊⁽¹⁾ + σ₋⁽²⁾⟩ dt + dξ₂
//! ```
//!
//! and the two real photocurrents are
//!
//! ```text
//! I₁dt = √(γ/2) ⟨−e^{iθ}σ₊⁽²⁾ + σ₊⁽¹⁾ + h.c.⟩ dt + dζ₁
//! I₂dt = −i √(γ/2) ⟨e^{iθ}σ₊⁽²⁾ + σ₊⁽¹⁾ − h.c.⟩ dt + dζ₂
//! ```
//!
//! related by `Y₁ = (I₁ − iI₂)/√2`, `Y₂ = −e^{iθ}(I₁ + iI₂)/√2`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{Increment, NoiseGenerator};
use crate::sse::{record_mean, record_trajectory, IncrementSource, SseConfig, TrajectoryRecord};
use crate::state::{c64, expectation, sigma_minus_1, sigma_minus_2, sigma_plus_1, sigma_plus_2, StateVector};
use crate::unraveling::CorrelationMatrix;

/// Real homodyne increments `(I₁dt, I₂dt)`.
pub type Photocurrent = [f64; 2];

/// Relative tolerance when matching a record's `γ`, `dt` and phase to a config.
pub const GRID_TOLERANCE: f64 = 1e-12;

/// Both components of the optimal record for one step.
pub fn optimal_record_step(psi: &StateVector, dxi: &Increment, theta_opt: f64, gamma: f64, dt: f64) -> Increment {
    let e = Complex64::from_polar(1.0, theta_opt);
    let s = gamma.sqrt();
    let m1 = (-e * expectation(&sigma_plus_2(), psi) + expectation(&sigma_minus_1(), psi)) * s;
    let m2 = (-e * expectation(&sigma_plus_1(), psi) + expectation(&sigma_minus_2(), psi)) * s;
    [m1 * dt + dxi[0], m2 * dt + dxi[1]]
}

/// Deterministic parts of `(I₁, I₂)` per unit time.
pub fn homodyne_means(psi: &StateVector, theta_opt: f64, gamma: f64) -> [f64; 2] {
    let e = Complex64::from_polar(1.0, theta_opt);
    let p1 = expectation(&sigma_plus_1(), psi);
    let p2 = expectation(&sigma_plus_2(), psi);
    let s = (gamma / 2.0).sqrt();
    let a = -e * p2 + p1;
    let b = e * p2 + p1;
    // X + h.c. = 2 Re X, −i(X − h.c.) = 2 Im X
    [2.0 * s * a.re, 2.0 * s * b.im]
}

/// `(I₁dt, I₂dt)` for one step with shot-noise increments `dζ`.
pub fn homodyne_currents(psi: &StateVector, dzeta: &[f64; 2], theta_opt: f64, gamma: f64, dt: f64) -> Photocurrent {
    let m = homodyne_means(psi, theta_opt, gamma);
    [m[0] * dt + dzeta[0], m[1] * dt + dzeta[1]]
}

/// `Y` from one pair of real currents.
pub fn reconstruct_y_step(i: &Photocurrent, theta_opt: f64) -> Increment {
    let e = Complex64::from_polar(1.0, theta_opt);
    let plus = c64(i[0], i[1]) * FRAC_1_SQRT_2;
    let minus = c64(i[0], -i[1]) * FRAC_1_SQRT_2;
    [minus, -e * plus]
}

/// Applies [`reconstruct_y_step`] pointwise.
pub fn reconstruct_y(currents: &[Photocurrent], theta_opt: f64) -> Vec<Increment> {
    currents.iter().map(|i| reconstruct_y_step(i, theta_opt)).collect()
}

/// Inverse of [`reconstruct_y_step`]. Imaginary residues are discarded; they
/// vanish for records of the optimal unraveling.
pub fn currents_from_y(y: &Increment, theta_opt: f64) -> Photocurrent {
    let ec = Complex64::from_polar(1.0, -theta_opt);
    let i1 = (y[0] - ec * y[1]) * FRAC_1_SQRT_2;
    let i2 = (y[0] + ec * y[1]) * c64(0.0, FRAC_1_SQRT_2);
    [i1.re, i2.re]
}

/// Complex noise implied by shot noise `dζ` on the optimal unraveling.
pub fn xi_from_zeta(dzeta: &[f64; 2], theta_opt: f64) -> Increment {
    let e = Complex64::from_polar(1.0, theta_opt);
    let d1 = c64(dzeta[0], -dzeta[1]) * FRAC_1_SQRT_2;
    [d1, -e * d1.conj()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentRecord {
    pub gamma: f64,
    pub dt: f64,
    pub theta_opt: f64,
    pub seed: u64,
    pub psi0: StateVector,
    /// Start time of each step.
    pub times: Vec<f64>,
    /// `Y·dt` per step.
    pub y: Vec<Increment>,
    /// `I·dt` per step.
    pub i: Vec<Photocurrent>,
}

impl CurrentRecord {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Builds a record from real currents alone.
    pub fn from_currents(gamma: f64, dt: f64, theta_opt: f64, seed: u64, psi0: StateVector, i: Vec<Photocurrent>) -> Self {
        let y = reconstruct_y(&i, theta_opt);
        Self {
            gamma,
            dt,
            theta_opt,
            seed,
            psi0,
            times: (0..i.len()).map(|k| k as f64 * dt).collect(),
            y,
            i,
        }
    }

    /// Largest `|Y − reconstruct(I)|` over the record.
    pub fn reconstruction_residual(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.i)
            .map(|(y, i)| {
                let r = reconstruct_y_step(i, self.theta_opt);
                (y[0] - r[0]).norm().max((y[1] - r[1]).norm())
            })
            .fold(0.0, f64::max)
    }
}

/// Draws shot noise, converts it to `dξ` and logs the real currents of the
/// step from the pre-step state.
struct ShotNoiseSource {
    generator: NoiseGenerator,
    theta_opt: f64,
    gamma: f64,
    dt: f64,
    currents: Vec<Photocurrent>,
}

impl IncrementSource for ShotNoiseSource {
    fn increment(&mut self, _: usize, psi: &StateVector, _: &[Complex64; 2]) -> Result<Increment> {
        let [a, b] = self.generator.next_standard_pair();
        let s = self.dt.sqrt();
        let dz = [a * s, b * s];
        self.currents
            .push(homodyne_currents(psi, &dz, self.theta_opt, self.gamma, self.dt));
        Ok(xi_from_zeta(&dz, self.theta_opt))
    }
}

/// Simulates the detection scheme: a trajectory under the optimal unraveling
/// with phase `theta_opt`, together with its complex and real records.
///
/// `cfg.u` is replaced by the optimal matrix for `theta_opt`.
pub fn simulate_detection(
    psi0: &StateVector,
    theta_opt: f64,
    cfg: &SseConfig,
) -> Result<(TrajectoryRecord, CurrentRecord)> {
    let mut cfg = cfg.clone();
    cfg.u = CorrelationMatrix::off_diagonal_phase(theta_opt);
    cfg.emit_records = true;
    let mut source = ShotNoiseSource {
        generator: NoiseGenerator::new(CorrelationMatrix::zero(), cfg.seed, cfg.stream)?,
        theta_opt,
        gamma: cfg.gamma(),
        dt: cfg.dt,
        currents: Vec::with_capacity(cfg.n_steps()),
    };
    let traj = record_trajectory(psi0, &cfg, &mut source)?;
    let y = traj.currents.clone().expect("records enabled");
    let record = CurrentRecord {
        gamma: cfg.gamma(),
        dt: cfg.dt,
        theta_opt,
        seed: cfg.seed,
        psi0: *psi0,
        times: traj.times[..y.len()].to_vec(),
        y,
        i: source.currents,
    };
    Ok((traj, record))
}

/// Recovers `dξ = Y·dt − ⟨J†u + Jᵀ⟩ dt` from a record using the current
/// conditional state.
pub struct ReplaySource<'a> {
    pub y: &'a [Increment],
    pub u: CorrelationMatrix,
    pub dt: f64,
}

impl IncrementSource for ReplaySource<'_> {
    fn increment(&mut self, step: usize, _: &StateVector, expectations: &[Complex64; 2]) -> Result<Increment> {
        let y = self.y.get(step).ok_or_else(|| {
            Error::RecordMismatch(format!("record ends after {} steps", self.y.len()))
        })?;
        let mean = record_mean(expectations, &self.u);
        Ok([y[0] - mean[0] * self.dt, y[1] - mean[1] * self.dt])
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= GRID_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Drives the conditional evolution from `psi0` with the noise recovered from
/// `record`. `cfg` must match the record's `γ`, `dt` and length; its `u` is
/// set from the record's phase. The returned trajectory carries the input
/// record as its currents.
pub fn replay_from_record(psi0: &StateVector, record: &CurrentRecord, cfg: &SseConfig) -> Result<TrajectoryRecord> {
    if !close(cfg.gamma(), record.gamma) {
        return Err(Error::RecordMismatch(format!(
            "gamma {} differs from the record's {}",
            cfg.gamma(),
            record.gamma
        )));
    }
    if !close(cfg.dt, record.dt) {
        return Err(Error::RecordMismatch(format!(
            "dt {} differs from the record's {}",
            cfg.dt, record.dt
        )));
    }
    if cfg.n_steps() != record.len() {
        return Err(Error::RecordMismatch(format!(
            "{} steps configured but the record has {}",
            cfg.n_steps(),
            record.len()
        )));
    }
    let mut cfg = cfg.clone();
    cfg.u = CorrelationMatrix::off_diagonal_phase(record.theta_opt);
    cfg.emit_records = true;
    let mut source = ReplaySource {
        y: &record.y,
        u: cfg.u,
        dt: cfg.dt,
    };
    let mut traj = record_trajectory(psi0, &cfg, &mut source)?;
    traj.currents = Some(record.y.clone());
    traj.seed = record.seed;
    Ok(traj)
}

/// Record length (in steps) implied by `t_max` and `dt`, for building a
/// replay config from a record.
pub fn record_t_max(record: &CurrentRecord) -> f64 {
    record.len() as f64 * record.dt
}
