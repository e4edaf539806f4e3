//! Pure-state concurrence and its dynamics along trajectories.
//!
//! `c̄ = ⟨ψ*|σy⊗σy|ψ⟩ = 2(ψ₀₁ψ₁₀ − ψ₀₀ψ₁₁)`, `c = |c̄|` and `Θ = c̄*ψ₁₁²`. Along
//! an optimal-unraveling trajectory the phase of `Θ` is frozen until the
//! trajectory passes through `c = 0`, where it jumps by π.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::oracle::p_of_t;
use crate::sse::TrajectoryRecord;
use crate::state::{expectation, sigma_minus_1, sigma_minus_2, StateVector};
use crate::unraveling::{wrap_phase, CorrelationMatrix, DEGENERACY_THRESHOLD};

/// The Itô drift divides by `c`; below this it is not evaluated.
pub const DRIFT_CONCURRENCE_FLOOR: f64 = 1e-10;
/// Steps with smaller concurrence are skipped by [`finite_difference_dc_check`].
pub const DC_CHECK_FLOOR: f64 = 1e-6;
/// Number of consecutive samples a phase jump must persist for.
pub const DEFAULT_PERSISTENCE: usize = 10;

/// `c̄ = 2(ψ₀₁ψ₁₀ − ψ₀₀ψ₁₁)`.
pub fn cbar(psi: &StateVector) -> Complex64 {
    (psi.psi01() * psi.psi10() - psi.psi00() * psi.psi11()) * 2.0
}

/// `Θ = c̄*ψ₁₁²`.
pub fn big_theta(psi: &StateVector) -> Complex64 {
    let p = psi.psi11();
    cbar(psi).conj() * p * p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementSample {
    pub c: f64,
    pub cbar: Complex64,
    pub big_theta: Complex64,
    /// `arg Θ` in `(−π, π]`; `None` when `|Θ|` is below the degeneracy threshold.
    pub theta: Option<f64>,
}

pub fn pure_concurrence(psi: &StateVector) -> EntanglementSample {
    let cb = cbar(psi);
    let p = psi.psi11();
    let th = cb.conj() * p * p;
    EntanglementSample {
        c: cb.norm(),
        cbar: cb,
        big_theta: th,
        theta: (th.norm() > DEGENERACY_THRESHOLD).then(|| wrap_phase(th.arg())),
    }
}

/// `dt`-coefficient of the concurrence increment:
/// `−γc + 2γ Re(c̄ ψ₁₁*² u₁₂ / c)`.
pub fn concurrence_increment_drift(psi: &StateVector, u: &CorrelationMatrix, gamma: f64) -> Result<f64> {
    let s = pure_concurrence(psi);
    if s.c <= DRIFT_CONCURRENCE_FLOOR {
        return Err(Error::DriftUndefined);
    }
    let p = psi.psi11().conj();
    let coupling = (s.cbar * p * p * u.u12()).re / s.c;
    Ok(-gamma * s.c + 2.0 * gamma * coupling)
}

/// Stochastic part of the concurrence increment, `−2c Re(⟨J†⟩ dξ)`.
pub fn concurrence_increment_noise(psi: &StateVector, dxi: &[Complex64; 2], gamma: f64) -> f64 {
    let root = gamma.sqrt();
    let exps = [
        expectation(&sigma_minus_1(), psi) * root,
        expectation(&sigma_minus_2(), psi) * root,
    ];
    let c = cbar(psi).norm();
    let proj: Complex64 = exps.iter().zip(dxi).map(|(e, d)| e.conj() * d).sum();
    -2.0 * c * proj.re
}

/// Agreement between observed per-step `Δc` and the Itô prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcCheck {
    pub steps_used: usize,
    /// Least-squares slope of observed on predicted increments.
    pub slope: f64,
    /// Root-mean-square of `Δc_observed − Δc_predicted`.
    pub rms_residual: f64,
    pub mean_residual: f64,
}

/// Compares each step's `Δc` with drift·dt plus the stochastic term rebuilt
/// from the stored increments. Needs a record with `state_stride = 1` and
/// stored increments.
pub fn finite_difference_dc_check(traj: &TrajectoryRecord, u: &CorrelationMatrix, gamma: f64) -> Result<DcCheck> {
    let increments = traj
        .increments
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("trajectory has no stored increments".into()))?;
    if traj.states.len() != traj.times.len() {
        return Err(Error::InvalidConfig("trajectory must store every state".into()));
    }
    let dt = traj.dt;
    let (mut n, mut sum_r, mut sum_r2, mut sum_op, mut sum_pp) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for (k, dxi) in increments.iter().enumerate() {
        let psi = &traj.states[k];
        if traj.concurrences[k] <= DC_CHECK_FLOOR {
            continue;
        }
        let predicted = concurrence_increment_drift(psi, u, gamma)? * dt + concurrence_increment_noise(psi, dxi, gamma);
        let observed = traj.concurrences[k + 1] - traj.concurrences[k];
        let r = observed - predicted;
        n += 1;
        sum_r += r;
        sum_r2 += r * r;
        sum_op += observed * predicted;
        sum_pp += predicted * predicted;
    }
    if n == 0 {
        return Ok(DcCheck {
            steps_used: 0,
            slope: f64::NAN,
            rms_residual: 0.0,
            mean_residual: 0.0,
        });
    }
    Ok(DcCheck {
        steps_used: n,
        slope: sum_op / sum_pp,
        rms_residual: (sum_r2 / n as f64).sqrt(),
        mean_residual: sum_r / n as f64,
    })
}

/// `e^{−γt}[c(0) − 2|ψ₁₁(0)|²(1 − e^{−γt})]`, signed. Equals Λ(ρ(t)) of the
/// unconditional state.
pub fn analytic_lambda(psi0: &StateVector, gamma: f64, t: f64) -> f64 {
    let c0 = cbar(psi0).norm();
    let e = (-gamma * t).exp();
    e * (c0 - 2.0 * psi0.psi11().norm_sqr() * (1.0 - e))
}

/// Mixed-state concurrence of ρ(t): the signed law floored at zero.
pub fn analytic_mean_concurrence(psi0: &StateVector, gamma: f64, t: f64) -> f64 {
    analytic_lambda(psi0, gamma, t).max(0.0)
}

/// Mean pure-state concurrence of an optimal-unraveling ensemble, `|Λ(t)|`.
/// Differs from [`analytic_mean_concurrence`] only after a finite
/// disentanglement time, where trajectories re-acquire concurrence with the
/// opposite phase.
pub fn analytic_trajectory_mean(psi0: &StateVector, gamma: f64, t: f64) -> f64 {
    analytic_lambda(psi0, gamma, t).abs()
}

/// `dE[c]/dt = −γE[c] − 2γ|ψ₁₁(0)|² e^{−2γt}`.
pub fn mean_concurrence_ode_rhs(ec: f64, psi0: &StateVector, gamma: f64, t: f64) -> f64 {
    -gamma * ec - 2.0 * gamma * psi0.psi11().norm_sqr() * (-2.0 * gamma * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisentanglementKind {
    Finite,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    PhaseJump,
    /// No defined phase anywhere: concurrence sits at zero.
    ConcurrenceFloor,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisentanglementReport {
    pub kind: DisentanglementKind,
    pub t_s: Option<f64>,
    pub p_s: Option<f64>,
    pub detection: Detection,
    /// Grid index of the first post-jump sample.
    pub jump_index: Option<usize>,
}

impl DisentanglementReport {
    fn asymptotic(detection: Detection) -> Self {
        Self {
            kind: DisentanglementKind::Asymptotic,
            t_s: None,
            p_s: None,
            detection,
            jump_index: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.kind == DisentanglementKind::Finite
    }
}

/// Finite iff `c(0) < 2|ψ₁₁(0)|²`, then `p_s = c(0)/(2|ψ₁₁(0)|²)`.
pub fn analytic_ts(psi0: &StateVector, gamma: f64) -> DisentanglementReport {
    let c0 = cbar(psi0).norm();
    let twice_excited = 2.0 * psi0.psi11().norm_sqr();
    if c0 > 0.0 && c0 < twice_excited {
        let p_s = c0 / twice_excited;
        let t_s = -(-p_s).ln_1p() / gamma;
        DisentanglementReport {
            kind: DisentanglementKind::Finite,
            t_s: Some(t_s),
            p_s: Some(p_s),
            detection: Detection::Analytic,
            jump_index: None,
        }
    } else {
        DisentanglementReport::asymptotic(Detection::Analytic)
    }
}

/// Finds the first π jump of `θ(t)` with the default persistence window.
pub fn detect_disentanglement(traj: &TrajectoryRecord) -> DisentanglementReport {
    detect_disentanglement_with(traj, DEFAULT_PERSISTENCE)
}

/// A jump is a wrapped step change above π/2 after which the next `window`
/// defined samples all stay more than π/2 away from the pre-jump phase.
pub fn detect_disentanglement_with(traj: &TrajectoryRecord, window: usize) -> DisentanglementReport {
    match find_phase_jump(&traj.thetas, window) {
        Some(k) => {
            let t_s = traj.times[k];
            DisentanglementReport {
                kind: DisentanglementKind::Finite,
                t_s: Some(t_s),
                p_s: Some(p_of_t(traj.gamma, t_s)),
                detection: Detection::PhaseJump,
                jump_index: Some(k),
            }
        }
        None if traj.thetas.iter().all(|t| t.is_nan()) => {
            DisentanglementReport::asymptotic(Detection::ConcurrenceFloor)
        }
        None => DisentanglementReport::asymptotic(Detection::PhaseJump),
    }
}

fn find_phase_jump(thetas: &[f64], window: usize) -> Option<usize> {
    let mut reference: Option<f64> = None;
    for (k, &th) in thetas.iter().enumerate() {
        if th.is_nan() {
            continue;
        }
        let Some(prev) = reference else {
            reference = Some(th);
            continue;
        };
        if wrap_phase(th - prev).abs() <= FRAC_PI_2 {
            reference = Some(th);
            continue;
        }
        let mut following = thetas[k + 1..].iter().filter(|t| !t.is_nan()).take(window);
        let mut count = 0;
        let persistent = following.all(|&t| {
            count += 1;
            wrap_phase(t - prev).abs() > FRAC_PI_2
        }) && count == window;
        if persistent {
            return Some(k);
        }
    }
    None
}

/// Circular mean and circular standard deviation `√(−2 ln R)` of the defined
/// (non-NaN) angles. `None` for an empty set.
pub fn circular_stats(angles: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles.into_iter().filter(|a| !a.is_nan()) {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let (s, c) = (s / n as f64, c / n as f64);
    let r = (s * s + c * c).sqrt().min(1.0);
    let std = if r > 0.0 { (-2.0 * r.ln()).max(0.0).sqrt() } else { f64::INFINITY };
    Some((s.atan2(c), std))
}

/// Phase spread on each side of a detected jump (the whole trajectory counts
/// as "before" when there is none).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpread {
    pub before_mean: f64,
    pub before_std: f64,
    pub after_mean: Option<f64>,
    pub after_std: Option<f64>,
}

pub fn phase_spread(traj: &TrajectoryRecord, report: &DisentanglementReport) -> Option<PhaseSpread> {
    let split = report.jump_index.unwrap_or(traj.thetas.len());
    let (before_mean, before_std) = circular_stats(traj.thetas[..split].iter().copied())?;
    let after = circular_stats(traj.thetas[split..].iter().copied());
    Some(PhaseSpread {
        before_mean,
        before_std,
        after_mean: after.map(|a| a.0),
        after_std: after.map(|a| a.1),
    })
}

/// Wrapped difference of two angles, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs().min(PI)
}
