//! Itô diffusive stochastic Schrödinger equation.
//!
//! ```text
//! d|ψ⟩ = [−iH − ½ Σₖ (Jₖ†Jₖ + ⟨Jₖ†⟩⟨Jₖ⟩ − 2⟨Jₖ†⟩Jₖ)] |ψ⟩ dt
//!        + Σₖ dξₖ* (Jₖ − ⟨Jₖ⟩) |ψ⟩
//! ```
//!
//! The measurement record of each step is
//! `Yₗ dt = Σₖ ⟨Jₖ†⟩ uₖₗ dt + ⟨Jₗ⟩ dt + dξₗ`.
//!
//! Two integrators are available, both renormalizing after every step.
//! [`Scheme::EulerMaruyama`] applies the increment above literally.
//! [`Scheme::RecordExponential`] uses the equivalent linear form driven by the
//! record, `d|φ⟩ = (−iH − ½ Σ J†J)|φ⟩dt + Σₗ Yₗ* dt Jₗ|φ⟩`, and integrates
//! its noise part exactly:
//!
//! ```text
//! |φ'⟩ = e^{−(iH + ½ΣJ†J)dt} (𝟙 − u₁₂* J₁J₂ dt) (𝟙 + Y₁*dt J₁)(𝟙 + Y₂*dt J₂) |ψ⟩
//! ```
//!
//! Both are weak order 1. The exponential form keeps `c̄/ψ₁₁²` free of
//! discretization noise, so the phase of `Θ` stays fixed along optimal
//! trajectories and the zero of `c` is reached at the same time on every one.

use num_complex::Complex64;

use crate::entanglement::pure_concurrence;
use crate::error::{Error, Result};
use crate::noise::{Increment, NoiseGenerator};
use crate::state::{c64, check_hamiltonian, Amplitudes, LindbladSet, Operator, StateVector};
use crate::unraveling::CorrelationMatrix;

/// Largest admissible `γ·dt`.
pub const MAX_GAMMA_DT: f64 = 1e-2;
pub const DEFAULT_GAMMA_DT: f64 = 1e-3;
pub const DEFAULT_GAMMA_TMAX: f64 = 7.0;
pub const DEFAULT_STATE_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    RecordExponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseConfig {
    pub lindblad: LindbladSet,
    pub hamiltonian: Operator,
    pub u: CorrelationMatrix,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Substream of `seed`; ensembles use the trajectory index.
    pub stream: u64,
    pub emit_records: bool,
    /// Store every `state_stride`-th state; concurrence and phase are kept every step.
    pub state_stride: usize,
    pub scheme: Scheme,
}

impl SseConfig {
    /// Defaults: `dt = 10⁻³/γ`, `t_max = 7/γ`, no Hamiltonian, seed 0.
    pub fn new(gamma: f64, u: CorrelationMatrix) -> Result<Self> {
        let cfg = Self {
            lindblad: LindbladSet::spontaneous_emission(gamma)?,
            hamiltonian: Operator::zeros(),
            u,
            dt: DEFAULT_GAMMA_DT / gamma,
            t_max: DEFAULT_GAMMA_TMAX / gamma,
            seed: 0,
            stream: 0,
            emit_records: false,
            state_stride: DEFAULT_STATE_STRIDE,
            scheme: Scheme::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_records(mut self, emit: bool) -> Self {
        self.emit_records = emit;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.state_stride = stride;
        self
    }

    pub fn with_hamiltonian(mut self, h: Operator) -> Self {
        self.hamiltonian = h;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.lindblad.gamma()
    }

    pub fn validate(&self) -> Result<()> {
        let gamma = self.gamma();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt * gamma > MAX_GAMMA_DT * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds {}/γ",
                self.dt, MAX_GAMMA_DT
            )));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.state_stride == 0 {
            return Err(Error::InvalidConfig("state stride must be at least 1".into()));
        }
        check_hamiltonian(&self.hamiltonian)
    }

    /// Number of steps on the uniform grid `tₖ = k·dt`, `k = 0..=n`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// `⟨Jₖ⟩` for both channels.
pub fn jump_expectations(psi: &StateVector, lindblad: &LindbladSet) -> [Complex64; 2] {
    lindblad.expectations(psi)
}

fn drift_with(psi: &StateVector, exps: &[Complex64; 2], cfg: &SseConfig) -> Amplitudes {
    let a = psi.amplitudes();
    let set = &cfg.lindblad;
    let mut out = cfg.hamiltonian * a * c64(0.0, -1.0);
    out -= set.decay_operator() * a * c64(0.5, 0.0);
    let mean_sq: f64 = exps.iter().map(|e| e.norm_sqr()).sum();
    out -= a * c64(0.5 * mean_sq, 0.0);
    for (j, e) in set.operators().iter().zip(exps) {
        out += j * a * e.conj();
    }
    out
}

/// Deterministic increment density of the SSE.
pub fn drift(psi: &StateVector, cfg: &SseConfig) -> Amplitudes {
    drift_with(psi, &jump_expectations(psi, &cfg.lindblad), cfg)
}

/// `Σₖ dξₖ* (Jₖ − ⟨Jₖ⟩)|ψ⟩`.
pub fn diffusion(psi: &StateVector, dxi: &Increment, lindblad: &LindbladSet) -> Amplitudes {
    diffusion_with(psi, &jump_expectations(psi, lindblad), dxi, lindblad)
}

fn diffusion_with(
    psi: &StateVector,
    exps: &[Complex64; 2],
    dxi: &Increment,
    lindblad: &LindbladSet,
) -> Amplitudes {
    let a = psi.amplitudes();
    let mut out = Amplitudes::zeros();
    for ((j, e), d) in lindblad.operators().iter().zip(exps).zip(dxi) {
        out += (j * a - a * *e) * d.conj();
    }
    out
}

fn finish(next: Amplitudes) -> Option<StateVector> {
    if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    StateVector::new(next).ok()
}

fn euler_step(psi: &StateVector, exps: &[Complex64; 2], dxi: &Increment, cfg: &SseConfig) -> Option<StateVector> {
    finish(
        psi.amplitudes()
            + drift_with(psi, exps, cfg) * c64(cfg.dt, 0.0)
            + diffusion_with(psi, exps, dxi, &cfg.lindblad),
    )
}

/// Precomputed pieces of [`Scheme::RecordExponential`].
#[derive(Debug, Clone)]
pub struct ExponentialPropagator {
    /// `e^{−(iH + ½ΣJ†J)dt}`.
    decay: Operator,
    /// `u₁₂* J₁J₂ dt`.
    correction: Operator,
}

impl ExponentialPropagator {
    pub fn new(cfg: &SseConfig) -> Self {
        let generator = (cfg.hamiltonian * c64(0.0, 1.0) + cfg.lindblad.decay_operator() * c64(0.5, 0.0))
            * c64(-cfg.dt, 0.0);
        let [j1, j2] = cfg.lindblad.operators();
        Self {
            decay: generator.exp(),
            correction: j1 * j2 * (cfg.u.u12().conj() * cfg.dt),
        }
    }

    fn apply(&self, psi: &StateVector, record: &Increment, lindblad: &LindbladSet) -> Option<StateVector> {
        let mut a = *psi.amplitudes();
        for (j, y) in lindblad.operators().iter().zip(record) {
            a += j * a * y.conj();
        }
        a -= self.correction * a;
        finish(self.decay * a)
    }
}

/// One Euler–Maruyama step followed by renormalization.
pub fn step(psi: &StateVector, dxi: &Increment, cfg: &SseConfig) -> Result<StateVector> {
    let exps = jump_expectations(psi, &cfg.lindblad);
    euler_step(psi, &exps, dxi, cfg).ok_or(Error::StepDiverged { step: 0 })
}

/// One step of the record-driven exponential scheme followed by
/// renormalization.
pub fn step_exponential(psi: &StateVector, dxi: &Increment, cfg: &SseConfig) -> Result<StateVector> {
    let exps = jump_expectations(psi, &cfg.lindblad);
    let mean = record_mean(&exps, &cfg.u);
    let record = [mean[0] * cfg.dt + dxi[0], mean[1] * cfg.dt + dxi[1]];
    ExponentialPropagator::new(cfg)
        .apply(psi, &record, &cfg.lindblad)
        .ok_or(Error::StepDiverged { step: 0 })
}

/// Deterministic part of the record, `⟨J†u + Jᵀ⟩` per unit time.
pub fn record_mean(exps: &[Complex64; 2], u: &CorrelationMatrix) -> [Complex64; 2] {
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (l, o) in out.iter_mut().enumerate() {
        *o = exps[l];
        for (k, e) in exps.iter().enumerate() {
            *o += e.conj() * u.get(k, l);
        }
    }
    out
}

/// `Yᵀdt = ⟨J†u + Jᵀ⟩ dt + dξᵀ`.
pub fn record_increment(
    psi: &StateVector,
    dxi: &Increment,
    u: &CorrelationMatrix,
    lindblad: &LindbladSet,
    dt: f64,
) -> Increment {
    let mean = record_mean(&jump_expectations(psi, lindblad), u);
    [mean[0] * dt + dxi[0], mean[1] * dt + dxi[1]]
}

/// Supplies the noise for each step. The state and `⟨J⟩` before the step are
/// passed so that record-driven sources can recover `dξ`.
pub trait IncrementSource {
    fn increment(
        &mut self,
        step: usize,
        psi: &StateVector,
        expectations: &[Complex64; 2],
    ) -> Result<Increment>;
}

/// Draws from a [`NoiseGenerator`] at a fixed step size.
pub struct GeneratorSource {
    pub generator: NoiseGenerator,
    pub dt: f64,
}

impl IncrementSource for GeneratorSource {
    fn increment(&mut self, _: usize, _: &StateVector, _: &[Complex64; 2]) -> Result<Increment> {
        Ok(self.generator.next_increment(self.dt))
    }
}

/// What a visitor sees after each step (and once for the initial state).
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub index: usize,
    pub t: f64,
    pub state: &'a StateVector,
    /// Increment and record of the step that produced `state`; `None` at `index = 0`.
    pub increment: Option<&'a Increment>,
    pub record: Option<&'a Increment>,
}

/// Integrates from `psi0` over the configured grid, calling `visit` at every
/// grid point. Returns the final state.
pub fn propagate<S, V>(psi0: &StateVector, cfg: &SseConfig, source: &mut S, mut visit: V) -> Result<StateVector>
where
    S: IncrementSource + ?Sized,
    V: FnMut(StepView<'_>),
{
    cfg.validate()?;
    let n = cfg.n_steps();
    let propagator = (cfg.scheme == Scheme::RecordExponential).then(|| ExponentialPropagator::new(cfg));
    let mut psi = *psi0;
    visit(StepView {
        index: 0,
        t: 0.0,
        state: &psi,
        increment: None,
        record: None,
    });
    for k in 0..n {
        let exps = jump_expectations(&psi, &cfg.lindblad);
        let dxi = source.increment(k, &psi, &exps)?;
        let mean = record_mean(&exps, &cfg.u);
        let record = [mean[0] * cfg.dt + dxi[0], mean[1] * cfg.dt + dxi[1]];
        let next = match &propagator {
            Some(p) => p.apply(&psi, &record, &cfg.lindblad),
            None => euler_step(&psi, &exps, &dxi, cfg),
        };
        psi = next.ok_or(Error::StepDiverged { step: k })?;
        visit(StepView {
            index: k + 1,
            t: cfg.time(k + 1),
            state: &psi,
            increment: Some(&dxi),
            record: Some(&record),
        });
    }
    Ok(psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub gamma: f64,
    pub dt: f64,
    pub u: CorrelationMatrix,
    pub seed: u64,
    pub stream: u64,
    /// `tₖ = k·dt` for every grid point.
    pub times: Vec<f64>,
    /// Grid indices of the stored states.
    pub state_steps: Vec<usize>,
    pub states: Vec<StateVector>,
    pub concurrences: Vec<f64>,
    /// Phase of `Θ`; NaN where `|Θ|` is below the degeneracy threshold.
    pub thetas: Vec<f64>,
    /// Record increments `Y·dt` of step `k → k+1`.
    pub currents: Option<Vec<Increment>>,
    /// Noise increments `dξ` of step `k → k+1`.
    pub increments: Option<Vec<Increment>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at grid index `step`, if stored.
    pub fn state_at(&self, step: usize) -> Option<&StateVector> {
        self.state_steps
            .binary_search(&step)
            .ok()
            .map(|i| &self.states[i])
    }

    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    /// Largest amplitude deviation over states stored by both records.
    pub fn max_deviation(&self, other: &TrajectoryRecord) -> f64 {
        self.state_steps
            .iter()
            .zip(&self.states)
            .filter_map(|(k, s)| other.state_at(*k).map(|o| s.max_deviation(o)))
            .fold(0.0, f64::max)
    }
}

/// Collects a [`TrajectoryRecord`] while driving `source`.
pub fn record_trajectory<S>(psi0: &StateVector, cfg: &SseConfig, source: &mut S) -> Result<TrajectoryRecord>
where
    S: IncrementSource + ?Sized,
{
    let n = cfg.n_steps();
    let mut rec = TrajectoryRecord {
        gamma: cfg.gamma(),
        dt: cfg.dt,
        u: cfg.u,
        seed: cfg.seed,
        stream: cfg.stream,
        times: Vec::with_capacity(n + 1),
        state_steps: Vec::with_capacity(n / cfg.state_stride + 2),
        states: Vec::with_capacity(n / cfg.state_stride + 2),
        concurrences: Vec::with_capacity(n + 1),
        thetas: Vec::with_capacity(n + 1),
        currents: cfg.emit_records.then(|| Vec::with_capacity(n)),
        increments: cfg.emit_records.then(|| Vec::with_capacity(n)),
    };
    propagate(psi0, cfg, source, |view| {
        rec.times.push(view.t);
        if view.index % cfg.state_stride == 0 || view.index == n {
            rec.state_steps.push(view.index);
            rec.states.push(*view.state);
        }
        let sample = pure_concurrence(view.state);
        rec.concurrences.push(sample.c);
        rec.thetas.push(sample.theta.unwrap_or(f64::NAN));
        if let (Some(cur), Some(y)) = (rec.currents.as_mut(), view.record) {
            cur.push(*y);
        }
        if let (Some(inc), Some(d)) = (rec.increments.as_mut(), view.increment) {
            inc.push(*d);
        }
    })?;
    Ok(rec)
}

/// Full trajectory from `psi0` with noise from `(cfg.seed, cfg.stream)`.
pub fn run_trajectory(psi0: &StateVector, cfg: &SseConfig) -> Result<TrajectoryRecord> {
    let generator = NoiseGenerator::new(cfg.u, cfg.seed, cfg.stream)?;
    let mut source = GeneratorSource {
        generator,
        dt: cfg.dt,
    };
    record_trajectory(psi0, cfg, &mut source)
}
