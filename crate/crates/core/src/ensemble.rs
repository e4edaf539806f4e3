//! Ensembles of independent trajectories and the comparisons run on them.
//!
//! Trajectory `k` draws its noise from substream `k` of the master seed and
//! the reduction runs in index order, so results do not depend on the number
//! of workers.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::entanglement::{
    analytic_trajectory_mean, circular_stats, pure_concurrence,
};
use crate::error::{Error, Result};
use crate::noise::NoiseGenerator;
use crate::oracle::{evolve_master, p_of_t, MasterEvolution};
use crate::sse::{propagate, GeneratorSource, SseConfig};
use crate::state::{c64, trace_distance, DensityMatrix, Operator, StateVector};
use crate::unraveling::{theta_from_state, CorrelationMatrix};

/// Which summaries [`summarize`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparisons {
    pub vs_analytic: bool,
    pub vs_master_oracle: bool,
    pub theta_stats: bool,
}

impl Default for Comparisons {
    fn default() -> Self {
        Self {
            vs_analytic: true,
            vs_master_oracle: true,
            theta_stats: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub base: SseConfig,
    pub n_traj: usize,
    /// Output times; each must coincide with a step of the integration grid.
    pub stat_grid: Vec<f64>,
    /// Times at which the mean projector `E[|ψ⟩⟨ψ|]` is accumulated.
    pub checkpoints: Vec<f64>,
    pub comparisons: Comparisons,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(base: SseConfig, n_traj: usize, stat_grid: Vec<f64>) -> Self {
        Self {
            base,
            n_traj,
            stat_grid,
            checkpoints: Vec::new(),
            comparisons: Comparisons::default(),
            jobs: None,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<f64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs);
        self
    }

    fn validate(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        self.base.validate()?;
        if self.n_traj < 2 {
            return Err(Error::InvalidConfig(format!(
                "an ensemble needs at least 2 trajectories, got {}",
                self.n_traj
            )));
        }
        if self.stat_grid.is_empty() {
            return Err(Error::InvalidConfig("statistics grid is empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        let grid = step_indices(&self.stat_grid, &self.base)?;
        let checkpoints = step_indices(&self.checkpoints, &self.base)?;
        Ok((grid, checkpoints))
    }
}

fn step_indices(times: &[f64], cfg: &SseConfig) -> Result<Vec<usize>> {
    let n = cfg.n_steps();
    times
        .iter()
        .map(|&t| {
            let k = (t / cfg.dt).round();
            if !(k >= 0.0 && (k as usize) <= n) || (k * cfg.dt - t).abs() > 1e-9 * cfg.dt.max(t) {
                return Err(Error::InvalidConfig(format!(
                    "time {t} is not on the integration grid (dt = {}, t_max = {})",
                    cfg.dt, cfg.t_max
                )));
            }
            Ok(k as usize)
        })
        .collect()
}

/// Rounds each time to the nearest integration step.
pub fn snap_to_grid(times: &[f64], cfg: &SseConfig) -> Vec<f64> {
    let n = cfg.n_steps() as f64;
    times
        .iter()
        .map(|&t| (t / cfg.dt).round().clamp(0.0, n) * cfg.dt)
        .collect()
}

/// `n` points uniformly spaced in `p = 1 − e^{−γt}` over `[0, p_max]`,
/// snapped to the integration grid.
pub fn p_grid(n: usize, p_max: f64, cfg: &SseConfig) -> Vec<f64> {
    let gamma = cfg.gamma();
    let times: Vec<f64> = (0..n)
        .map(|k| {
            let p = p_max * k as f64 / (n - 1).max(1) as f64;
            crate::oracle::t_of_p(gamma, p)
        })
        .collect();
    snap_to_grid(&times, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub mean_projector: Operator,
    /// Standard error of each complex entry, `√(Var Re + Var Im)/√n`.
    pub standard_error: Matrix4<f64>,
}

impl Checkpoint {
    /// Scale of the trace-distance fluctuation expected from sampling alone:
    /// the Frobenius norm of the entrywise standard errors, which bounds
    /// `E[½‖X‖₁]` for a rank-≤4 noise matrix `X`.
    pub fn statistical_error(&self) -> f64 {
        self.standard_error.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub psi0: StateVector,
    pub gamma: f64,
    pub u: CorrelationMatrix,
    pub seed: u64,
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub mean_c: Vec<f64>,
    pub se_c: Vec<f64>,
    pub mean_psi11_sq: Vec<f64>,
    pub se_psi11_sq: Vec<f64>,
    pub theta_circ_mean: Vec<f64>,
    pub theta_circ_std: Vec<f64>,
    /// Trajectories with a defined phase at each time.
    pub theta_samples: Vec<usize>,
    pub n_samples: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
}

impl EnsembleStats {
    pub fn p(&self) -> Vec<f64> {
        self.times.iter().map(|&t| p_of_t(self.gamma, t)).collect()
    }

    /// Trapezoidal integral of the mean concurrence over the grid.
    pub fn integrated_mean_c(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.mean_c.windows(2))
            .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
            .sum()
    }
}

struct TrajectorySamples {
    c: Vec<f64>,
    psi11_sq: Vec<f64>,
    theta: Vec<f64>,
    projectors: Vec<Operator>,
}

fn run_one(
    psi0: &StateVector,
    base: &SseConfig,
    index: usize,
    grid: &[usize],
    checkpoints: &[usize],
) -> Result<TrajectorySamples> {
    let mut cfg = base.clone();
    cfg.stream = index as u64;
    // the longest requested time bounds the integration
    let last = grid.iter().chain(checkpoints).copied().max().unwrap_or(0);
    cfg.t_max = (last.max(1)) as f64 * cfg.dt;
    let generator = NoiseGenerator::new(cfg.u, cfg.seed, cfg.stream)?;
    let mut source = GeneratorSource {
        generator,
        dt: cfg.dt,
    };
    let mut out = TrajectorySamples {
        c: vec![0.0; grid.len()],
        psi11_sq: vec![0.0; grid.len()],
        theta: vec![f64::NAN; grid.len()],
        projectors: vec![Operator::zeros(); checkpoints.len()],
    };
    propagate(psi0, &cfg, &mut source, |view| {
        for (slot, &k) in grid.iter().enumerate() {
            if k == view.index {
                let s = pure_concurrence(view.state);
                out.c[slot] = s.c;
                out.psi11_sq[slot] = view.state.psi11().norm_sqr();
                out.theta[slot] = s.theta.unwrap_or(f64::NAN);
            }
        }
        for (slot, &k) in checkpoints.iter().enumerate() {
            if k == view.index {
                out.projectors[slot] = view.state.projector();
            }
        }
    })
    .map_err(|e| Error::TrajectoryFailed {
        index,
        seed: cfg.seed,
        stream: cfg.stream,
        source: Box::new(e),
    })?;
    Ok(out)
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `cfg.n_traj` trajectories from `psi0` and aggregates them.
pub fn run_ensemble(psi0: &StateVector, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    let (grid, checkpoints) = cfg.validate()?;
    let work = || {
        (0..cfg.n_traj)
            .into_par_iter()
            .map(|k| run_one(psi0, &cfg.base, k, &grid, &checkpoints))
            .collect::<Vec<_>>()
    };
    let results = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(reduce(psi0, cfg, &grid, &checkpoints, &samples))
}

fn reduce(
    psi0: &StateVector,
    cfg: &EnsembleConfig,
    grid: &[usize],
    checkpoints: &[usize],
    samples: &[TrajectorySamples],
) -> EnsembleStats {
    let n = samples.len();
    let dt = cfg.base.dt;
    let mut stats = EnsembleStats {
        psi0: *psi0,
        gamma: cfg.base.gamma(),
        u: cfg.base.u,
        seed: cfg.base.seed,
        n_traj: n,
        times: grid.iter().map(|&k| k as f64 * dt).collect(),
        mean_c: Vec::with_capacity(grid.len()),
        se_c: Vec::with_capacity(grid.len()),
        mean_psi11_sq: Vec::with_capacity(grid.len()),
        se_psi11_sq: Vec::with_capacity(grid.len()),
        theta_circ_mean: Vec::with_capacity(grid.len()),
        theta_circ_std: Vec::with_capacity(grid.len()),
        theta_samples: Vec::with_capacity(grid.len()),
        n_samples: vec![n; grid.len()],
        checkpoints: Vec::with_capacity(checkpoints.len()),
    };
    for g in 0..grid.len() {
        let (m, se) = mean_and_se(samples.iter().map(|s| s.c[g]), n);
        stats.mean_c.push(m);
        stats.se_c.push(se);
        let (m, se) = mean_and_se(samples.iter().map(|s| s.psi11_sq[g]), n);
        stats.mean_psi11_sq.push(m);
        stats.se_psi11_sq.push(se);
        let defined = samples.iter().filter(|s| !s.theta[g].is_nan()).count();
        let (cm, cs) = circular_stats(samples.iter().map(|s| s.theta[g])).unwrap_or((f64::NAN, f64::NAN));
        stats.theta_circ_mean.push(cm);
        stats.theta_circ_std.push(cs);
        stats.theta_samples.push(defined);
    }
    for (slot, &k) in checkpoints.iter().enumerate() {
        let mut mean = Operator::zeros();
        for s in samples {
            mean += s.projectors[slot];
        }
        mean /= c64(n as f64, 0.0);
        let mut var = Matrix4::<f64>::zeros();
        for s in samples {
            let d = s.projectors[slot] - mean;
            var += d.map(|z: Complex64| z.norm_sqr());
        }
        let se = (var / ((n - 1) as f64 * n as f64)).map(f64::sqrt);
        stats.checkpoints.push(Checkpoint {
            t: k as f64 * dt,
            mean_projector: mean,
            standard_error: se,
        });
    }
    stats
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointComparison {
    pub t: f64,
    pub trace_distance: f64,
    pub statistical_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterComparison {
    pub checkpoints: Vec<CheckpointComparison>,
    pub pass: bool,
}

/// Trace distance between the ensemble-mean projector and ρ(t) from the
/// master equation; each checkpoint passes when the distance is below three
/// times its sampling error.
pub fn compare_to_master(stats: &EnsembleStats, oracle: &MasterEvolution) -> Result<MasterComparison> {
    let mut rho = stats.psi0.density_matrix();
    let mut t_prev = 0.0;
    let mut rows = Vec::with_capacity(stats.checkpoints.len());
    let mut order: Vec<&Checkpoint> = stats.checkpoints.iter().collect();
    order.sort_by(|a, b| a.t.total_cmp(&b.t));
    for cp in order {
        rho = evolve_master(&rho, oracle, cp.t - t_prev)?;
        t_prev = cp.t;
        let d = trace_distance(&cp.mean_projector, rho.matrix());
        let err = cp.statistical_error();
        rows.push(CheckpointComparison {
            t: cp.t,
            trace_distance: d,
            statistical_error: err,
            pass: d < 3.0 * err,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(MasterComparison {
        checkpoints: rows,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointComparison {
    pub t: f64,
    pub observed: f64,
    pub expected: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveComparison {
    pub points: Vec<PointComparison>,
    pub pass: bool,
    pub worst_z: f64,
}

/// Absolute slack for points where the standard error vanishes (e.g. `t = 0`).
pub const ZERO_SPREAD_SLACK: f64 = 1e-12;

fn compare_curve(times: &[f64], observed: &[f64], se: &[f64], expected: impl Fn(f64) -> f64) -> CurveComparison {
    let mut worst_z: f64 = 0.0;
    let points: Vec<PointComparison> = times
        .iter()
        .zip(observed)
        .zip(se)
        .map(|((&t, &o), &s)| {
            let e = expected(t);
            let diff = (o - e).abs();
            if diff > ZERO_SPREAD_SLACK {
                worst_z = worst_z.max(diff / s);
            }
            PointComparison {
                t,
                observed: o,
                expected: e,
                standard_error: s,
                pass: diff <= 3.0 * s + ZERO_SPREAD_SLACK,
            }
        })
        .collect();
    let pass = points.iter().all(|p| p.pass);
    CurveComparison {
        points,
        pass,
        worst_z,
    }
}

/// Mean concurrence against `|Λ(t)|`; meaningful for the optimal unraveling.
pub fn compare_to_analytic(stats: &EnsembleStats) -> CurveComparison {
    compare_curve(&stats.times, &stats.mean_c, &stats.se_c, |t| {
        analytic_trajectory_mean(&stats.psi0, stats.gamma, t)
    })
}

/// `E[|ψ₁₁|²]` against `|ψ₁₁(0)|² e^{−2γt}`, valid for every unraveling.
pub fn compare_excited_population(stats: &EnsembleStats) -> CurveComparison {
    let p0 = stats.psi0.psi11().norm_sqr();
    compare_curve(&stats.times, &stats.mean_psi11_sq, &stats.se_psi11_sq, |t| {
        p0 * (-2.0 * stats.gamma * t).exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub analytic: Option<CurveComparison>,
    pub excited_population: CurveComparison,
    pub master: Option<MasterComparison>,
    /// Largest circular std of θ across trajectories over the grid.
    pub max_theta_spread: Option<f64>,
}

/// Runs the comparisons enabled in `cfg.comparisons`.
pub fn summarize(stats: &EnsembleStats, cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    let master = if cfg.comparisons.vs_master_oracle && !stats.checkpoints.is_empty() {
        let evo = MasterEvolution::with_hamiltonian(
            cfg.base.lindblad,
            cfg.base.hamiltonian,
            cfg.base.dt,
        )?;
        Some(compare_to_master(stats, &evo)?)
    } else {
        None
    };
    let max_theta_spread = cfg.comparisons.theta_stats.then(|| {
        stats
            .theta_circ_std
            .iter()
            .copied()
            .filter(|x| !x.is_nan())
            .fold(0.0, f64::max)
    });
    Ok(EnsembleSummary {
        analytic: cfg.comparisons.vs_analytic.then(|| compare_to_analytic(stats)),
        excited_population: compare_excited_population(stats),
        master,
        max_theta_spread,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub phi: f64,
    pub integrated_mean_c: f64,
    pub stats: EnsembleStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub theta_opt: Option<f64>,
    pub argmin_phi: f64,
}

/// `n` phases spaced by 2π/n starting at `theta`.
pub fn phase_grid_through(theta: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| crate::unraveling::wrap_phase(theta + 2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Runs one ensemble per phase with `u₁₂ = −e^{iφ}` (zero diagonal) and the
/// same master seed, reporting the time-integrated mean concurrence.
pub fn optimality_scan(psi0: &StateVector, phases: &[f64], cfg: &EnsembleConfig) -> Result<ScanResult> {
    if phases.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "an optimality scan needs at least 3 phases, got {}",
            phases.len()
        )));
    }
    let mut rows = Vec::with_capacity(phases.len());
    for &phi in phases {
        let mut c = cfg.clone();
        c.base.u = CorrelationMatrix::off_diagonal_phase(phi);
        let stats = run_ensemble(psi0, &c)?;
        rows.push(ScanRow {
            phi,
            integrated_mean_c: stats.integrated_mean_c(),
            stats,
        });
    }
    let argmin_phi = rows
        .iter()
        .min_by(|a, b| a.integrated_mean_c.total_cmp(&b.integrated_mean_c))
        .map(|r| r.phi)
        .expect("at least three rows");
    Ok(ScanResult {
        rows,
        theta_opt: theta_from_state(psi0).ok(),
        argmin_phi,
    })
}

/// Mean state of an ensemble checkpoint as a validated density matrix.
pub fn checkpoint_density(cp: &Checkpoint) -> Result<DensityMatrix> {
    DensityMatrix::with_tolerance(cp.mean_projector, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::fig1_dashed;
    use crate::unraveling::optimal_unraveling;

    fn small_cfg(u: CorrelationMatrix, n: usize) -> EnsembleConfig {
        let base = SseConfig::new(1.0, u).unwrap().with_t_max(1.0).with_seed(5);
        let grid = snap_to_grid(&[0.0, 0.25, 0.5, 1.0], &base);
        EnsembleConfig::new(base, n, grid).with_checkpoints(vec![0.5, 1.0])
    }

    #[test]
    fn dark_ensemble_is_trivial() {
        let stats = run_ensemble(&StateVector::basis(0, 0), &small_cfg(CorrelationMatrix::zero(), 8)).unwrap();
        assert!(stats.mean_c.iter().all(|&c| c == 0.0));
        assert!(stats.se_c.iter().all(|&s| s == 0.0));
        assert!(stats.theta_samples.iter().all(|&n| n == 0));
    }

    #[test]
    fn rejects_bad_configs() {
        let psi = fig1_dashed();
        let mut cfg = small_cfg(CorrelationMatrix::zero(), 1);
        assert!(run_ensemble(&psi, &cfg).is_err());
        cfg.n_traj = 4;
        cfg.stat_grid = vec![0.00037];
        assert!(run_ensemble(&psi, &cfg).is_err());
        cfg.stat_grid = vec![5.0];
        assert!(run_ensemble(&psi, &cfg).is_err());
    }

    #[test]
    fn schedule_independent() {
        let psi = fig1_dashed();
        let u = optimal_unraveling(&psi).unwrap().u;
        let a = run_ensemble(&psi, &small_cfg(u, 24).with_jobs(1)).unwrap();
        let b = run_ensemble(&psi, &small_cfg(u, 24).with_jobs(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_means_are_density_matrices() {
        let psi = fig1_dashed();
        let stats = run_ensemble(&psi, &small_cfg(CorrelationMatrix::zero(), 16)).unwrap();
        for cp in &stats.checkpoints {
            assert!(checkpoint_density(cp).is_ok());
        }
        for (m, c) in stats.mean_c.iter().zip(&stats.se_c) {
            assert!((0.0..=1.0).contains(m));
            assert!(*c >= 0.0);
        }
    }

    #[test]
    fn two_trajectories_pass_on_error_consistency() {
        let psi = fig1_dashed();
        let cfg = small_cfg(CorrelationMatrix::zero(), 2);
        let stats = run_ensemble(&psi, &cfg).unwrap();
        let evo = MasterEvolution::new(cfg.base.lindblad, cfg.base.dt).unwrap();
        let cmp = compare_to_master(&stats, &evo).unwrap();
        assert!(cmp.pass, "{cmp:?}");
    }

    #[test]
    fn scan_needs_three_phases() {
        let cfg = small_cfg(CorrelationMatrix::zero(), 4);
        assert!(optimality_scan(&fig1_dashed(), &[0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn p_grid_is_on_integration_grid() {
        let base = SseConfig::new(1.0, CorrelationMatrix::zero()).unwrap();
        let g = p_grid(50, 0.999, &base);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.0);
        assert!(step_indices(&g, &base).is_ok());
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn phase_grid_contains_theta() {
        let g = phase_grid_through(-PI / 2.0, 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], -PI / 2.0);
        assert!(g.iter().any(|&p| (p - PI / 2.0).abs() < 1e-12));
    }
}
