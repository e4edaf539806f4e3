//! Subcommand bodies.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use difftraj::detection::{record_t_max, replay_from_record, simulate_detection};
use difftraj::ensemble::{
    optimality_scan, p_grid, run_ensemble, summarize, CurveComparison, EnsembleConfig, EnsembleStats,
};
use difftraj::entanglement::{analytic_lambda, analytic_ts, detect_disentanglement, DisentanglementReport};
use difftraj::io::{
    fmt_real, max_deviation_from, read_record, read_trajectory_states, write_ensemble, write_oracle, write_record,
    write_trajectory, Manifest,
};
use difftraj::oracle::{lambda_timeseries, p_of_t, MasterEvolution};
use difftraj::sse::{run_trajectory, SseConfig, DEFAULT_STATE_STRIDE};
use difftraj::unraveling::{theta_from_state, wrap_phase, CorrelationMatrix};
use difftraj::{Error, LindbladSet, Result};
use serde_json::{json, Value};

use crate::settings::{parse_real_list, pick, pick_opt, ConfigFile, Resolved, UnravelingChoice};
use crate::{CommonArgs, EnsembleArgs};

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<out>.manifest` (with a timestamp) and returns the header that
/// goes into the output file itself.
fn publish_manifest(manifest: &Manifest, out: Option<&Path>) -> Result<Manifest> {
    let mut header = manifest.clone();
    if let Some(out) = out {
        let path = sidecar(out, ".manifest");
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut full = manifest.clone();
        full.set("timestamp", secs);
        fs::write(&path, full.to_text())?;
        header.set("manifest", path.display());
    }
    Ok(header)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

/// JSON to `<out><suffix>`, or stderr without `--out`.
fn emit_json(out: Option<&Path>, suffix: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n";
    match out {
        Some(p) => fs::write(sidecar(p, suffix), text)?,
        None => eprint!("{text}"),
    }
    Ok(())
}

fn stride_of(flag: Option<usize>, cfg: &ConfigFile) -> Result<usize> {
    let s = pick(flag, cfg, "stride", DEFAULT_STATE_STRIDE)?;
    if s == 0 {
        return Err(Error::InvalidConfig("--stride must be at least 1".into()));
    }
    Ok(s)
}

fn report_text(r: &DisentanglementReport) -> String {
    match (r.t_s, r.p_s) {
        (Some(t), Some(p)) => format!("disentangled at t = {t:.6}, p = {p:.6}"),
        _ => "no finite-time disentanglement".into(),
    }
}

pub fn trajectory(args: &CommonArgs, records: bool, stride: Option<usize>) -> Result<()> {
    let r = Resolved::from_args(args, None)?;
    let records = records || r.config.get("records")?.unwrap_or(false);
    let stride = stride_of(stride, &r.config)?;
    let cfg = r.sse_config()?.with_records(records).with_stride(stride);
    let traj = run_trajectory(&r.psi0, &cfg)?;
    let manifest = r.manifest(
        "trajectory",
        &[("records", records.to_string()), ("stride", stride.to_string())],
    );
    let header = publish_manifest(&manifest, r.out.as_deref())?;
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &traj, &header)?;
    emit(r.out.as_deref(), &buf)?;
    eprintln!("{}", report_text(&detect_disentanglement(&traj)));
    Ok(())
}

struct EnsembleSetup {
    r: Resolved,
    cfg: EnsembleConfig,
    extra: Vec<(&'static str, String)>,
}

fn ensemble_setup(args: &CommonArgs, ens: &EnsembleArgs) -> Result<EnsembleSetup> {
    let r = Resolved::from_args(args, None)?;
    let base = r.sse_config()?;
    let n = pick(ens.n, &r.config, "n", 500usize)?;
    let points = pick(ens.points, &r.config, "points", 50usize)?;
    if points < 2 {
        return Err(Error::InvalidConfig("--points must be at least 2".into()));
    }
    let checkpoints = match ens.checkpoints.clone().or_else(|| r.config.string("checkpoints")) {
        Some(s) => parse_real_list(&s, "--checkpoints")?,
        None => [0.5, 1.0, 2.0]
            .iter()
            .map(|x| x / r.gamma)
            .filter(|&t| t <= base.t_max)
            .collect(),
    };
    let grid = p_grid(points, p_of_t(r.gamma, base.t_max), &base);
    let mut cfg = EnsembleConfig::new(base, n, grid).with_checkpoints(checkpoints.clone());
    cfg.comparisons.vs_analytic = r.unraveling == UnravelingChoice::Optimal;
    if let Some(j) = r.jobs {
        cfg = cfg.with_jobs(j);
    }
    let extra = vec![
        ("n", n.to_string()),
        ("points", points.to_string()),
        (
            "checkpoints",
            checkpoints.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        ),
    ];
    Ok(EnsembleSetup { r, cfg, extra })
}

fn curve_json(c: &CurveComparison) -> Value {
    json!({
        "pass": c.pass,
        "worst_z": c.worst_z,
        "points": c.points.len(),
        "failing_points": c.points.iter().filter(|p| !p.pass).count(),
    })
}

fn stats_json(stats: &EnsembleStats) -> Value {
    json!({
        "n_traj": stats.n_traj,
        "seed": stats.seed,
        "integrated_mean_c": stats.integrated_mean_c(),
    })
}

pub fn ensemble(args: &CommonArgs, ens: &EnsembleArgs, scan_phases: Option<usize>) -> Result<()> {
    let config = ConfigFile::load(args.config.as_deref())?;
    if let Some(k) = pick_opt(scan_phases, &config, "scan_phases")? {
        return run_scan(args, ens, k, "ensemble", "scan_phases");
    }
    let EnsembleSetup { r, cfg, extra } = ensemble_setup(args, ens)?;
    let stats = run_ensemble(&r.psi0, &cfg)?;
    let summary = summarize(&stats, &cfg)?;
    let manifest = r.manifest("ensemble", &extra.iter().map(|(k, v)| (*k, v.clone())).collect::<Vec<_>>());
    let header = publish_manifest(&manifest, r.out.as_deref())?;
    let mut buf = Vec::new();
    write_ensemble(&mut buf, &stats, &header)?;
    emit(r.out.as_deref(), &buf)?;

    let master = summary.master.as_ref().map(|m| {
        json!({
            "pass": m.pass,
            "checkpoints": m.checkpoints.iter().map(|c| json!({
                "t": c.t,
                "trace_distance": c.trace_distance,
                "statistical_error": c.statistical_error,
                "pass": c.pass,
            })).collect::<Vec<_>>(),
        })
    });
    let ts = analytic_ts(&r.psi0, r.gamma);
    let value = json!({
        "ensemble": stats_json(&stats),
        "vs_analytic": summary.analytic.as_ref().map(curve_json),
        "vs_master_oracle": master,
        "excited_population": curve_json(&summary.excited_population),
        "max_theta_spread": summary.max_theta_spread,
        "analytic_t_s": ts.t_s,
        "analytic_p_s": ts.p_s,
    });
    emit_json(r.out.as_deref(), ".summary.json", &value)
}

pub fn scan(args: &CommonArgs, ens: &EnsembleArgs, phases: Option<usize>) -> Result<()> {
    let config = ConfigFile::load(args.config.as_deref())?;
    let k = pick(phases, &config, "phases", 8usize)?;
    run_scan(args, ens, k, "scan", "phases")
}

fn run_scan(args: &CommonArgs, ens: &EnsembleArgs, k: usize, command: &str, key: &'static str) -> Result<()> {
    let EnsembleSetup { r, mut cfg, mut extra } = ensemble_setup(args, ens)?;
    cfg.comparisons.vs_analytic = false;
    cfg.comparisons.vs_master_oracle = false;
    cfg.checkpoints.clear();
    extra.retain(|(k, _)| *k != "checkpoints");
    extra.push((key, k.to_string()));
    if k < 3 {
        return Err(Error::InvalidConfig(format!("a scan needs at least 3 phases, got {k}")));
    }
    let phases: Vec<f64> = (0..k).map(|j| wrap_phase(-PI + 2.0 * PI * j as f64 / k as f64)).collect();
    let result = optimality_scan(&r.psi0, &phases, &cfg)?;
    let manifest = r.manifest(command, &extra.iter().map(|(k, v)| (*k, v.clone())).collect::<Vec<_>>());
    let mut header = publish_manifest(&manifest, r.out.as_deref())?;
    if let Some(t) = result.theta_opt {
        header.set("theta_opt", fmt_real(t));
    }
    header.set("argmin_phi", fmt_real(result.argmin_phi));
    let mut buf = Vec::new();
    for (key, value) in header.iter() {
        writeln!(buf, "# {key}={value}")?;
    }
    writeln!(buf, "phi,integrated_mean_c,argmin")?;
    for row in &result.rows {
        writeln!(
            buf,
            "{},{},{}",
            fmt_real(row.phi),
            fmt_real(row.integrated_mean_c),
            u8::from(row.phi == result.argmin_phi)
        )?;
    }
    emit(r.out.as_deref(), &buf)?;
    match result.theta_opt {
        Some(t) => eprintln!("argmin phi = {:.6}, theta_opt = {t:.6}", result.argmin_phi),
        None => eprintln!("argmin phi = {:.6}, theta_opt undefined", result.argmin_phi),
    }
    Ok(())
}

pub fn oracle(args: &CommonArgs, points: Option<usize>) -> Result<()> {
    let r = Resolved::from_args(args, None)?;
    let points = pick(points, &r.config, "points", 701usize)?;
    if points < 2 {
        return Err(Error::InvalidConfig("--points must be at least 2".into()));
    }
    if !(r.dt > 0.0 && r.t_max > 0.0) {
        return Err(Error::InvalidConfig("dt and tmax must be positive".into()));
    }
    let evo = MasterEvolution::new(LindbladSet::spontaneous_emission(r.gamma)?, r.dt)?;
    let grid: Vec<f64> = (0..points).map(|k| r.t_max * k as f64 / (points - 1) as f64).collect();
    let series = lambda_timeseries(&r.psi0.density_matrix(), &evo, &grid)?;
    let mut manifest = r.manifest("oracle", &[("points", points.to_string())]);
    manifest.remove("unraveling");
    manifest.remove("scheme");
    manifest.remove("seed");
    let header = publish_manifest(&manifest, r.out.as_deref())?;
    let mut buf = Vec::new();
    write_oracle(&mut buf, &series, |t| analytic_lambda(&r.psi0, r.gamma, t), r.gamma, &header)?;
    emit(r.out.as_deref(), &buf)?;
    if series.crossings.is_empty() {
        eprintln!("no sign change of Lambda up to t = {}", r.t_max);
    }
    for t in &series.crossings {
        eprintln!("Lambda crosses zero at t = {t:.6}, p = {:.6}", p_of_t(r.gamma, *t));
    }
    Ok(())
}

pub fn records(args: &CommonArgs, theta: Option<f64>, trajectory: Option<&Path>, stride: Option<usize>) -> Result<()> {
    let r = Resolved::from_args(args, None)?;
    let theta = match pick_opt(theta, &r.config, "theta")? {
        Some(t) => t,
        None => theta_from_state(&r.psi0).map_err(|e| {
            Error::InvalidConfig(format!("{e}; pass --theta to choose the unraveling phase"))
        })?,
    };
    let stride = stride_of(stride, &r.config)?;
    let trajectory_path = trajectory
        .map(Path::to_path_buf)
        .or_else(|| r.config.string("trajectory").map(PathBuf::from));
    let cfg = SseConfig::new(r.gamma, CorrelationMatrix::zero())?
        .with_dt(r.dt)
        .with_t_max(r.t_max)
        .with_seed(r.seed)
        .with_scheme(r.scheme)
        .with_stride(stride);
    cfg.validate()?;
    let (traj, record) = simulate_detection(&r.psi0, theta, &cfg)?;

    let mut manifest = r.manifest("records", &[("theta", theta.to_string()), ("stride", stride.to_string())]);
    manifest.remove("unraveling");
    if let Some(p) = &trajectory_path {
        manifest.set("trajectory", p.display());
    }
    let header = publish_manifest(&manifest, r.out.as_deref())?;
    let mut buf = Vec::new();
    for (k, v) in header.iter() {
        writeln!(buf, "# run.{k}={v}")?;
    }
    write_record(&mut buf, &record)?;
    emit(r.out.as_deref(), &buf)?;
    if let Some(p) = trajectory_path {
        let mut tbuf = Vec::new();
        write_trajectory(&mut tbuf, &traj, &header)?;
        fs::write(p, tbuf)?;
    }
    Ok(())
}

pub fn replay(args: &CommonArgs, record: Option<&Path>, reference: Option<&Path>, stride: Option<usize>) -> Result<()> {
    let config = ConfigFile::load(args.config.as_deref())?;
    let record_path = record
        .map(Path::to_path_buf)
        .or_else(|| config.string("record").map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig("replay needs --record <file>".into()))?;
    let reference_path = reference
        .map(Path::to_path_buf)
        .or_else(|| config.string("reference").map(PathBuf::from));
    let rec = read_record(BufReader::new(fs::File::open(&record_path)?))?;

    let mut filled = args.clone();
    filled.gamma = pick_opt(args.gamma, &config, "gamma")?.or(Some(rec.gamma));
    filled.dt = pick_opt(args.dt, &config, "dt")?.or(Some(rec.dt));
    filled.tmax = pick_opt(args.tmax, &config, "tmax")?.or(Some(record_t_max(&rec)));
    filled.seed = pick_opt(args.seed, &config, "seed")?.or(Some(rec.seed));
    let header_state = difftraj::presets::format_state(&rec.psi0);
    let r = Resolved::from_args(&filled, Some(&header_state))?;
    let stride = stride_of(stride, &r.config)?;
    let cfg = SseConfig::new(r.gamma, CorrelationMatrix::off_diagonal_phase(rec.theta_opt))?
        .with_dt(r.dt)
        .with_t_max(r.t_max)
        .with_seed(r.seed)
        .with_scheme(r.scheme)
        .with_stride(stride);
    cfg.validate()?;
    let traj = replay_from_record(&r.psi0, &rec, &cfg)?;

    let mut extra = vec![("record", record_path.display().to_string()), ("stride", stride.to_string())];
    if let Some(p) = &reference_path {
        extra.push(("reference", p.display().to_string()));
    }
    let mut manifest = r.manifest("replay", &extra);
    manifest.remove("unraveling");
    let header = publish_manifest(&manifest, r.out.as_deref())?;
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &traj, &header)?;
    emit(r.out.as_deref(), &buf)?;

    let state_overridden = r.psi0.max_deviation(&rec.psi0) > 0.0;
    let (deviation, against) = match &reference_path {
        Some(p) => {
            let (_, states) = read_trajectory_states(BufReader::new(fs::File::open(p)?))?;
            let d = max_deviation_from(&traj, &states).ok_or_else(|| {
                Error::RecordMismatch(format!("{} shares no stored grid points with the replay", p.display()))
            })?;
            (Some(d), Some(p.display().to_string()))
        }
        None if state_overridden => {
            let baseline = replay_from_record(&rec.psi0, &rec, &cfg)?;
            (Some(traj.max_deviation(&baseline)), Some("replay from the record's initial state".into()))
        }
        None => (None, None),
    };
    let flagged = deviation.is_some_and(|d| d > 0.1);
    if let (Some(d), Some(a)) = (deviation, &against) {
        eprintln!("max deviation vs {a}: {d:e}");
        if flagged {
            eprintln!("warning: deviation exceeds 0.1; the record does not describe this initial state");
        }
    }
    let value = json!({
        "steps": rec.len(),
        "state_overridden": state_overridden,
        "reference": against,
        "max_deviation": deviation,
        "flagged": flagged,
    });
    emit_json(r.out.as_deref(), ".report.json", &value)
}
