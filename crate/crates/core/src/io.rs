//! CSV and key=value formats.
//!
//! Every CSV starts with `# key=value` comment lines followed by a column
//! header. Reals are written with 17 significant digits so that files read
//! back bit-exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::detection::{CurrentRecord, Photocurrent};
use crate::ensemble::EnsembleStats;
use crate::entanglement::analytic_trajectory_mean;
use crate::error::{Error, Result};
use crate::noise::Increment;
use crate::oracle::{p_of_t, LambdaSeries};
use crate::sse::TrajectoryRecord;
use crate::state::{c64, StateVector};

/// Round-trip formatting of a real.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn state_reals(psi: &StateVector) -> String {
    psi.amplitudes()
        .iter()
        .flat_map(|z| [z.re, z.im])
        .map(fmt_real)
        .collect::<Vec<_>>()
        .join(",")
}

/// Ordered `key=value` pairs; used for CSV headers and run manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key=value` lines; blank lines and lines starting with `#` are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn write_comments<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }

    /// Typed lookup with a parse error naming the key.
    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("cannot parse {key}={v}"))
            }),
        }
    }
}

/// Splits a CSV into its `# key=value` header and data lines, skipping the
/// column-name line.
fn split_csv<R: BufRead>(reader: R) -> Result<(Manifest, Vec<(usize, String)>)> {
    let mut header = Manifest::new();
    let mut rows = Vec::new();
    let mut saw_columns = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.set(k.trim(), v.trim());
            }
            continue;
        }
        if !saw_columns {
            saw_columns = true;
            continue;
        }
        rows.push((n + 1, line));
    }
    Ok((header, rows))
}

fn field(line: usize, cols: &[&str], k: usize) -> Result<f64> {
    let s = cols.get(k).ok_or_else(|| Error::Parse {
        line,
        message: format!("expected at least {} columns, got {}", k + 1, cols.len()),
    })?;
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {}: cannot parse {s:?} as a real", k + 1),
    })
}

fn header_real(h: &Manifest, key: &str) -> Result<f64> {
    h.get(key)
        .ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("header is missing {key}"),
        })?
        .parse()
        .map_err(|_| Error::Parse {
            line: 0,
            message: format!("header {key} is not a real"),
        })
}

fn parse_state_reals(s: &str) -> Result<StateVector> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: 0,
            message: format!("state {s:?} is not 8 reals"),
        })?;
    if v.len() != 8 {
        return Err(Error::Parse {
            line: 0,
            message: format!("state has {} reals, expected 8", v.len()),
        });
    }
    StateVector::from_slice([c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]), c64(v[6], v[7])])
}

pub const RECORD_COLUMNS: &str = "t,re_y1dt,im_y1dt,re_y2dt,im_y2dt,i1dt,i2dt";

pub fn write_record<W: Write>(w: &mut W, rec: &CurrentRecord) -> Result<()> {
    let mut h = Manifest::new();
    h.set("gamma", fmt_real(rec.gamma))
        .set("dt", fmt_real(rec.dt))
        .set("theta_opt", fmt_real(rec.theta_opt))
        .set("seed", rec.seed)
        .set("state", state_reals(&rec.psi0));
    h.write_comments(w)?;
    writeln!(w, "{RECORD_COLUMNS}")?;
    for ((t, y), i) in rec.times.iter().zip(&rec.y).zip(&rec.i) {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_real(*t),
            fmt_real(y[0].re),
            fmt_real(y[0].im),
            fmt_real(y[1].re),
            fmt_real(y[1].im),
            fmt_real(i[0]),
            fmt_real(i[1])
        )?;
    }
    Ok(())
}

pub fn read_record<R: BufRead>(reader: R) -> Result<CurrentRecord> {
    let (h, rows) = split_csv(reader)?;
    let seed = h
        .get("seed")
        .map(|s| s.parse::<u64>())
        .transpose()
        .map_err(|_| Error::Parse {
            line: 0,
            message: "header seed is not an integer".into(),
        })?
        .unwrap_or(0);
    let psi0 = parse_state_reals(h.get("state").ok_or_else(|| Error::Parse {
        line: 0,
        message: "header is missing state".into(),
    })?)?;
    let mut rec = CurrentRecord {
        gamma: header_real(&h, "gamma")?,
        dt: header_real(&h, "dt")?,
        theta_opt: header_real(&h, "theta_opt")?,
        seed,
        psi0,
        times: Vec::with_capacity(rows.len()),
        y: Vec::with_capacity(rows.len()),
        i: Vec::with_capacity(rows.len()),
    };
    for (line, row) in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let v: Vec<f64> = (0..7).map(|k| field(line, &cols, k)).collect::<Result<_>>()?;
        rec.times.push(v[0]);
        rec.y.push([c64(v[1], v[2]), c64(v[3], v[4])]);
        rec.i.push([v[5], v[6]] as Photocurrent);
    }
    Ok(rec)
}

/// Column names of a trajectory CSV; the record columns are present only for
/// trajectories run with records.
pub fn trajectory_columns(with_records: bool) -> String {
    let mut cols = String::from(
        "t,p,c,theta,re_psi00,im_psi00,re_psi01,im_psi01,re_psi10,im_psi10,re_psi11,im_psi11",
    );
    if with_records {
        cols.push_str(",re_y1dt,im_y1dt,re_y2dt,im_y2dt");
    }
    cols
}

/// One row per grid point. Amplitudes are blank between stored states;
/// records on row `k` belong to the step ending at `t_k`.
pub fn write_trajectory<W: Write>(w: &mut W, traj: &TrajectoryRecord, header: &Manifest) -> Result<()> {
    header.write_comments(w)?;
    let with_records = traj.currents.is_some();
    writeln!(w, "{}", trajectory_columns(with_records))?;
    let mut stored = traj.state_steps.iter().zip(&traj.states).peekable();
    for (k, &t) in traj.times.iter().enumerate() {
        let mut line = format!(
            "{},{},{},{}",
            fmt_real(t),
            fmt_real(p_of_t(traj.gamma, t)),
            fmt_real(traj.concurrences[k]),
            fmt_real(traj.thetas[k])
        );
        match stored.peek() {
            Some((&step, psi)) if step == k => {
                line.push(',');
                line.push_str(&state_reals(psi));
                stored.next();
            }
            _ => line.push_str(",,,,,,,,"),
        }
        if let Some(cur) = &traj.currents {
            match k.checked_sub(1).and_then(|j| cur.get(j)) {
                Some(y) => {
                    for x in [y[0].re, y[0].im, y[1].re, y[1].im] {
                        line.push(',');
                        line.push_str(&fmt_real(x));
                    }
                }
                None => line.push_str(",,,,"),
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Stored states of a trajectory CSV as `(grid index, state)` pairs, plus
/// its header.
pub fn read_trajectory_states<R: BufRead>(reader: R) -> Result<(Manifest, Vec<(usize, StateVector)>)> {
    let (h, rows) = split_csv(reader)?;
    let mut out = Vec::new();
    for (k, (line, row)) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.get(4).is_none_or(|s| s.trim().is_empty()) {
            continue;
        }
        let v: Vec<f64> = (4..12).map(|j| field(*line, &cols, j)).collect::<Result<_>>()?;
        let psi = StateVector::from_slice([c64(v[0], v[1]), c64(v[2], v[3]), c64(v[4], v[5]), c64(v[6], v[7])])
            .map_err(|e| Error::Parse {
                line: *line,
                message: e.to_string(),
            })?;
        out.push((k, psi));
    }
    Ok((h, out))
}

/// Largest amplitude deviation between a trajectory and states read from a
/// reference file, over grid indices present in both.
pub fn max_deviation_from(traj: &TrajectoryRecord, reference: &[(usize, StateVector)]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (k, psi) in reference {
        if let Some(s) = traj.state_at(*k) {
            let d = s.max_deviation(psi);
            worst = Some(worst.map_or(d, |w| w.max(d)));
        }
    }
    worst
}

pub const ENSEMBLE_COLUMNS: &str =
    "t,p,mean_c,se_c,analytic_c,mean_psi11sq,se,theta_circ_mean,theta_circ_std,n";

pub fn write_ensemble<W: Write>(w: &mut W, stats: &EnsembleStats, header: &Manifest) -> Result<()> {
    header.write_comments(w)?;
    writeln!(w, "{ENSEMBLE_COLUMNS}")?;
    for (g, &t) in stats.times.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_real(t),
            fmt_real(p_of_t(stats.gamma, t)),
            fmt_real(stats.mean_c[g]),
            fmt_real(stats.se_c[g]),
            fmt_real(analytic_trajectory_mean(&stats.psi0, stats.gamma, t)),
            fmt_real(stats.mean_psi11_sq[g]),
            fmt_real(stats.se_psi11_sq[g]),
            fmt_real(stats.theta_circ_mean[g]),
            fmt_real(stats.theta_circ_std[g]),
            stats.n_samples[g]
        )?;
    }
    Ok(())
}

pub const ORACLE_COLUMNS: &str = "t,p,lambda,concurrence,lambda_analytic";

/// `(t, p, Λ, c(ρ))` with the signed closed-form Λ alongside.
pub fn write_oracle<W: Write>(
    w: &mut W,
    series: &LambdaSeries,
    analytic: impl Fn(f64) -> f64,
    gamma: f64,
    header: &Manifest,
) -> Result<()> {
    header.write_comments(w)?;
    for (k, c) in series.crossings.iter().enumerate() {
        writeln!(w, "# crossing_{k}_t={}", fmt_real(*c))?;
        writeln!(w, "# crossing_{k}_p={}", fmt_real(p_of_t(gamma, *c)))?;
    }
    writeln!(w, "{ORACLE_COLUMNS}")?;
    for pt in &series.points {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_real(pt.t),
            fmt_real(p_of_t(gamma, pt.t)),
            fmt_real(pt.lambda),
            fmt_real(pt.concurrence),
            fmt_real(analytic(pt.t))
        )?;
    }
    Ok(())
}

/// Complex pair as four reals, for diagnostics.
pub fn increment_reals(y: &Increment) -> [f64; 4] {
    [y[0].re, y[0].im, y[1].re, y[1].im]
}

/// Inverse of [`increment_reals`].
pub fn increment_from_reals(v: [f64; 4]) -> Increment {
    [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::simulate_detection;
    use crate::presets::fig1_solid;
    use crate::sse::{run_trajectory, SseConfig};
    use crate::unraveling::CorrelationMatrix;

    #[test]
    fn manifest_roundtrip() {
        let mut m = Manifest::new();
        m.set("gamma", 1.0).set("state", "fig1-solid").set("n", 500);
        let back = Manifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parse_value::<usize>("n").unwrap(), Some(500));
        assert!(back.parse_value::<usize>("state").is_err());
        assert!(Manifest::parse("gamma 1").is_err());
    }

    #[test]
    fn record_roundtrip_is_exact() {
        let cfg = SseConfig::new(1.0, CorrelationMatrix::zero()).unwrap().with_t_max(0.05).with_seed(4);
        let (_, rec) = simulate_detection(&fig1_solid(), -std::f64::consts::FRAC_PI_2, &cfg).unwrap();
        let mut buf = Vec::new();
        write_record(&mut buf, &rec).unwrap();
        let back = read_record(buf.as_slice()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "# gamma=1\n# dt=0.001\n# theta_opt=0\n# state=1,0,0,0,0,0,0,0\n\
                    t,re_y1dt,im_y1dt,re_y2dt,im_y2dt,i1dt,i2dt\n0,1,2,3,x,5,6\n";
        match read_record(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_states_roundtrip() {
        let cfg = SseConfig::new(1.0, CorrelationMatrix::zero())
            .unwrap()
            .with_t_max(0.1)
            .with_records(true)
            .with_stride(7);
        let traj = run_trajectory(&fig1_solid(), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj, &Manifest::new()).unwrap();
        let (_, states) = read_trajectory_states(buf.as_slice()).unwrap();
        assert_eq!(states.len(), traj.states.len());
        assert_eq!(max_deviation_from(&traj, &states), Some(0.0));
    }
}
