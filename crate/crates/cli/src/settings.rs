//! Flag / config-file / default resolution.

use std::path::{Path, PathBuf};

use difftraj::io::Manifest;
use difftraj::presets::parse_state;
use difftraj::sse::{Scheme, SseConfig, DEFAULT_GAMMA_DT, DEFAULT_GAMMA_TMAX};
use difftraj::unraveling::{optimal_unraveling, CorrelationMatrix};
use difftraj::{Error, Result, StateVector};

use crate::CommonArgs;

/// Manifest keys that describe a run rather than configure it.
const METADATA_KEYS: [&str; 4] = ["command", "version", "timestamp", "manifest"];

const CONFIG_KEYS: [&str; 20] = [
    "state",
    "gamma",
    "dt",
    "tmax",
    "seed",
    "unraveling",
    "u",
    "scheme",
    "n",
    "jobs",
    "stride",
    "records",
    "points",
    "checkpoints",
    "scan_phases",
    "phases",
    "trajectory",
    "theta",
    "record",
    "reference",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnravelingChoice {
    Optimal,
    Zero,
    Custom,
}

/// Values from `--config`, checked against the known keys.
pub struct ConfigFile {
    values: Manifest,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let values = match path {
            None => Manifest::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let mut m = Manifest::parse(&text)?;
                for key in METADATA_KEYS {
                    m.remove(key);
                }
                if let Some((k, _)) = m.iter().find(|(k, _)| !CONFIG_KEYS.contains(k)) {
                    return Err(Error::InvalidConfig(format!("unknown config key '{k}' in {}", p.display())));
                }
                m
            }
        };
        Ok(Self { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values.parse_value(key)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.values.get(key).map(str::to_string)
    }
}

/// Flag if given, else config value, else default.
pub fn pick<T: std::str::FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str, default: T) -> Result<T> {
    Ok(match flag {
        Some(v) => v,
        None => cfg.get(key)?.unwrap_or(default),
    })
}

pub fn pick_opt<T: std::str::FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>> {
    Ok(match flag {
        Some(v) => Some(v),
        None => cfg.get(key)?,
    })
}

/// Fully resolved simulation settings shared by all subcommands.
pub struct Resolved {
    pub state_spec: String,
    pub psi0: StateVector,
    pub gamma: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub unraveling: UnravelingChoice,
    pub u_reals: Option<[f64; 6]>,
    pub scheme: Scheme,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub config: ConfigFile,
}

fn parse_reals<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidConfig(format!("{what}: cannot parse '{s}' as reals")))?;
    v.try_into()
        .map_err(|v: Vec<f64>| Error::InvalidConfig(format!("{what}: expected {N} reals, got {}", v.len())))
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "exponential" | "exp" => Ok(Scheme::RecordExponential),
        "euler" | "em" => Ok(Scheme::EulerMaruyama),
        other => Err(Error::InvalidConfig(format!(
            "unknown scheme '{other}' (expected exponential or euler)"
        ))),
    }
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::RecordExponential => "exponential",
        Scheme::EulerMaruyama => "euler",
    }
}

impl Resolved {
    pub fn from_args(args: &CommonArgs, default_state: Option<&str>) -> Result<Self> {
        let config = ConfigFile::load(args.config.as_deref())?;
        let state_spec = args
            .state
            .clone()
            .or_else(|| config.string("state"))
            .or_else(|| default_state.map(str::to_string))
            .ok_or_else(|| Error::InvalidConfig("--state is required".into()))?;
        let psi0 = parse_state(&state_spec)?;
        let gamma = pick(args.gamma, &config, "gamma", 1.0)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        let dt = pick(args.dt, &config, "dt", DEFAULT_GAMMA_DT / gamma)?;
        let t_max = pick(args.tmax, &config, "tmax", DEFAULT_GAMMA_TMAX / gamma)?;
        let seed = pick(args.seed, &config, "seed", 0u64)?;
        let unraveling = match args
            .unraveling
            .clone()
            .or_else(|| config.string("unraveling"))
            .as_deref()
            .unwrap_or("optimal")
        {
            "optimal" => UnravelingChoice::Optimal,
            "zero" => UnravelingChoice::Zero,
            "custom" => UnravelingChoice::Custom,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown unraveling '{other}' (expected optimal, zero or custom)"
                )))
            }
        };
        let u_reals = match args.u.clone().or_else(|| config.string("u")) {
            Some(s) => Some(parse_reals::<6>(&s, "--u")?),
            None => None,
        };
        let scheme = match args.scheme.clone().or_else(|| config.string("scheme")) {
            Some(s) => parse_scheme(&s)?,
            None => Scheme::default(),
        };
        let jobs = pick_opt(args.jobs, &config, "jobs")?;
        Ok(Self {
            state_spec,
            psi0,
            gamma,
            dt,
            t_max,
            seed,
            unraveling,
            u_reals,
            scheme,
            jobs,
            out: args.out.clone(),
            config,
        })
    }

    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        match self.unraveling {
            UnravelingChoice::Optimal => match optimal_unraveling(&self.psi0) {
                Ok(o) => Ok(o.u),
                Err(e @ Error::OptimalPhaseUndefined { .. }) => Err(Error::InvalidConfig(format!(
                    "{e}; this state has no optimal unraveling, use --unraveling custom --u <6 reals> or --unraveling zero"
                ))),
                Err(e) => Err(e),
            },
            UnravelingChoice::Zero => Ok(CorrelationMatrix::zero()),
            UnravelingChoice::Custom => {
                let v = self.u_reals.ok_or_else(|| {
                    Error::InvalidConfig("--unraveling custom needs --u re11,im11,re12,im12,re22,im22".into())
                })?;
                CorrelationMatrix::from_reals(v)
            }
        }
    }

    pub fn sse_config(&self) -> Result<SseConfig> {
        let cfg = SseConfig::new(self.gamma, self.correlation()?)?
            .with_dt(self.dt)
            .with_t_max(self.t_max)
            .with_seed(self.seed)
            .with_scheme(self.scheme);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Manifest of the resolved values; `extra` holds command-specific keys.
    pub fn manifest(&self, command: &str, extra: &[(&str, String)]) -> Manifest {
        let mut m = Manifest::new();
        m.set("command", command)
            .set("version", env!("CARGO_PKG_VERSION"))
            .set("state", &self.state_spec)
            .set("gamma", self.gamma)
            .set("dt", self.dt)
            .set("tmax", self.t_max)
            .set("seed", self.seed)
            .set("scheme", scheme_name(self.scheme))
            .set(
                "unraveling",
                match self.unraveling {
                    UnravelingChoice::Optimal => "optimal",
                    UnravelingChoice::Zero => "zero",
                    UnravelingChoice::Custom => "custom",
                },
            );
        if let Some(u) = self.u_reals {
            m.set("u", u.map(|x| x.to_string()).join(","));
        }
        if let Some(j) = self.jobs {
            m.set("jobs", j);
        }
        for (k, v) in extra {
            m.set(k, v);
        }
        m
    }
}

pub fn parse_real_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("{what}: cannot parse '{x}'")))
        })
        .collect()
}
