//! Flat `section.key = value` experiment files.
//!
//! ```text
//! # quartic map, asymptotic schedule
//! map.name = quartic_paper
//! schedule.kind = asymptotic
//! schedule.v = 1/3
//! es.theta0 = 0
//! ```
//!
//! Lists are comma separated, numbers may be written as fractions `a/b`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ueslab::averaging::dither_step;
use ueslab::sim::STEPS_PER_PERIOD;
use ueslab::{CostMap64, EsParams64, ProbeConfig64, Schedule64, ScheduleKind};

use crate::CliError;

const KEYS: &[&str] = &[
    "experiment.name",
    "experiment.seed",
    "map.name",
    "map.q",
    "map.center",
    "schedule.kind",
    "schedule.beta",
    "schedule.v",
    "schedule.r",
    "schedule.lambda",
    "schedule.t0",
    "es.alpha",
    "es.k",
    "es.omega",
    "es.omega_hat",
    "es.omega_h",
    "es.theta0",
    "es.eta0",
    "sim.dt",
    "sim.horizon",
    "sim.record_every",
    "analysis.model",
    "analysis.window",
    "analysis.y_window",
    "analysis.log_y",
    "probe.omega",
    "probe.epsilon",
    "probe.delta",
    "probe.horizon",
    "probe.trials",
    "output.dir",
];

/// Raw key/value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let no = no + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {no}: expected `section.key = value`")));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {no}: unknown key `{key}`")));
            }
            if let Some((first, _)) = entries.insert(key.to_string(), (no, value.trim().to_string())) {
                return Err(CliError::Config(format!("line {no}: `{key}` already set on line {first}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        match self.entries.get(key) {
            Some((no, _)) => CliError::Config(format!("line {no}: `{key}`: {msg}")),
            None => CliError::Config(format!("`{key}`: {msg}")),
        }
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| self.err(key, "missing"))
    }

    fn num(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_number(v).map_err(|e| self.err(key, e))).transpose()
    }

    fn num_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    fn req_num(&self, key: &str) -> Result<f64, CliError> {
        self.require(key)?;
        Ok(self.num(key)?.unwrap_or_default())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        if v.is_empty() {
            return Err(self.err(key, "empty list"));
        }
        v.split(',')
            .map(|s| parse_number(s.trim()).map_err(|e| self.err(key, e)))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn count(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.get(key)
            .map(|v| v.parse::<usize>().map_err(|_| self.err(key, format!("expected a non-negative integer, got `{v}`"))))
            .transpose()
    }

    fn window(&self, key: &str) -> Result<Option<(f64, f64)>, CliError> {
        match self.list(key)? {
            None => Ok(None),
            Some(w) if w.len() == 2 && w[0] < w[1] => Ok(Some((w[0], w[1]))),
            Some(_) => Err(self.err(key, "expected `start, end` with start < end")),
        }
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(self.err(key, format!("expected true or false, got `{v}`"))),
        }
    }
}

/// Decimal number or fraction `a/b`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("cannot parse `{s}` as a number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("cannot parse `{s}` as a number"))?;
            if b == 0.0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            a / b
        }
        None => s.parse().map_err(|_| format!("cannot parse `{s}` as a number"))?,
    };
    if !value.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    None,
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub model: FitModel,
    /// Fit window for `|θ - θ*|`.
    pub window: Option<(f64, f64)>,
    /// Fit window for `y - J*`.
    pub y_window: Option<(f64, f64)>,
    pub log_y: bool,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub map: CostMap64,
    pub params: EsParams64,
    pub theta0: Vec<f64>,
    pub eta0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub analysis: AnalysisConfig,
    pub probe: Option<ProbeConfig64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
        Self::from_raw(&RawConfig::parse(&text)?, stem)
    }

    pub fn parse_text(text: &str, default_name: &str) -> Result<Self, CliError> {
        Self::from_raw(&RawConfig::parse(text)?, default_name)
    }

    pub fn from_raw(raw: &RawConfig, default_name: &str) -> Result<Self, CliError> {
        let name = raw.get("experiment.name").unwrap_or(default_name).to_string();
        let seed = match raw.get("experiment.seed") {
            None => 0,
            Some(v) => v.parse().map_err(|_| raw.err("experiment.seed", format!("expected an unsigned integer, got `{v}`")))?,
        };

        let map = build_map(raw)?;
        let n = map.dim();
        let schedule = build_schedule(raw)?;

        let per_channel = |key: &str, default: Option<Vec<f64>>| -> Result<Vec<f64>, CliError> {
            let v = match (raw.list(key)?, default) {
                (Some(v), _) => v,
                (None, Some(d)) => return Ok(d),
                (None, None) => return Err(raw.err(key, "missing")),
            };
            match v.len() {
                1 => Ok(vec![v[0]; n]),
                len if len == n => Ok(v),
                len => Err(raw.err(key, format!("has {len} entries, the map has dimension {n}"))),
            }
        };
        let alpha = per_channel("es.alpha", None)?;
        let k = per_channel("es.k", None)?;
        let omega_hat = match raw.list("es.omega_hat")? {
            Some(v) if v.len() != n => {
                return Err(raw.err("es.omega_hat", format!("has {} entries, the map has dimension {n}", v.len())))
            }
            Some(v) => v,
            None => ueslab::controllers::default_omega_hat(n),
        };
        let theta0 = per_channel("es.theta0", Some(vec![0.0; n]))?;
        let eta0 = raw.num_or("es.eta0", 0.0)?;
        let omega = raw.req_num("es.omega")?;
        let omega_h = raw.req_num("es.omega_h")?;
        let params = EsParams64::new(alpha, k, omega_hat, omega, omega_h, schedule).map_err(|e| CliError::Config(e.to_string()))?;
        params.check_against(&map).map_err(|e| CliError::Config(e.to_string()))?;

        let horizon = raw.req_num("sim.horizon")?;
        if !(horizon > 0.0) {
            return Err(raw.err("sim.horizon", "must be > 0"));
        }
        let ceiling = dither_step(&params, STEPS_PER_PERIOD);
        let dt = raw.num_or("sim.dt", ceiling)?;
        if !(dt > 0.0) {
            return Err(raw.err("sim.dt", "must be > 0"));
        }
        if dt > ceiling * (1.0 + 1e-9) {
            return Err(raw.err("sim.dt", format!("exceeds {STEPS_PER_PERIOD} steps per fastest dither period (max {ceiling})")));
        }
        let record_every = raw.count("sim.record_every")?.unwrap_or(1);
        if record_every == 0 {
            return Err(raw.err("sim.record_every", "must be at least 1"));
        }

        let analysis = build_analysis(raw, &params, &map, horizon)?;
        let probe = build_probe(raw, seed)?;
        if probe.is_some() && map.optimum().is_none() {
            return Err(raw.err("probe.omega", "the probe needs a map with a known optimum"));
        }
        let output_dir = PathBuf::from(raw.get("output.dir").map_or_else(|| format!("out/{name}"), str::to_string));

        Ok(Self { name, seed, map, params, theta0, eta0, dt, horizon, record_every, analysis, probe, output_dir })
    }
}

fn build_map(raw: &RawConfig) -> Result<CostMap64, CliError> {
    match raw.require("map.name")? {
        "quartic_paper" => {
            for key in ["map.q", "map.center"] {
                if raw.get(key).is_some() {
                    return Err(raw.err(key, "not used by quartic_paper"));
                }
            }
            Ok(CostMap64::quartic_paper())
        }
        "quadratic" => {
            let q = raw.list("map.q")?.ok_or_else(|| raw.err("map.q", "missing"))?;
            let center = raw.list("map.center")?.unwrap_or_else(|| vec![0.0; q.len()]);
            CostMap64::quadratic(q, center).map_err(|e| raw.err("map.q", e))
        }
        other => Err(raw.err("map.name", format!("unknown map `{other}` (quartic_paper, quadratic)"))),
    }
}

fn build_schedule(raw: &RawConfig) -> Result<Schedule64, CliError> {
    let t0 = raw.num_or("schedule.t0", 0.0)?;
    let kind = raw.require("schedule.kind")?;
    let unused = |keys: &[&str]| -> Result<(), CliError> {
        match keys.iter().find(|k| raw.get(k).is_some()) {
            Some(k) => Err(raw.err(k, format!("not used by a {kind} schedule"))),
            None => Ok(()),
        }
    };
    let schedule = match kind {
        "nominal" => {
            unused(&["schedule.beta", "schedule.v", "schedule.r", "schedule.lambda"])?;
            Schedule64::nominal(t0)
        }
        "asymptotic" => {
            unused(&["schedule.lambda"])?;
            Schedule64::asymptotic(raw.req_num("schedule.beta")?, raw.req_num("schedule.v")?, raw.req_num("schedule.r")?, t0)
        }
        "exponential" => {
            unused(&["schedule.beta", "schedule.v", "schedule.r"])?;
            Schedule64::exponential(raw.req_num("schedule.lambda")?, t0)
        }
        other => return Err(raw.err("schedule.kind", format!("unknown kind `{other}` (nominal, asymptotic, exponential)"))),
    };
    schedule.map_err(|e| raw.err("schedule.kind", e))
}

fn build_analysis(raw: &RawConfig, params: &EsParams64, map: &CostMap64, horizon: f64) -> Result<AnalysisConfig, CliError> {
    let default = match params.schedule.kind() {
        ScheduleKind::Nominal => "none",
        ScheduleKind::Asymptotic { .. } => "power_law",
        ScheduleKind::Exponential { .. } => "exponential",
    };
    let model = match raw.get("analysis.model").unwrap_or(default) {
        "none" => FitModel::None,
        "power_law" => FitModel::PowerLaw,
        "exponential" => FitModel::Exponential,
        other => return Err(raw.err("analysis.model", format!("unknown model `{other}` (none, power_law, exponential)"))),
    };
    if model == FitModel::PowerLaw && !matches!(params.schedule.kind(), ScheduleKind::Asymptotic { .. }) {
        return Err(raw.err("analysis.model", "power_law fits need an asymptotic schedule"));
    }
    let t0 = params.schedule.t0();
    let (start, end) = (t0, t0 + horizon);
    let mut windows = [("analysis.window", raw.window("analysis.window")?), ("analysis.y_window", raw.window("analysis.y_window")?)];
    for (key, w) in &mut windows {
        if let Some((a, b)) = *w {
            if a < start || b > end {
                return Err(raw.err(key, format!("must lie inside the simulated span [{start}, {end}]")));
            }
            if model == FitModel::None {
                return Err(raw.err(key, "set analysis.model to fit a window"));
            }
            if map.optimum().is_none() {
                return Err(raw.err(key, "rate fits need a map with a known optimum"));
            }
        }
    }
    let window = match (model, windows[0].1) {
        (FitModel::None, _) => None,
        (_, Some(w)) => Some(w),
        // second half of the run
        (_, None) => Some((start + 0.5 * horizon, end)),
    };
    Ok(AnalysisConfig { model, window, y_window: windows[1].1, log_y: raw.flag("analysis.log_y")? })
}

fn build_probe(raw: &RawConfig, seed: u64) -> Result<Option<ProbeConfig64>, CliError> {
    let Some(omega) = raw.list("probe.omega")? else {
        for key in ["probe.epsilon", "probe.delta", "probe.horizon", "probe.trials"] {
            if raw.get(key).is_some() {
                return Err(raw.err(key, "probe settings need probe.omega"));
            }
        }
        return Ok(None);
    };
    let cfg = ProbeConfig64::new(
        omega,
        raw.req_num("probe.epsilon")?,
        raw.req_num("probe.delta")?,
        raw.req_num("probe.horizon")?,
        raw.count("probe.trials")?.unwrap_or(1),
        seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Some(cfg))
}
