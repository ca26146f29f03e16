use std::fmt;
use std::fs::File;
use std::io::BufReader;

use qahh::dynamics::PulsePair;
use qahh::experiments::{linspace, BandCriterion, Direction, Observable, OffsetGrid, Sequence};
use qahh::operators::BasisLabel;
use qahh::pulse::{beta_from_truncation, hz_to_rad, DesignRule, Pulse, PulseShape, PulseSpec, PulseWaveform, SweepOrigin};
use serde::{Deserialize, Serialize};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn config_err(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    DesignPulse,
    Profile,
    Sweep,
    Echo,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeConfig {
    SechFull,
    SechBackwardHalf,
    CustomTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub shape: ShapeConfig,
    pub omega0_hz: Option<f64>,
    pub p: Option<f64>,
    pub t_p_ms: Option<f64>,
    /// Profile runs only: one column set per duration, all sharing `beta`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub durations_ms: Vec<f64>,
    pub beta_per_s: Option<f64>,
    /// `beta * t_p`, dimensionless.
    pub beta_tp: Option<f64>,
    /// Edge amplitude as a fraction of the peak.
    pub truncation: Option<f64>,
    pub design_rule: Option<DesignRule>,
    pub phase0_deg: Option<f64>,
    pub sweep_sign: Option<f64>,
    pub sweep_origin: Option<SweepOrigin>,
    /// Waveform table for `custom_table`.
    pub table: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub j_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    pub count: usize,
    /// Point count used with `--grid-scale paper`.
    pub paper_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axis_i: AxisConfig,
    pub axis_s: Option<AxisConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    Excitation,
    Inversion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub kind: BandKind,
    pub threshold: f64,
    pub observable: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub observable: String,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub draws: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub output: Option<String>,
    pub dt_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<String>,
    pub sequence: Option<Sequence>,
    pub initial: Option<String>,
    pub direction: Option<Direction>,
    pub pulse: Option<PulseConfig>,
    pub pulse_s: Option<PulseConfig>,
    pub system: Option<SystemConfig>,
    pub grid: Option<GridConfig>,
    pub band: Option<BandConfig>,
    pub region: Option<RegionConfig>,
    pub validate: Option<ValidateConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        Self::parse(&text)
    }

    /// Replaces every axis count by its fine-resolution `paper_count`.
    pub fn apply_paper_scale(&mut self) {
        if let Some(g) = &mut self.grid {
            for axis in std::iter::once(&mut g.axis_i).chain(g.axis_s.as_mut()) {
                axis.count = axis.paper_count.unwrap_or(4 * axis.count.saturating_sub(1) + 1);
            }
        }
    }

    fn section<'a, T>(&self, v: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
        v.as_ref().ok_or_else(|| config_err(key, format!("section is required for `{}`", self.command_name())))
    }

    pub fn command_name(&self) -> &'static str {
        match self.command {
            Command::DesignPulse => "design-pulse",
            Command::Profile => "profile",
            Command::Sweep => "sweep",
            Command::Echo => "echo",
            Command::Validate => "validate",
        }
    }

    pub fn pulse_config(&self) -> Result<&PulseConfig, CliError> {
        self.section(&self.pulse, "pulse")
    }

    pub fn j_hz(&self) -> Result<f64, CliError> {
        let j = self.section(&self.system, "system")?.j_hz;
        if !j.is_finite() {
            return Err(config_err("system.j_hz", "must be finite"));
        }
        Ok(j)
    }

    pub fn dt(&self) -> Result<Option<f64>, CliError> {
        match self.dt_us {
            None => Ok(None),
            Some(v) if v > 0.0 && v.is_finite() => Ok(Some(v * 1e-6)),
            Some(v) => Err(config_err("dt_us", format!("must be finite and > 0, got {v}"))),
        }
    }

    pub fn grid(&self, plane: bool) -> Result<OffsetGrid, CliError> {
        let g = self.section(&self.grid, "grid")?;
        let axis_i = build_axis(&g.axis_i, "grid.axis_i")?;
        match (&g.axis_s, plane) {
            (Some(a), true) => Ok(OffsetGrid { axis_i, axis_s: Some(build_axis(a, "grid.axis_s")?) }),
            (None, true) => Err(config_err("grid.axis_s", "required for two-spin runs")),
            (Some(_), false) => Err(config_err("grid.axis_s", "not allowed for single-spin profiles")),
            (None, false) => Ok(OffsetGrid { axis_i, axis_s: None }),
        }
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        self.observables
            .iter()
            .map(|s| s.parse::<Observable>().map_err(|_| config_err("observables", format!("unknown observable `{s}`"))))
            .collect()
    }

    pub fn initial(&self) -> Result<BasisLabel, CliError> {
        let s = self.initial.as_deref().unwrap_or("Iz");
        s.parse().map_err(|_| config_err("initial", format!("unknown basis label `{s}`")))
    }

    pub fn band(&self) -> Result<Option<(String, BandCriterion)>, CliError> {
        let Some(b) = &self.band else { return Ok(None) };
        if !(b.threshold >= 0.0 && b.threshold.is_finite()) {
            return Err(config_err("band.threshold", "must be finite and >= 0"));
        }
        let criterion = match b.kind {
            BandKind::Excitation => BandCriterion::excitation(b.threshold),
            BandKind::Inversion => BandCriterion::inversion(b.threshold),
        };
        Ok(Some((b.observable.clone().unwrap_or_else(|| "mz_over_m0".into()), criterion)))
    }

    /// Pulses for both channels; `pulse_s` defaults to a copy of `pulse`.
    pub fn pulse_pair(&self) -> Result<PulsePair, CliError> {
        let pc = self.pulse_config()?;
        let pi = build_pulse(pc, "pulse", None)?;
        let ps = match &self.pulse_s {
            Some(c) => build_pulse(c, "pulse_s", None)?,
            None => pi.clone(),
        };
        PulsePair::new(pi, ps).map_err(|e| config_err("pulse_s", e))
    }
}

/// Config key holding a spec field.
fn config_key(field: &str) -> &str {
    match field {
        "omega0" => "omega0_hz",
        "t_p" => "t_p_ms",
        "beta" => "beta_per_s",
        "phase0" => "phase0_deg",
        other => other,
    }
}

fn build_axis(a: &AxisConfig, key: &str) -> Result<Vec<f64>, CliError> {
    if a.count == 0 {
        return Err(config_err(key, "axis is empty (count = 0)"));
    }
    if !(a.min_hz.is_finite() && a.max_hz.is_finite()) {
        return Err(config_err(key, "min_hz and max_hz must be finite"));
    }
    if a.count > 1 && a.max_hz <= a.min_hz {
        return Err(config_err(key, "max_hz must exceed min_hz"));
    }
    Ok(linspace(a.min_hz, a.max_hz, a.count))
}

fn required(v: Option<f64>, key: String) -> Result<f64, CliError> {
    v.ok_or_else(|| config_err(&key, "is required"))
}

/// Pulse from its config section; `t_p_ms` overrides the section's duration.
pub fn build_pulse(c: &PulseConfig, key: &str, t_p_ms: Option<f64>) -> Result<Pulse, CliError> {
    if c.shape == ShapeConfig::CustomTable {
        let path = c.table.as_deref().ok_or_else(|| config_err(&format!("{key}.table"), "is required for custom_table"))?;
        let file = File::open(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        let w = PulseWaveform::read_table(BufReader::new(file)).map_err(|e| config_err(&format!("{key}.table"), e))?;
        let dphi = c.phase0_deg.unwrap_or(0.0).to_radians();
        return Ok(Pulse::Table(w.phase_shift(dphi)));
    }
    Ok(Pulse::designed(build_spec(c, key, t_p_ms)?).map_err(|e| config_err(key, e))?)
}

pub fn build_spec(c: &PulseConfig, key: &str, t_p_ms: Option<f64>) -> Result<PulseSpec, CliError> {
    let k = |f: &str| format!("{key}.{f}");
    let shape = match c.shape {
        ShapeConfig::SechFull => PulseShape::SechFull,
        ShapeConfig::SechBackwardHalf => PulseShape::SechBackwardHalf,
        ShapeConfig::CustomTable => return Err(config_err(&k("shape"), "custom_table has no analytic spec")),
    };
    let t_p = match t_p_ms {
        Some(v) => v,
        None => required(c.t_p_ms, k("t_p_ms"))?,
    } * 1e-3;
    if !(t_p > 0.0 && t_p.is_finite()) {
        return Err(config_err(&k("t_p_ms"), "must be finite and > 0"));
    }
    let omega0 = hz_to_rad(required(c.omega0_hz, k("omega0_hz"))?);
    let p = required(c.p, k("p"))?;
    let mut spec = PulseSpec::new(shape, omega0, 1.0, p, t_p, c.design_rule.unwrap_or(DesignRule::Eq23));
    spec.beta = match (c.beta_per_s, c.beta_tp, c.truncation) {
        (Some(b), None, None) => b,
        (None, Some(bt), None) => bt / t_p,
        (None, None, Some(x)) => {
            beta_from_truncation(x, spec.half_width()).map_err(|e| config_err(&k("truncation"), e))?
        }
        _ => return Err(config_err(&k("beta_per_s"), "give exactly one of beta_per_s, beta_tp, truncation")),
    };
    spec.phase0 = c.phase0_deg.unwrap_or(0.0).to_radians();
    spec.sweep_sign = c.sweep_sign.unwrap_or(1.0);
    spec.sweep_origin = c.sweep_origin.unwrap_or_default();
    spec.validate().map_err(|e| match e {
        qahh::Error::InvalidParameter { name, reason } => config_err(&k(config_key(name)), reason),
        other => config_err(key, other),
    })?;
    Ok(spec)
}
