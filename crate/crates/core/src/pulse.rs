//! Amplitude/frequency-modulated sech pulses built from a constant adiabatic factor.
//!
//! Frequency modulation is realized as phase modulation at a fixed carrier:
//! `phase(t) = phase0 + integral of freq`. With the default sweep origin the carrier
//! sits at the start frequency (`freq(0) = 0`) and the sweep runs toward
//! positive offsets.
//!
//! Two design rules are supported. `Eq23` integrates `|d freq/dt| = p amp^2`;
//! `Eq22` subtracts the amplitude-derivative term `(2 sqrt(3) / 9) |d amp/dt|`
//! and clamps the sweep rate at zero where that term dominates. For the sech
//! family both integrals have closed forms, so designed pulses are evaluated
//! analytically at any instant and only sampled on request.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Weight of the amplitude-derivative term in the `Eq22` rule.
pub const AMPLITUDE_DERIVATIVE_WEIGHT: f64 = 2.0 * 1.732_050_807_568_877_2 / 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    /// `omega0 sech(beta (t - t_p/2))`, peak at mid-pulse.
    SechFull,
    /// `omega0 sech(beta t)`, peak at the start.
    SechBackwardHalf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignRule {
    Eq22,
    Eq23,
}

/// Where the carrier sits relative to the frequency sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrigin {
    /// `freq(0) = 0`.
    #[default]
    Start,
    /// Carrier at the sweep midpoint.
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    /// Peak RF amplitude, rad/s.
    pub omega0: f64,
    /// Sech rate parameter, 1/s.
    pub beta: f64,
    /// Constant adiabatic factor.
    pub p: f64,
    /// Duration, s.
    pub t_p: f64,
    pub design_rule: DesignRule,
    /// Constant RF phase, rad.
    pub phase0: f64,
    /// +1 sweeps toward positive offsets, -1 toward negative.
    pub sweep_sign: f64,
    pub sweep_origin: SweepOrigin,
}

impl PulseSpec {
    /// A spec with phase 0, positive sweep and start origin.
    pub fn new(shape: PulseShape, omega0: f64, beta: f64, p: f64, t_p: f64, design_rule: DesignRule) -> Self {
        PulseSpec {
            shape,
            omega0,
            beta,
            p,
            t_p,
            design_rule,
            phase0: 0.0,
            sweep_sign: 1.0,
            sweep_origin: SweepOrigin::Start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("omega0", self.omega0)?;
        positive("beta", self.beta)?;
        positive("p", self.p)?;
        positive("t_p", self.t_p)?;
        if !self.phase0.is_finite() {
            return Err(invalid("phase0", "must be finite"));
        }
        if self.sweep_sign != 1.0 && self.sweep_sign != -1.0 {
            return Err(invalid("sweep_sign", format!("must be +1 or -1, got {}", self.sweep_sign)));
        }
        Ok(())
    }

    /// Sech argument at time `t` from pulse start.
    fn sech_arg(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::SechBackwardHalf => self.beta * t,
            PulseShape::SechFull => self.beta * (t - 0.5 * self.t_p),
        }
    }

    /// Duration over which the sech decays from its peak to the pulse edge.
    pub fn half_width(&self) -> f64 {
        match self.shape {
            PulseShape::SechBackwardHalf => self.t_p,
            PulseShape::SechFull => 0.5 * self.t_p,
        }
    }
}

/// `beta` such that the sech amplitude has decayed to `fraction` of its peak at the pulse edge.
pub fn beta_from_truncation(fraction: f64, half_width: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("truncation", format!("must lie in (0, 1), got {fraction}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(invalid("half_width", "must be finite and > 0"));
    }
    Ok((1.0 / fraction).acosh() / half_width)
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `ln cosh x` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Gudermannian `integral of sech`.
fn gd(x: f64) -> f64 {
    2.0 * (0.5 * x).tanh().atan()
}

/// Checked `omega0 sech(...)` at `t` measured from pulse start.
pub fn sech_amplitude(spec: &PulseSpec, t: f64) -> Result<f64> {
    if !(0.0..=spec.t_p).contains(&t) {
        return Err(Error::TimeOutOfRange { t, t_p: spec.t_p });
    }
    Ok(spec.omega0 * sech(spec.sech_arg(t)))
}

/// A designed sech pulse evaluated in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignedPulse {
    pub spec: PulseSpec,
    /// Amplitude-derivative weight (0 for `Eq23`).
    weight: f64,
    /// Sech argument beyond which the `Eq22` sweep rate is clamped to zero.
    clamp_arg: f64,
    /// Constant carrier offset applied for a centred sweep, rad/s.
    shift: f64,
    u0: f64,
}

impl DesignedPulse {
    pub fn new(spec: PulseSpec) -> Result<Self> {
        spec.validate()?;
        let (weight, clamp_arg) = match spec.design_rule {
            DesignRule::Eq23 => (0.0, f64::INFINITY),
            DesignRule::Eq22 => {
                let w = AMPLITUDE_DERIVATIVE_WEIGHT;
                (w, (spec.p * spec.omega0 / (w * spec.beta)).asinh())
            }
        };
        let mut pulse = DesignedPulse { spec, weight, clamp_arg, shift: 0.0, u0: spec.sech_arg(0.0) };
        if spec.sweep_origin == SweepOrigin::Center {
            pulse.shift = -0.5 * pulse.sweep_extent_signed();
        }
        Ok(pulse)
    }

    /// Odd antiderivative `G(u)` of the unsigned sweep rate, in rad/s.
    fn rate_integral(&self, u: f64) -> f64 {
        let s = &self.spec;
        let m = u.abs().min(self.clamp_arg);
        let g = s.p * s.omega0 * s.omega0 / s.beta * m.tanh() - self.weight * s.omega0 * (1.0 - sech(m));
        g.copysign(u)
    }

    /// Even antiderivative in time of `rate_integral`, in rad.
    fn phase_integral(&self, u: f64) -> f64 {
        let s = &self.spec;
        let a = u.abs();
        let body = |m: f64| {
            s.p * s.omega0 * s.omega0 / (s.beta * s.beta) * ln_cosh(m) - self.weight * s.omega0 / s.beta * (m - gd(m))
        };
        if a <= self.clamp_arg {
            body(a)
        } else {
            body(self.clamp_arg) + self.rate_integral(self.clamp_arg) * (a - self.clamp_arg) / s.beta
        }
    }

    fn sweep_extent_signed(&self) -> f64 {
        let s = &self.spec;
        s.sweep_sign * (self.rate_integral(s.sech_arg(s.t_p)) - self.rate_integral(self.u0))
    }

    /// `|freq(t_p) - freq(0)|`, rad/s.
    pub fn sweep_extent(&self) -> f64 {
        self.sweep_extent_signed().abs()
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        self.spec.omega0 * sech(self.spec.sech_arg(t))
    }

    /// Analytic `d amp / dt`.
    pub fn amplitude_derivative(&self, t: f64) -> f64 {
        let u = self.spec.sech_arg(t);
        -self.spec.omega0 * self.spec.beta * sech(u) * u.tanh()
    }

    /// Instantaneous carrier-relative RF frequency, rad/s.
    pub fn frequency(&self, t: f64) -> f64 {
        let s = &self.spec;
        s.sweep_sign * (self.rate_integral(s.sech_arg(t)) - self.rate_integral(self.u0)) + self.shift
    }

    /// Analytic sweep rate `d freq / dt`.
    pub fn frequency_rate(&self, t: f64) -> f64 {
        let s = &self.spec;
        let u = s.sech_arg(t);
        if u.abs() > self.clamp_arg {
            return 0.0;
        }
        let a = self.amplitude(t);
        s.sweep_sign * (s.p * a * a - self.weight * self.amplitude_derivative(t).abs())
    }

    pub fn phase(&self, t: f64) -> f64 {
        let s = &self.spec;
        let g0 = self.rate_integral(self.u0);
        s.phase0
            + s.sweep_sign * (self.phase_integral(s.sech_arg(t)) - self.phase_integral(self.u0) - g0 * t)
            + self.shift * t
    }

    /// Samples the pulse on `round(t_p/dt) + 1` equally spaced instants.
    pub fn sample(&self, dt: f64) -> Result<PulseWaveform> {
        let n = sample_count(self.spec.t_p, dt)?;
        let step = self.spec.t_p / n as f64;
        let times = (0..=n).map(|k| k as f64 * step);
        let amp: Vec<f64> = times.clone().map(|t| self.amplitude(t)).collect();
        let freq: Vec<f64> = times.map(|t| self.frequency(t)).collect();
        let phase = cumulative_trapezoid(&freq, step, self.spec.phase0);
        Ok(PulseWaveform { dt: step, t_p: self.spec.t_p, amp, freq, phase })
    }
}

fn sample_count(t_p: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    Ok(((t_p / dt).round() as usize).max(1))
}

fn cumulative_trapezoid(values: &[f64], dt: f64, start: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = start;
    out.push(acc);
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
        out.push(acc);
    }
    out
}

/// Designs and samples a pulse under the `Eq23` rule.
pub fn design_fm_eq23(spec: &PulseSpec, dt: f64) -> Result<PulseWaveform> {
    if spec.design_rule != DesignRule::Eq23 {
        return Err(invalid("design_rule", "expected eq23"));
    }
    DesignedPulse::new(*spec)?.sample(dt)
}

/// Designs and samples a pulse under the `Eq22` rule.
pub fn design_fm_eq22(spec: &PulseSpec, dt: f64) -> Result<PulseWaveform> {
    if spec.design_rule != DesignRule::Eq22 {
        return Err(invalid("design_rule", "expected eq22"));
    }
    DesignedPulse::new(*spec)?.sample(dt)
}

/// Numerical design from an arbitrary sampled amplitude.
///
/// Derivatives use central differences; the sweep rate is integrated with the
/// trapezoid rule starting from `freq(0) = 0`.
pub fn design_from_amplitude(
    amp: &[f64],
    dt: f64,
    p: f64,
    rule: DesignRule,
    sweep_sign: f64,
    phase0: f64,
) -> Result<PulseWaveform> {
    if amp.len() < 2 {
        return Err(invalid("amp", "need at least two samples"));
    }
    if !(p > 0.0) {
        return Err(invalid("p", format!("must be > 0, got {p}")));
    }
    if amp.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(invalid("amp", "samples must be finite and >= 0"));
    }
    let weight = match rule {
        DesignRule::Eq22 => AMPLITUDE_DERIVATIVE_WEIGHT,
        DesignRule::Eq23 => 0.0,
    };
    let deriv = central_difference(amp, dt);
    let rate: Vec<f64> = amp
        .iter()
        .zip(&deriv)
        .map(|(a, d)| sweep_sign * (p * a * a - weight * d.abs()).max(0.0))
        .collect();
    let freq = cumulative_trapezoid(&rate, dt, 0.0);
    let phase = cumulative_trapezoid(&freq, dt, phase0);
    Ok(PulseWaveform { dt, t_p: dt * (amp.len() - 1) as f64, amp: amp.to_vec(), freq, phase })
}

fn central_difference(v: &[f64], dt: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (v[1] - v[0]) / dt
            } else if k == n - 1 {
                (v[n - 1] - v[n - 2]) / dt
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// A sampled pulse: amplitude, frequency and phase on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseWaveform {
    pub dt: f64,
    pub t_p: f64,
    pub amp: Vec<f64>,
    pub freq: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PulseWaveform {
    pub fn len(&self) -> usize {
        self.amp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amp.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn phase_shift(&self, dphi: f64) -> PulseWaveform {
        let mut out = self.clone();
        out.phase.iter_mut().for_each(|p| *p += dphi);
        out
    }

    /// Interval index and offset into it for time `t`, clamped to the pulse.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.len() - 1;
        let x = (t / self.dt).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n.saturating_sub(1));
        (k, t.clamp(0.0, self.t_p) - k as f64 * self.dt)
    }

    /// Linear interpolation of the amplitude; zero outside the pulse.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.t_p {
            return 0.0;
        }
        let (k, tau) = self.locate(t);
        let f = tau / self.dt;
        self.amp[k] * (1.0 - f) + self.amp[k + 1] * f
    }

    pub fn frequency_at(&self, t: f64) -> f64 {
        let (k, tau) = self.locate(t);
        let f = tau / self.dt;
        self.freq[k] * (1.0 - f) + self.freq[k + 1] * f
    }

    /// Exact integral of the piecewise-linear frequency, consistent with the
    /// trapezoid phases at the samples.
    pub fn phase_at(&self, t: f64) -> f64 {
        let (k, tau) = self.locate(t);
        let slope = (self.freq[k + 1] - self.freq[k]) / self.dt;
        self.phase[k] + self.freq[k] * tau + 0.5 * slope * tau * tau
    }

    pub fn max_abs_frequency(&self) -> f64 {
        self.freq.iter().fold(0.0f64, |m, f| m.max(f.abs()))
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amp.iter().fold(0.0f64, |m, a| m.max(*a))
    }

    pub fn sweep_extent(&self) -> f64 {
        match (self.freq.first(), self.freq.last()) {
            (Some(a), Some(b)) => (b - a).abs(),
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.amp.len();
        if n < 2 || self.freq.len() != n || self.phase.len() != n {
            return Err(Error::Table("amp, freq and phase need equal length >= 2".into()));
        }
        if !(self.dt > 0.0) || ((self.t_p - self.dt * (n - 1) as f64).abs() > 1e-9 * self.t_p) {
            return Err(Error::Table("dt and t_p inconsistent with the sample count".into()));
        }
        if self.amp.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Table("amplitudes must be finite and >= 0".into()));
        }
        if self.freq.iter().chain(&self.phase).any(|v| !v.is_finite()) {
            return Err(Error::Table("non-finite frequency or phase".into()));
        }
        Ok(())
    }

    /// Writes `t_s amp_rad_s freq_rad_s phase_rad`, one sample per line.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# t_s amp_rad_s freq_rad_s phase_rad")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e}",
                self.time(k),
                self.amp[k],
                self.freq[k],
                self.phase[k]
            )?;
        }
        Ok(())
    }

    /// Reads the format written by [`PulseWaveform::write_table`]. Lines starting
    /// with `#` and blank lines are skipped.
    pub fn read_table<R: BufRead>(input: R) -> Result<PulseWaveform> {
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Table(e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<f64> = trimmed
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Table(format!("line {}: {e}", lineno + 1)))?;
            if cols.len() != 4 {
                return Err(Error::Table(format!("line {}: expected 4 columns, got {}", lineno + 1, cols.len())));
            }
            rows.push([cols[0], cols[1], cols[2], cols[3]]);
        }
        if rows.len() < 2 {
            return Err(Error::Table("need at least two samples".into()));
        }
        if rows[0][0].abs() > 1e-15 {
            return Err(Error::Table("first sample must be at t = 0".into()));
        }
        let t_p = rows[rows.len() - 1][0];
        let dt = t_p / (rows.len() - 1) as f64;
        for (k, r) in rows.iter().enumerate() {
            if (r[0] - k as f64 * dt).abs() > 1e-9 * t_p.max(dt) {
                return Err(Error::Table(format!("sample {k} is not on a uniform grid")));
            }
        }
        let w = PulseWaveform {
            dt,
            t_p,
            amp: rows.iter().map(|r| r[1]).collect(),
            freq: rows.iter().map(|r| r[2]).collect(),
            phase: rows.iter().map(|r| r[3]).collect(),
        };
        w.validate()?;
        Ok(w)
    }
}

/// Adiabatic factor at the sample nearest `t` for a spin whose offset from the
/// starting carrier is `delta_omega0` (rad/s). Derivatives are central
/// differences on the sample grid.
pub fn adiabatic_factor(w: &PulseWaveform, delta_omega0: f64, t: f64) -> Result<f64> {
    if !(t >= -1e-12 * w.t_p && t <= w.t_p * (1.0 + 1e-12)) {
        return Err(Error::TimeOutOfRange { t, t_p: w.t_p });
    }
    let n = w.len();
    let k = ((t / w.dt).round() as usize).min(n - 1);
    let offset = |j: usize| delta_omega0 - (w.freq[j] - w.freq[0]);
    let (lo, hi) = if k == 0 {
        (0, 1)
    } else if k == n - 1 {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let span = (hi - lo) as f64 * w.dt;
    let d_offset = (offset(hi) - offset(lo)) / span;
    let d_amp = (w.amp[hi] - w.amp[lo]) / span;
    let (a, d) = (w.amp[k], offset(k));
    let denom = (a * a + d * d).powf(1.5);
    if denom == 0.0 {
        return Err(Error::SingularEffectiveField(w.time(k)));
    }
    Ok((a * d_offset - d * d_amp) / denom)
}

/// Anything that can drive one spin: amplitude and phase as functions of time.
pub trait Modulation {
    fn duration(&self) -> f64;
    /// rad/s; zero outside `[0, duration]`.
    fn amplitude(&self, t: f64) -> f64;
    /// rad.
    fn phase(&self, t: f64) -> f64;
    /// Largest `|freq|` reached, rad/s.
    fn max_abs_frequency(&self) -> f64;
    fn peak_amplitude(&self) -> f64;
}

/// A pulse on one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Pulse {
    Designed(DesignedPulse),
    Table(PulseWaveform),
    /// RF off for `duration` seconds.
    Off { duration: f64 },
}

impl Pulse {
    pub fn designed(spec: PulseSpec) -> Result<Pulse> {
        Ok(Pulse::Designed(DesignedPulse::new(spec)?))
    }

    pub fn with_phase_shift(&self, dphi: f64) -> Pulse {
        match self {
            Pulse::Designed(d) => {
                let mut d = *d;
                d.spec.phase0 += dphi;
                Pulse::Designed(d)
            }
            Pulse::Table(w) => Pulse::Table(w.phase_shift(dphi)),
            Pulse::Off { duration } => Pulse::Off { duration: *duration },
        }
    }

    pub fn spec(&self) -> Option<&PulseSpec> {
        match self {
            Pulse::Designed(d) => Some(&d.spec),
            _ => None,
        }
    }

    pub fn sweep_extent(&self) -> f64 {
        match self {
            Pulse::Designed(d) => d.sweep_extent(),
            Pulse::Table(w) => w.sweep_extent(),
            Pulse::Off { .. } => 0.0,
        }
    }
}

impl Modulation for Pulse {
    fn duration(&self) -> f64 {
        match self {
            Pulse::Designed(d) => d.spec.t_p,
            Pulse::Table(w) => w.t_p,
            Pulse::Off { duration } => *duration,
        }
    }

    fn amplitude(&self, t: f64) -> f64 {
        match self {
            Pulse::Designed(d) if (0.0..=d.spec.t_p).contains(&t) => d.amplitude(t),
            Pulse::Table(w) => w.amplitude_at(t),
            _ => 0.0,
        }
    }

    fn phase(&self, t: f64) -> f64 {
        match self {
            Pulse::Designed(d) => d.phase(t.clamp(0.0, d.spec.t_p)),
            Pulse::Table(w) => w.phase_at(t),
            Pulse::Off { .. } => 0.0,
        }
    }

    fn max_abs_frequency(&self) -> f64 {
        match self {
            Pulse::Designed(d) => d.frequency(0.0).abs().max(d.frequency(d.spec.t_p).abs()),
            Pulse::Table(w) => w.max_abs_frequency(),
            Pulse::Off { .. } => 0.0,
        }
    }

    fn peak_amplitude(&self) -> f64 {
        match self {
            Pulse::Designed(d) => d.spec.omega0,
            Pulse::Table(w) => w.max_amplitude(),
            Pulse::Off { .. } => 0.0,
        }
    }
}

/// Hz to rad/s.
pub fn hz_to_rad(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// rad/s to Hz.
pub fn rad_to_hz(rad: f64) -> f64 {
    rad / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backward_half_spec(p: f64, t_p: f64) -> PulseSpec {
        PulseSpec::new(PulseShape::SechBackwardHalf, hz_to_rad(5000.0), 5.9865 / 0.007, p, t_p, DesignRule::Eq23)
    }

    #[test]
    fn sech_amplitude_examples() {
        let s = backward_half_spec(2.3, 0.007);
        assert_eq!(sech_amplitude(&s, 0.0).unwrap(), s.omega0);
        let end = sech_amplitude(&s, 0.007).unwrap() / s.omega0;
        assert!((end - 1.0 / 5.9865f64.cosh()).abs() < 1e-15);
        assert!((end - 0.00502).abs() < 5e-5);
        let full = PulseSpec { shape: PulseShape::SechFull, ..s };
        assert!((sech_amplitude(&full, 0.0035).unwrap() - s.omega0).abs() < 1e-9);
        assert!(matches!(sech_amplitude(&s, 0.0071), Err(Error::TimeOutOfRange { .. })));
        assert!(sech_amplitude(&s, -1e-9).is_err());
    }

    #[test]
    fn spec_validation() {
        let s = backward_half_spec(2.3, 0.007);
        assert!(s.validate().is_ok());
        assert!(PulseSpec { p: 0.0, ..s }.validate().is_err());
        assert!(PulseSpec { p: -1.0, ..s }.validate().is_err());
        assert!(PulseSpec { omega0: 0.0, ..s }.validate().is_err());
        assert!(PulseSpec { sweep_sign: 0.5, ..s }.validate().is_err());
        assert!(design_fm_eq23(&PulseSpec { p: 0.0, ..s }, 1e-6).is_err());
        assert!(design_fm_eq22(&s, 1e-6).is_err());
    }

    #[test]
    fn eq23_backward_half_is_tanh() {
        let s = backward_half_spec(2.3, 0.007);
        let w = design_fm_eq23(&s, 1e-6).unwrap();
        assert_eq!(w.len(), 7001);
        let scale = s.p * s.omega0 * s.omega0 / s.beta;
        for k in (0..w.len()).step_by(250) {
            let want = scale * (s.beta * w.time(k)).tanh();
            let got = w.freq[k];
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{k} {got} {want}");
        }
        assert_eq!(w.freq[0], 0.0);
    }

    #[test]
    fn eq23_sweep_extent_inversion_example() {
        let s = backward_half_spec(1.0 / 3.0, 0.007);
        let d = DesignedPulse::new(s).unwrap();
        let want = s.p * s.omega0 * s.omega0 / s.beta * 5.9865f64.tanh();
        assert!((d.sweep_extent() - want).abs() < 1e-9 * want);
        // about 61 kHz for the inversion pulse of the flip-angle study
        assert!((rad_to_hz(d.sweep_extent()) - 61.2e3).abs() < 0.1e3);
    }

    #[test]
    fn extent_is_quadratic_in_omega0_and_linear_in_p() {
        let s = backward_half_spec(2.3, 0.0035);
        let e1 = DesignedPulse::new(s).unwrap().sweep_extent();
        let e2 = DesignedPulse::new(PulseSpec { omega0: 2.0 * s.omega0, ..s }).unwrap().sweep_extent();
        let e3 = DesignedPulse::new(PulseSpec { p: 2.0 * s.p, ..s }).unwrap().sweep_extent();
        assert!((e2 / e1 - 4.0).abs() < 1e-12);
        assert!((e3 / e1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_phase_derivative_is_frequency() {
        for shape in [PulseShape::SechBackwardHalf, PulseShape::SechFull] {
            for rule in [DesignRule::Eq22, DesignRule::Eq23] {
                for origin in [SweepOrigin::Start, SweepOrigin::Center] {
                    let s = PulseSpec {
                        shape,
                        design_rule: rule,
                        sweep_origin: origin,
                        sweep_sign: -1.0,
                        phase0: 0.3,
                        ..backward_half_spec(2.3, 0.007)
                    };
                    let d = DesignedPulse::new(s).unwrap();
                    assert!((d.phase(0.0) - 0.3).abs() < 1e-12);
                    let h = 1e-8;
                    for k in 1..50 {
                        let t = k as f64 * s.t_p / 50.0;
                        let num = (d.phase(t + h) - d.phase(t - h)) / (2.0 * h);
                        let f = d.frequency(t);
                        assert!((num - f).abs() <= 1e-6 * f.abs().max(d.spec.omega0), "{shape:?} {rule:?} {origin:?} t={t}: {num} vs {f}");
                        let num_rate = (d.frequency(t + h) - d.frequency(t - h)) / (2.0 * h);
                        let rate = d.frequency_rate(t);
                        assert!((num_rate - rate).abs() <= 1e-5 * rate.abs().max(1e6), "{num_rate} {rate}");
                    }
                }
            }
        }
    }

    #[test]
    fn centred_origin_splits_the_sweep() {
        let s = PulseSpec { shape: PulseShape::SechFull, sweep_origin: SweepOrigin::Center, ..backward_half_spec(1.0 / 3.0, 0.01) };
        let d = DesignedPulse::new(s).unwrap();
        assert!((d.frequency(0.0) + d.frequency(s.t_p)).abs() < 1e-9 * d.sweep_extent());
        assert!(d.frequency(0.5 * s.t_p).abs() < 1e-9 * d.sweep_extent());
    }

    #[test]
    fn eq22_residual_holds_at_every_sample() {
        let s = PulseSpec { design_rule: DesignRule::Eq22, ..backward_half_spec(2.3, 0.007) };
        let d = DesignedPulse::new(s).unwrap();
        let w = 2.0 * 3f64.sqrt() / 9.0;
        for k in 0..=700 {
            let t = k as f64 * 1e-5;
            let a = d.amplitude(t);
            let da = d.amplitude_derivative(t);
            let want = (s.p * a * a - w * da.abs()).max(0.0);
            let got = d.frequency_rate(t).abs();
            assert!((got - want).abs() <= 1e-8 * (s.p * a * a).max(1.0), "t={t}");
            if want > 0.0 {
                let lhs = got + w * da.abs();
                assert!((lhs - s.p * a * a).abs() <= 1e-8 * s.p * a * a);
            }
        }
    }

    #[test]
    fn eq22_from_emitted_waveform_finite_differences() {
        let s = PulseSpec { design_rule: DesignRule::Eq22, ..backward_half_spec(2.3, 0.007) };
        let w = design_fm_eq22(&s, 1e-7).unwrap();
        let d = DesignedPulse::new(s).unwrap();
        let weight = 2.0 * 3f64.sqrt() / 9.0;
        let mut checked = 0;
        for k in (1..w.len() - 1).step_by(97) {
            let t = w.time(k);
            if (s.beta * t) > d.clamp_arg * 0.98 {
                continue;
            }
            let dfreq = (w.freq[k + 1] - w.freq[k - 1]) / (2.0 * w.dt);
            let damp = (w.amp[k + 1] - w.amp[k - 1]) / (2.0 * w.dt);
            let lhs = dfreq.abs() + weight * damp.abs();
            let rhs = s.p * w.amp[k] * w.amp[k];
            assert!((lhs - rhs).abs() <= 1e-3 * rhs, "t={t}: {lhs} vs {rhs}");
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn constant_amplitude_rules_agree_and_chirp_is_linear() {
        let a = vec![1000.0; 1001];
        let dt = 1e-6;
        let w23 = design_from_amplitude(&a, dt, 0.5, DesignRule::Eq23, 1.0, 0.0).unwrap();
        let w22 = design_from_amplitude(&a, dt, 0.5, DesignRule::Eq22, 1.0, 0.0).unwrap();
        assert_eq!(w23, w22);
        for k in 0..w23.len() {
            let want = 0.5 * 1000.0 * 1000.0 * w23.time(k);
            assert!((w23.freq[k] - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn waveform_phase_invariants() {
        let s = backward_half_spec(2.3, 0.0035);
        let w = design_fm_eq23(&s, 2e-7).unwrap();
        assert_eq!(w.len(), (s.t_p / 2e-7f64).round() as usize + 1);
        // trapezoid re-derivation
        let redo = cumulative_trapezoid(&w.freq, w.dt, s.phase0);
        for (a, b) in redo.iter().zip(&w.phase) {
            assert!((a - b).abs() < 1e-9);
        }
        // midpoint differentiation recovers the frequency
        for k in (0..w.len() - 1).step_by(101) {
            let mid = (w.phase[k + 1] - w.phase[k]) / w.dt;
            let want = 0.5 * (w.freq[k] + w.freq[k + 1]);
            assert!((mid - want).abs() <= 1e-6 * want.abs().max(1.0));
        }
        // sampled phase tracks the analytic phase closely
        let d = DesignedPulse::new(s).unwrap();
        let last = w.len() - 1;
        assert!((w.phase[last] - d.phase(s.t_p)).abs() < 1e-2);
        assert!(w.amp.iter().all(|a| *a >= 0.0));
    }

    #[test]
    fn phase_shift_examples() {
        let w = design_fm_eq23(&backward_half_spec(2.3, 0.001), 1e-6).unwrap();
        assert_eq!(w.phase_shift(0.0), w);
        let twice = w.phase_shift(PI).phase_shift(PI);
        for (a, b) in twice.phase.iter().zip(&w.phase) {
            assert!(((a - b) - 2.0 * PI).abs() < 1e-9);
        }
        let y = w.phase_shift(PI / 2.0);
        assert_eq!(y.amp, w.amp);
        assert_eq!(y.freq, w.freq);
        assert!((y.phase[0] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn adiabatic_factor_linear_chirp_at_resonance() {
        let p = 0.4;
        let w1 = 2000.0;
        let dt = 1e-6;
        let w = design_from_amplitude(&vec![w1; 2001], dt, p, DesignRule::Eq23, 1.0, 0.0).unwrap();
        // resonance at t = 1 ms for a spin sitting at freq(1 ms)
        let k = 1000;
        let offset = w.freq[k] - w.freq[0];
        let val = adiabatic_factor(&w, offset, w.time(k)).unwrap();
        assert!((val.abs() - p).abs() < 1e-9, "{val}");
    }

    #[test]
    fn adiabatic_factor_without_modulation_is_zero() {
        let w = PulseWaveform { dt: 1e-6, t_p: 1e-5, amp: vec![500.0; 11], freq: vec![0.0; 11], phase: vec![0.0; 11] };
        assert_eq!(adiabatic_factor(&w, 1234.0, 5e-6).unwrap(), 0.0);
        let off = PulseWaveform { amp: vec![0.0; 11], ..w.clone() };
        assert!(matches!(adiabatic_factor(&off, 0.0, 5e-6), Err(Error::SingularEffectiveField(_))));
        assert!(adiabatic_factor(&w, 0.0, 2e-5).is_err());
    }

    #[test]
    fn adiabatic_factor_near_p_at_crossings() {
        let s = backward_half_spec(1.0 / 3.0, 0.007);
        let w = design_fm_eq23(&s, 1e-7).unwrap();
        // spins resonant mid-sweep: the amplitude-derivative correction is modest
        let mut worst = 0.0f64;
        for k in [5000usize, 10000, 20000, 30000] {
            let offset = w.freq[k];
            let val = adiabatic_factor(&w, offset, w.time(k)).unwrap().abs();
            worst = worst.max((val - 1.0 / 3.0).abs());
            assert!(val > 0.0);
        }
        assert!(worst < 1e-6, "deviation {worst}");
    }

    #[test]
    fn table_round_trip() {
        let w = design_fm_eq23(&backward_half_spec(2.3, 0.0004), 1e-6).unwrap();
        let mut buf = Vec::new();
        w.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('\r'));
        let back = PulseWaveform::read_table(&buf[..]).unwrap();
        assert_eq!(back.amp, w.amp);
        assert_eq!(back.freq, w.freq);
        assert_eq!(back.phase, w.phase);
        assert!(PulseWaveform::read_table("0 1 2\n".as_bytes()).is_err());
        assert!(PulseWaveform::read_table("0 1 2 3\n1e-6 -1 2 3\n".as_bytes()).is_err());
    }

    #[test]
    fn truncation_helper() {
        let b = beta_from_truncation(0.01, 0.005).unwrap();
        assert!((sech(b * 0.005) - 0.01).abs() < 1e-15);
        assert!(beta_from_truncation(1.5, 1.0).is_err());
    }
}
