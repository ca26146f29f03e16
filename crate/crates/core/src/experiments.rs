//! Offset-grid sweeps, band estimation and tabular output.
//!
//! Grid offsets are in Hz and enter each spin as its chemical shift relative
//! to the pulse carrier at `t = 0`. Points are independent; a sweep with any
//! number of workers yields the same values in the same row-major order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    default_dt, echo_propagator, interaction_propagator, sequence_33b, single_spin_propagator, PulsePair, SpinSystem,
};
use crate::error::{invalid, Error, Result};
use crate::mq::evomq;
use crate::operators::{decompose_unchecked, evolve_unchecked, BasisLabel, Operator4, ProductOperatorCoeffs};
use crate::pulse::{hz_to_rad, Modulation, Pulse, PulseSpec};

/// Offsets in Hz; `axis_s` is absent for single-spin profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetGrid {
    pub axis_i: Vec<f64>,
    pub axis_s: Option<Vec<f64>>,
}

/// `count` evenly spaced values from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..count).map(|k| min + (max - min) * k as f64 / (count - 1) as f64).collect(),
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} has non-finite values")));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl OffsetGrid {
    pub fn line(axis: Vec<f64>) -> Result<Self> {
        let g = OffsetGrid { axis_i: axis, axis_s: None };
        g.validate()?;
        Ok(g)
    }

    pub fn plane(axis_i: Vec<f64>, axis_s: Vec<f64>) -> Result<Self> {
        let g = OffsetGrid { axis_i, axis_s: Some(axis_s) };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("axis_i", &self.axis_i)?;
        if let Some(s) = &self.axis_s {
            check_axis("axis_s", s)?;
        }
        Ok(())
    }

    pub fn is_plane(&self) -> bool {
        self.axis_s.is_some()
    }

    pub fn len(&self) -> usize {
        self.axis_i.len() * self.axis_s.as_ref().map_or(1, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offsets (Hz) of point `k` in row-major order, I outermost.
    pub fn point(&self, k: usize) -> (f64, Option<f64>) {
        match &self.axis_s {
            None => (self.axis_i[k], None),
            Some(s) => (self.axis_i[k / s.len()], Some(s[k % s.len()])),
        }
    }

    fn max_abs_offset(&self) -> f64 {
        let m = |a: &[f64]| a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        m(&self.axis_i).max(self.axis_s.as_deref().map_or(0.0, m))
    }
}

/// Named quantities that can be recorded per grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    Coefficient(BasisLabel),
    MzOverM0,
    Mx,
    My,
    MxyI,
    MxyS,
    Evomq,
    SzTransfer,
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Coefficient(l) => format!("c_{}", l.symbol()),
            Observable::MzOverM0 => "mz_over_m0".into(),
            Observable::Mx => "mx".into(),
            Observable::My => "my".into(),
            Observable::MxyI => "mxy_i".into(),
            Observable::MxyS => "mxy_s".into(),
            Observable::Evomq => "evomq".into(),
            Observable::SzTransfer => "sz_transfer".into(),
        }
    }

    /// Value from a two-spin density operator decomposition. The
    /// single-spin magnetizations refer to spin I.
    pub fn evaluate(&self, c: &ProductOperatorCoeffs) -> f64 {
        use BasisLabel::*;
        match self {
            Observable::Coefficient(l) => c[*l],
            Observable::MzOverM0 => c[Iz],
            Observable::Mx => c[Ix],
            Observable::My => c[Iy],
            Observable::MxyI => c[Ix].hypot(c[Iy]),
            Observable::MxyS => c[Sx].hypot(c[Sy]),
            Observable::Evomq => evomq(c),
            Observable::SzTransfer => c[Sz],
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Ok(match t {
            "mz_over_m0" => Observable::MzOverM0,
            "mx" => Observable::Mx,
            "my" => Observable::My,
            "mxy_i" => Observable::MxyI,
            "mxy_s" => Observable::MxyS,
            "evomq" => Observable::Evomq,
            "sz_transfer" => Observable::SzTransfer,
            _ => match t.strip_prefix("c_") {
                Some(label) => Observable::Coefficient(
                    label.parse().map_err(|_| Error::UnknownObservable(s.to_string()))?,
                ),
                None => return Err(Error::UnknownObservable(s.to_string())),
            },
        })
    }
}

impl Serialize for Observable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    /// `U_0^H U_T`
    Eq33a,
    /// `U_T U_0(phase + pi)`
    Eq33b,
    /// `U_e2,Y U_e1,X`
    Echo,
}

impl Sequence {
    pub fn propagator(&self, sys: &SpinSystem, pp: &PulsePair, dt: f64) -> Result<Operator4> {
        let t = pp.duration();
        match self {
            Sequence::Eq33a => interaction_propagator(sys, pp, t, dt),
            Sequence::Eq33b => sequence_33b(sys, pp, t, dt),
            Sequence::Echo => echo_propagator(sys, pp, t, dt),
        }
    }
}

/// Direction of the single-spin propagator applied to `Iz`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `U Iz U^H`
    #[default]
    Forward,
    /// `U^H Iz U`
    Adjoint,
}

/// Compact description of a pulse for metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PulseSummary {
    Designed { spec: PulseSpec, sweep_extent_hz: f64 },
    Table { dt_s: f64, t_p_s: f64, samples: usize },
    Off { duration_s: f64 },
}

impl From<&Pulse> for PulseSummary {
    fn from(p: &Pulse) -> Self {
        match p {
            Pulse::Designed(d) => PulseSummary::Designed {
                spec: *p.spec().expect("designed pulse has a spec"),
                sweep_extent_hz: crate::pulse::rad_to_hz(d.sweep_extent()),
            },
            Pulse::Table(w) => PulseSummary::Table { dt_s: w.dt, t_p_s: w.t_p, samples: w.len() },
            Pulse::Off { duration } => PulseSummary::Off { duration_s: *duration },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub experiment: String,
    pub sequence: Option<Sequence>,
    pub direction: Option<Direction>,
    pub initial: Option<String>,
    pub j_hz: Option<f64>,
    pub dt_s: f64,
    pub pulse_i: PulseSummary,
    pub pulse_s: Option<PulseSummary>,
    /// Largest `||U^H U - 1||_F` over all points.
    pub max_unitarity_error: f64,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: OffsetGrid,
    pub columns: Vec<Column>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::UnknownObservable(name.to_string()))
    }

    /// Appends `suffix` to every column name.
    pub fn with_suffix(mut self, suffix: &str) -> Self {
        for c in &mut self.columns {
            c.name.push_str(suffix);
        }
        self
    }

    /// Writes the grid and all columns as CSV, one row per point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["offset_i_hz".to_string()];
        if self.grid.is_plane() {
            header.push("offset_s_hz".into());
        }
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for k in 0..self.grid.len() {
            line.clear();
            let (oi, os) = self.grid.point(k);
            line.push_str(&format!("{oi:.16e}"));
            if let Some(os) = os {
                line.push_str(&format!(",{os:.16e}"));
            }
            for c in &self.columns {
                line.push_str(&format!(",{:.16e}", c.values[k]));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Side-by-side columns of several results on the same grid.
pub fn merge_columns(results: Vec<SweepResult>) -> Result<SweepResult> {
    let mut iter = results.into_iter();
    let mut first = iter.next().ok_or_else(|| invalid("results", "nothing to merge"))?;
    for r in iter {
        if r.grid != first.grid {
            return Err(Error::InvalidGrid("merged results must share a grid".into()));
        }
        first.metadata.max_unitarity_error = first.metadata.max_unitarity_error.max(r.metadata.max_unitarity_error);
        first.columns.extend(r.columns);
    }
    Ok(first)
}

/// Runs `f` over `0..n` on `workers` threads, keeping index order.
fn map_points<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn check_dt(dt: f64) -> Result<f64> {
    if dt > 0.0 && dt.is_finite() {
        Ok(dt)
    } else {
        Err(invalid("dt", format!("must be finite and > 0, got {dt}")))
    }
}

/// Single-spin response to one pulse over a 1-D offset axis: records
/// `mz_over_m0`, `mx`, `my` of the rotated `Iz`.
pub fn single_spin_profile(
    pulse: &Pulse,
    grid: &OffsetGrid,
    direction: Direction,
    dt: Option<f64>,
    workers: usize,
) -> Result<SweepResult> {
    grid.validate()?;
    if grid.is_plane() {
        return Err(Error::InvalidGrid("single-spin profile needs a 1-D grid".into()));
    }
    let t_p = pulse.duration();
    let dt = check_dt(dt.unwrap_or_else(|| {
        default_dt(&PulsePair::identical(pulse.clone()), hz_to_rad(grid.max_abs_offset()), 0.0)
    }))?;
    let rows = map_points(grid.len(), workers, |k| {
        let u = single_spin_propagator(hz_to_rad(grid.axis_i[k]), pulse, 0.0, t_p, dt)?;
        let v = match direction {
            Direction::Forward => u.evolve_image_of_z(),
            Direction::Adjoint => u.frame_image_of_z(),
        };
        Ok((v, u.norm_error()))
    })?;
    let col = |name: &str, idx: usize| Column { name: name.into(), values: rows.iter().map(|r| r.0[idx]).collect() };
    Ok(SweepResult {
        grid: grid.clone(),
        columns: vec![col("mz_over_m0", 2), col("mx", 0), col("my", 1)],
        metadata: SweepMetadata {
            experiment: "profile".into(),
            sequence: None,
            direction: Some(direction),
            initial: Some(BasisLabel::Iz.symbol().into()),
            j_hz: None,
            dt_s: dt,
            pulse_i: pulse.into(),
            pulse_s: None,
            max_unitarity_error: rows.iter().fold(0.0, |m, r| m.max(r.1)),
            code_version: env!("CARGO_PKG_VERSION").into(),
        },
    })
}

/// A two-spin sweep over the offset plane.
#[derive(Clone, Debug)]
pub struct PlaneSweep {
    pub j_hz: f64,
    pub pulses: PulsePair,
    pub grid: OffsetGrid,
    pub sequence: Sequence,
    pub initial: BasisLabel,
    pub observables: Vec<Observable>,
    /// Slice length in seconds; derived from the pulses and grid when `None`.
    pub dt: Option<f64>,
}

impl PlaneSweep {
    pub fn resolved_dt(&self) -> Result<f64> {
        check_dt(self.dt.unwrap_or_else(|| default_dt(&self.pulses, hz_to_rad(self.grid.max_abs_offset()), self.j_hz)))
    }

    /// Final density operator coefficients at every grid point.
    pub fn final_states(&self, workers: usize) -> Result<(Vec<ProductOperatorCoeffs>, f64)> {
        self.grid.validate()?;
        if !self.grid.is_plane() {
            return Err(Error::InvalidGrid("two-spin sweep needs axis_s".into()));
        }
        if self.observables.is_empty() {
            return Err(invalid("observables", "at least one observable is required"));
        }
        let dt = self.resolved_dt()?;
        let rho0 = self.initial.operator();
        let rows = map_points(self.grid.len(), workers, |k| {
            let (oi, os) = self.grid.point(k);
            let sys = SpinSystem::new(hz_to_rad(oi), hz_to_rad(os.unwrap_or(0.0)), self.j_hz)?;
            let r = self.sequence.propagator(&sys, &self.pulses, dt)?;
            let rho = evolve_unchecked(&r, &rho0);
            Ok((decompose_unchecked(&rho), r.unitarity_error()))
        })?;
        let max_err = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
        Ok((rows.into_iter().map(|r| r.0).collect(), max_err))
    }

    pub fn run(&self, workers: usize) -> Result<SweepResult> {
        let (states, max_err) = self.final_states(workers)?;
        let columns = self
            .observables
            .iter()
            .map(|o| Column { name: o.name(), values: states.iter().map(|c| o.evaluate(c)).collect() })
            .collect();
        Ok(SweepResult {
            grid: self.grid.clone(),
            columns,
            metadata: SweepMetadata {
                experiment: match self.sequence {
                    Sequence::Echo => "echo".into(),
                    _ => "sweep".into(),
                },
                sequence: Some(self.sequence),
                direction: None,
                initial: Some(self.initial.symbol().into()),
                j_hz: Some(self.j_hz),
                dt_s: self.resolved_dt()?,
                pulse_i: (&self.pulses.pulse_i).into(),
                pulse_s: Some((&self.pulses.pulse_s).into()),
                max_unitarity_error: max_err,
                code_version: env!("CARGO_PKG_VERSION").into(),
            },
        })
    }
}

/// Sweeps a two-spin sequence over the offset plane.
#[allow(clippy::too_many_arguments)]
pub fn offset_plane_sweep(
    j_hz: f64,
    pulses: &PulsePair,
    grid: &OffsetGrid,
    sequence: Sequence,
    initial: BasisLabel,
    observables: &[Observable],
    dt: Option<f64>,
    workers: usize,
) -> Result<SweepResult> {
    PlaneSweep {
        j_hz,
        pulses: pulses.clone(),
        grid: grid.clone(),
        sequence,
        initial,
        observables: observables.to_vec(),
        dt,
    }
    .run(workers)
}

/// Polarization-transfer echo from `Iz`: records `sz_transfer`, `evomq`
/// and `c_Iz`.
pub fn hh_echo_sequence(j_hz: f64, pulses: &PulsePair, grid: &OffsetGrid, dt: Option<f64>, workers: usize) -> Result<SweepResult> {
    offset_plane_sweep(
        j_hz,
        pulses,
        grid,
        Sequence::Echo,
        BasisLabel::Iz,
        &[Observable::SzTransfer, Observable::Evomq, Observable::Coefficient(BasisLabel::Iz)],
        dt,
        workers,
    )
}

/// Coefficient of `target` in a final decomposition.
pub fn transfer_efficiency(c: &ProductOperatorCoeffs, target: BasisLabel) -> f64 {
    c[target]
}

/// Points pass when `|value - target| <= threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCriterion {
    pub target: f64,
    pub threshold: f64,
}

impl BandCriterion {
    /// `|value| <= threshold` (90 degree excitation).
    pub fn excitation(threshold: f64) -> Self {
        BandCriterion { target: 0.0, threshold }
    }

    /// `value <= -1 + threshold` for values bounded below by -1 (inversion).
    pub fn inversion(threshold: f64) -> Self {
        BandCriterion { target: -1.0, threshold }
    }

    fn excess(&self, v: f64) -> f64 {
        (v - self.target).abs() - self.threshold
    }

    pub fn accepts(&self, v: f64) -> bool {
        self.excess(v) <= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEdges {
    pub first_index: usize,
    pub last_index: usize,
    /// Edges in Hz, linearly interpolated to where the criterion crosses
    /// between a failing and a passing sample.
    pub w_minus: f64,
    pub w_plus: f64,
}

impl BandEdges {
    pub fn width(&self) -> f64 {
        self.w_plus - self.w_minus
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub observable: String,
    pub criterion: BandCriterion,
    /// `None` when no point satisfies the criterion.
    pub edges: Option<BandEdges>,
}

impl BandEstimate {
    pub fn width(&self) -> f64 {
        self.edges.map_or(0.0, |e| e.width())
    }
}

/// Largest contiguous run of accepted points on a 1-D profile. Ties go to
/// the run at lower offsets.
pub fn estimate_band(profile: &SweepResult, observable: &str, criterion: BandCriterion) -> Result<BandEstimate> {
    if profile.grid.is_plane() {
        return Err(Error::InvalidGrid("band estimation needs a 1-D profile".into()));
    }
    let v = profile.require(observable)?;
    let x = &profile.grid.axis_i;
    let mut best: Option<(usize, usize)> = None;
    let mut k = 0;
    while k < v.len() {
        if !criterion.accepts(v[k]) {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < v.len() && criterion.accepts(v[k + 1]) {
            k += 1;
        }
        if best.is_none_or(|(a, b)| k - start > b - a) {
            best = Some((start, k));
        }
        k += 1;
    }
    let edges = best.map(|(a, b)| {
        let cross = |pass: usize, fail: usize| {
            let (ep, ef) = (criterion.excess(v[pass]), criterion.excess(v[fail]));
            let frac = if ef > ep { -ep / (ef - ep) } else { 0.0 };
            x[pass] + frac * (x[fail] - x[pass])
        };
        BandEdges {
            first_index: a,
            last_index: b,
            w_minus: if a == 0 { x[0] } else { cross(a, a - 1) },
            w_plus: if b + 1 == v.len() { x[b] } else { cross(b, b + 1) },
        }
    });
    Ok(BandEstimate { observable: observable.into(), criterion, edges })
}

/// Largest 4-connected set of grid points with `column >= threshold` on a
/// plane sweep, with its offset extent and value statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionEstimate {
    pub count: usize,
    pub extent_i_hz: f64,
    pub extent_s_hz: f64,
    pub mean: f64,
    pub std_dev: f64,
}

pub fn connected_region(result: &SweepResult, column: &str, threshold: f64) -> Result<Option<RegionEstimate>> {
    let v = result.require(column)?;
    let axis_s = result
        .grid
        .axis_s
        .as_ref()
        .ok_or_else(|| Error::InvalidGrid("region estimation needs a plane sweep".into()))?;
    let (ni, ns) = (result.grid.axis_i.len(), axis_s.len());
    let mut seen = vec![false; v.len()];
    let mut best: Option<Vec<usize>> = None;
    for start in 0..v.len() {
        if seen[start] || v[start] < threshold {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            members.push(k);
            let (r, c) = (k / ns, k % ns);
            let mut push = |rr: usize, cc: usize| {
                let n = rr * ns + cc;
                if !seen[n] && v[n] >= threshold {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < ni {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < ns {
                push(r, c + 1);
            }
        }
        if best.as_ref().is_none_or(|b| members.len() > b.len()) {
            best = Some(members);
        }
    }
    Ok(best.map(|mut m| {
        m.sort_unstable();
        let span = |f: &dyn Fn(usize) -> f64| {
            let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(f(k)), hi.max(f(k))));
            hi - lo
        };
        let n = m.len() as f64;
        let mean = m.iter().map(|&k| v[k]).sum::<f64>() / n;
        let var = m.iter().map(|&k| (v[k] - mean).powi(2)).sum::<f64>() / n;
        RegionEstimate {
            count: m.len(),
            extent_i_hz: span(&|k| result.grid.axis_i[k / ns]),
            extent_s_hz: span(&|k| axis_s[k % ns]),
            mean,
            std_dev: var.sqrt(),
        }
    }))
}
