//! Python bindings for the `qahh` two-spin simulator.
//!
//! Frequencies cross the boundary in Hz and times in seconds; results come
//! back as plain lists and dicts so they drop straight into numpy or pandas.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use qahh::dynamics::{default_dt, PulsePair, SpinSystem};
use qahh::experiments::{
    estimate_band, single_spin_profile, BandCriterion, Direction, OffsetGrid, PlaneSweep, Sequence, SweepResult,
};
use qahh::mq::{analytic_transfer, ZQDQParams};
use qahh::operators::{decompose as decompose_op, BasisLabel, Operator4};
use qahh::pulse::{beta_from_truncation, hz_to_rad, rad_to_hz, DesignRule, Modulation, PulseShape, PulseSpec, SweepOrigin};

fn value_err(e: qahh::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn columns(r: SweepResult) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    let n = r.grid.len();
    let (mut oi, mut os) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (i, s) = r.grid.point(k);
        oi.push(i);
        os.extend(s);
    }
    out.insert("offset_i_hz".to_string(), oi);
    if r.grid.is_plane() {
        out.insert("offset_s_hz".to_string(), os);
    }
    for c in r.columns {
        out.insert(c.name, c.values);
    }
    out
}

/// An RF pulse on one channel: an analytic sech design or a sampled table.
#[pyclass(name = "Pulse", module = "qahh_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPulse {
    inner: qahh::Pulse,
}

#[pymethods]
impl PyPulse {
    /// Sech pulse. Give exactly one of `beta` (1/s) or `truncation` (edge
    /// amplitude as a fraction of the peak).
    #[staticmethod]
    #[pyo3(signature = (shape, omega0_hz, p, t_p, beta=None, truncation=None, design_rule="eq23", phase0=0.0, sweep_sign=1.0, sweep_origin="start"))]
    #[allow(clippy::too_many_arguments)]
    fn sech(
        shape: &str,
        omega0_hz: f64,
        p: f64,
        t_p: f64,
        beta: Option<f64>,
        truncation: Option<f64>,
        design_rule: &str,
        phase0: f64,
        sweep_sign: f64,
        sweep_origin: &str,
    ) -> PyResult<Self> {
        let shape: PulseShape = parse("shape", shape)?;
        let rule: DesignRule = parse("design rule", design_rule)?;
        let mut spec = PulseSpec::new(shape, hz_to_rad(omega0_hz), 1.0, p, t_p, rule);
        spec.beta = match (beta, truncation) {
            (Some(b), None) => b,
            (None, Some(x)) => beta_from_truncation(x, spec.half_width()).map_err(value_err)?,
            _ => return Err(PyValueError::new_err("give exactly one of beta, truncation")),
        };
        spec.phase0 = phase0;
        spec.sweep_sign = sweep_sign;
        spec.sweep_origin = parse::<SweepOrigin>("sweep origin", sweep_origin)?;
        Ok(PyPulse { inner: qahh::Pulse::designed(spec).map_err(value_err)? })
    }

    /// Loads a waveform table written by `qahh design-pulse`.
    #[staticmethod]
    fn from_table(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let w = qahh::PulseWaveform::read_table(BufReader::new(f)).map_err(value_err)?;
        Ok(PyPulse { inner: qahh::Pulse::Table(w) })
    }

    /// An empty channel lasting `duration` seconds.
    #[staticmethod]
    fn off(duration: f64) -> Self {
        PyPulse { inner: qahh::Pulse::Off { duration } }
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    #[getter]
    fn sweep_extent_hz(&self) -> f64 {
        rad_to_hz(self.inner.sweep_extent())
    }

    /// Amplitude in Hz at time `t`.
    fn amplitude_hz(&self, t: f64) -> f64 {
        rad_to_hz(self.inner.amplitude(t))
    }

    /// RF phase in rad at time `t`.
    fn phase(&self, t: f64) -> f64 {
        self.inner.phase(t)
    }

    /// Samples the waveform every `dt` seconds into `t`, `amp`, `freq`, `phase`
    /// lists (rad/s and rad, as in the table format).
    fn sample(&self, dt: f64) -> PyResult<BTreeMap<&'static str, Vec<f64>>> {
        let qahh::Pulse::Designed(d) = &self.inner else {
            return Err(PyValueError::new_err("only designed pulses can be resampled"));
        };
        let w = d.sample(dt).map_err(value_err)?;
        let t = (0..w.len()).map(|k| w.time(k)).collect();
        Ok(BTreeMap::from([("t", t), ("amp", w.amp), ("freq", w.freq), ("phase", w.phase)]))
    }

    /// Default slice length for this pulse at offsets up to `max_offset_hz`.
    #[pyo3(signature = (max_offset_hz=0.0, j_hz=0.0))]
    fn default_dt(&self, max_offset_hz: f64, j_hz: f64) -> f64 {
        default_dt(&PulsePair::identical(self.inner.clone()), hz_to_rad(max_offset_hz), j_hz)
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            qahh::Pulse::Designed(d) => {
                let s = &d.spec;
                format!(
                    "Pulse.sech({:?}, omega0_hz={}, p={}, t_p={}, beta={})",
                    s.shape,
                    rad_to_hz(s.omega0),
                    s.p,
                    s.t_p,
                    s.beta
                )
            }
            qahh::Pulse::Table(w) => format!("Pulse.table(samples={}, dt={})", w.len(), w.dt),
            qahh::Pulse::Off { duration } => format!("Pulse.off({duration})"),
        }
    }
}

fn pair(pulse: &PyPulse, pulse_s: Option<&PyPulse>) -> PyResult<PulsePair> {
    let ps = pulse_s.unwrap_or(pulse).inner.clone();
    PulsePair::new(pulse.inner.clone(), ps).map_err(value_err)
}

/// Single-spin response to `pulse` over `offsets_hz`: `mz_over_m0`, `mx`, `my`.
#[pyfunction]
#[pyo3(signature = (pulse, offsets_hz, direction="forward", dt=None, workers=1))]
fn profile(
    pulse: &PyPulse,
    offsets_hz: Vec<f64>,
    direction: &str,
    dt: Option<f64>,
    workers: usize,
) -> PyResult<BTreeMap<String, Vec<f64>>> {
    let grid = OffsetGrid::line(offsets_hz).map_err(value_err)?;
    let direction: Direction = parse("direction", direction)?;
    let r = single_spin_profile(&pulse.inner, &grid, direction, dt, workers).map_err(value_err)?;
    Ok(columns(r))
}

/// Largest contiguous band of `profile(...)["mz_over_m0"]` meeting the
/// criterion, as `(low_hz, high_hz)`, or `None` when no offset qualifies.
#[pyfunction]
#[pyo3(signature = (pulse, offsets_hz, kind, threshold, dt=None))]
fn band(pulse: &PyPulse, offsets_hz: Vec<f64>, kind: &str, threshold: f64, dt: Option<f64>) -> PyResult<Option<(f64, f64)>> {
    let criterion = match kind {
        "excitation" => BandCriterion::excitation(threshold),
        "inversion" => BandCriterion::inversion(threshold),
        other => return Err(PyValueError::new_err(format!("unknown band kind `{other}`"))),
    };
    let grid = OffsetGrid::line(offsets_hz).map_err(value_err)?;
    let r = single_spin_profile(&pulse.inner, &grid, Direction::Forward, dt, 1).map_err(value_err)?;
    let est = estimate_band(&r, "mz_over_m0", criterion).map_err(value_err)?;
    Ok(est.edges.map(|e| (e.w_minus, e.w_plus)))
}

/// Two-spin offset-plane sweep. `sequence` is `eq33a`, `eq33b` or `echo`;
/// observables use the CSV column names (`evomq`, `c_2IySz`, `sz_transfer`...).
#[pyfunction]
#[pyo3(signature = (pulse, offsets_i_hz, offsets_s_hz, j_hz, sequence, observables, initial="Iz", pulse_s=None, dt=None, workers=1))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    pulse: &PyPulse,
    offsets_i_hz: Vec<f64>,
    offsets_s_hz: Vec<f64>,
    j_hz: f64,
    sequence: &str,
    observables: Vec<String>,
    initial: &str,
    pulse_s: Option<&PyPulse>,
    dt: Option<f64>,
    workers: usize,
) -> PyResult<BTreeMap<String, Vec<f64>>> {
    let sweep = PlaneSweep {
        j_hz,
        pulses: pair(pulse, pulse_s)?,
        grid: OffsetGrid::plane(offsets_i_hz, offsets_s_hz).map_err(value_err)?,
        sequence: parse::<Sequence>("sequence", sequence)?,
        initial: initial.parse::<BasisLabel>().map_err(|_| PyValueError::new_err(format!("unknown basis label `{initial}`")))?,
        observables: observables
            .iter()
            .map(|s| s.parse().map_err(value_err))
            .collect::<PyResult<_>>()?,
        dt,
    };
    Ok(columns(sweep.run(workers).map_err(value_err)?))
}

/// The 4x4 propagator of `sequence` at one offset pair, as nested lists of
/// complex numbers in the |aa>, |ab>, |ba>, |bb> basis.
#[pyfunction]
#[pyo3(signature = (pulse, offset_i_hz, offset_s_hz, j_hz, sequence, pulse_s=None, dt=None))]
fn propagator(
    pulse: &PyPulse,
    offset_i_hz: f64,
    offset_s_hz: f64,
    j_hz: f64,
    sequence: &str,
    pulse_s: Option<&PyPulse>,
    dt: Option<f64>,
) -> PyResult<Vec<Vec<Complex64>>> {
    let pp = pair(pulse, pulse_s)?;
    let sys = SpinSystem::new(hz_to_rad(offset_i_hz), hz_to_rad(offset_s_hz), j_hz).map_err(value_err)?;
    let dt = dt.unwrap_or_else(|| default_dt(&pp, hz_to_rad(offset_i_hz.abs().max(offset_s_hz.abs())), j_hz));
    let seq: Sequence = parse("sequence", sequence)?;
    let u = seq.propagator(&sys, &pp, dt).map_err(value_err)?;
    Ok(u.to_rows().iter().map(|r| r.to_vec()).collect())
}

/// Product-operator coefficients of a Hermitian 4x4 matrix, keyed by symbol.
#[pyfunction]
fn decompose(matrix: Vec<Vec<Complex64>>) -> PyResult<BTreeMap<&'static str, f64>> {
    if matrix.len() != 4 || matrix.iter().any(|r| r.len() != 4) {
        return Err(PyValueError::new_err("expected a 4x4 matrix"));
    }
    let rows: [[Complex64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| matrix[r][c]));
    let c = decompose_op(&Operator4::from_rows(rows)).map_err(value_err)?;
    Ok(c.iter().map(|(l, v)| (l.symbol(), v)).collect())
}

/// Closed-form image of `Iz` under a constant even-order coupling for time `t`.
#[pyfunction]
fn even_order_transfer(jx_z: f64, jy_z: f64, jx_d: f64, jy_d: f64, t: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let zp = ZQDQParams::from_components(jx_z, jy_z, jx_d, jy_d);
    let tc = analytic_transfer(&zp, t).map_err(value_err)?;
    Ok(BTreeMap::from([
        ("Iz", tc.alpha),
        ("Sz", tc.gamma),
        ("2IxSx", tc.beta_xx),
        ("2IxSy", tc.beta_xy),
        ("2IySx", tc.beta_yx),
        ("2IySy", tc.beta_yy),
    ]))
}

/// Runs the invariant suite; returns `(name, passed, worst, tolerance)` rows.
#[pyfunction]
#[pyo3(signature = (draws=200, seed=1))]
fn validate(py: Python<'_>, draws: usize, seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let rows = py.detach(|| qahh::validation::run_suite(draws, seed)).map_err(value_err)?;
    Ok(rows.into_iter().map(|o| (o.name.to_string(), o.passed, o.worst, o.tolerance)).collect())
}

#[pymodule]
fn qahh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPulse>()?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(band, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(propagator, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(even_order_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
