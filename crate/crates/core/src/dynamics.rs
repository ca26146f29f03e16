//! Time-dependent two-spin Hamiltonians and their time-ordered propagators.
//!
//! All frequencies are rad/s except the scalar coupling, which is kept in Hz
//! and enters as `pi J 2IzSz`. Propagators are ordered products of slice
//! exponentials evaluated at slice midpoints.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{expm_hermitian_unchecked, BasisLabel, Operator4, C64};
use crate::pulse::{Modulation, Pulse};
use crate::su2::{tensor, Su2};

/// Chemical shifts (rad/s, carrier frame) and scalar coupling (Hz).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub omega_i: f64,
    pub omega_s: f64,
    pub j: f64,
}

impl SpinSystem {
    pub fn new(omega_i: f64, omega_s: f64, j: f64) -> Result<Self> {
        let sys = SpinSystem { omega_i, omega_s, j };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_i.is_finite() && self.omega_s.is_finite()) {
            return Err(invalid("omega", "chemical shifts must be finite"));
        }
        if !self.j.is_finite() {
            return Err(invalid("j", "must be finite"));
        }
        Ok(())
    }

    pub fn uncoupled(&self) -> SpinSystem {
        SpinSystem { j: 0.0, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spin {
    I,
    S,
}

/// Two pulses applied simultaneously, one per spin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    pub pulse_i: Pulse,
    pub pulse_s: Pulse,
}

impl PulsePair {
    pub fn new(pulse_i: Pulse, pulse_s: Pulse) -> Result<Self> {
        let (a, b) = (pulse_i.duration(), pulse_s.duration());
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
            return Err(Error::PulsePair(format!("durations differ: {a} s vs {b} s")));
        }
        if let (Pulse::Table(x), Pulse::Table(y)) = (&pulse_i, &pulse_s) {
            if (x.dt - y.dt).abs() > 1e-12 * x.dt {
                return Err(Error::PulsePair("tabulated pulses must share dt".into()));
            }
        }
        Ok(PulsePair { pulse_i, pulse_s })
    }

    /// The same pulse on both channels.
    pub fn identical(pulse: Pulse) -> Self {
        PulsePair { pulse_i: pulse.clone(), pulse_s: pulse }
    }

    /// Free evolution for `duration` seconds.
    pub fn off(duration: f64) -> Self {
        PulsePair::identical(Pulse::Off { duration })
    }

    pub fn duration(&self) -> f64 {
        self.pulse_i.duration()
    }

    /// Both channels shifted by the same RF phase.
    pub fn with_phase_shift(&self, dphi: f64) -> PulsePair {
        PulsePair { pulse_i: self.pulse_i.with_phase_shift(dphi), pulse_s: self.pulse_s.with_phase_shift(dphi) }
    }

    fn pulse(&self, spin: Spin) -> &Pulse {
        match spin {
            Spin::I => &self.pulse_i,
            Spin::S => &self.pulse_s,
        }
    }

    fn max_sweep_extent(&self) -> f64 {
        self.pulse_i.sweep_extent().max(self.pulse_s.sweep_extent())
    }

    fn peak_amplitude(&self) -> f64 {
        self.pulse_i.peak_amplitude().max(self.pulse_s.peak_amplitude())
    }
}

/// Default slice length `1 / (50 nu_max)` where `nu_max` (Hz) is the larger of
/// the largest reachable resonance offset, the peak RF amplitude and `|J|`.
///
/// `max_offset` is the largest `|chemical shift|` in rad/s.
pub fn default_dt(pp: &PulsePair, max_offset: f64, j_hz: f64) -> f64 {
    let nu_offset = (max_offset.abs() + pp.max_sweep_extent()) / (2.0 * PI);
    let nu_rf = pp.peak_amplitude() / (2.0 * PI);
    let nu_max = nu_offset.max(nu_rf).max(j_hz.abs()).max(1.0);
    1.0 / (50.0 * nu_max)
}

/// Hamiltonian with explicit RF amplitudes/phases, rad/s.
#[inline]
fn hamiltonian_entries(sys: &SpinSystem, amp_i: f64, phase_i: f64, amp_s: f64, phase_s: f64) -> Operator4 {
    let (oi, os, jz) = (0.5 * sys.omega_i, 0.5 * sys.omega_s, 0.5 * PI * sys.j);
    let mut h = Operator4::from_diagonal([oi + os + jz, oi - os - jz, -oi + os - jz, -oi - os + jz]);
    let ti = C64::from_polar(0.5 * amp_i, -phase_i);
    let ts = C64::from_polar(0.5 * amp_s, -phase_s);
    let m = &mut h.0;
    m[(0, 2)] = ti;
    m[(1, 3)] = ti;
    m[(2, 0)] = ti.conj();
    m[(3, 1)] = ti.conj();
    m[(0, 1)] = ts;
    m[(2, 3)] = ts;
    m[(1, 0)] = ts.conj();
    m[(3, 2)] = ts.conj();
    h
}

#[inline]
fn hamiltonian_unchecked(sys: &SpinSystem, pp: &PulsePair, t: f64) -> Operator4 {
    hamiltonian_entries(
        sys,
        pp.pulse_i.amplitude(t),
        pp.pulse_i.phase(t),
        pp.pulse_s.amplitude(t),
        pp.pulse_s.phase(t),
    )
}

fn check_time(t: f64, t_p: f64) -> Result<()> {
    if !(0.0..=t_p * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::TimeOutOfRange { t, t_p });
    }
    Ok(())
}

/// Total rotating-frame Hamiltonian (rad/s) at time `t`.
pub fn hamiltonian_total(sys: &SpinSystem, pp: &PulsePair, t: f64) -> Result<Operator4> {
    check_time(t, pp.duration())?;
    Ok(hamiltonian_unchecked(sys, pp, t))
}

/// Coupling-free part of the Hamiltonian.
pub fn hamiltonian_free(sys: &SpinSystem, pp: &PulsePair, t: f64) -> Result<Operator4> {
    hamiltonian_total(&sys.uncoupled(), pp, t)
}

/// Number of slices and slice length covering `[t0, t1]` with slices no longer than `dt`.
pub fn slicing(t0: f64, t1: f64, dt: f64) -> (usize, f64) {
    let span = t1 - t0;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

fn check_interval(t0: f64, t1: f64, dt: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(invalid("t1", format!("need finite t1 >= t0, got [{t0}, {t1}]")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    Ok(())
}

/// Time-ordered propagator of `h(t)` over `[t0, t1]`: product of
/// `exp(-i h(t_k + dt_k/2) dt_k)`, later slices on the left.
pub fn propagate<F>(h: F, t0: f64, t1: f64, dt: f64) -> Result<Operator4>
where
    F: Fn(f64) -> Operator4,
{
    check_interval(t0, t1, dt)?;
    let (n, step) = slicing(t0, t1, dt);
    let mut u = Operator4::identity();
    for k in 0..n {
        let mid = t0 + (k as f64 + 0.5) * step;
        let hk = h(mid);
        if !hk.is_finite() {
            return Err(Error::NonFinite);
        }
        u = expm_hermitian_unchecked(&hk, step) * u;
    }
    Ok(u)
}

/// Single-spin propagator for a spin at `omega` (rad/s) driven by `pulse`.
pub fn single_spin_propagator(omega: f64, pulse: &Pulse, t0: f64, t1: f64, dt: f64) -> Result<Su2> {
    check_interval(t0, t1, dt)?;
    let (n, step) = slicing(t0, t1, dt);
    Ok(single_spin_steps(omega, pulse, Su2::IDENTITY, t0, n, step))
}

#[inline]
fn single_spin_steps(omega: f64, pulse: &Pulse, start: Su2, t0: f64, n: usize, step: f64) -> Su2 {
    let mut u = start;
    for k in 0..n {
        let mid = t0 + (k as f64 + 0.5) * step;
        let a = pulse.amplitude(mid);
        let (s, c) = pulse.phase(mid).sin_cos();
        u = Su2::rotation(a * c, a * s, omega, step).then_after(&u);
    }
    u
}

/// Coupling-free propagator `U_0(t)`, built as the tensor product of the two
/// single-spin propagators.
pub fn propagator_u0(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    sys.validate()?;
    check_time(t, pp.duration())?;
    let ui = single_spin_propagator(sys.omega_i, &pp.pulse_i, 0.0, t, dt)?;
    let us = single_spin_propagator(sys.omega_s, &pp.pulse_s, 0.0, t, dt)?;
    Ok(tensor(&ui, &us))
}

/// Full propagator `U_T(t)` including the scalar coupling.
pub fn propagator_ut(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    sys.validate()?;
    check_time(t, pp.duration())?;
    propagate(|tm| hamiltonian_unchecked(sys, pp, tm), 0.0, t, dt)
}

/// `U_0(t)^H U_T(t)`.
pub fn interaction_propagator(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    let u0 = propagator_u0(sys, pp, t, dt)?;
    let ut = propagator_ut(sys, pp, t, dt)?;
    Ok(u0.adjoint() * ut)
}

/// `U_T(t) U_0^{(phase + pi)}(t)`: the coupling-free factor is computed with
/// both pulse phases shifted by pi and acts first.
pub fn sequence_33b(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    let ut = propagator_ut(sys, pp, t, dt)?;
    let u0_shifted = propagator_u0(sys, &pp.with_phase_shift(PI), t, dt)?;
    Ok(ut * u0_shifted)
}

/// Polarization-transfer echo `U_e2,Y U_e1,X`, each block being
/// `U_0^H U_T` with both pulses at phase 0 (X) or pi/2 (Y).
pub fn echo_propagator(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    let ue1 = interaction_propagator(sys, &pp.with_phase_shift(0.0), t, dt)?;
    let ue2 = interaction_propagator(sys, &pp.with_phase_shift(0.5 * PI), t, dt)?;
    Ok(ue2 * ue1)
}

/// Components of `U_0^H q_z U_0` on `(q_z, q_x, q_y)` for one spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RotationTriple {
    pub const UNCHANGED: RotationTriple = RotationTriple { alpha: 1.0, beta: 0.0, gamma: 0.0 };

    pub fn norm_sqr(&self) -> f64 {
        self.alpha * self.alpha + self.beta * self.beta + self.gamma * self.gamma
    }

    /// Components ordered `(x, y, z)`.
    pub fn xyz(&self) -> [f64; 3] {
        [self.beta, self.gamma, self.alpha]
    }

    pub fn from_su2(u: &Su2) -> Self {
        let [x, y, z] = u.frame_image_of_z();
        RotationTriple { alpha: z, beta: x, gamma: y }
    }
}

/// Rotation coefficients for `spin` under its own pulse only.
pub fn rotation_coefficients(sys: &SpinSystem, pulse: &Pulse, spin: Spin, t: f64, dt: f64) -> Result<RotationTriple> {
    sys.validate()?;
    check_time(t, pulse.duration())?;
    let omega = match spin {
        Spin::I => sys.omega_i,
        Spin::S => sys.omega_s,
    };
    let u = single_spin_propagator(omega, pulse, 0.0, t, dt)?;
    Ok(RotationTriple::from_su2(&u))
}

/// Rotation coefficients of both spins of a pair.
pub fn rotation_coefficients_pair(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<(RotationTriple, RotationTriple)> {
    Ok((
        rotation_coefficients(sys, pp.pulse(Spin::I), Spin::I, t, dt)?,
        rotation_coefficients(sys, pp.pulse(Spin::S), Spin::S, t, dt)?,
    ))
}

/// Interaction-frame coupling coefficients `J_pq` (Hz), indexed `[p][q]` with
/// `0, 1, 2 = x, y, z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTensor {
    pub j: [[f64; 3]; 3],
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

impl CouplingTensor {
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.j[p][q]
    }

    pub fn jzz(&self) -> f64 {
        self.j[Z][Z]
    }
    pub fn jxx(&self) -> f64 {
        self.j[X][X]
    }
    pub fn jxy(&self) -> f64 {
        self.j[X][Y]
    }
    pub fn jyx(&self) -> f64 {
        self.j[Y][X]
    }
    pub fn jyy(&self) -> f64 {
        self.j[Y][Y]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.j.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `pi sum_pq J_pq 2 I_p S_q`, rad/s.
    pub fn hamiltonian(&self) -> Operator4 {
        use BasisLabel::*;
        let labels = [[IxSx, IxSy, IxSz], [IySx, IySy, IySz], [IzSx, IzSy, IzSz]];
        let mut h = Operator4::zeros();
        for p in 0..3 {
            for q in 0..3 {
                if self.j[p][q] != 0.0 {
                    h = h + labels[p][q].operator().scale(PI * self.j[p][q]);
                }
            }
        }
        h
    }
}

/// `J_pq = J c^I_p c^S_q` from the two rotation triples.
pub fn coupling_tensor(ti: &RotationTriple, ts: &RotationTriple, j: f64) -> Result<CouplingTensor> {
    for t in [ti, ts] {
        let n = t.norm_sqr();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Unnormalized(n));
        }
    }
    let (ci, cs) = (ti.xyz(), ts.xyz());
    let mut out = [[0.0; 3]; 3];
    for p in 0..3 {
        for q in 0..3 {
            out[p][q] = j * ci[p] * cs[q];
        }
    }
    Ok(CouplingTensor { j: out })
}

/// Tracks `U_0(t)` forward in time to evaluate the interaction-frame
/// Hamiltonian at non-decreasing instants. Pulses are off past their duration.
pub struct InteractionFrame<'a> {
    sys: SpinSystem,
    pp: &'a PulsePair,
    dt: f64,
    t: f64,
    ui: Su2,
    us: Su2,
}

impl<'a> InteractionFrame<'a> {
    pub fn new(sys: &SpinSystem, pp: &'a PulsePair, dt: f64) -> Result<Self> {
        sys.validate()?;
        check_interval(0.0, 0.0, dt)?;
        Ok(InteractionFrame { sys: *sys, pp, dt, t: 0.0, ui: Su2::IDENTITY, us: Su2::IDENTITY })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.t {
            return Err(invalid("t", format!("frame cannot move backwards ({t} < {})", self.t)));
        }
        let (n, step) = slicing(self.t, t, self.dt);
        self.ui = single_spin_steps(self.sys.omega_i, &self.pp.pulse_i, self.ui, self.t, n, step);
        self.us = single_spin_steps(self.sys.omega_s, &self.pp.pulse_s, self.us, self.t, n, step);
        self.t = t;
        Ok(())
    }

    pub fn u0(&self) -> Operator4 {
        tensor(&self.ui, &self.us)
    }

    pub fn rotation_triples(&self) -> (RotationTriple, RotationTriple) {
        (RotationTriple::from_su2(&self.ui), RotationTriple::from_su2(&self.us))
    }

    pub fn coupling_tensor(&self) -> CouplingTensor {
        let (ti, ts) = self.rotation_triples();
        // triples from SU(2) images are normalized to rounding
        let (ci, cs) = (ti.xyz(), ts.xyz());
        let mut j = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                j[p][q] = self.sys.j * ci[p] * cs[q];
            }
        }
        CouplingTensor { j }
    }

    /// Interaction-frame Hamiltonian (rad/s) at `t`.
    pub fn hamiltonian_at(&mut self, t: f64) -> Result<Operator4> {
        self.advance_to(t)?;
        Ok(self.coupling_tensor().hamiltonian())
    }
}

/// Propagates the interaction-frame Hamiltonian directly, with the frame
/// evaluated at each slice midpoint. Independent route to `U_0^H U_T`.
pub fn interaction_propagator_direct(sys: &SpinSystem, pp: &PulsePair, t: f64, dt: f64) -> Result<Operator4> {
    check_time(t, pp.duration())?;
    let (n, step) = slicing(0.0, t, dt);
    let mut frame = InteractionFrame::new(sys, pp, 0.5 * step)?;
    let mut u = Operator4::identity();
    for k in 0..n {
        let mid = (k as f64 + 0.5) * step;
        let h = frame.hamiltonian_at(mid)?;
        u = expm_hermitian_unchecked(&h, step) * u;
        frame.advance_to((k + 1) as f64 * step)?;
    }
    Ok(u)
}
