//! Runtime invariant suite behind the `validate` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{
    coupling_tensor, default_dt, hamiltonian_free, interaction_propagator, interaction_propagator_direct, propagate, propagator_u0, propagator_ut,
    rotation_coefficients, PulsePair, RotationTriple, Spin, SpinSystem,
};
use crate::error::Result;
use crate::experiments::{linspace, offset_plane_sweep, OffsetGrid, Observable, Sequence};
use crate::mq::{
    analytic_even_order_propagator, analytic_transfer, analytic_transfer_s, check_block_structure, hamiltonian_dq,
    hamiltonian_even, hamiltonian_zq, TransferCoeffs, ZQDQParams,
};
use crate::operators::{
    basis, commutator, decompose, evolve, expm_hermitian, frame_transform, BasisLabel, Operator4, C64,
};
use crate::pulse::{
    beta_from_truncation, hz_to_rad, DesignRule, DesignedPulse, Pulse, PulseShape, PulseSpec, SweepOrigin,
};
use crate::su2::Su2;

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn new(name: &'static str, worst: f64, tolerance: f64) -> Self {
        CheckOutcome { name, passed: worst.is_finite() && worst <= tolerance, worst, tolerance }
    }
}

/// Parameters of the backward-half 90 degree pulse used by several checks.
pub fn qa90_spec() -> PulseSpec {
    let t_p = 3.6e-3;
    PulseSpec::new(PulseShape::SechBackwardHalf, hz_to_rad(5000.0), 10.5966 / t_p, 2.3, t_p, DesignRule::Eq23)
}

/// Full-sech inversion pulse of duration `t_p`, truncated at 1% and swept
/// symmetrically about the carrier.
pub fn inversion_spec(t_p: f64) -> Result<PulseSpec> {
    let mut spec = PulseSpec::new(
        PulseShape::SechFull,
        hz_to_rad(5000.0),
        beta_from_truncation(0.01, 0.5 * t_p)?,
        1.0 / 3.0,
        t_p,
        DesignRule::Eq23,
    );
    spec.sweep_origin = SweepOrigin::Center;
    Ok(spec)
}

fn random_hermitian(rng: &mut ChaCha8Rng, scale: f64) -> Operator4 {
    let mut h = Operator4::zeros();
    for r in 0..4 {
        h.0[(r, r)] = C64::new(scale * rng.gen_range(-1.0..1.0), 0.0);
        for c in r + 1..4 {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            h.0[(r, c)] = z;
            h.0[(c, r)] = z.conj();
        }
    }
    h
}

pub fn random_zqdq(rng: &mut ChaCha8Rng) -> (ZQDQParams, f64) {
    let mut j = || rng.gen_range(-200.0..200.0);
    let zp = ZQDQParams::from_components(j(), j(), j(), j());
    (zp, rng.gen_range(0.0..0.02))
}

fn random_su2(rng: &mut ChaCha8Rng) -> Su2 {
    Su2::rotation(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..10.0))
}

fn transfer_gap(a: &TransferCoeffs, b: &TransferCoeffs) -> f64 {
    [
        a.alpha - b.alpha,
        a.gamma - b.gamma,
        a.beta_xx - b.beta_xx,
        a.beta_xy - b.beta_xy,
        a.beta_yx - b.beta_yx,
        a.beta_yy - b.beta_yy,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Runs every check; `draws` sets the size of the randomized ones.
pub fn run_suite(draws: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let b = basis();
    let mut worst = 0.0f64;
    for (la, a) in &b {
        for (lb, bb) in &b {
            let want = if la == lb { 1.0 } else { 0.0 };
            worst = worst.max(((a.clone() * *bb).trace() - want).norm());
        }
    }
    out.push(CheckOutcome::new("basis_orthonormal", worst, 1e-15));

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let h = random_hermitian(&mut rng, 1.0);
        worst = worst.max(decompose(&h)?.reconstruct().distance(&h));
    }
    out.push(CheckOutcome::new("decompose_round_trip", worst, 1e-12));

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let h = random_hermitian(&mut rng, 1e3);
        let (t1, t2) = (rng.gen_range(0.0..1e-3), rng.gen_range(0.0..1e-3));
        let u = expm_hermitian(&h, t1 + t2)?;
        worst = worst.max(u.distance(&(expm_hermitian(&h, t1)? * expm_hermitian(&h, t2)?)));
        worst = worst.max(u.unitarity_error());
    }
    out.push(CheckOutcome::new("expm_group_and_unitarity", worst, 1e-10));

    let (mut w_comm, mut w_prop, mut w_coef, mut w_norm, mut w_block) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..draws {
        let (zp, t) = random_zqdq(&mut rng);
        w_comm = w_comm.max(commutator(&hamiltonian_zq(&zp), &hamiltonian_dq(&zp)).frobenius_norm());
        let direct = expm_hermitian(&hamiltonian_even(&zp), t)?;
        w_prop = w_prop.max(analytic_even_order_propagator(&zp, t)?.distance(&direct));
        for (spin, op, tc) in [
            (Spin::I, BasisLabel::Iz, analytic_transfer(&zp, t)?),
            (Spin::S, BasisLabel::Sz, analytic_transfer_s(&zp, t)?),
        ] {
            let numeric = TransferCoeffs::from_coeffs(&decompose(&evolve(&direct, &op.operator())?)?, spin);
            w_coef = w_coef.max(transfer_gap(&tc, &numeric));
            w_norm = w_norm.max((tc.norm_sqr() - 1.0).abs());
        }
        w_block = w_block.max(check_block_structure(&direct, 1e-6)?.max_off_block);
    }
    out.push(CheckOutcome::new("zq_dq_commute", w_comm, 1e-12));
    out.push(CheckOutcome::new("even_order_propagator_closed_form", w_prop, 1e-9));
    out.push(CheckOutcome::new("transfer_coefficients_closed_form", w_coef, 1e-9));
    out.push(CheckOutcome::new("transfer_norm_partition", w_norm, 1e-9));
    out.push(CheckOutcome::new("even_order_block_structure", w_block, 1e-6));

    let (mut w_tn, mut w_th) = (0.0f64, 0.0f64);
    let j = 140.0;
    let h1 = BasisLabel::IzSz.operator().scale(PI * j);
    for _ in 0..draws.min(100) {
        let (ui, us) = (random_su2(&mut rng), random_su2(&mut rng));
        let ct = coupling_tensor(&RotationTriple::from_su2(&ui), &RotationTriple::from_su2(&us), j)?;
        w_tn = w_tn.max((ct.frobenius_norm() - j).abs());
        let direct = frame_transform(&crate::su2::tensor(&ui, &us), &h1)?;
        w_th = w_th.max(ct.hamiltonian().distance(&direct) / (PI * j));
    }
    out.push(CheckOutcome::new("coupling_tensor_norm", w_tn, 1e-9));
    out.push(CheckOutcome::new("coupling_tensor_hamiltonian", w_th, 1e-9));

    let spec = qa90_spec();
    let pulse = Pulse::designed(spec)?;
    let pp = PulsePair::identical(pulse.clone());
    let t_p = spec.t_p;
    let dt = default_dt(&pp, hz_to_rad(100e3), j);

    let sys = SpinSystem::new(hz_to_rad(45e3), hz_to_rad(70e3), j)?;
    let fast = propagator_u0(&sys, &pp, t_p, dt)?;
    let dense = propagate(|t| hamiltonian_free(&sys, &pp, t).expect("t lies inside the pulse"), 0.0, t_p, dt)?;
    out.push(CheckOutcome::new("u0_tensor_factorization", fast.distance(&dense), 1e-9));

    // Both routes are second order in dt; agreement to 1e-6 needs a finer grid.
    let dt_fine = dt / 20.0;
    let mut w_frame = 0.0f64;
    for (oi, os) in [(25e3, 85e3), (40e3, 40e3), (50e3, 50e3), (70e3, 30e3), (88e3, 62e3)] {
        let s = SpinSystem::new(hz_to_rad(oi), hz_to_rad(os), j)?;
        let a = interaction_propagator(&s, &pp, t_p, dt_fine)?;
        let b = interaction_propagator_direct(&s, &pp, t_p, dt_fine)?;
        w_frame = w_frame.max(a.distance(&b));
    }
    out.push(CheckOutcome::new("interaction_frame_factorization", w_frame, 1e-6));

    let (mut w_unit, mut w_rot) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let s = SpinSystem::new(hz_to_rad(rng.gen_range(20e3..100e3)), hz_to_rad(rng.gen_range(20e3..100e3)), j)?;
        w_unit = w_unit.max(propagator_ut(&s, &pp, t_p, dt)?.unitarity_error());
        for spin in [Spin::I, Spin::S] {
            w_rot = w_rot.max((rotation_coefficients(&s, &pulse, spin, t_p, dt)?.norm_sqr() - 1.0).abs());
        }
    }
    out.push(CheckOutcome::new("propagator_unitarity", w_unit, 1e-8));
    out.push(CheckOutcome::new("rotation_triple_normalization", w_rot, 1e-9));

    let grid = OffsetGrid::plane(vec![50e3], vec![50e3])?;
    let obs: Vec<Observable> = BasisLabel::ALL.iter().map(|&l| Observable::Coefficient(l)).collect();
    let run = |dt| offset_plane_sweep(j, &pp, &grid, Sequence::Eq33a, BasisLabel::Iz, &obs, Some(dt), 1);
    let (coarse, fine) = (run(dt)?, run(dt / 2.0)?);
    let drift = coarse
        .columns
        .iter()
        .zip(&fine.columns)
        .map(|(a, b)| (a.values[0] - b.values[0]).abs())
        .fold(0.0f64, f64::max);
    out.push(CheckOutcome::new("dt_halving_drift", drift, 1e-4));

    // The backward-half pulse switches on at full amplitude and leaves a tilt
    // of about omega0/offset, so this check uses the smooth full-sech pulse.
    let inv = DesignedPulse::new(inversion_spec(1.5 / j)?)?;
    let inv_pulse = Pulse::Designed(inv);
    let beyond = inv.sweep_extent() + 5.0 * inv.spec.omega0 + hz_to_rad(1e3);
    let dt_inv = default_dt(&PulsePair::identical(inv_pulse.clone()), beyond, 0.0);
    let mut w_off = 0.0f64;
    for omega in [beyond, -beyond] {
        let s = SpinSystem::new(omega, 0.0, 0.0)?;
        let r = rotation_coefficients(&s, &inv_pulse, Spin::I, inv.spec.t_p, dt_inv)?;
        w_off = w_off.max((r.alpha - 1.0).abs()).max(r.beta.abs()).max(r.gamma.abs());
    }
    out.push(CheckOutcome::new("outside_band_no_op", w_off, 0.02));

    let w = DesignedPulse::new(spec)?.sample(dt)?;
    let mut w_phase = 0.0f64;
    let scale = w.max_abs_frequency().max(1.0);
    for k in 1..w.len() - 1 {
        let d = (w.phase[k + 1] - w.phase[k - 1]) / (2.0 * w.dt);
        w_phase = w_phase.max((d - w.freq[k]).abs() / scale);
    }
    out.push(CheckOutcome::new("phase_derivative_matches_frequency", w_phase, 1e-6));

    let small = OffsetGrid::plane(linspace(30e3, 90e3, 3), linspace(30e3, 90e3, 3))?;
    let a = offset_plane_sweep(j, &pp, &small, Sequence::Echo, BasisLabel::Iz, &[Observable::SzTransfer], None, 1)?;
    let b = offset_plane_sweep(j, &pp, &small, Sequence::Echo, BasisLabel::Iz, &[Observable::SzTransfer], None, 4)?;
    let same = a.to_csv_string() == b.to_csv_string();
    out.push(CheckOutcome::new("worker_count_determinism", if same { 0.0 } else { 1.0 }, 0.0));

    Ok(out)
}
