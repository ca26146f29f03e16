//! Cross-checks against independently derived results: a Taylor-series
//! exponential, Rabi's formula, numeric integration of the design rules and
//! direct matrix conjugation.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use qahh::dynamics::{
    coupling_tensor, interaction_propagator, propagator_ut, rotation_coefficients, PulsePair, RotationTriple, Spin,
    SpinSystem,
};
use qahh::mq::{
    analytic_even_order_propagator, analytic_transfer, analytic_transfer_s, average_hamiltonian, evomq,
    fit_longitudinal_coupling, hamiltonian_even, TransferCoeffs, ZQDQParams,
};
use qahh::operators::{decompose, evolve, expm_hermitian, BasisLabel, Operator4};
use qahh::pulse::{adiabatic_factor, design_fm_eq22, design_from_amplitude, hz_to_rad, DesignRule, Pulse, PulseWaveform};
use qahh::validation::{inversion_spec, qa90_spec, random_zqdq};
use qahh::{PulseShape, PulseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::taylor_expm;

fn random_hermitian(rng: &mut ChaCha8Rng, scale: f64) -> Operator4 {
    let mut rows = [[C64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        rows[r][r] = C64::new(rng.gen_range(-scale..scale), 0.0);
        for c in r + 1..4 {
            let z = C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            rows[r][c] = z;
            rows[c][r] = z.conj();
        }
    }
    Operator4::from_rows(rows)
}

fn iz() -> Operator4 {
    BasisLabel::Iz.operator()
}

#[test]
fn eigen_exponential_matches_taylor_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let h = random_hermitian(&mut rng, 2000.0);
        let t = rng.gen_range(-3e-3..3e-3);
        let d = expm_hermitian(&h, t).unwrap().distance(&taylor_expm(&h, t));
        assert!(d < 1e-10, "distance {d}");
    }
}

#[test]
fn even_order_propagator_matches_series_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (zp, t) = random_zqdq(&mut rng);
        let want = taylor_expm(&hamiltonian_even(&zp), t);
        let got = analytic_even_order_propagator(&zp, t).unwrap();
        assert!(got.distance(&want) < 1e-9, "{zp:?} t={t}: {}", got.distance(&want));
    }
}

fn transfer_from_conjugation(zp: &ZQDQParams, t: f64, source: Spin) -> TransferCoeffs {
    let u = taylor_expm(&hamiltonian_even(zp), t);
    let start = match source {
        Spin::I => BasisLabel::Iz,
        Spin::S => BasisLabel::Sz,
    };
    let c = decompose(&evolve(&u, &start.operator()).unwrap()).unwrap();
    TransferCoeffs::from_coeffs(&c, source)
}

#[test]
fn printed_transfer_coefficients_match_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let (zp, t) = random_zqdq(&mut rng);
        for (source, got) in [(Spin::I, analytic_transfer(&zp, t).unwrap()), (Spin::S, analytic_transfer_s(&zp, t).unwrap())] {
            let want = transfer_from_conjugation(&zp, t, source);
            let pairs = [
                (got.alpha, want.alpha),
                (got.gamma, want.gamma),
                (got.beta_xx, want.beta_xx),
                (got.beta_xy, want.beta_xy),
                (got.beta_yx, want.beta_yx),
                (got.beta_yy, want.beta_yy),
            ];
            for (g, w) in pairs {
                assert!((g - w).abs() < 1e-9, "{source:?} {zp:?} t={t}: {got:?} vs {want:?}");
            }
            assert!((got.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn source_swap_relations_between_spins() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let (zp, t) = random_zqdq(&mut rng);
        let i = analytic_transfer(&zp, t).unwrap();
        let s = analytic_transfer_s(&zp, t).unwrap();
        assert!((s.beta_xx + i.beta_yy).abs() < 1e-12);
        assert!((s.beta_xy - i.beta_yx).abs() < 1e-12);
        assert!((s.beta_yx - i.beta_xy).abs() < 1e-12);
        assert!((s.beta_yy + i.beta_xx).abs() < 1e-12);
    }
}

#[test]
fn evomq_matches_transfer_betas_for_pure_zq() {
    let j = 37.0;
    let zp = ZQDQParams::from_components(j, 0.0, 0.0, 0.0);
    let t = 1.0 / (4.0 * j);
    let u = analytic_even_order_propagator(&zp, t).unwrap();
    let c = decompose(&evolve(&u, &iz()).unwrap()).unwrap();
    let tc = analytic_transfer(&zp, t).unwrap();
    let want = (tc.beta_xx.powi(2) + tc.beta_xy.powi(2) + tc.beta_yx.powi(2) + tc.beta_yy.powi(2)).sqrt();
    assert!((evomq(&c) - want).abs() < 1e-12);
    assert!(want > 0.5);
}

#[test]
fn evomq_is_invariant_under_joint_z_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let (zp, t) = random_zqdq(&mut rng);
        let u = analytic_even_order_propagator(&zp, t).unwrap();
        let rho = evolve(&u, &iz()).unwrap();
        let hz = BasisLabel::Iz.operator().scale(rng.gen_range(-5.0..5.0)) + BasisLabel::Sz.operator().scale(rng.gen_range(-5.0..5.0));
        let rz = expm_hermitian(&hz, 1.0).unwrap();
        let a = evomq(&decompose(&rho).unwrap());
        let b = evomq(&decompose(&evolve(&rz, &rho).unwrap()).unwrap());
        assert!((a - b).abs() < 1e-12);
    }
}

fn constant_pulse(amp_hz: f64, t_p: f64, dt: f64) -> Pulse {
    let n = (t_p / dt).round() as usize + 1;
    Pulse::Table(PulseWaveform { dt, t_p, amp: vec![hz_to_rad(amp_hz); n], freq: vec![0.0; n], phase: vec![0.0; n] })
}

#[test]
fn hard_pulse_follows_rabi_formula() {
    let (amp_hz, t_p, dt) = (5000.0, 170e-6, 1e-7);
    let pulse = constant_pulse(amp_hz, t_p, dt);
    let w1 = hz_to_rad(amp_hz);
    for off_hz in [0.0, 1500.0, -3000.0, 7000.0, 20000.0] {
        let off = hz_to_rad(off_hz);
        let sys = SpinSystem::new(off, 0.0, 0.0).unwrap();
        let tr = rotation_coefficients(&sys, &pulse, Spin::I, t_p, dt).unwrap();
        let we2 = w1 * w1 + off * off;
        let want = 1.0 - 2.0 * w1 * w1 / we2 * (0.5 * we2.sqrt() * t_p).sin().powi(2);
        assert!((tr.alpha - want).abs() < 1e-9, "offset {off_hz}: {} vs {want}", tr.alpha);
        assert!((tr.norm_sqr() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn j_evolution_refocuses_in_phase_term() {
    let j = 140.0;
    let sys = SpinSystem::new(0.0, 0.0, j).unwrap();
    let ix = BasisLabel::Ix.operator();
    for (t, cx, cy) in [(1.0 / j, -1.0, 0.0), (0.5 / j, 0.0, 1.0), (0.25 / j, 0.5f64.sqrt(), 0.5f64.sqrt())] {
        let u = propagator_ut(&sys, &PulsePair::off(t), t, 1e-5).unwrap();
        let c = decompose(&evolve(&u, &ix).unwrap()).unwrap();
        assert!((c[BasisLabel::Ix] - cx).abs() < 1e-10);
        assert!((c[BasisLabel::IySz].abs() - cy).abs() < 1e-10);
    }
}

/// Cumulative trapezoid of `p * amp^2`.
fn integrate_rate(w: &PulseWaveform, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for k in 1..w.len() {
        out[k] = out[k - 1] + 0.5 * w.dt * p * (w.amp[k - 1].powi(2) + w.amp[k].powi(2));
    }
    out
}

#[test]
fn eq23_sweep_is_the_integral_of_p_amp_squared() {
    let full = inversion_spec(3e-3).unwrap();
    let half = PulseSpec::new(PulseShape::SechBackwardHalf, hz_to_rad(5000.0), 855.2, 1.0 / 3.0, 7e-3, DesignRule::Eq23);
    for spec in [full, half, qa90_spec()] {
        let w = Pulse::designed(spec).unwrap();
        let Pulse::Designed(d) = &w else { unreachable!() };
        let s = d.sample(2e-8).unwrap();
        let want = integrate_rate(&s, spec.p);
        let scale = want.last().unwrap().abs();
        for k in (0..s.len()).step_by(97) {
            let got = s.freq[k] - s.freq[0];
            assert!((got - want[k]).abs() < 1e-6 * scale, "{:?} k={k}: {got} vs {}", spec.shape, want[k]);
        }
    }
}

#[test]
fn sweep_extent_matches_tanh_closed_form() {
    let beta = 855.2;
    let spec = PulseSpec::new(PulseShape::SechBackwardHalf, hz_to_rad(5000.0), beta, 1.0 / 3.0, 7e-3, DesignRule::Eq23);
    let p = Pulse::designed(spec).unwrap();
    let w0 = hz_to_rad(5000.0);
    let want = spec.p * w0 * w0 / beta * (beta * 7e-3f64).tanh();
    assert!((p.sweep_extent() - want).abs() < 1e-9 * want);
}

#[test]
fn eq22_rate_satisfies_its_defining_relation() {
    let spec = PulseSpec { design_rule: DesignRule::Eq22, ..qa90_spec() };
    let dt = 1e-7;
    let w = design_fm_eq22(&spec, dt).unwrap();
    let (w0, b) = (spec.omega0, spec.beta);
    let weight = 2.0 * 3f64.sqrt() / 9.0;
    let mut checked = 0;
    for k in 1..w.len() - 1 {
        let t = w.time(k);
        let (sech, tanh) = (1.0 / (b * t).cosh(), (b * t).tanh());
        let want = spec.p * w0 * w0 * sech * sech - weight * w0 * b * sech * tanh.abs();
        if want <= 1e-3 * spec.p * w0 * w0 {
            continue;
        }
        let fd = (w.freq[k + 1] - w.freq[k - 1]) / (2.0 * dt);
        assert!((fd - want).abs() <= 1e-3 * want, "t={t}: {fd} vs {want}");
        checked += 1;
    }
    assert!(checked > 1000, "only {checked} samples outside the clamp");
}

#[test]
fn constant_amplitude_designs_agree_and_give_p_at_crossing() {
    let (dt, n, p) = (1e-7, 20001, 0.4);
    let amp = vec![hz_to_rad(2000.0); n];
    let a = design_from_amplitude(&amp, dt, p, DesignRule::Eq23, 1.0, 0.0).unwrap();
    let b = design_from_amplitude(&amp, dt, p, DesignRule::Eq22, 1.0, 0.0).unwrap();
    assert_eq!(a, b);
    // Linear chirp: resonance crossed at the midpoint for this offset.
    let t_mid = dt * (n - 1) as f64 / 2.0;
    let offset = p * amp[0] * amp[0] * t_mid;
    let pf = adiabatic_factor(&a, offset, t_mid).unwrap();
    assert!((pf.abs() - p).abs() < 1e-6, "{pf}");
}

#[test]
fn average_of_long_coupling_tail_is_longitudinal() {
    let j = 140.0;
    let target = BasisLabel::IzSz.operator().scale(PI * j);
    let t_p = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let early = random_hermitian(&mut rng, PI * j);
    let total = 100.0 * t_p;
    let avg = average_hamiltonian(|t| Ok(if t < t_p { early } else { target }), total, 20000).unwrap();
    let bound = 2.0 * PI * j * (t_p / total) * 4.0;
    assert!(avg.distance(&target) <= bound, "{} > {bound}", avg.distance(&target));
}

#[test]
fn tensor_hamiltonian_equals_conjugated_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let j = 140.0;
    for _ in 0..100 {
        // Single-spin generators only: embed random 2x2 Hermitians on each spin.
        let [ax, ay, az, bx, by, bz]: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let h0 = BasisLabel::Ix.operator().scale(ax)
            + BasisLabel::Iy.operator().scale(ay)
            + BasisLabel::Iz.operator().scale(az)
            + BasisLabel::Sx.operator().scale(bx)
            + BasisLabel::Sy.operator().scale(by)
            + BasisLabel::Sz.operator().scale(bz);
        let u0 = expm_hermitian(&h0, 1.0).unwrap();
        let hj = BasisLabel::IzSz.operator().scale(PI * j);
        let want = u0.adjoint() * hj * u0;
        let image = |l: BasisLabel| decompose(&(u0.adjoint() * l.operator() * u0)).unwrap();
        let (ci, cs) = (image(BasisLabel::Iz), image(BasisLabel::Sz));
        let ti = RotationTriple { alpha: ci[BasisLabel::Iz], beta: ci[BasisLabel::Ix], gamma: ci[BasisLabel::Iy] };
        let ts = RotationTriple { alpha: cs[BasisLabel::Sz], beta: cs[BasisLabel::Sx], gamma: cs[BasisLabel::Sy] };
        let ct = coupling_tensor(&ti, &ts, j).unwrap();
        assert!((ct.frobenius_norm() - j).abs() < 1e-9);
        assert!(ct.hamiltonian().distance(&want) < 1e-9);
    }
}

#[test]
fn inversion_pair_interaction_is_longitudinal_coupling_with_shortened_time() {
    // Full-sech inversion pair of length 3/(2J): on the band the interaction
    // propagator acts as a pure 2IzSz evolution for some time in [T/2, T].
    let j = 140.0;
    let t_p = 1.5 / j;
    let pp = PulsePair::identical(Pulse::designed(inversion_spec(t_p).unwrap()).unwrap());
    for (oi, os) in [(0.0, 0.0), (5000.0, -5000.0), (-10000.0, 8000.0)] {
        let sys = SpinSystem::new(hz_to_rad(oi), hz_to_rad(os), j).unwrap();
        let u = interaction_propagator(&sys, &pp, t_p, 2e-7).unwrap();
        let (t_eff, fidelity) = fit_longitudinal_coupling(&u, j, t_p, 3000);
        assert!(fidelity >= 0.95, "({oi}, {os}): fidelity {fidelity}");
        assert!(t_eff >= 0.5 * t_p && t_eff <= t_p, "({oi}, {os}): T_eff {t_eff} of {t_p}");
    }
}
