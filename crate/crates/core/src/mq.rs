//! Zero-/double-quantum decomposition of the interaction-frame coupling and
//! the closed-form propagator and transfer coefficients that follow from it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{CouplingTensor, Spin};
use crate::error::{invalid, Error, Result};
use crate::operators::{expm_hermitian_unchecked, evolve_unchecked, BasisLabel, Operator4, ProductOperatorCoeffs, C64};

/// ZQ/DQ parameters of an even-order coupling Hamiltonian, all in Hz except
/// the phases (rad). A phase is `None` when both of its components vanish.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZQDQParams {
    pub jx_z: f64,
    pub jy_z: f64,
    pub jx_d: f64,
    pub jy_d: f64,
    pub j_star_z: f64,
    pub j_star_d: f64,
    pub f_diff: Option<f64>,
    pub g_sum: Option<f64>,
}

impl ZQDQParams {
    pub fn from_components(jx_z: f64, jy_z: f64, jx_d: f64, jy_d: f64) -> Self {
        let phase = |x: f64, y: f64| if x == 0.0 && y == 0.0 { None } else { Some(y.atan2(x)) };
        ZQDQParams {
            jx_z,
            jy_z,
            jx_d,
            jy_d,
            j_star_z: jx_z.hypot(jy_z),
            j_star_d: jx_d.hypot(jy_d),
            f_diff: phase(jx_z, -jy_z),
            g_sum: phase(jx_d, jy_d),
        }
    }

    /// Phases to use in the closed forms. An undefined phase is harmless when
    /// its magnitude is zero.
    fn phases(&self) -> Result<(f64, f64)> {
        let f = match self.f_diff {
            Some(f) => f,
            None if self.j_star_z == 0.0 => 0.0,
            None => return Err(Error::UndefinedPhase("f_diff")),
        };
        let g = match self.g_sum {
            Some(g) => g,
            None if self.j_star_d == 0.0 => 0.0,
            None => return Err(Error::UndefinedPhase("g_sum")),
        };
        Ok((f, g))
    }
}

/// Splits the transverse bilinear part of `J_pq` into ZQ and DQ components:
/// `JxZ = (Jxx+Jyy)/2`, `JyZ = (Jxy-Jyx)/2`, `JxD = (Jxx-Jyy)/2`, `JyD = (Jxy+Jyx)/2`.
pub fn zq_dq_split(ct: &CouplingTensor) -> ZQDQParams {
    ZQDQParams::from_components(
        0.5 * (ct.jxx() + ct.jyy()),
        0.5 * (ct.jxy() - ct.jyx()),
        0.5 * (ct.jxx() - ct.jyy()),
        0.5 * (ct.jxy() + ct.jyx()),
    )
}

/// `pi [JxZ (2IxSx + 2IySy) + JyZ (2IxSy - 2IySx)]`, rad/s.
pub fn hamiltonian_zq(zp: &ZQDQParams) -> Operator4 {
    use BasisLabel::*;
    (IxSx.operator() + IySy.operator()).scale(PI * zp.jx_z) + (IxSy.operator() - IySx.operator()).scale(PI * zp.jy_z)
}

/// `pi [JxD (2IxSx - 2IySy) + JyD (2IxSy + 2IySx)]`, rad/s.
pub fn hamiltonian_dq(zp: &ZQDQParams) -> Operator4 {
    use BasisLabel::*;
    (IxSx.operator() - IySy.operator()).scale(PI * zp.jx_d) + (IxSy.operator() + IySx.operator()).scale(PI * zp.jy_d)
}

pub fn hamiltonian_even(zp: &ZQDQParams) -> Operator4 {
    hamiltonian_zq(zp) + hamiltonian_dq(zp)
}

/// `exp(-i theta X)` where `X` swaps basis states `a` and `b`.
fn flip_rotation(a: usize, b: usize, theta: f64) -> Operator4 {
    let mut u = Operator4::identity();
    let (s, c) = theta.sin_cos();
    u.0[(a, a)] = C64::new(c, 0.0);
    u.0[(b, b)] = C64::new(c, 0.0);
    u.0[(a, b)] = C64::new(0.0, -s);
    u.0[(b, a)] = C64::new(0.0, -s);
    u
}

/// `exp(-i f Iz)`.
fn iz_rotation(f: f64) -> Operator4 {
    let (p, m) = (C64::from_polar(1.0, -0.5 * f), C64::from_polar(1.0, 0.5 * f));
    let mut u = Operator4::zeros();
    u.0[(0, 0)] = p;
    u.0[(1, 1)] = p;
    u.0[(2, 2)] = m;
    u.0[(3, 3)] = m;
    u
}

/// Closed-form `exp(-i H_even t)`: a ZQ rotation in the `{ab, ba}` block and
/// a DQ rotation in the `{aa, bb}` block, each conjugated by a z-rotation of
/// the I spin that carries its phase.
pub fn analytic_even_order_propagator(zp: &ZQDQParams, t: f64) -> Result<Operator4> {
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    let (f, g) = zp.phases()?;
    // 2IxSx + 2IySy swaps |ab> and |ba>; 2IxSx - 2IySy swaps |aa> and |bb>.
    let zq = iz_rotation(f) * flip_rotation(1, 2, PI * t * zp.j_star_z) * iz_rotation(-f);
    let dq = iz_rotation(g) * flip_rotation(0, 3, PI * t * zp.j_star_d) * iz_rotation(-g);
    Ok(zq * dq)
}

/// Coefficients of the image `U Qz U^H` of a longitudinal source `Qz`:
/// `alpha` on the source itself, `gamma` on the partner spin, and the
/// transverse bilinear terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCoeffs {
    pub alpha: f64,
    pub gamma: f64,
    pub beta_xx: f64,
    pub beta_xy: f64,
    pub beta_yx: f64,
    pub beta_yy: f64,
}

impl TransferCoeffs {
    pub fn norm_sqr(&self) -> f64 {
        self.alpha.powi(2)
            + self.gamma.powi(2)
            + self.beta_xx.powi(2)
            + self.beta_xy.powi(2)
            + self.beta_yx.powi(2)
            + self.beta_yy.powi(2)
    }

    /// Projection of a decomposed image of `source` onto the same six terms.
    pub fn from_coeffs(c: &ProductOperatorCoeffs, source: Spin) -> Self {
        use BasisLabel::*;
        let (own, partner) = longitudinal(source);
        TransferCoeffs {
            alpha: c[own],
            gamma: c[partner],
            beta_xx: c[IxSx],
            beta_xy: c[IxSy],
            beta_yx: c[IySx],
            beta_yy: c[IySy],
        }
    }

    pub fn to_operator(&self, source: Spin) -> Operator4 {
        use BasisLabel::*;
        let (own, partner) = longitudinal(source);
        own.operator().scale(self.alpha)
            + partner.operator().scale(self.gamma)
            + IxSx.operator().scale(self.beta_xx)
            + IxSy.operator().scale(self.beta_xy)
            + IySx.operator().scale(self.beta_yx)
            + IySy.operator().scale(self.beta_yy)
    }
}

fn longitudinal(source: Spin) -> (BasisLabel, BasisLabel) {
    match source {
        Spin::I => (BasisLabel::Iz, BasisLabel::Sz),
        Spin::S => (BasisLabel::Sz, BasisLabel::Iz),
    }
}

fn trig(zp: &ZQDQParams, t: f64) -> Result<(f64, f64, f64, f64, f64, f64)> {
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    let (f, g) = zp.phases()?;
    let (sd, cd) = (PI * zp.j_star_d * t).sin_cos();
    let (sz, cz) = (PI * zp.j_star_z * t).sin_cos();
    Ok((sd, cd, sz, cz, f, g))
}

/// Closed-form image of `Iz` under the even-order propagator.
pub fn analytic_transfer(zp: &ZQDQParams, t: f64) -> Result<TransferCoeffs> {
    let (sd, cd, sz, cz, f, g) = trig(zp, t)?;
    let (sdcd, szcz) = (sd * cd, sz * cz);
    Ok(TransferCoeffs {
        alpha: cd * cd * cz * cz - sd * sd * sz * sz,
        gamma: cd * cd * sz * sz - sd * sd * cz * cz,
        beta_xx: sdcd * g.sin() + szcz * f.sin(),
        beta_xy: -sdcd * g.cos() + szcz * f.cos(),
        beta_yx: -sdcd * g.cos() - szcz * f.cos(),
        beta_yy: -sdcd * g.sin() + szcz * f.sin(),
    })
}

/// Closed-form image of `Sz`, obtained from the `Iz` coefficients by
/// relabelling the two spins.
pub fn analytic_transfer_s(zp: &ZQDQParams, t: f64) -> Result<TransferCoeffs> {
    let i = analytic_transfer(zp, t)?;
    Ok(TransferCoeffs {
        alpha: i.alpha,
        gamma: i.gamma,
        beta_xx: -i.beta_yy,
        beta_xy: i.beta_yx,
        beta_yx: i.beta_xy,
        beta_yy: -i.beta_xx,
    })
}

/// The eight matrix elements that survive in an even-order propagator,
/// stored as `a11, a14, a22, a23, a32, a33, a41, a44` (1-based positions).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockStructure {
    pub is_even_order: bool,
    pub max_off_block: f64,
    pub elements: [C64; 8],
}

const BLOCK_POSITIONS: [(usize, usize); 8] = [(0, 0), (0, 3), (1, 1), (1, 2), (2, 1), (2, 2), (3, 0), (3, 3)];

impl BlockStructure {
    pub fn a(&self, row: usize, col: usize) -> Option<C64> {
        BLOCK_POSITIONS.iter().position(|&p| p == (row - 1, col - 1)).map(|k| self.elements[k])
    }

    /// The propagator with off-block entries set to zero.
    pub fn to_operator(&self) -> Operator4 {
        let mut u = Operator4::zeros();
        for (k, &(r, c)) in BLOCK_POSITIONS.iter().enumerate() {
            u.0[(r, c)] = self.elements[k];
        }
        u
    }
}

/// Checks that `u` only connects `{aa, bb}` and `{ab, ba}`.
pub fn check_block_structure(u: &Operator4, tol: f64) -> Result<BlockStructure> {
    if !u.is_finite() {
        return Err(Error::NonFinite);
    }
    u.check_unitary()?;
    let mut max_off = 0.0f64;
    for r in 0..4 {
        for c in 0..4 {
            if !BLOCK_POSITIONS.contains(&(r, c)) {
                max_off = max_off.max(u.get(r, c).norm());
            }
        }
    }
    let mut elements = [C64::new(0.0, 0.0); 8];
    for (k, &(r, c)) in BLOCK_POSITIONS.iter().enumerate() {
        elements[k] = u.get(r, c);
    }
    Ok(BlockStructure { is_even_order: max_off <= tol, max_off_block: max_off, elements })
}

/// Conditions for complete `Iz -> Sz` transfer by an even-order propagator.
#[derive(Clone, Debug, PartialEq)]
pub struct HhConditions {
    pub complete_transfer: bool,
    /// Absolute deviations of the six conditions from their targets.
    pub residuals: [f64; 6],
    pub image_of_iz: Operator4,
}

pub const HH_TOL: f64 = 1e-9;

pub fn hh_conditions(bs: &BlockStructure) -> HhConditions {
    let a = |r, c| bs.a(r, c).unwrap();
    let n = |r, c| a(r, c).norm_sqr();
    let residuals = [
        (n(1, 1) - n(1, 4) - 1.0).abs(),
        (n(3, 2) - n(3, 3) - 1.0).abs(),
        (n(2, 2) - n(2, 3) + 1.0).abs(),
        (n(4, 1) - n(4, 4) + 1.0).abs(),
        (a(1, 1) * a(4, 1).conj() - a(1, 4) * a(4, 4).conj()).norm(),
        (a(2, 2) * a(3, 2).conj() - a(2, 3) * a(3, 3).conj()).norm(),
    ];
    let image = evolve_unchecked(&bs.to_operator(), &BasisLabel::Iz.operator());
    HhConditions {
        complete_transfer: residuals.iter().all(|&r| r <= HH_TOL),
        residuals,
        image_of_iz: image,
    }
}

/// `(1/T) int_0^T h(t) dt` by the midpoint rule with `n` slices. `h` is
/// called at increasing times.
pub fn average_hamiltonian<F>(mut h: F, t_total: f64, n: usize) -> Result<Operator4>
where
    F: FnMut(f64) -> Result<Operator4>,
{
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(invalid("t_total", "must be finite and > 0"));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one slice"));
    }
    let step = t_total / n as f64;
    let mut acc = Operator4::zeros();
    for k in 0..n {
        acc = acc + h((k as f64 + 0.5) * step)?;
    }
    Ok(acc.scale(1.0 / n as f64))
}

/// Even-order multiple-quantum content: the quadrature sum of the
/// transverse bilinear coefficients.
pub fn evomq(c: &ProductOperatorCoeffs) -> f64 {
    BasisLabel::TRANSVERSE_BILINEAR.iter().map(|&l| c[l] * c[l]).sum::<f64>().sqrt()
}

/// Best match of `u` to a pure `exp(-i pi J T 2IzSz)` over `T` in
/// `[0, t_max]`, scanned on `n` points: returns `(T_eff, fidelity)`.
pub fn fit_longitudinal_coupling(u: &Operator4, j_hz: f64, t_max: f64, n: usize) -> (f64, f64) {
    let h = BasisLabel::IzSz.operator().scale(PI * j_hz);
    let mut best = (0.0, -1.0);
    for k in 0..=n.max(1) {
        let t = t_max * k as f64 / n.max(1) as f64;
        let fid = u.fidelity(&expm_hermitian_unchecked(&h, t));
        if fid > best.1 {
            best = (t, fid);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{coupling_tensor, RotationTriple};
    use crate::operators::{decompose, evolve, expm_hermitian};

    #[test]
    fn split_examples() {
        let ct = CouplingTensor { j: [[140.0, 0.0, 0.0], [0.0, 140.0, 0.0], [0.0, 0.0, 0.0]] };
        let zp = zq_dq_split(&ct);
        assert_eq!((zp.jx_z, zp.jy_z, zp.jx_d, zp.jy_d), (140.0, 0.0, 0.0, 0.0));
        assert_eq!(zp.f_diff, Some(0.0));
        assert_eq!(zp.g_sum, None);

        let ct = CouplingTensor { j: [[0.0, 140.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]] };
        let zp = zq_dq_split(&ct);
        assert_eq!((zp.jx_z, zp.jy_z, zp.jx_d, zp.jy_d), (0.0, 70.0, 0.0, 70.0));
        assert!((zp.j_star_z - 70.0).abs() < 1e-12 && (zp.j_star_d - 70.0).abs() < 1e-12);

        let zero = zq_dq_split(&CouplingTensor { j: [[0.0; 3]; 3] });
        assert_eq!((zero.f_diff, zero.g_sum), (None, None));
        assert!(analytic_even_order_propagator(&zero, 1.0).unwrap().distance(&Operator4::identity()) < 1e-15);
    }

    #[test]
    fn undefined_phase_with_nonzero_magnitude_is_an_error() {
        let mut zp = ZQDQParams::from_components(10.0, 0.0, 0.0, 0.0);
        zp.f_diff = None;
        assert!(matches!(analytic_transfer(&zp, 1.0), Err(Error::UndefinedPhase("f_diff"))));
    }

    #[test]
    fn zq_and_dq_commute() {
        let zp = ZQDQParams::from_components(13.0, -40.0, 71.0, 9.0);
        let c = crate::operators::commutator(&hamiltonian_zq(&zp), &hamiltonian_dq(&zp));
        assert!(c.frobenius_norm() < 1e-9);
    }

    #[test]
    fn full_zq_transfer_at_half_period() {
        let zp = ZQDQParams::from_components(140.0, 0.0, 0.0, 0.0);
        let t = 1.0 / (2.0 * 140.0);
        let tc = analytic_transfer(&zp, t).unwrap();
        assert!(tc.alpha.abs() < 1e-12 && (tc.gamma - 1.0).abs() < 1e-12);
        let u = analytic_even_order_propagator(&zp, t).unwrap();
        let c = decompose(&evolve(&u, &BasisLabel::Iz.operator()).unwrap()).unwrap();
        assert!((c[BasisLabel::Sz] - 1.0).abs() < 1e-12);
        let hc = hh_conditions(&check_block_structure(&u, 1e-9).unwrap());
        assert!(hc.complete_transfer, "{:?}", hc.residuals);
    }

    #[test]
    fn closed_form_propagator_matches_expm() {
        let zp = ZQDQParams::from_components(30.0, -55.0, 12.0, 80.0);
        for t in [1e-4, 3.3e-3, 0.02] {
            let a = analytic_even_order_propagator(&zp, t).unwrap();
            let b = expm_hermitian(&hamiltonian_even(&zp), t).unwrap();
            assert!(a.distance(&b) < 1e-12);
        }
    }

    #[test]
    fn transfer_closed_forms_match_conjugation() {
        let zp = ZQDQParams::from_components(-20.0, 45.0, 61.0, -7.0);
        let t = 4.1e-3;
        let u = expm_hermitian(&hamiltonian_even(&zp), t).unwrap();
        for (spin, op, tc) in [
            (Spin::I, BasisLabel::Iz, analytic_transfer(&zp, t).unwrap()),
            (Spin::S, BasisLabel::Sz, analytic_transfer_s(&zp, t).unwrap()),
        ] {
            let image = evolve(&u, &op.operator()).unwrap();
            assert!(image.distance(&tc.to_operator(spin)) < 1e-12);
            let back = TransferCoeffs::from_coeffs(&decompose(&image).unwrap(), spin);
            assert!((back.alpha - tc.alpha).abs() < 1e-12 && (back.beta_yx - tc.beta_yx).abs() < 1e-12);
            assert!((tc.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_structure_and_hh_conditions() {
        let swap = Operator4::from_rows({
            let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
            [[o, z, z, z], [z, z, o, z], [z, o, z, z], [z, z, z, o]]
        });
        let bs = check_block_structure(&swap, 1e-9).unwrap();
        assert!(bs.is_even_order);
        let hc = hh_conditions(&bs);
        assert!(hc.complete_transfer);
        assert!(hc.image_of_iz.distance(&BasisLabel::Sz.operator()) < 1e-15);

        let id = hh_conditions(&check_block_structure(&Operator4::identity(), 1e-9).unwrap());
        assert!(!id.complete_transfer);
        assert_eq!(id.residuals, [0.0, 2.0, 2.0, 0.0, 0.0, 0.0]);

        let hard = expm_hermitian(&BasisLabel::Ix.operator(), 0.7).unwrap();
        let bs = check_block_structure(&hard, 1e-6).unwrap();
        assert!(!bs.is_even_order && bs.max_off_block > 0.1);
        assert!(check_block_structure(&hard.scale(2.0), 1e-6).is_err());
    }

    #[test]
    fn average_of_constant_and_evomq() {
        let h = BasisLabel::IzSz.operator().scale(3.0);
        let avg = average_hamiltonian(|_| Ok(h), 1e-3, 17).unwrap();
        assert!(avg.distance(&h) < 1e-14);
        assert!(average_hamiltonian(|_| Ok(h), 0.0, 1).is_err());

        let mut c = ProductOperatorCoeffs::zeros();
        c.set(BasisLabel::IxSy, 0.6);
        c.set(BasisLabel::IySx, -0.8);
        c.set(BasisLabel::IzSz, 5.0);
        assert!((evomq(&c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_norm_bounds_zq_dq_magnitudes() {
        let t = RotationTriple { alpha: 0.3, beta: 0.5, gamma: (1.0f64 - 0.34).sqrt() };
        let ct = coupling_tensor(&t, &t, 140.0).unwrap();
        let zp = zq_dq_split(&ct);
        let transverse: f64 = (0..2).flat_map(|p| (0..2).map(move |q| (p, q))).map(|(p, q)| ct.get(p, q).powi(2)).sum();
        assert!((2.0 * (zp.j_star_z.powi(2) + zp.j_star_d.powi(2)) - transverse).abs() < 1e-9);
    }

    #[test]
    fn longitudinal_fit() {
        let h = BasisLabel::IzSz.operator().scale(PI * 140.0);
        let u = expm_hermitian(&h, 2.5e-3).unwrap();
        let (t, fid) = fit_longitudinal_coupling(&u, 140.0, 5e-3, 1000);
        assert!((t - 2.5e-3).abs() < 1e-8 && (fid - 1.0).abs() < 1e-12);
    }
}
