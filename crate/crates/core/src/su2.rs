//! Single-spin propagators in SU(2).
//!
//! An element is stored as the pair `(a, b)` of `[[a, b], [-b*, a*]]`, which
//! keeps products exactly inside the group up to rounding.

use nalgebra::Matrix2;

use crate::operators::{kron, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2 {
    pub a: C64,
    pub b: C64,
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 { a: C64::new(1.0, 0.0), b: C64::new(0.0, 0.0) };

    /// `exp(-i dt (wx Sx + wy Sy + wz Sz))` with spin-1/2 operators.
    #[inline]
    pub fn rotation(wx: f64, wy: f64, wz: f64, dt: f64) -> Su2 {
        let n = (wx * wx + wy * wy + wz * wz).sqrt();
        let half = 0.5 * n * dt;
        let (s, c) = half.sin_cos();
        // sin(n dt / 2) / n, with the n -> 0 limit dt / 2
        let k = if n > 0.0 { s / n } else { 0.5 * dt };
        Su2 { a: C64::new(c, -k * wz), b: C64::new(-k * wy, -k * wx) }
    }

    /// Product `self * rhs`.
    #[inline]
    pub fn then_after(&self, rhs: &Su2) -> Su2 {
        Su2 {
            a: self.a * rhs.a - self.b * rhs.b.conj(),
            b: self.a * rhs.b + self.b * rhs.a.conj(),
        }
    }

    pub fn adjoint(&self) -> Su2 {
        Su2 { a: self.a.conj(), b: -self.b }
    }

    pub fn matrix(&self) -> Matrix2<C64> {
        Matrix2::new(self.a, self.b, -self.b.conj(), self.a.conj())
    }

    pub fn norm_error(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() - 1.0).abs()
    }

    /// Components `(x, y, z)` of `U^H S_z U` on the `S_x, S_y, S_z` axes
    /// (`2 Tr[(U^H S_z U) S_p]`).
    pub fn frame_image_of_z(&self) -> [f64; 3] {
        self.adjoint().evolve_image_of_z()
    }

    /// Components `(x, y, z)` of `U S_z U^H`.
    pub fn evolve_image_of_z(&self) -> [f64; 3] {
        let (a, b) = (self.a, self.b);
        // U sz U^H = 1/2 [[|a|^2-|b|^2, -2ab], [-2a*b*, |b|^2-|a|^2]]
        let off = -(a * b) * 2.0;
        [off.re, -off.im, a.norm_sqr() - b.norm_sqr()]
    }
}

/// `U_I (x) U_S` as a two-spin operator.
pub fn tensor(ui: &Su2, us: &Su2) -> crate::operators::Operator4 {
    kron(&ui.matrix(), &us.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{spin_half, Operator4};
    use std::f64::consts::PI;

    fn expm2(h: Matrix2<C64>, t: f64) -> Matrix2<C64> {
        // embed in 4x4 and use the Hermitian exponential
        let op = crate::operators::embed_i(&h);
        let u = crate::operators::expm_hermitian(&op, t).unwrap();
        Matrix2::from_fn(|r, c| u.0[(2 * r, 2 * c)])
    }

    #[test]
    fn rotation_matches_dense_exponential() {
        let (wx, wy, wz, dt) = (3.1, -1.7, 0.4, 0.83);
        let h = spin_half::sx() * C64::new(wx, 0.0) + spin_half::sy() * C64::new(wy, 0.0) + spin_half::sz() * C64::new(wz, 0.0);
        let dense = expm2(h, dt);
        let fast = Su2::rotation(wx, wy, wz, dt).matrix();
        assert!((dense - fast).norm() < 1e-13);
        assert_eq!(Su2::rotation(0.0, 0.0, 0.0, 1.0), Su2::IDENTITY);
    }

    #[test]
    fn product_and_images() {
        let u = Su2::rotation(1.0, 0.0, 0.0, PI / 2.0);
        // x-rotation by +90 deg: z -> -y in evolution direction, z -> +y in frame direction
        let ev = u.evolve_image_of_z();
        let fr = u.frame_image_of_z();
        assert!((ev[1] + 1.0).abs() < 1e-14 && ev[2].abs() < 1e-14);
        assert!((fr[1] - 1.0).abs() < 1e-14 && fr[2].abs() < 1e-14);
        let v = Su2::rotation(0.2, 0.3, -0.5, 1.3);
        let p = u.then_after(&v).matrix();
        assert!((p - u.matrix() * v.matrix()).norm() < 1e-15);
        let t = tensor(&u, &v);
        assert!(t.unitarity_error() < 1e-14);
        let _ = Operator4::identity();
    }
}
