//! Linear algebra on the four-dimensional Hilbert space of two spins-1/2.
//!
//! States are ordered `|aa>, |ab>, |ba>, |bb>` with the first factor the I spin,
//! so `I_z = diag(1/2, 1/2, -1/2, -1/2)` and `S_z = diag(1/2, -1/2, 1/2, -1/2)`.
//! Product operators are normalized so that `Tr(B B) = 1` for every basis
//! element, the identity element being `E/2`.

use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Rejection threshold for Hermiticity checks, scaled by `1 + ||A||_F`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Rejection threshold for `||U^H U - 1||_F`.
pub const UNITARY_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator4(pub Matrix4<C64>);

impl Operator4 {
    pub fn zeros() -> Self {
        Operator4(Matrix4::zeros())
    }

    pub fn identity() -> Self {
        Operator4(Matrix4::identity())
    }

    pub fn from_diagonal(d: [f64; 4]) -> Self {
        let mut m = Matrix4::zeros();
        for (k, v) in d.iter().enumerate() {
            m[(k, k)] = C64::new(*v, 0.0);
        }
        Operator4(m)
    }

    /// Row-major construction.
    pub fn from_rows(rows: [[C64; 4]; 4]) -> Self {
        Operator4(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    pub fn to_rows(&self) -> [[C64; 4]; 4] {
        let mut out = [[ZERO; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[(r, c)];
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Operator4(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest elementwise deviation `|A - A^H|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..4 {
            for c in r..4 {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// `||U^H U - 1||_F`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.0.adjoint() * self.0;
        (p - Matrix4::identity())
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_hermitian(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        let err = self.hermiticity_error();
        if err > HERMITIAN_TOL * (1.0 + self.frobenius_norm()) {
            return Err(Error::NotHermitian(err));
        }
        Ok(())
    }

    pub fn check_unitary(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        let err = self.unitarity_error();
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        Operator4(self.0 * C64::new(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Operator4(self.0 * s)
    }

    /// Frobenius distance `||A - B||_F`.
    pub fn distance(&self, other: &Operator4) -> f64 {
        (*self - *other).frobenius_norm()
    }

    /// Phase-insensitive gate fidelity `|Tr(A^H B)| / 4`.
    pub fn fidelity(&self, other: &Operator4) -> f64 {
        (self.0.adjoint() * other.0).trace().norm() / 4.0
    }
}

impl Add for Operator4 {
    type Output = Operator4;
    fn add(self, rhs: Operator4) -> Operator4 {
        Operator4(self.0 + rhs.0)
    }
}

impl Sub for Operator4 {
    type Output = Operator4;
    fn sub(self, rhs: Operator4) -> Operator4 {
        Operator4(self.0 - rhs.0)
    }
}

impl Neg for Operator4 {
    type Output = Operator4;
    fn neg(self) -> Operator4 {
        Operator4(-self.0)
    }
}

impl Mul for Operator4 {
    type Output = Operator4;
    fn mul(self, rhs: Operator4) -> Operator4 {
        Operator4(self.0 * rhs.0)
    }
}

impl Mul<f64> for Operator4 {
    type Output = Operator4;
    fn mul(self, rhs: f64) -> Operator4 {
        self.scale(rhs)
    }
}

impl Mul<Operator4> for f64 {
    type Output = Operator4;
    fn mul(self, rhs: Operator4) -> Operator4 {
        rhs.scale(self)
    }
}

/// Spin-1/2 operators `sigma/2` in the single-spin space.
pub mod spin_half {
    use super::*;

    pub fn sx() -> Matrix2<C64> {
        Matrix2::new(ZERO, C64::new(0.5, 0.0), C64::new(0.5, 0.0), ZERO)
    }

    pub fn sy() -> Matrix2<C64> {
        Matrix2::new(ZERO, C64::new(0.0, -0.5), C64::new(0.0, 0.5), ZERO)
    }

    pub fn sz() -> Matrix2<C64> {
        Matrix2::new(C64::new(0.5, 0.0), ZERO, ZERO, C64::new(-0.5, 0.0))
    }

    pub fn half_identity() -> Matrix2<C64> {
        Matrix2::new(C64::new(0.5, 0.0), ZERO, ZERO, C64::new(0.5, 0.0))
    }
}

/// Kronecker product `a (x) b` with `a` acting on spin I.
pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Operator4 {
    Operator4(Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)]))
}

pub fn embed_i(a: &Matrix2<C64>) -> Operator4 {
    kron(a, &Matrix2::identity())
}

pub fn embed_s(b: &Matrix2<C64>) -> Operator4 {
    kron(&Matrix2::identity(), b)
}

/// The sixteen product-operator basis labels, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisLabel {
    E,
    Ix,
    Iy,
    Iz,
    Sx,
    Sy,
    Sz,
    IzSz,
    IxSx,
    IxSy,
    IySx,
    IySy,
    IxSz,
    IySz,
    IzSx,
    IzSy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoherenceClass {
    Identity,
    Longitudinal,
    TwoSpinOrder,
    SingleQuantum,
    /// Transverse bilinears `2I_pS_q` (p, q in {x, y}): mixtures of zero- and double-quantum coherence.
    EvenOrderMultipleQuantum,
}

impl BasisLabel {
    pub const ALL: [BasisLabel; 16] = [
        BasisLabel::E,
        BasisLabel::Ix,
        BasisLabel::Iy,
        BasisLabel::Iz,
        BasisLabel::Sx,
        BasisLabel::Sy,
        BasisLabel::Sz,
        BasisLabel::IzSz,
        BasisLabel::IxSx,
        BasisLabel::IxSy,
        BasisLabel::IySx,
        BasisLabel::IySy,
        BasisLabel::IxSz,
        BasisLabel::IySz,
        BasisLabel::IzSx,
        BasisLabel::IzSy,
    ];

    pub const TRANSVERSE_BILINEAR: [BasisLabel; 4] =
        [BasisLabel::IxSx, BasisLabel::IxSy, BasisLabel::IySx, BasisLabel::IySy];

    pub fn index(self) -> usize {
        self as usize
    }

    /// ASCII symbol used in observable names, e.g. `Ix`, `2IySz`, `E`.
    pub fn symbol(self) -> &'static str {
        use BasisLabel::*;
        match self {
            E => "E",
            Ix => "Ix",
            Iy => "Iy",
            Iz => "Iz",
            Sx => "Sx",
            Sy => "Sy",
            Sz => "Sz",
            IzSz => "2IzSz",
            IxSx => "2IxSx",
            IxSy => "2IxSy",
            IySx => "2IySx",
            IySy => "2IySy",
            IxSz => "2IxSz",
            IySz => "2IySz",
            IzSx => "2IzSx",
            IzSy => "2IzSy",
        }
    }

    pub fn coherence_class(self) -> CoherenceClass {
        use BasisLabel::*;
        match self {
            E => CoherenceClass::Identity,
            Iz | Sz => CoherenceClass::Longitudinal,
            IzSz => CoherenceClass::TwoSpinOrder,
            IxSx | IxSy | IySx | IySy => CoherenceClass::EvenOrderMultipleQuantum,
            Ix | Iy | Sx | Sy | IxSz | IySz | IzSx | IzSy => CoherenceClass::SingleQuantum,
        }
    }

    /// Factor matrices `(a, b)` such that the operator equals `c * a (x) b`.
    fn factors(self) -> (Matrix2<C64>, Matrix2<C64>, f64) {
        use spin_half::*;
        use BasisLabel::*;
        let id = Matrix2::identity();
        match self {
            E => (half_identity(), id, 1.0),
            Ix => (sx(), id, 1.0),
            Iy => (sy(), id, 1.0),
            Iz => (sz(), id, 1.0),
            Sx => (id, sx(), 1.0),
            Sy => (id, sy(), 1.0),
            Sz => (id, sz(), 1.0),
            IzSz => (sz(), sz(), 2.0),
            IxSx => (sx(), sx(), 2.0),
            IxSy => (sx(), sy(), 2.0),
            IySx => (sy(), sx(), 2.0),
            IySy => (sy(), sy(), 2.0),
            IxSz => (sx(), sz(), 2.0),
            IySz => (sy(), sz(), 2.0),
            IzSx => (sz(), sx(), 2.0),
            IzSy => (sz(), sy(), 2.0),
        }
    }

    pub fn operator(self) -> Operator4 {
        let (a, b, c) = self.factors();
        kron(&a, &b).scale(c)
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace(['_', ' '], "");
        let key = if key == "E/2" { "E".to_string() } else { key };
        BasisLabel::ALL
            .iter()
            .copied()
            .find(|l| l.symbol().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::UnknownObservable(s.to_string()))
    }
}

/// The normalized product-operator basis, indexed by `BasisLabel::index`.
pub fn basis() -> [(BasisLabel, Operator4); 16] {
    BasisLabel::ALL.map(|l| (l, l.operator()))
}

/// Coefficients of a Hermitian operator over the product-operator basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductOperatorCoeffs {
    pub c: [f64; 16],
}

impl ProductOperatorCoeffs {
    pub fn zeros() -> Self {
        ProductOperatorCoeffs { c: [0.0; 16] }
    }

    pub fn unit(label: BasisLabel) -> Self {
        let mut c = [0.0; 16];
        c[label.index()] = 1.0;
        ProductOperatorCoeffs { c }
    }

    pub fn get(&self, label: BasisLabel) -> f64 {
        self.c[label.index()]
    }

    pub fn set(&mut self, label: BasisLabel, v: f64) {
        self.c[label.index()] = v;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BasisLabel, f64)> + '_ {
        BasisLabel::ALL.iter().map(move |l| (*l, self.c[l.index()]))
    }

    pub fn reconstruct(&self) -> Operator4 {
        basis_table()
            .iter()
            .zip(self.c.iter())
            .fold(Operator4::zeros(), |acc, (b, v)| acc + b.scale(*v))
    }
}

impl Index<BasisLabel> for ProductOperatorCoeffs {
    type Output = f64;
    fn index(&self, label: BasisLabel) -> &f64 {
        &self.c[label.index()]
    }
}

/// Projects a Hermitian operator onto the product-operator basis.
pub fn decompose(a: &Operator4) -> Result<ProductOperatorCoeffs> {
    a.check_hermitian()?;
    Ok(decompose_unchecked(a))
}

fn basis_table() -> &'static [Operator4; 16] {
    static TABLE: OnceLock<[Operator4; 16]> = OnceLock::new();
    TABLE.get_or_init(|| BasisLabel::ALL.map(BasisLabel::operator))
}

pub(crate) fn decompose_unchecked(a: &Operator4) -> ProductOperatorCoeffs {
    let table = basis_table();
    let mut c = [0.0; 16];
    for (k, b) in table.iter().enumerate() {
        // Tr(B B) = 1 for every element, so no division is needed.
        c[k] = a.0.iter().zip(b.0.transpose().iter()).map(|(x, y)| x * y).sum::<C64>().re;
    }
    ProductOperatorCoeffs { c }
}

/// `exp(-i H t)` for Hermitian `H` in rad/s and `t` in seconds.
pub fn expm_hermitian(h: &Operator4, t: f64) -> Result<Operator4> {
    h.check_hermitian()?;
    if !t.is_finite() {
        return Err(crate::error::invalid("t", "must be finite"));
    }
    Ok(expm_hermitian_unchecked(h, t))
}

pub(crate) fn expm_hermitian_unchecked(h: &Operator4, t: f64) -> Operator4 {
    let eig = SymmetricEigen::new(h.0);
    let v = eig.eigenvectors;
    let mut vd = v;
    for c in 0..4 {
        let phase = C64::from_polar(1.0, -eig.eigenvalues[c] * t);
        for r in 0..4 {
            vd[(r, c)] *= phase;
        }
    }
    Operator4(vd * v.adjoint())
}

/// Eigenvalues of a Hermitian operator, ascending.
pub fn eigenvalues_hermitian(h: &Operator4) -> Result<[f64; 4]> {
    h.check_hermitian()?;
    let eig = SymmetricEigen::new(h.0);
    let mut out = [0.0; 4];
    for (k, v) in eig.eigenvalues.iter().enumerate() {
        out[k] = *v;
    }
    out.sort_by(|a, b| a.total_cmp(b));
    Ok(out)
}

/// Frame transformation `U^H A U` (interaction-frame direction).
pub fn frame_transform(u: &Operator4, a: &Operator4) -> Result<Operator4> {
    u.check_unitary()?;
    Ok(frame_transform_unchecked(u, a))
}

/// Evolution `U A U^H` (density-operator direction).
pub fn evolve(u: &Operator4, a: &Operator4) -> Result<Operator4> {
    u.check_unitary()?;
    Ok(evolve_unchecked(u, a))
}

pub(crate) fn frame_transform_unchecked(u: &Operator4, a: &Operator4) -> Operator4 {
    Operator4(u.0.adjoint() * a.0 * u.0)
}

pub(crate) fn evolve_unchecked(u: &Operator4, a: &Operator4) -> Operator4 {
    Operator4(u.0 * a.0 * u.0.adjoint())
}

pub fn commutator(a: &Operator4, b: &Operator4) -> Operator4 {
    Operator4(a.0 * b.0 - b.0 * a.0)
}
