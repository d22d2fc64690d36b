//! Complex 2x2 linear algebra: Pauli decomposition, closed-form SU(2)
//! exponentials, a scaling-and-squaring series exponential used as the
//! reference path, and the principal complex arccosine.
//!
//! Conventions: `expm_su2(h, t)` and `expm_general(h, t)` both return
//! exp(-i h t), the Schrodinger propagator for a (generally non-Hermitian)
//! generator `h` held constant over a span `t`. Time is in microseconds and
//! generator entries in rad/us, so the product is dimensionless.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NhjeError, Result};

/// Shorthand for the only scalar type used in this crate.
pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Dense complex 2x2 matrix, row-major by field name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mat2C {
    pub a11: C64,
    pub a12: C64,
    pub a21: C64,
    pub a22: C64,
}

impl Mat2C {
    pub const fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2C { a11, a12, a21, a22 }
    }

    pub const fn zero() -> Self {
        Mat2C::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn identity() -> Self {
        Mat2C::new(ONE, ZERO, ZERO, ONE)
    }

    /// Scalar multiple of the identity.
    pub fn scalar(s: C64) -> Self {
        Mat2C::new(s, ZERO, ZERO, s)
    }

    pub fn trace(&self) -> C64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> C64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat2C::new(
            self.a11.conj(),
            self.a21.conj(),
            self.a12.conj(),
            self.a22.conj(),
        )
    }

    /// Entrywise complex conjugate (no transpose).
    pub fn conj(&self) -> Self {
        Mat2C::new(
            self.a11.conj(),
            self.a12.conj(),
            self.a21.conj(),
            self.a22.conj(),
        )
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2C::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Matrix-vector product on a length-2 ket.
    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.a11
            .norm()
            .max(self.a12.norm())
            .max(self.a21.norm())
            .max(self.a22.norm())
    }

    /// Induced 1-norm (maximum absolute column sum); used to pick the
    /// scaling exponent in the series exponential.
    pub fn one_norm(&self) -> f64 {
        let c1 = self.a11.norm() + self.a21.norm();
        let c2 = self.a12.norm() + self.a22.norm();
        c1.max(c2)
    }

    /// Largest entrywise difference |a_ij - b_ij|.
    pub fn max_diff(&self, other: &Mat2C) -> f64 {
        (self.a11 - other.a11)
            .norm()
            .max((self.a12 - other.a12).norm())
            .max((self.a21 - other.a21).norm())
            .max((self.a22 - other.a22).norm())
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Add for Mat2C {
    type Output = Mat2C;
    fn add(self, rhs: Mat2C) -> Mat2C {
        Mat2C::new(
            self.a11 + rhs.a11,
            self.a12 + rhs.a12,
            self.a21 + rhs.a21,
            self.a22 + rhs.a22,
        )
    }
}

impl std::ops::Sub for Mat2C {
    type Output = Mat2C;
    fn sub(self, rhs: Mat2C) -> Mat2C {
        Mat2C::new(
            self.a11 - rhs.a11,
            self.a12 - rhs.a12,
            self.a21 - rhs.a21,
            self.a22 - rhs.a22,
        )
    }
}

impl std::ops::Mul for Mat2C {
    type Output = Mat2C;
    fn mul(self, rhs: Mat2C) -> Mat2C {
        Mat2C::new(
            self.a11 * rhs.a11 + self.a12 * rhs.a21,
            self.a11 * rhs.a12 + self.a12 * rhs.a22,
            self.a21 * rhs.a11 + self.a22 * rhs.a21,
            self.a21 * rhs.a12 + self.a22 * rhs.a22,
        )
    }
}

/// Coefficients of M = h0 I + hx sx + hy sy + hz sz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PauliDecomp {
    pub h0: C64,
    pub hx: C64,
    pub hy: C64,
    pub hz: C64,
}

impl PauliDecomp {
    /// Rebuild the matrix from its coefficients.
    pub fn recompose(&self) -> Mat2C {
        Mat2C::new(
            self.h0 + self.hz,
            self.hx - I * self.hy,
            self.hx + I * self.hy,
            self.h0 - self.hz,
        )
    }
}

/// Project a matrix onto the Pauli basis {I, sx, sy, sz}.
///
/// The decomposition is exact arithmetic (four additions and halvings), so
/// recomposition reproduces the input to a few machine epsilons.
pub fn pauli_decompose(m: &Mat2C) -> Result<PauliDecomp> {
    if !m.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    Ok(PauliDecomp {
        h0: (m.a11 + m.a22) * 0.5,
        hx: (m.a12 + m.a21) * 0.5,
        hy: I * (m.a12 - m.a21) * 0.5,
        hz: (m.a11 - m.a22) * 0.5,
    })
}

/// Relative trace bound under which a matrix counts as traceless.
const TRACELESS_TOL: f64 = 1e-12;

// sin(z)/z with the removable singularity handled by a short Taylor series.
// The series through z^6 has next term z^8/9! ~ 1e-38 at the switch point
// |z| = 1e-4, far below machine epsilon.
fn sinc_c(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        ONE - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    } else {
        z.sin() / z
    }
}

/// Closed-form exp(-i h t) for a traceless 2x2 generator.
///
/// Writes h = hx sx + hy sy + hz sz and uses
/// exp(-i h t) = cos(E t) I - i sinc(E t) (h t) with E = sqrt(hx^2+hy^2+hz^2)
/// (principal branch; both cos and sinc are even in E, so the branch choice
/// cancels). Exact at exceptional points where E = 0 and the generator is
/// nilpotent: the formula degenerates to I - i h t.
///
/// Errors if `h` has non-finite entries or a trace above the relative
/// tolerance 1e-12 * max|entry|.
pub fn expm_su2(h: &Mat2C, t: f64) -> Result<Mat2C> {
    let d = pauli_decompose(h)?;
    if !t.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    let limit = TRACELESS_TOL * h.max_abs();
    let trace_abs = h.trace().norm();
    if trace_abs > limit {
        return Err(NhjeError::NotTraceless { trace_abs, limit });
    }
    let e = (d.hx * d.hx + d.hy * d.hy + d.hz * d.hz).sqrt();
    let phi = e * t;
    let c = phi.cos();
    let s = sinc_c(phi);
    let ht = h.scale(C64::new(t, 0.0));
    Ok(Mat2C::scalar(c) - ht.scale(I * s))
}

/// exp(-i h t) for an arbitrary 2x2 generator, via the trace split
/// h = h0 I + (h - h0 I): the scalar factor exp(-i h0 t) multiplies the
/// closed-form SU(2) exponential of the traceless remainder.
pub fn expm_general(h: &Mat2C, t: f64) -> Result<Mat2C> {
    let d = pauli_decompose(h)?;
    if !t.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    let traceless = Mat2C::new(d.hz, d.hx - I * d.hy, d.hx + I * d.hy, -d.hz);
    let phase = (-I * d.h0 * t).exp();
    Ok(expm_su2(&traceless, t)?.scale(phase))
}

/// Reference exponential exp(M) by scaling and squaring with a degree-16
/// Taylor polynomial, scaled so the 1-norm of the argument is at most 2^-5.
///
/// This is the independent oracle path: it never looks at the Pauli
/// structure, eigenvalues, or trace of the input. Closed-form propagators are
/// validated against it in the test suite.
pub fn expm_series(m: &Mat2C) -> Mat2C {
    let norm = m.one_norm();
    let s = if norm > 0.03125 {
        (norm * 32.0).log2().ceil() as u32
    } else {
        0
    };
    let a = m.scale(C64::new(0.5_f64.powi(s as i32), 0.0));
    // Horner evaluation of sum_{k=0}^{16} A^k / k!.
    let mut acc = Mat2C::identity();
    for k in (1..=16u32).rev() {
        acc = Mat2C::identity() + (a * acc).scale(C64::new(1.0 / k as f64, 0.0));
    }
    let mut result = acc;
    for _ in 0..s {
        result = result * result;
    }
    result
}

/// Principal complex arccosine via the logarithmic formula
/// arccos(z) = -i Log(z + i sqrt(1 - z^2)).
pub fn arccos_c(z: C64) -> C64 {
    let w = z + I * (ONE - z * z).sqrt();
    -I * w.ln()
}

/// Hermitian inner product, conjugate-linear in the first slot.
pub fn inner(a: &[C64; 2], b: &[C64; 2]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn norm_sq(v: &[C64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

/// Normalize a ket; errors out when the norm underflows to the point where
/// the postselected state is numerically extinct.
pub fn normalize(v: &[C64; 2]) -> Result<[C64; 2]> {
    let n2 = norm_sq(v);
    if n2 < 1e-300 {
        return Err(NhjeError::DegenerateSurvival { s: n2 });
    }
    let inv = 1.0 / n2.sqrt();
    Ok([v[0] * inv, v[1] * inv])
}

/// Bloch vector <psi|sigma|psi> of a normalized ket.
pub fn bloch_vector(psi: &[C64; 2]) -> [f64; 3] {
    let cross = psi[0].conj() * psi[1];
    [
        2.0 * cross.re,
        2.0 * cross.im,
        psi[0].norm_sqr() - psi[1].norm_sqr(),
    ]
}
