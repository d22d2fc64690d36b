//! The hybrid two-level Hamiltonian family, its rotated frames, drive
//! protocols, energy eigenbasis, and the parity-exchange operator.
//!
//! The static family is H_hb(theta_k) = J*sigma_par + i*gamma*sigma_perp,
//! where sigma_par = sin(theta_k) sx - cos(theta_k) sz is the Hermitian
//! driving axis and sigma_perp = cos(theta_k) sx + sin(theta_k) sz the
//! anti-Hermitian one. theta_k = pi/2 gives the PT form i*gamma*sz + J*sx,
//! theta_k = 0 the anti-PT form i*gamma*sx - J*sz.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{C64, Mat2C};
use crate::error::{NhjeError, Result};

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Parameters of the static hybrid Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridParams {
    /// Hermitian driving strength, rad/us.
    pub j: f64,
    /// Dissipation rate, rad/us, non-negative.
    pub gamma: f64,
    /// Hybridization angle, radians, unnormalized.
    pub theta_k: f64,
}

impl HybridParams {
    pub fn new(j: f64, gamma: f64, theta_k: f64) -> Result<Self> {
        if !(j.is_finite() && gamma.is_finite() && theta_k.is_finite()) {
            return Err(NhjeError::NonFinite);
        }
        if gamma < 0.0 {
            return Err(NhjeError::InvalidParam(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(HybridParams { j, gamma, theta_k })
    }
}

/// Label for the two Hermitian-part eigenstates (energies +J and -J).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

/// The three drive schedules. Each is defined relative to a total duration T
/// supplied by [`DriveProtocol`]; all three are cyclic (J(0) = J(T)) and have
/// zero time-averaged detuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveKind {
    /// J(t) = J1, Delta(t) = 0.
    ConstantJ { j1: f64 },
    /// J ramps linearly j_min -> j_max over [0, T/2] and back; Delta(t) = 0.
    TriangleJ { j_min: f64, j_max: f64 },
    /// J(t) = J2, Delta(t) = Delta1 * sin(2 pi t / T).
    SinDetuning { j2: f64, delta1: f64 },
}

/// A drive schedule together with its total duration T (us).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveProtocol {
    #[serde(flatten)]
    pub kind: DriveKind,
    /// Protocol duration, us.
    pub t_total: f64,
}

impl DriveProtocol {
    pub fn new(kind: DriveKind, t_total: f64) -> Result<Self> {
        let proto = DriveProtocol { kind, t_total };
        proto.validate()?;
        Ok(proto)
    }

    pub fn constant_j(j1: f64, t_total: f64) -> Result<Self> {
        DriveProtocol::new(DriveKind::ConstantJ { j1 }, t_total)
    }

    pub fn triangle_j(j_min: f64, j_max: f64, t_total: f64) -> Result<Self> {
        DriveProtocol::new(DriveKind::TriangleJ { j_min, j_max }, t_total)
    }

    pub fn sin_detuning(j2: f64, delta1: f64, t_total: f64) -> Result<Self> {
        DriveProtocol::new(DriveKind::SinDetuning { j2, delta1 }, t_total)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self.kind {
            DriveKind::ConstantJ { j1 } => j1.is_finite(),
            DriveKind::TriangleJ { j_min, j_max } => j_min.is_finite() && j_max.is_finite(),
            DriveKind::SinDetuning { j2, delta1 } => j2.is_finite() && delta1.is_finite(),
        };
        if !finite || !self.t_total.is_finite() {
            return Err(NhjeError::NonFinite);
        }
        if self.t_total <= 0.0 {
            return Err(NhjeError::InvalidParam(format!(
                "protocol duration must be positive, got {}",
                self.t_total
            )));
        }
        match self.kind {
            DriveKind::ConstantJ { j1 } if j1 < 0.0 => Err(NhjeError::InvalidParam(format!(
                "J1 must be non-negative, got {j1}"
            ))),
            DriveKind::TriangleJ { j_min, j_max } if !(0.0..=j_max).contains(&j_min) => {
                Err(NhjeError::InvalidParam(format!(
                    "triangle ramp needs 0 <= j_min <= j_max, got {j_min}, {j_max}"
                )))
            }
            DriveKind::SinDetuning { j2, .. } if j2 < 0.0 => Err(NhjeError::InvalidParam(
                format!("J2 must be non-negative, got {j2}"),
            )),
            _ => Ok(()),
        }
    }

    /// Instantaneous driving strength J(t), rad/us.
    pub fn j_at(&self, t: f64) -> f64 {
        match self.kind {
            DriveKind::ConstantJ { j1 } => j1,
            DriveKind::TriangleJ { j_min, j_max } => {
                let half = self.t_total / 2.0;
                if t <= half {
                    j_min + (j_max - j_min) * t / half
                } else {
                    j_min + (j_max - j_min) * (self.t_total - t) / half
                }
            }
            DriveKind::SinDetuning { j2, .. } => j2,
        }
    }

    /// Instantaneous detuning Delta(t), rad/us.
    pub fn delta_at(&self, t: f64) -> f64 {
        match self.kind {
            DriveKind::ConstantJ { .. } | DriveKind::TriangleJ { .. } => 0.0,
            DriveKind::SinDetuning { delta1, .. } => {
                delta1 * (2.0 * std::f64::consts::PI * t / self.t_total).sin()
            }
        }
    }

    /// Largest |J(t)| over the protocol; used for step-count heuristics.
    pub fn j_peak(&self) -> f64 {
        match self.kind {
            DriveKind::ConstantJ { j1 } => j1.abs(),
            DriveKind::TriangleJ { j_min, j_max } => j_min.abs().max(j_max.abs()),
            DriveKind::SinDetuning { j2, .. } => j2.abs(),
        }
    }

    /// Detuning amplitude |Delta1| (zero for the detuning-free kinds).
    pub fn delta_peak(&self) -> f64 {
        match self.kind {
            DriveKind::SinDetuning { delta1, .. } => delta1.abs(),
            _ => 0.0,
        }
    }

    /// True when Delta(t) is identically zero, i.e. the protocol stays inside
    /// the symmetry-protected subspace.
    pub fn is_delta_free(&self) -> bool {
        matches!(
            self.kind,
            DriveKind::ConstantJ { .. } | DriveKind::TriangleJ { .. }
        )
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_total).contains(&t) {
            return Err(NhjeError::TimeOutOfRange {
                t,
                t_max: self.t_total,
            });
        }
        Ok(())
    }
}

/// Eigenbasis of the Hermitian part J*sigma_par(theta_k), plus the Bloch-space
/// measurement axis n_HM it defines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBasis {
    /// Eigenvector with eigenvalue -J: (-cos(theta_k/2), sin(theta_k/2)).
    pub e_minus: [C64; 2],
    /// Eigenvector with eigenvalue +J: (sin(theta_k/2), cos(theta_k/2)).
    pub e_plus: [C64; 2],
    /// Unit measurement axis (sin(theta_k), 0, -cos(theta_k)).
    pub n_hm: [f64; 3],
}

impl EnergyBasis {
    pub fn state(&self, b: Branch) -> [C64; 2] {
        match b {
            Branch::Plus => self.e_plus,
            Branch::Minus => self.e_minus,
        }
    }
}

pub fn sigma_x() -> Mat2C {
    Mat2C::new(ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), ZERO)
}

pub fn sigma_y() -> Mat2C {
    Mat2C::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2C {
    Mat2C::new(C64::new(1.0, 0.0), ZERO, ZERO, C64::new(-1.0, 0.0))
}

/// Hermitian driving axis sigma_par = sin(theta_k) sx - cos(theta_k) sz.
pub fn sigma_par(theta_k: f64) -> Mat2C {
    let (s, c) = theta_k.sin_cos();
    Mat2C::new(
        C64::new(-c, 0.0),
        C64::new(s, 0.0),
        C64::new(s, 0.0),
        C64::new(c, 0.0),
    )
}

/// Anti-Hermitian (loss) axis sigma_perp = cos(theta_k) sx + sin(theta_k) sz.
pub fn sigma_perp(theta_k: f64) -> Mat2C {
    let (s, c) = theta_k.sin_cos();
    Mat2C::new(
        C64::new(s, 0.0),
        C64::new(c, 0.0),
        C64::new(c, 0.0),
        C64::new(-s, 0.0),
    )
}

/// PT-symmetric member: i*gamma*sz + J*sx.
pub fn h_pt(j: f64, gamma: f64) -> Mat2C {
    Mat2C::new(
        C64::new(0.0, gamma),
        C64::new(j, 0.0),
        C64::new(j, 0.0),
        C64::new(0.0, -gamma),
    )
}

/// Anti-PT-symmetric member: i*gamma*sx - J*sz.
pub fn h_apt(j: f64, gamma: f64) -> Mat2C {
    Mat2C::new(
        C64::new(-j, 0.0),
        C64::new(0.0, gamma),
        C64::new(0.0, gamma),
        C64::new(j, 0.0),
    )
}

/// The hybrid Hamiltonian J*sigma_par + i*gamma*sigma_perp.
pub fn h_hybrid(p: &HybridParams) -> Mat2C {
    let (hm, nh) = h_hybrid_split(p);
    hm + nh
}

/// The Hermitian and anti-Hermitian parts (H_HM, H_NH) of the hybrid
/// Hamiltonian, returned separately.
pub fn h_hybrid_split(p: &HybridParams) -> (Mat2C, Mat2C) {
    let hm = sigma_par(p.theta_k).scale(C64::new(p.j, 0.0));
    let nh = sigma_perp(p.theta_k).scale(I.scale(p.gamma));
    (hm, nh)
}

/// SU(2) rotation exp(+i theta_k sy / 2); carries the anti-PT member onto the
/// hybrid family: h_hybrid(theta_k) = U(theta_k) H_APT U(theta_k)^dagger.
pub fn su2_rotation(theta_k: f64) -> Mat2C {
    let (s, c) = (theta_k / 2.0).sin_cos();
    Mat2C::new(
        C64::new(c, 0.0),
        C64::new(s, 0.0),
        C64::new(-s, 0.0),
        C64::new(c, 0.0),
    )
}

/// Eigenbasis of the Hermitian part at angle theta_k, with the sign and phase
/// convention fixed so e_minus carries the -cos component. This pins the
/// labeling of conditional probabilities P_fi once and for all.
pub fn energy_basis(theta_k: f64) -> EnergyBasis {
    let (s2, c2) = (theta_k / 2.0).sin_cos();
    let (s, c) = theta_k.sin_cos();
    EnergyBasis {
        e_minus: [C64::new(-c2, 0.0), C64::new(s2, 0.0)],
        e_plus: [C64::new(s2, 0.0), C64::new(c2, 0.0)],
        n_hm: [s, 0.0, -c],
    }
}

/// Parity-exchange operator -sin(theta_k) sz - cos(theta_k) sx. Hermitian,
/// involutive, traceless; swaps the two energy eigenstates and anticommutes
/// with the conjugated hybrid Hamiltonian: P H_hb^* P = -H_hb.
pub fn parity_exchange(theta_k: f64) -> Mat2C {
    let (s, c) = theta_k.sin_cos();
    Mat2C::new(
        C64::new(-s, 0.0),
        C64::new(-c, 0.0),
        C64::new(-c, 0.0),
        C64::new(s, 0.0),
    )
}

/// Lab-frame driven Hamiltonian
/// H_total(t) = J(t) sx + [Delta(t)/2 + i gamma] sz - i gamma I.
/// The trace part -i gamma I produces the global e^{-2 gamma t} norm decay.
pub fn h_total(t: f64, proto: &DriveProtocol, gamma: f64) -> Result<Mat2C> {
    Ok(h_relative(t, proto, gamma)? + Mat2C::scalar(-I.scale(gamma)))
}

/// Traceless core of the lab-frame Hamiltonian:
/// H_rel(t) = J(t) sx + [Delta(t)/2 + i gamma] sz.
pub fn h_relative(t: f64, proto: &DriveProtocol, gamma: f64) -> Result<Mat2C> {
    proto.check_time(t)?;
    let j = proto.j_at(t);
    let dz = C64::new(proto.delta_at(t) / 2.0, gamma);
    Ok(Mat2C::new(dz, C64::new(j, 0.0), C64::new(j, 0.0), -dz))
}

/// Rotated driven Hamiltonian
/// H'(theta_k, t) = J(t) sigma_par + [Delta(t)/2 + i gamma] sigma_perp - i gamma I.
pub fn h_rotated(t: f64, proto: &DriveProtocol, gamma: f64, theta_k: f64) -> Result<Mat2C> {
    Ok(h_rotated_relative(t, proto, gamma, theta_k)? + Mat2C::scalar(-I.scale(gamma)))
}

/// Traceless core of the rotated Hamiltonian:
/// J(t) sigma_par + [Delta(t)/2 + i gamma] sigma_perp.
pub fn h_rotated_relative(
    t: f64,
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
) -> Result<Mat2C> {
    proto.check_time(t)?;
    let j = proto.j_at(t);
    let dz = C64::new(proto.delta_at(t) / 2.0, gamma);
    Ok(sigma_par(theta_k).scale(C64::new(j, 0.0)) + sigma_perp(theta_k).scale(dz))
}

trait ScaleRe {
    fn scale(self, s: f64) -> C64;
}

impl ScaleRe for C64 {
    fn scale(self, s: f64) -> C64 {
        Complex64::new(self.re * s, self.im * s)
    }
}
