//! Effective Floquet generator extraction from the unit-determinant relative
//! propagator, and the search for symmetry-revival durations.
//!
//! For a duration T the relative propagator factors as
//! U_r = cos(theta) I - i sin(theta) n, with a complex dynamic phase theta(T)
//! and a unit-square direction matrix n. Inverting that form,
//!
//!   H_F = i theta / (T sin theta) (U_r - cos(theta) I),
//!
//! gives the time-independent generator whose exponential reproduces one
//! full run. arccos only yields theta up to sign and 2 pi branches, so the
//! phase is unwrapped along a grid in t, anchored at theta(0) = 0 and kept
//! dynamically continuous by a linear prediction from the previous two grid
//! points.
//!
//! A revival is a duration where H_F returns to the canonical hybrid form:
//! real coefficient on sigma_par, purely imaginary on sigma_perp, nothing on
//! sigma_y. The scalar residual R(T) collects the four offending components,
//! normalized by the quasi-energy magnitude so tolerances are scale-free.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{arccos_c, expm_su2, pauli_decompose, C64, Mat2C, PauliDecomp};
use crate::error::{NhjeError, Result};
use crate::evolution::{default_steps, propagate_relative};
use crate::model::{DriveKind, DriveProtocol};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Residual threshold below which a duration counts as a certified revival.
pub const CERT_TOL: f64 = 1e-4;

/// Phase magnitudes below this use the nilpotent-limit series for
/// theta / sin(theta); |sin theta| below it (away from zero) switches the
/// direction reconstruction to a neighboring grid point.
const DEGENERATE_SIN: f64 = 1e-3;

/// Complex projections of a traceless matrix onto the rotated axis frame
/// {sigma_par(theta_k), sigma_perp(theta_k), sigma_y}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AxisProjections {
    pub h_par: C64,
    pub h_perp: C64,
    pub h_y: C64,
}

/// Everything extracted from one duration T.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FloquetResult {
    /// Duration, us.
    pub t: f64,
    /// Unwrapped complex dynamic phase theta(T).
    pub theta_phase: C64,
    /// Traceless effective generator, rad/us.
    pub h_f: Mat2C,
    /// Pauli coefficients of `h_f`.
    pub h: PauliDecomp,
    /// Projections of `h_f` onto the rotated axes.
    pub proj: AxisProjections,
    /// Complex quasi-energy theta / T.
    pub e_f: C64,
    /// Max-entry defect of exp(-i h_f T) against the propagator it came from.
    pub recon_residual: f64,
    /// Largest |theta_j - theta_{j-1}| seen while unwrapping; continuity
    /// means this stays well below pi/2.
    pub max_phase_jump: f64,
}

impl FloquetResult {
    /// Scalar revival residual: the four components that must vanish for the
    /// generator to return to the hybrid family, normalized by |E_F|.
    pub fn revival_residual(&self) -> f64 {
        let num = self
            .proj
            .h_perp
            .re
            .abs()
            .max(self.proj.h_y.re.abs())
            .max(self.proj.h_par.im.abs())
            .max(self.proj.h_y.im.abs());
        if num <= f64::MIN_POSITIVE {
            0.0
        } else {
            num / self.e_f.norm()
        }
    }

    /// The four normalized residual components
    /// (|Re h_perp|, |Re h_y|, |Im h_par|, |Im h_y|) / |E_F|.
    pub fn residual_components(&self) -> [f64; 4] {
        let scale = self.e_f.norm();
        [
            self.proj.h_perp.re.abs() / scale,
            self.proj.h_y.re.abs() / scale,
            self.proj.h_par.im.abs() / scale,
            self.proj.h_y.im.abs() / scale,
        ]
    }
}

/// One coarse-scan sample of the revival search.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanPoint {
    pub t: f64,
    pub h_par: C64,
    pub h_perp: C64,
    pub h_y: C64,
    /// Normalized scalar residual R(T).
    pub residual: f64,
}

/// A certified revival duration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RevivalRoot {
    /// Revival duration, us (refined to 1e-3 us).
    pub tau: f64,
    /// Normalized residual components at tau, all below [`CERT_TOL`].
    pub residuals: [f64; 4],
    /// Effective driving strength Re h_par at tau, rad/us.
    pub j_eff: f64,
    /// Effective dissipation Im h_perp at tau, rad/us.
    pub gamma_eff: f64,
}

/// Outcome of a revival search over a duration range.
#[derive(Clone, Debug, Serialize)]
pub struct RevivalReport {
    pub roots: Vec<RevivalRoot>,
    pub scan: Vec<ScanPoint>,
    /// Set when the residual is below tolerance across the whole range, in
    /// which case discrete roots are meaningless and none are listed.
    pub uniformly_symmetric: bool,
}

/// Unit-determinant propagator of the rotated traceless core; the global
/// decay factor is stripped, so this is exactly e^{+gamma T} U'.
pub fn relative_propagator(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    steps: usize,
) -> Result<Mat2C> {
    propagate_relative(proto, gamma, theta_k, t_end, steps)
}

/* Pick the unwrapped phase at one grid point.

The principal value comes with a sign and 2-pi-branch freedom. Candidates are
built from both signs with the branch index centered on the prediction, and
the one nearest the prediction wins. A near-tie between candidates that
reconstruct differently (not a +-theta pair, values clearly apart) means the
grid cannot resolve the branch and is reported as such. */
fn select_branch(theta_principal: C64, pred: C64, t: f64) -> Result<C64> {
    let mut best: Option<(f64, C64)> = None;
    let mut second: Option<(f64, C64)> = None;
    for sign in [1.0, -1.0] {
        let base = theta_principal * sign;
        let k0 = ((pred.re - base.re) / TWO_PI).round();
        for dk in -2..=2i64 {
            let cand = base + C64::new(TWO_PI * (k0 + dk as f64), 0.0);
            let d = (cand - pred).norm();
            match best {
                Some((db, cb)) if d >= db => {
                    let replace = match second {
                        Some((ds, _)) => d < ds,
                        None => true,
                    };
                    // keep the runner-up only if it is a distinct value
                    if replace && (cand - cb).norm() > 1e-9 {
                        second = Some((d, cand));
                    }
                }
                _ => {
                    if let Some((db, cb)) = best {
                        if (cb - cand).norm() > 1e-9 && second.is_none_or(|(ds, _)| db < ds) {
                            second = Some((db, cb));
                        }
                    }
                    best = Some((d, cand));
                }
            }
        }
    }
    let (d_best, cand_best) = best.expect("candidate set is never empty");
    if let Some((d_second, cand_second)) = second {
        let distinct_value = (cand_best - cand_second).norm() > 1e-3;
        let not_sign_pair = (cand_best + cand_second).norm() > 1e-3;
        if (d_second - d_best).abs() < 1e-6 && distinct_value && not_sign_pair {
            return Err(NhjeError::BranchAmbiguity {
                t,
                gap: (d_second - d_best).abs(),
            });
        }
    }
    Ok(cand_best)
}

// theta / sin(theta), series form below the degenerate threshold
fn theta_over_sin(theta: C64) -> C64 {
    if theta.norm() < DEGENERATE_SIN {
        let t2 = theta * theta;
        C64::new(1.0, 0.0) + t2 / 6.0 + t2 * t2 * (7.0 / 360.0)
    } else {
        theta / theta.sin()
    }
}

/// Extracts the effective Floquet generator of `proto` over [0, t_end].
///
/// The phase is unwrapped on a grid of spacing at most `grid_resolution`
/// (required to be in (0, 0.5] us), anchored at theta(0) = 0. Degenerate
/// phases (sin theta ~ 0 away from theta ~ 0) take the generator direction
/// from the nearest non-degenerate grid point and rescale it to the exact
/// final phase.
pub fn extract_floquet(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    grid_resolution: f64,
) -> Result<FloquetResult> {
    if !(grid_resolution > 0.0 && grid_resolution <= 0.5) {
        return Err(NhjeError::InvalidParam(format!(
            "grid_resolution must be in (0, 0.5] us, got {grid_resolution}"
        )));
    }
    if !(t_end > 0.0 && t_end <= proto.t_total) {
        return Err(NhjeError::TimeOutOfRange {
            t: t_end,
            t_max: proto.t_total,
        });
    }

    let n_grid = ((t_end / grid_resolution).ceil() as usize).max(2);
    let total_steps = default_steps(proto, gamma, t_end);
    let sub_steps = total_steps.div_ceil(n_grid);

    // One pass over the grid: accumulate U_r(t_j) incrementally and unwrap.
    let mut u = Mat2C::identity();
    let mut grid: Vec<(f64, Mat2C, C64)> = Vec::with_capacity(n_grid);
    let mut prev = C64::new(0.0, 0.0);
    let mut prev2: Option<C64> = None;
    let mut max_phase_jump: f64 = 0.0;
    for j in 1..=n_grid {
        let t0 = t_end * (j - 1) as f64 / n_grid as f64;
        let t1 = t_end * j as f64 / n_grid as f64;
        u = segment(proto, gamma, theta_k, t0, t1, sub_steps)? * u;
        let principal = arccos_c(u.trace() * 0.5);
        let pred = match prev2 {
            Some(p2) => prev * 2.0 - p2,
            None => prev,
        };
        let theta = select_branch(principal, pred, t1)?;
        max_phase_jump = max_phase_jump.max((theta - prev).norm());
        grid.push((t1, u, theta));
        prev2 = Some(prev);
        prev = theta;
    }

    let (_, u_final, theta) = *grid.last().expect("grid has at least two points");
    let sin_theta = theta.sin();
    let cos_theta = theta.cos();

    let h_f = if theta.norm() < DEGENERATE_SIN || sin_theta.norm() >= DEGENERATE_SIN {
        // regular closed form; near theta ~ 0 the series limit of
        // theta/sin(theta) keeps it exact through the nilpotent point
        let i = C64::new(0.0, 1.0);
        (u_final - Mat2C::scalar(cos_theta)).scale(i * theta_over_sin(theta) / t_end)
    } else {
        // phase sits at a nonzero multiple of pi: take the direction from
        // the nearest resolvable grid point and attach the exact phase
        let neighbor = grid
            .iter()
            .rev()
            .find(|(_, _, th)| th.sin().norm() >= DEGENERATE_SIN)
            .copied();
        let (_, u_nb, th_nb) = neighbor.ok_or_else(|| {
            NhjeError::InvalidParam(
                "no non-degenerate grid point available for direction reconstruction; \
                 refine the extraction grid"
                    .into(),
            )
        })?;
        let i = C64::new(0.0, 1.0);
        // unit-square direction n from the neighbor, then H_F = (theta/T) n
        let dir = (u_nb - Mat2C::scalar(th_nb.cos())).scale(i / th_nb.sin());
        dir.scale(theta / t_end)
    };

    let h = pauli_decompose(&h_f)?;
    let (s, c) = theta_k.sin_cos();
    let proj = AxisProjections {
        h_par: h.hx * s - h.hz * c,
        h_perp: h.hx * c + h.hz * s,
        h_y: h.hy,
    };
    let e_f = theta / t_end;
    let recon_residual = expm_su2(&h_f, t_end)?.max_diff(&u_final);

    Ok(FloquetResult {
        t: t_end,
        theta_phase: theta,
        h_f,
        h,
        proj,
        e_f,
        recon_residual,
        max_phase_jump,
    })
}

// re-export of the integrator's interior-segment product for the grid pass
fn segment(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Mat2C> {
    // delegate through propagate_relative on the [0, t1] prefix would redo
    // work; instead integrate just the slice using the same midpoint rule
    let dt = (t1 - t0) / steps as f64;
    let mut u = Mat2C::identity();
    for n in 0..steps {
        let t_mid = t0 + (n as f64 + 0.5) * dt;
        let h = crate::model::h_rotated_relative(
            t_mid.min(proto.t_total),
            proto,
            gamma,
            theta_k,
        )?;
        u = expm_su2(&h, dt)? * u;
    }
    Ok(u)
}

/// Default extraction grid spacing used by the revival scan, us.
const SCAN_GRID_RESOLUTION: f64 = 0.25;

fn residual_at(kind: DriveKind, gamma: f64, theta_k: f64, t: f64) -> Result<FloquetResult> {
    let proto = DriveProtocol::new(kind, t)?;
    extract_floquet(&proto, gamma, theta_k, t, SCAN_GRID_RESOLUTION)
}

/// Scans R(T) over `t_range`, brackets every local minimum of the coarse
/// curve, refines each by golden-section search to a width of 1e-3 us, and
/// certifies roots where R stays below [`CERT_TOL`].
///
/// Each grid duration instantiates the drive kind with that total duration,
/// matching how the protocols are defined relative to their period.
pub fn find_revivals(
    kind: DriveKind,
    gamma: f64,
    theta_k: f64,
    t_range: [f64; 2],
    coarse_step: f64,
) -> Result<RevivalReport> {
    let [lo, hi] = t_range;
    if !(lo > 0.0 && hi <= 200.0 && hi > lo) {
        return Err(NhjeError::InvalidParam(format!(
            "duration range must satisfy 0 < lo < hi <= 200, got [{lo}, {hi}]"
        )));
    }
    if !(coarse_step > 0.0 && coarse_step <= 1.0) {
        return Err(NhjeError::InvalidParam(format!(
            "coarse_step must be in (0, 1] us, got {coarse_step}"
        )));
    }

    let n = ((hi - lo) / coarse_step).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| lo + k as f64 * coarse_step).collect();
    if hi - ts[n] > 1e-9 {
        ts.push(hi);
    }

    let results: Vec<FloquetResult> = ts
        .par_iter()
        .map(|&t| residual_at(kind, gamma, theta_k, t))
        .collect::<Result<_>>()?;
    let scan: Vec<ScanPoint> = results
        .iter()
        .map(|r| ScanPoint {
            t: r.t,
            h_par: r.proj.h_par,
            h_perp: r.proj.h_perp,
            h_y: r.proj.h_y,
            residual: r.revival_residual(),
        })
        .collect();

    if scan.iter().all(|p| p.residual < CERT_TOL) {
        return Ok(RevivalReport {
            roots: Vec::new(),
            scan,
            uniformly_symmetric: true,
        });
    }

    let mut roots: Vec<RevivalRoot> = Vec::new();
    for j in 1..scan.len().saturating_sub(1) {
        let (a, b, c) = (scan[j - 1].residual, scan[j].residual, scan[j + 1].residual);
        if b <= a && b <= c {
            let tau = golden_min(kind, gamma, theta_k, scan[j - 1].t, scan[j + 1].t)?;
            let at_root = residual_at(kind, gamma, theta_k, tau)?;
            if at_root.revival_residual() < CERT_TOL {
                let duplicate = roots.iter().any(|r| (r.tau - tau).abs() < 1e-2);
                if !duplicate {
                    roots.push(RevivalRoot {
                        tau,
                        residuals: at_root.residual_components(),
                        j_eff: at_root.proj.h_par.re,
                        gamma_eff: at_root.proj.h_perp.im,
                    });
                }
            }
        }
    }
    roots.sort_by(|a, b| a.tau.total_cmp(&b.tau));

    Ok(RevivalReport {
        roots,
        scan,
        uniformly_symmetric: false,
    })
}

// golden-section minimization of the scalar residual on [a, b]
fn golden_min(kind: DriveKind, gamma: f64, theta_k: f64, mut a: f64, mut b: f64) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let eval = |t: f64| -> Result<f64> { Ok(residual_at(kind, gamma, theta_k, t)?.revival_residual()) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a) > 1e-3 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    Ok((a + b) / 2.0)
}
