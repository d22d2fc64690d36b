//! Time-ordered propagation of the driven non-Hermitian qubit and everything
//! measured from it: survival factors, normalized conditional transition
//! probabilities, Bloch-sphere trajectories, the segmented re-preparation
//! scheme, and an independent three-level Lindblad integrator used to
//! cross-check the postselected (no-jump) description.
//!
//! The integrator is midpoint-sampled piecewise-constant exponentiation:
//! each step applies the closed-form propagator of the Hamiltonian frozen at
//! the interval midpoint. That is exact for constant generators and second
//! order in the step size for time-dependent ones, and because every factor
//! lies in the hybrid family, the factor-level symmetries (parity exchange,
//! amplitude conjugation) survive discretization to machine precision.

use serde::Serialize;

use crate::algebra::{bloch_vector, expm_su2, inner, norm_sq, normalize, C64, Mat2C};
use crate::error::{NhjeError, Result};
use crate::model::{energy_basis, h_rotated_relative, Branch, DriveProtocol};

const I: C64 = C64::new(0.0, 1.0);

/// Survival factor under which a trajectory counts as extinct.
const EXTINCTION: f64 = 1e-300;

/// Step-count heuristic: at least 2000 steps, and at least 200 per
/// characteristic period of the fastest scale J_peak + |Delta1|/2 + gamma.
pub fn default_steps(proto: &DriveProtocol, gamma: f64, t_end: f64) -> usize {
    let rate = proto.j_peak() + proto.delta_peak() / 2.0 + gamma;
    let by_rate = (200.0 * t_end * rate).ceil();
    if by_rate.is_finite() && by_rate > 2000.0 {
        by_rate as usize
    } else {
        2000
    }
}

fn check_span(proto: &DriveProtocol, t_end: f64, steps: usize) -> Result<()> {
    if !(t_end > 0.0 && t_end <= proto.t_total) {
        return Err(NhjeError::TimeOutOfRange {
            t: t_end,
            t_max: proto.t_total,
        });
    }
    if steps == 0 {
        return Err(NhjeError::InvalidParam("steps must be >= 1".into()));
    }
    Ok(())
}

/// Time-ordered product of midpoint-frozen factors for the traceless rotated
/// core over [t_start, t_end]. The global scalar factor is reattached by the
/// callers, which keeps unit determinant exact here.
fn product_relative(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_start: f64,
    t_end: f64,
    steps: usize,
) -> Result<Mat2C> {
    let dt = (t_end - t_start) / steps as f64;
    let mut u = Mat2C::identity();
    for n in 0..steps {
        let t_mid = t_start + (n as f64 + 0.5) * dt;
        let h = h_rotated_relative(t_mid.min(proto.t_total), proto, gamma, theta_k)?;
        u = expm_su2(&h, dt)? * u;
    }
    Ok(u)
}

/// Full propagator U'(theta_k, t_end) of the rotated Hamiltonian, including
/// the global decay factor e^{-gamma t_end} from the trace part.
pub fn propagate(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    steps: usize,
) -> Result<Mat2C> {
    let u_r = propagate_relative(proto, gamma, theta_k, t_end, steps)?;
    Ok(u_r.scale(C64::new((-gamma * t_end).exp(), 0.0)))
}

/// Unit-determinant relative propagator U_r = e^{+gamma t_end} U'. The trace
/// part is a scalar, so it factors out of every time-ordered product exactly.
pub fn propagate_relative(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    steps: usize,
) -> Result<Mat2C> {
    check_span(proto, t_end, steps)?;
    product_relative(proto, gamma, theta_k, 0.0, t_end, steps)
}

/// Conditional transition statistics of one protocol run: unnormalized
/// two-point probabilities p_fi, survival factors S_i, and the
/// survival-normalized P_fi, all in the theta_k energy eigenbasis.
///
/// Index convention: the first index is the final state f, the second the
/// initial state i, each `Branch::Plus` or `Branch::Minus`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransitionTable {
    p: [[f64; 2]; 2],
    s: [f64; 2],
    pp: [[f64; 2]; 2],
    pub theta_k: f64,
    pub t: f64,
}

fn idx(b: Branch) -> usize {
    match b {
        Branch::Plus => 0,
        Branch::Minus => 1,
    }
}

impl TransitionTable {
    /// Unnormalized two-point probability p_fi = |<e_f|U'|e_i>|^2.
    pub fn p_raw(&self, f: Branch, i: Branch) -> f64 {
        self.p[idx(f)][idx(i)]
    }

    /// Survival factor S_i = p_+i + p_-i.
    pub fn survival(&self, i: Branch) -> f64 {
        self.s[idx(i)]
    }

    /// Normalized conditional probability P_fi = p_fi / S_i.
    pub fn p(&self, f: Branch, i: Branch) -> f64 {
        self.pp[idx(f)][idx(i)]
    }

    /// Build a table from already-normalized conditional probabilities and
    /// survival factors. Rows (fixed i, summed over f) must be normalized.
    pub fn from_probabilities(
        pp: [[f64; 2]; 2],
        s: [f64; 2],
        theta_k: f64,
        t: f64,
    ) -> Result<Self> {
        for v in pp.iter().flatten().chain(s.iter()) {
            if !v.is_finite() {
                return Err(NhjeError::NonFinite);
            }
        }
        let mut defect: f64 = 0.0;
        for i in 0..2 {
            defect = defect.max((pp[0][i] + pp[1][i] - 1.0).abs());
        }
        if defect > 1e-9 {
            return Err(NhjeError::UnnormalizedTable { defect });
        }
        let p = [
            [pp[0][0] * s[0], pp[0][1] * s[1]],
            [pp[1][0] * s[0], pp[1][1] * s[1]],
        ];
        Ok(TransitionTable {
            p,
            s,
            pp,
            theta_k,
            t,
        })
    }

    fn from_propagator(u_full: &Mat2C, theta_k: f64, t: f64) -> Result<Self> {
        let basis = energy_basis(theta_k);
        let states = [basis.e_plus, basis.e_minus];
        let mut p = [[0.0; 2]; 2];
        let mut s = [0.0; 2];
        for (i, e_i) in states.iter().enumerate() {
            let evolved = u_full.apply(*e_i);
            for (f, e_f) in states.iter().enumerate() {
                p[f][i] = inner(e_f, &evolved).norm_sqr();
            }
            s[i] = p[0][i] + p[1][i];
            if s[i] < EXTINCTION {
                return Err(NhjeError::DegenerateSurvival { s: s[i] });
            }
        }
        let pp = [
            [p[0][0] / s[0], p[0][1] / s[1]],
            [p[1][0] / s[0], p[1][1] / s[1]],
        ];
        Ok(TransitionTable {
            p,
            s,
            pp,
            theta_k,
            t,
        })
    }
}

/// Transition table at the default step count.
pub fn transition_table(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
) -> Result<TransitionTable> {
    let steps = default_steps(proto, gamma, t_end);
    transition_table_with_steps(proto, gamma, theta_k, t_end, steps)
}

/// Transition table with an explicit step count.
pub fn transition_table_with_steps(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    steps: usize,
) -> Result<TransitionTable> {
    let u = propagate(proto, gamma, theta_k, t_end, steps)?;
    TransitionTable::from_propagator(&u, theta_k, t_end)
}

/// One sample of a postselected Bloch trajectory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlochSample {
    /// Sample time, us.
    pub t: f64,
    /// Unit Bloch vector of the normalized postselected state.
    pub n: [f64; 3],
    /// Which eigenstate the trajectory started from.
    pub source: Branch,
}

/// Postselected Bloch trajectory from one initial eigenstate, sampled at
/// `samples` equally spaced times spanning [0, T]. The state is renormalized
/// at every sample, mirroring the postselection definition.
pub fn bloch_trajectory(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    source: Branch,
    samples: usize,
) -> Result<Vec<BlochSample>> {
    if samples < 2 {
        return Err(NhjeError::InvalidParam(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let t_total = proto.t_total;
    let total_steps = default_steps(proto, gamma, t_total);
    let intervals = samples - 1;
    let sub_steps = total_steps.div_ceil(intervals);

    let start = energy_basis(theta_k).state(source);
    let mut out = Vec::with_capacity(samples);
    out.push(BlochSample {
        t: 0.0,
        n: bloch_vector(&start),
        source,
    });

    // Accumulate the relative propagator interval by interval; the global
    // scalar decay cannot change the normalized state, so it is skipped.
    let mut u = Mat2C::identity();
    for k in 1..=intervals {
        let t0 = t_total * (k - 1) as f64 / intervals as f64;
        let t1 = t_total * k as f64 / intervals as f64;
        u = product_relative(proto, gamma, theta_k, t0, t1, sub_steps)? * u;
        let psi = normalize(&u.apply(start))?;
        out.push(BlochSample {
            t: t1,
            n: bloch_vector(&psi),
            source,
        });
    }
    Ok(out)
}

/// One point of a survival scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SurvivalSample {
    /// Protocol duration, us.
    pub t: f64,
    /// Relative survival <e_+|U_r^dag U_r|e_+> (global decay removed).
    pub s_plus: f64,
    /// Relative survival for the minus eigenstate.
    pub s_minus: f64,
    /// Full norm <e_+|U'^dag U'|e_+> = e^{-2 gamma T} * s_plus.
    pub norm_plus: f64,
    /// Full norm for the minus eigenstate.
    pub norm_minus: f64,
}

/// Survival factors across a grid of protocol durations. Each grid value T
/// instantiates the drive kind with duration T and propagates to its end.
pub fn survival_curve(
    kind: crate::model::DriveKind,
    gamma: f64,
    theta_k: f64,
    t_grid: &[f64],
) -> Result<Vec<SurvivalSample>> {
    if t_grid.is_empty() {
        return Err(NhjeError::InvalidParam("empty duration grid".into()));
    }
    let basis = energy_basis(theta_k);
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let proto = DriveProtocol::new(kind, t)?;
        let steps = default_steps(&proto, gamma, t);
        let u_r = propagate_relative(&proto, gamma, theta_k, t, steps)?;
        let s_plus = norm_sq(&u_r.apply(basis.e_plus));
        let s_minus = norm_sq(&u_r.apply(basis.e_minus));
        let decay = (-2.0 * gamma * t).exp();
        out.push(SurvivalSample {
            t,
            s_plus,
            s_minus,
            norm_plus: s_plus * decay,
            norm_minus: s_minus * decay,
        });
    }
    Ok(out)
}

/// Per-segment bookkeeping of the segmented re-preparation scheme, for one
/// initial eigenstate.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentTrace {
    /// Which eigenstate the chain started from.
    pub source: Branch,
    /// Relative (decay-free) survival of each segment, given exact
    /// re-preparation in the predicted state at the segment start.
    pub rel_survivals: Vec<f64>,
    /// Full per-segment survival including the global e^{-2 gamma dt} decay.
    pub full_survivals: Vec<f64>,
}

/// Result of [`piecewise_detail`]: the concatenated statistics plus the
/// per-segment survival factors the shot emulator needs.
#[derive(Clone, Debug, Serialize)]
pub struct PiecewiseDetail {
    pub table: TransitionTable,
    pub segments: [SegmentTrace; 2],
}

/// Emulates the segmented experimental scheme: the span [0, T] is cut into
/// `n_segments` equal pieces and the (normalized) state predicted at each
/// boundary is re-prepared exactly before the next piece runs.
///
/// Exact re-preparation never changes the ray of the evolving state, so the
/// concatenated conditional statistics coincide with the continuous ones;
/// what changes is the per-shot survival budget, which is why the segment
/// survivals are reported separately.
pub fn piecewise_detail(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    n_segments: usize,
) -> Result<PiecewiseDetail> {
    if n_segments == 0 {
        return Err(NhjeError::InvalidParam("need at least one segment".into()));
    }
    check_span(proto, t_end, 1)?;
    let total_steps = default_steps(proto, gamma, t_end);
    let sub_steps = total_steps.div_ceil(n_segments);
    let dt = t_end / n_segments as f64;
    let seg_decay = (-2.0 * gamma * dt).exp();

    let basis = energy_basis(theta_k);
    let mut p = [[0.0; 2]; 2];
    let mut s = [0.0; 2];
    let mut segments = Vec::with_capacity(2);

    for (i, source) in [Branch::Plus, Branch::Minus].into_iter().enumerate() {
        let mut psi = basis.state(source);
        let mut rel_survivals = Vec::with_capacity(n_segments);
        let mut cumulative = 1.0;
        for n in 0..n_segments {
            let t0 = t_end * n as f64 / n_segments as f64;
            let t1 = t_end * (n + 1) as f64 / n_segments as f64;
            let u = product_relative(proto, gamma, theta_k, t0, t1, sub_steps)?;
            let raw = u.apply(psi);
            let seg_survival = norm_sq(&raw);
            if seg_survival < EXTINCTION {
                return Err(NhjeError::DegenerateSurvival { s: seg_survival });
            }
            rel_survivals.push(seg_survival);
            cumulative *= seg_survival;
            psi = normalize(&raw)?;
        }
        // project the final re-prepared state onto the measurement basis
        let a_plus = inner(&basis.e_plus, &psi).norm_sqr();
        let a_minus = inner(&basis.e_minus, &psi).norm_sqr();
        let decay = (-2.0 * gamma * t_end).exp();
        s[i] = cumulative * decay;
        p[0][i] = a_plus * s[i];
        p[1][i] = a_minus * s[i];
        segments.push(SegmentTrace {
            source,
            full_survivals: rel_survivals.iter().map(|r| r * seg_decay).collect(),
            rel_survivals,
        });
    }

    let pp = [
        [p[0][0] / s[0], p[0][1] / s[1]],
        [p[1][0] / s[0], p[1][1] / s[1]],
    ];
    let table = TransitionTable {
        p,
        s,
        pp,
        theta_k,
        t: t_end,
    };
    let segments = match <[SegmentTrace; 2]>::try_from(segments) {
        Ok(a) => a,
        Err(_) => unreachable!("exactly two initial states"),
    };
    Ok(PiecewiseDetail { table, segments })
}

/// Segmented evolution reduced to its concatenated transition table.
pub fn piecewise_evolution(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t_end: f64,
    n_segments: usize,
) -> Result<TransitionTable> {
    Ok(piecewise_detail(proto, gamma, theta_k, t_end, n_segments)?.table)
}

// ----- three-level Lindblad cross-check -------------------------------------

/// Dense complex 3x3 matrix, used only by the Lindblad integrator.
#[derive(Clone, Copy, Debug)]
struct Mat3C {
    a: [[C64; 3]; 3],
}

impl Mat3C {
    fn zero() -> Self {
        Mat3C {
            a: [[C64::new(0.0, 0.0); 3]; 3],
        }
    }


    fn add_scaled(&mut self, rhs: &Mat3C, w: f64) {
        for r in 0..3 {
            for c in 0..3 {
                self.a[r][c] += rhs.a[r][c] * w;
            }
        }
    }

    fn trace(&self) -> C64 {
        self.a[0][0] + self.a[1][1] + self.a[2][2]
    }

    fn max_diff(&self, rhs: &Mat3C) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                m = m.max((self.a[r][c] - rhs.a[r][c]).norm());
            }
        }
        m
    }
}

/// Lindblad right-hand side with qubit Hamiltonian block
/// [[Delta/2, J], [J, -Delta/2]], a dark third level |a>, and the single
/// collapse operator L = sqrt(4 gamma) |a><q1| draining the second qubit
/// state. Written out by hand: the commutator block, the refill of the leak
/// population, and the anti-commutator damping of everything touching q1.
fn lindblad_rhs(rho: &Mat3C, j: f64, delta: f64, gamma: f64) -> Mat3C {
    let h = [
        [C64::new(delta / 2.0, 0.0), C64::new(j, 0.0), C64::new(0.0, 0.0)],
        [C64::new(j, 0.0), C64::new(-delta / 2.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
    ];
    let mut out = Mat3C::zero();
    // -i [H, rho]
    for r in 0..3 {
        for c in 0..3 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..3 {
                acc += h[r][k] * rho.a[k][c] - rho.a[r][k] * h[k][c];
            }
            out.a[r][c] = -I * acc;
        }
    }
    // L rho L^dag = 4 gamma rho_{11} |a><a|  (q1 is index 1, |a> is index 2)
    let rate = 4.0 * gamma;
    out.a[2][2] += rho.a[1][1] * rate;
    // -1/2 {L^dag L, rho} with L^dag L = 4 gamma |q1><q1|
    for k in 0..3 {
        out.a[1][k] -= rho.a[1][k] * (rate / 2.0);
        out.a[k][1] -= rho.a[k][1] * (rate / 2.0);
    }
    out
}

fn rk4_lindblad(
    proto: &DriveProtocol,
    gamma: f64,
    rho0: &Mat2C,
    t_end: f64,
    steps: usize,
) -> Result<Mat3C> {
    let mut rho = Mat3C::zero();
    rho.a[0][0] = rho0.a11;
    rho.a[0][1] = rho0.a12;
    rho.a[1][0] = rho0.a21;
    rho.a[1][1] = rho0.a22;

    let dt = t_end / steps as f64;
    for n in 0..steps {
        let t = n as f64 * dt;
        let eval = |tau: f64, state: &Mat3C| -> Mat3C {
            let tau = tau.min(proto.t_total);
            lindblad_rhs(state, proto.j_at(tau), proto.delta_at(tau), gamma)
        };
        let k1 = eval(t, &rho);
        let mut r2 = rho;
        r2.add_scaled(&k1, dt / 2.0);
        let k2 = eval(t + dt / 2.0, &r2);
        let mut r3 = rho;
        r3.add_scaled(&k2, dt / 2.0);
        let k3 = eval(t + dt / 2.0, &r3);
        let mut r4 = rho;
        r4.add_scaled(&k3, dt);
        let k4 = eval(t + dt, &r4);
        rho.add_scaled(&k1, dt / 6.0);
        rho.add_scaled(&k2, dt / 3.0);
        rho.add_scaled(&k3, dt / 3.0);
        rho.add_scaled(&k4, dt / 6.0);
    }
    Ok(rho)
}

/// Integrates the three-level master equation with the qubit block of the
/// drive Hamiltonian and a single jump channel out of the lossy qubit state,
/// starting from the qubit density block `rho0` (unit trace).
///
/// Returns the final qubit-subspace block and the population leaked to the
/// dark level. A Richardson probe (full vs. half step count) guards the
/// step choice: if the probe defect exceeds 1e-8 the call fails with an
/// accuracy error instead of returning an under-resolved answer.
pub fn lindblad_oracle(
    proto: &DriveProtocol,
    gamma: f64,
    rho0: &Mat2C,
    t_end: f64,
    steps: usize,
) -> Result<(Mat2C, f64)> {
    const TOL: f64 = 1e-8;
    if gamma < 0.0 {
        return Err(NhjeError::InvalidParam(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    check_span(proto, t_end, steps)?;
    if !rho0.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    let herm_defect = rho0.max_diff(&rho0.adjoint());
    let trace_defect = (rho0.trace() - C64::new(1.0, 0.0)).norm();
    if herm_defect > 1e-9 || trace_defect > 1e-9 {
        return Err(NhjeError::InvalidParam(format!(
            "rho0 must be a unit-trace Hermitian block (hermiticity defect {herm_defect:.3e}, trace defect {trace_defect:.3e})"
        )));
    }

    let fine = rk4_lindblad(proto, gamma, rho0, t_end, steps)?;
    if steps >= 2 {
        let coarse = rk4_lindblad(proto, gamma, rho0, t_end, steps / 2)?;
        let defect = fine.max_diff(&coarse);
        if defect > TOL {
            return Err(NhjeError::Accuracy { defect, tol: TOL });
        }
    }
    let conservation = (fine.trace() - C64::new(1.0, 0.0)).norm();
    if conservation > 1e-10 {
        return Err(NhjeError::Accuracy {
            defect: conservation,
            tol: 1e-10,
        });
    }

    let qubit = Mat2C::new(fine.a[0][0], fine.a[0][1], fine.a[1][0], fine.a[1][1]);
    Ok((qubit, fine.a[2][2].re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::expm_general;
    use crate::model::{h_pt, h_total, parity_exchange, DriveKind, HybridParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn default_steps_floor_and_scaling() {
        let proto = DriveProtocol::constant_j(0.03, 10.0).unwrap();
        assert_eq!(default_steps(&proto, 0.02, 10.0), 2000);
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 100.0).unwrap();
        // 200 * 100 * (0.12 + 0.25 + 0.02) = 7800
        assert_eq!(default_steps(&proto, 0.02, 100.0), 7800);
    }

    #[test]
    fn propagate_short_span_is_near_identity() {
        let proto = DriveProtocol::constant_j(0.03, 10.0).unwrap();
        let u = propagate(&proto, 0.02, FRAC_PI_2, 1e-9, 1).unwrap();
        assert!(u.max_diff(&Mat2C::identity()) < 1e-9);
    }

    #[test]
    fn propagate_constant_matches_closed_form() {
        let proto = DriveProtocol::constant_j(0.03, 20.0).unwrap();
        let t = 10.0;
        let u = propagate(&proto, 0.02, FRAC_PI_2, t, 2000).unwrap();
        let want = expm_su2(&h_pt(0.03, 0.02), t)
            .unwrap()
            .scale(C64::new((-0.02 * t).exp(), 0.0));
        assert!(u.max_diff(&want) < 1e-12);
    }

    #[test]
    fn propagate_matches_general_exponentials_per_step() {
        // the relative-core fast path must agree with naive expm_general
        // products of the full rotated Hamiltonian
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 30.0).unwrap();
        let steps = 500;
        let dt = 30.0 / steps as f64;
        let mut naive = Mat2C::identity();
        for n in 0..steps {
            let t_mid = (n as f64 + 0.5) * dt;
            let h = crate::model::h_rotated(t_mid, &proto, 0.02, 1.1).unwrap();
            naive = expm_general(&h, dt).unwrap() * naive;
        }
        let fast = propagate(&proto, 0.02, 1.1, 30.0, steps).unwrap();
        assert!(fast.max_diff(&naive) < 1e-13);
    }

    #[test]
    fn midpoint_integrator_is_second_order() {
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 30.0).unwrap();
        let reference = propagate(&proto, 0.02, FRAC_PI_2, 30.0, 48_000).unwrap();
        let err = |steps: usize| {
            propagate(&proto, 0.02, FRAC_PI_2, 30.0, steps)
                .unwrap()
                .max_diff(&reference)
        };
        let e1500 = err(1500);
        let e3000 = err(3000);
        let ratio = e1500 / e3000;
        assert!(
            (3.5..4.5).contains(&ratio),
            "halving should reduce the defect ~4x, ratio {ratio}"
        );
        // self-consistency at the documented pair of step counts
        let d = propagate(&proto, 0.02, FRAC_PI_2, 30.0, 3000)
            .unwrap()
            .max_diff(&propagate(&proto, 0.02, FRAC_PI_2, 30.0, 6000).unwrap());
        assert!(d < 1e-6, "3000 vs 6000 steps differ by {d:.3e}");
    }

    #[test]
    fn relative_propagator_has_unit_determinant() {
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 30.0).unwrap();
        let u_r = propagate_relative(&proto, 0.02, FRAC_PI_2, 30.0, 3000).unwrap();
        assert!((u_r.det() - C64::new(1.0, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn table_at_short_time_is_identity_like() {
        let proto = DriveProtocol::constant_j(0.03, 10.0).unwrap();
        let tt = transition_table_with_steps(&proto, 0.02, 0.7, 1e-7, 1).unwrap();
        assert!((tt.p(Branch::Plus, Branch::Plus) - 1.0).abs() < 1e-10);
        assert!((tt.p(Branch::Minus, Branch::Minus) - 1.0).abs() < 1e-10);
        assert!(tt.p(Branch::Plus, Branch::Minus) < 1e-10);
        assert!(tt.p(Branch::Minus, Branch::Plus) < 1e-10);
    }

    #[test]
    fn table_rows_normalize_and_survivals_sum() {
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 25.0).unwrap();
        let tt = transition_table(&proto, 0.02, FRAC_PI_4, 25.0).unwrap();
        for i in [Branch::Plus, Branch::Minus] {
            let row = tt.p(Branch::Plus, i) + tt.p(Branch::Minus, i);
            assert!((row - 1.0).abs() < 1e-12);
            let s = tt.p_raw(Branch::Plus, i) + tt.p_raw(Branch::Minus, i);
            assert!((s - tt.survival(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn protected_protocol_has_symmetric_table() {
        let proto = DriveProtocol::constant_j(0.03, 50.0).unwrap();
        for t in [10.0, 20.0, 30.0, 40.0, 50.0] {
            let tt = transition_table(&proto, 0.02, FRAC_PI_2, t).unwrap();
            let d_diag = tt.p(Branch::Plus, Branch::Plus) - tt.p(Branch::Minus, Branch::Minus);
            let d_off = tt.p(Branch::Plus, Branch::Minus) - tt.p(Branch::Minus, Branch::Plus);
            assert!(d_diag.abs() < 1e-12, "diag asymmetry {d_diag:.3e} at T={t}");
            assert!(d_off.abs() < 1e-12, "off asymmetry {d_off:.3e} at T={t}");
        }
    }

    #[test]
    fn detuned_protocol_breaks_table_symmetry() {
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 20.0).unwrap();
        let tt = transition_table(&proto, 0.02, FRAC_PI_2, 20.0).unwrap();
        let d = tt.p(Branch::Plus, Branch::Plus) - tt.p(Branch::Minus, Branch::Minus);
        assert!(d.abs() > 1e-3, "expected visible asymmetry, got {d:.3e}");
    }

    #[test]
    fn normalized_table_is_global_decay_free() {
        // computing P from U_r instead of U' must give identical values
        let proto = DriveProtocol::triangle_j(0.03, 0.06, 35.0).unwrap();
        let theta = 0.9;
        let tt = transition_table(&proto, 0.02, theta, 35.0).unwrap();
        let steps = default_steps(&proto, 0.02, 35.0);
        let u_r = propagate_relative(&proto, 0.02, theta, 35.0, steps).unwrap();
        let rel = TransitionTable::from_propagator(&u_r, theta, 35.0).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                assert!((tt.p(f, i) - rel.p(f, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn table_is_angle_independent_for_protected_protocols() {
        let proto = DriveProtocol::triangle_j(0.03, 0.06, 28.0).unwrap();
        let reference = transition_table(&proto, 0.02, 0.0, 28.0).unwrap();
        for theta in [0.3, FRAC_PI_4, 1.2, FRAC_PI_2, 2.9] {
            let tt = transition_table(&proto, 0.02, theta, 28.0).unwrap();
            for f in [Branch::Plus, Branch::Minus] {
                for i in [Branch::Plus, Branch::Minus] {
                    assert!((tt.p(f, i) - reference.p(f, i)).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn operator_symmetry_of_protected_propagator() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let theta = rng.random_range(-PI..PI);
            let j: f64 = rng.random_range(0.01..0.15);
            let gamma = rng.random_range(0.0..0.1);
            let t = rng.random_range(5.0..50.0);
            let proto = DriveProtocol::constant_j(j, t).unwrap();
            let k = propagate_relative(&proto, gamma, theta, t, 500).unwrap();
            let p = parity_exchange(theta);
            assert!((p * k.conj() * p).max_diff(&k) < 1e-11 * k.max_abs().max(1.0));
            // amplitude conjugation in the energy basis
            let basis = energy_basis(theta);
            let a_pp = inner(&basis.e_plus, &k.apply(basis.e_plus));
            let a_mm = inner(&basis.e_minus, &k.apply(basis.e_minus));
            let a_pm = inner(&basis.e_plus, &k.apply(basis.e_minus));
            let a_mp = inner(&basis.e_minus, &k.apply(basis.e_plus));
            assert!((a_pp - a_mm.conj()).norm() < 1e-11 * k.max_abs().max(1.0));
            assert!((a_pm - a_mp.conj()).norm() < 1e-11 * k.max_abs().max(1.0));
        }
    }

    #[test]
    fn extinct_survival_is_an_error() {
        // oscillatory regime (J > gamma) with 2*gamma*T = 800: every matrix
        // element of U' underflows below the extinction floor
        let proto = DriveProtocol::constant_j(12.0, 40.0).unwrap();
        let result = transition_table_with_steps(&proto, 10.0, FRAC_PI_2, 40.0, 2000);
        assert!(matches!(result, Err(NhjeError::DegenerateSurvival { .. })));
    }

    #[test]
    fn from_probabilities_validates_rows() {
        let bad = TransitionTable::from_probabilities(
            [[0.7, 0.2], [0.2, 0.8]],
            [0.5, 0.5],
            0.0,
            10.0,
        );
        assert!(matches!(bad, Err(NhjeError::UnnormalizedTable { .. })));
        let good = TransitionTable::from_probabilities(
            [[0.7, 0.2], [0.3, 0.8]],
            [0.5, 0.5],
            0.0,
            10.0,
        )
        .unwrap();
        assert!((good.p_raw(Branch::Plus, Branch::Plus) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn bloch_starts_on_measurement_axis() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        for theta in [0.0, FRAC_PI_4, FRAC_PI_2, 2.2] {
            let traj = bloch_trajectory(&proto, 0.02, theta, Branch::Plus, 10).unwrap();
            let n = traj[0].n;
            let axis = energy_basis(theta).n_hm;
            for k in 0..3 {
                assert!((n[k] - axis[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bloch_mirror_symmetry_for_protected_protocols() {
        let proto = DriveProtocol::constant_j(0.03, 40.0).unwrap();
        for theta in [0.0, FRAC_PI_4, FRAC_PI_2] {
            let plus = bloch_trajectory(&proto, 0.02, theta, Branch::Plus, 50).unwrap();
            let minus = bloch_trajectory(&proto, 0.02, theta, Branch::Minus, 50).unwrap();
            let axis = energy_basis(theta).n_hm;
            for (a, b) in plus.iter().zip(minus.iter()) {
                let da = a.n[0] * axis[0] + a.n[1] * axis[1] + a.n[2] * axis[2];
                let db = b.n[0] * axis[0] + b.n[1] * axis[1] + b.n[2] * axis[2];
                assert!((da + db).abs() < 1e-10, "mirror defect {:.2e}", da + db);
            }
        }
    }

    #[test]
    fn hermitian_trajectory_is_a_closed_circle() {
        // gamma = 0: precession with splitting 2J, period pi / J
        let j = 0.03;
        let period = PI / j;
        let proto = DriveProtocol::constant_j(j, period * 1.2).unwrap();
        let samples = 121;
        let traj = bloch_trajectory(&proto, 0.0, FRAC_PI_4, Branch::Plus, samples).unwrap();
        for s in &traj {
            let norm = (s.n[0] * s.n[0] + s.n[1] * s.n[1] + s.n[2] * s.n[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // sample 100 of 121 lands exactly at t = period
        let start = traj[0].n;
        let revisit = traj
            .iter()
            .find(|s| (s.t - period).abs() < 1e-9)
            .expect("grid hits the period");
        for k in 0..3 {
            assert!((revisit.n[k] - start[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn survival_curve_limits() {
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 2.0).collect();
        // unitary limit: full norm identically 1
        let samples =
            survival_curve(DriveKind::ConstantJ { j1: 0.05 }, 0.0, FRAC_PI_4, &grid).unwrap();
        for s in &samples {
            assert!((s.norm_plus - 1.0).abs() < 1e-12);
            assert!((s.norm_minus - 1.0).abs() < 1e-12);
        }
        // pure-loss limit: J = 0, theta = pi/2 gives diag(1, e^{-2 gamma T})
        // and both eigenstates are equal superpositions of the two channels
        let gamma = 0.02;
        let samples =
            survival_curve(DriveKind::ConstantJ { j1: 0.0 }, gamma, FRAC_PI_2, &grid).unwrap();
        for s in &samples {
            let want = (1.0 + (-4.0 * gamma * s.t).exp()) / 2.0;
            assert!((s.norm_plus - want).abs() < 1e-12);
            assert!((s.norm_minus - want).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_curve_matches_direct_propagation() {
        let grid = [5.0, 15.0, 30.0];
        let kind = DriveKind::ConstantJ { j1: 0.12 };
        let samples = survival_curve(kind, 0.02, FRAC_PI_2, &grid).unwrap();
        for s in &samples {
            let proto = DriveProtocol::new(kind, s.t).unwrap();
            let steps = default_steps(&proto, 0.02, s.t);
            let u = propagate(&proto, 0.02, FRAC_PI_2, s.t, steps).unwrap();
            let basis = energy_basis(FRAC_PI_2);
            assert!((s.norm_plus - norm_sq(&u.apply(basis.e_plus))).abs() < 1e-10);
            assert!((s.norm_minus - norm_sq(&u.apply(basis.e_minus))).abs() < 1e-10);
        }
    }

    #[test]
    fn piecewise_single_segment_equals_continuous() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let cont = transition_table(&proto, 0.02, 0.0, 30.0).unwrap();
        let seg = piecewise_evolution(&proto, 0.02, 0.0, 30.0, 1).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                assert!((cont.p(f, i) - seg.p(f, i)).abs() < 1e-14);
                assert!((cont.p_raw(f, i) - seg.p_raw(f, i)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn piecewise_statistics_are_segment_count_invariant() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let cont = transition_table(&proto, 0.02, 0.0, 30.0).unwrap();
        let seg = piecewise_evolution(&proto, 0.02, 0.0, 30.0, 5).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                assert!((cont.p(f, i) - seg.p(f, i)).abs() < 1e-10);
            }
        }
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 24.0).unwrap();
        let cont = transition_table(&proto, 0.02, FRAC_PI_2, 24.0).unwrap();
        let seg = piecewise_evolution(&proto, 0.02, FRAC_PI_2, 24.0, 25).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                assert!((cont.p(f, i) - seg.p(f, i)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn piecewise_segments_multiply_to_total_survival() {
        let proto = DriveProtocol::sin_detuning(0.12, 0.5, 24.0).unwrap();
        let detail = piecewise_detail(&proto, 0.02, FRAC_PI_2, 24.0, 8).unwrap();
        for (i, trace) in detail.segments.iter().enumerate() {
            let product: f64 = trace.full_survivals.iter().product();
            let branch = if i == 0 { Branch::Plus } else { Branch::Minus };
            assert!((product - detail.table.survival(branch)).abs() < 1e-12);
            // full-norm segment survivals are genuine probabilities; the
            // relative ones may exceed 1 (U_r is not a contraction)
            for s in &trace.full_survivals {
                assert!(*s > 0.0 && *s <= 1.0 + 1e-12);
            }
            for s in &trace.rel_survivals {
                assert!(*s > 0.0);
            }
        }
    }

    #[test]
    fn lindblad_unitary_limit() {
        let proto = DriveProtocol::constant_j(0.05, 20.0).unwrap();
        let basis = energy_basis(FRAC_PI_2);
        let e = basis.e_plus;
        let rho0 = Mat2C::new(
            e[0] * e[0].conj(),
            e[0] * e[1].conj(),
            e[1] * e[0].conj(),
            e[1] * e[1].conj(),
        );
        let (block, leak) = lindblad_oracle(&proto, 0.0, &rho0, 20.0, 4000).unwrap();
        assert!(leak.abs() < 1e-12);
        // compare against unitary evolution of the block
        let u = expm_general(&h_total(0.0, &proto, 0.0).unwrap(), 20.0).unwrap();
        let want = u * rho0 * u.adjoint();
        assert!(block.max_diff(&want) < 1e-9);
    }

    #[test]
    fn lindblad_qubit_block_is_no_jump_sandwich() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let gamma = 0.02;
        let rho0 = Mat2C::new(
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0),
        );
        let (block, leak) = lindblad_oracle(&proto, gamma, &rho0, 30.0, 12_000).unwrap();
        let steps = default_steps(&proto, gamma, 30.0) * 4;
        let k = propagate(&proto, gamma, FRAC_PI_2, 30.0, steps).unwrap();
        let want = k * rho0 * k.adjoint();
        assert!(
            block.max_diff(&want) < 1e-8,
            "no-jump sandwich defect {:.3e}",
            block.max_diff(&want)
        );
        let trace = (block.trace() + C64::new(leak, 0.0) - C64::new(1.0, 0.0)).norm();
        assert!(trace < 1e-10, "trace bookkeeping defect {trace:.3e}");
    }

    #[test]
    fn lindblad_rejects_coarse_steps() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let rho0 = Mat2C::new(
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        );
        let result = lindblad_oracle(&proto, 0.02, &rho0, 30.0, 6);
        assert!(matches!(result, Err(NhjeError::Accuracy { .. })));
    }

    #[test]
    fn lindblad_rejects_bad_initial_block() {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let rho0 = Mat2C::new(
            C64::new(0.9, 0.0),
            C64::new(0.1, 0.2),
            C64::new(0.1, 0.2), // not Hermitian: conjugate missing
            C64::new(0.1, 0.0),
        );
        assert!(matches!(
            lindblad_oracle(&proto, 0.02, &rho0, 30.0, 4000),
            Err(NhjeError::InvalidParam(_))
        ));
    }

    #[test]
    fn lindblad_matches_rotated_no_jump_for_random_draws() {
        // the lab frame is theta_k = pi/2; the oracle validates the
        // postselected propagator there for a couple of random protocols
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..3 {
            let j = rng.random_range(0.02..0.1);
            let gamma = rng.random_range(0.005..0.04);
            let t = rng.random_range(10.0..30.0);
            let proto = DriveProtocol::triangle_j(j, 2.0 * j, t).unwrap();
            let basis = energy_basis(FRAC_PI_2);
            let e = basis.e_minus;
            let rho0 = Mat2C::new(
                e[0] * e[0].conj(),
                e[0] * e[1].conj(),
                e[1] * e[0].conj(),
                e[1] * e[1].conj(),
            );
            let (block, _) = lindblad_oracle(&proto, gamma, &rho0, t, 12_000).unwrap();
            let steps = default_steps(&proto, gamma, t) * 8;
            let k = propagate(&proto, gamma, FRAC_PI_2, t, steps).unwrap();
            let want = k * rho0 * k.adjoint();
            assert!(block.max_diff(&want) < 1e-8);
        }
    }

    #[test]
    fn hybrid_family_eigenstructure_reaches_propagator() {
        // sanity link between model and evolution: a protected constant
        // protocol at the exceptional point stays at its nilpotent limit
        let j = 0.02;
        let proto = DriveProtocol::constant_j(j, 10.0).unwrap();
        let u_r = propagate_relative(&proto, j, 0.7, 10.0, 100).unwrap();
        let h = crate::model::h_hybrid(&HybridParams::new(j, j, 0.7).unwrap());
        let want = Mat2C::identity() - h.scale(I.scale(10.0));
        assert!(u_r.max_diff(&want) < 1e-11);
    }

    trait ScaleIm {
        fn scale(self, s: f64) -> C64;
    }

    impl ScaleIm for C64 {
        fn scale(self, s: f64) -> C64 {
            C64::new(self.re * s, self.im * s)
        }
    }
}
