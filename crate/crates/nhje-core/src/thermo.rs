//! Thermal initialization and two-point-measurement work statistics: Gibbs
//! weights, the four-outcome work distribution, the exponential work average
//! (the Jarzynski check), and the parity-exchange symmetry residuals that
//! control whether that average equals one.
//!
//! Beta is a pure initialization parameter here. No bath or thermalization
//! dynamics exist anywhere in the crate; the thermal state only weights the
//! two possible first-measurement outcomes.

use serde::Serialize;

use crate::error::{NhjeError, Result};
use crate::evolution::TransitionTable;
use crate::model::Branch;

/// Boltzmann weights of the initial energy doublet {+J_i, -J_i}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThermalState {
    /// Inverse temperature, us/rad.
    pub beta: f64,
    /// Initial Hermitian eigenvalue magnitude, rad/us.
    pub j_i: f64,
    /// Weight of the excited state (+J_i): e^{-beta J_i} / Z.
    pub p_plus: f64,
    /// Weight of the ground state (-J_i): e^{+beta J_i} / Z.
    pub p_minus: f64,
    /// Partition function Z = e^{beta J_i} + e^{-beta J_i}.
    pub z: f64,
}

impl ThermalState {
    pub fn weight(&self, i: Branch) -> f64 {
        match i {
            Branch::Plus => self.p_plus,
            Branch::Minus => self.p_minus,
        }
    }
}

/// Gibbs pair for a two-level spectrum {-J_i, +J_i}.
///
/// Computed via the logistic form on the smaller weight, so the pair sums to
/// one exactly and stays finite for |beta * J_i| far beyond exponent range.
pub fn gibbs(beta: f64, j_i: f64) -> Result<ThermalState> {
    if !beta.is_finite() || !j_i.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    if j_i < 0.0 {
        return Err(NhjeError::InvalidParam(format!(
            "J_i must be non-negative, got {j_i}"
        )));
    }
    let x = beta * j_i;
    // smaller weight = e^{-2|x|} / (1 + e^{-2|x|}), partner = 1 - it
    let small = {
        let e = (-2.0 * x.abs()).exp();
        e / (1.0 + e)
    };
    let (p_plus, p_minus) = if x >= 0.0 {
        (small, 1.0 - small)
    } else {
        (1.0 - small, small)
    };
    Ok(ThermalState {
        beta,
        j_i,
        p_plus,
        p_minus,
        z: 2.0 * x.cosh(),
    })
}

/// Work distribution of one two-point-measurement run.
#[derive(Clone, Debug, Serialize)]
pub struct WorkDistribution {
    /// Distinct work values, ascending; degenerate bins merged.
    pub support: Vec<f64>,
    /// Matching probabilities, summing to one.
    pub probs: Vec<f64>,
    /// The Jarzynski average <e^{-beta W}>.
    pub exp_work: f64,
    /// Free-energy difference; zero whenever J_f = J_i (cyclic protocols).
    pub delta_f: f64,
}

fn check_rows(tt: &TransitionTable) -> Result<()> {
    let mut defect: f64 = 0.0;
    for i in [Branch::Plus, Branch::Minus] {
        let row = tt.p(Branch::Plus, i) + tt.p(Branch::Minus, i);
        defect = defect.max((row - 1.0).abs());
    }
    if defect > 1e-9 {
        return Err(NhjeError::UnnormalizedTable { defect });
    }
    Ok(())
}

fn check_j_f(j_f: f64) -> Result<()> {
    if !j_f.is_finite() {
        return Err(NhjeError::NonFinite);
    }
    if j_f < 0.0 {
        return Err(NhjeError::InvalidParam(format!(
            "J_f must be non-negative, got {j_f}"
        )));
    }
    Ok(())
}

// log(e^x + e^{-x}) without overflow
fn ln_two_cosh(x: f64) -> f64 {
    x.abs() + (-2.0 * x.abs()).exp().ln_1p()
}

/// Bins the four joint probabilities P_fi * P_i onto the work support
/// {-(J_f+J_i), J_i-J_f, J_f-J_i, J_f+J_i}, merging degenerate values, and
/// evaluates the Jarzynski average by explicit summation over outcomes.
pub fn work_distribution(
    tt: &TransitionTable,
    th: &ThermalState,
    j_f: f64,
) -> Result<WorkDistribution> {
    check_rows(tt)?;
    check_j_f(j_f)?;

    let branches = [Branch::Plus, Branch::Minus];
    let mut outcomes: Vec<(f64, f64)> = Vec::with_capacity(4);
    let mut exp_work = 0.0;
    for i in branches {
        let e_i = i.sign() * th.j_i;
        for f in branches {
            let e_f = f.sign() * j_f;
            let w = e_f - e_i;
            let prob = tt.p(f, i) * th.weight(i);
            // e^{-beta W} * P_i expressed through the stable Gibbs pair:
            // e^{-beta(E_f - E_i)} e^{-beta E_i}/Z = e^{-beta E_f}/Z
            let boltz_f = match f {
                Branch::Plus => th.p_plus,
                Branch::Minus => th.p_minus,
            } * (th.beta * (th.j_i - j_f) * f.sign()).exp();
            exp_work += tt.p(f, i) * boltz_f;
            outcomes.push((w, prob));
        }
    }

    outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let merge_tol = 1e-12 * (j_f + th.j_i);
    let mut support = Vec::with_capacity(4);
    let mut probs: Vec<f64> = Vec::with_capacity(4);
    for (w, p) in outcomes {
        match support.last() {
            Some(&last) if (w - last) <= merge_tol => {
                *probs.last_mut().expect("probs tracks support") += p;
            }
            _ => {
                support.push(w);
                probs.push(p);
            }
        }
    }

    let delta_f = if th.beta == 0.0 {
        0.0
    } else {
        -(ln_two_cosh(th.beta * j_f) - ln_two_cosh(th.beta * th.j_i)) / th.beta
    };

    Ok(WorkDistribution {
        support,
        probs,
        exp_work,
        delta_f,
    })
}

/// The closed-form Jarzynski average
/// (1/Z_i) [ e^{-beta J_f} (1 + P_++ - P_--) + e^{+beta J_f} (1 + P_-+ - P_+-) ].
///
/// Row normalization makes this identical to the explicit four-outcome sum of
/// [`work_distribution`]; both paths are kept because they fail differently
/// if the table is inconsistent.
pub fn exp_work_closed_form(tt: &TransitionTable, th: &ThermalState, j_f: f64) -> Result<f64> {
    check_rows(tt)?;
    check_j_f(j_f)?;
    let shift = th.beta * (th.j_i - j_f);
    // e^{-beta J_f}/Z_i = P_plus * e^{+shift}, e^{+beta J_f}/Z_i = P_minus * e^{-shift}
    let lo = th.p_plus * shift.exp();
    let hi = th.p_minus * (-shift).exp();
    let diag = tt.p(Branch::Plus, Branch::Plus) - tt.p(Branch::Minus, Branch::Minus);
    let off = tt.p(Branch::Minus, Branch::Plus) - tt.p(Branch::Plus, Branch::Minus);
    Ok(lo * (1.0 + diag) + hi * (1.0 + off))
}

/// Parity-exchange residuals (P_++ - P_--, P_+- - P_-+).
///
/// Row normalization ties the two components together: they are always equal,
/// and both vanish exactly when the table is parity-exchange symmetric, which
/// for a cyclic protocol is equivalent to <e^{-beta W}> = 1.
pub fn symmetry_residual(tt: &TransitionTable) -> (f64, f64) {
    let d_diag = tt.p(Branch::Plus, Branch::Plus) - tt.p(Branch::Minus, Branch::Minus);
    let d_off = tt.p(Branch::Plus, Branch::Minus) - tt.p(Branch::Minus, Branch::Plus);
    (d_diag, d_off)
}
