//! CSV rendering of the result types, with full double precision and a
//! one-line '#'-prefixed metadata header.
//!
//! Every writer returns the file content as a `String`; callers decide where
//! it goes. Floats are printed with 17 significant digits so parsing the file
//! back reproduces every bit, and metadata values use the same format, which
//! makes re-runs from embedded metadata byte-identical.

use std::fmt::Write as _;

use crate::evolution::{BlochSample, SurvivalSample};
use crate::floquet::ScanPoint;
use crate::model::Branch;
use crate::shots::ShotEstimate;
use crate::thermo::{ThermalState, WorkDistribution};

/// Full-precision float rendering: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Ordered key-value pairs for the single '#' metadata line.
#[derive(Clone, Debug, Default)]
pub struct Metadata {
    pairs: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn push_str(&mut self, key: &str, value: &str) -> &mut Self {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.pairs.push((key.to_string(), fmt_f64(value)));
        self
    }

    pub fn push_u64(&mut self, key: &str, value: u64) -> &mut Self {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    /// The recorded pairs, in insertion order.
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    fn render(&self) -> String {
        let mut line = String::from("#");
        for (k, v) in &self.pairs {
            let _ = write!(line, " {k}={v}");
        }
        line
    }
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Plus => "plus",
        Branch::Minus => "minus",
    }
}

fn render(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&meta.render());
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Renders an arbitrary table in the shared CSV dialect: one '#' metadata
/// line, a comma-separated header, then the rows as given. Callers format
/// numeric cells with [`fmt_f64`] to keep files lossless.
pub fn table_csv(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> String {
    render(meta, header, rows)
}

/// Bloch trajectory samples as (t_us, nx, ny, nz, source).
pub fn trajectory_csv(meta: &Metadata, samples: &[BlochSample]) -> String {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                fmt_f64(s.t),
                fmt_f64(s.n[0]),
                fmt_f64(s.n[1]),
                fmt_f64(s.n[2]),
                branch_name(s.source).to_string(),
            ]
        })
        .collect();
    render(meta, &["t_us", "nx", "ny", "nz", "source"], &rows)
}

/// Survival scan as (T_us, S_plus, S_minus, norm_plus, norm_minus), where
/// S is the relative (decay-free) survival and norm the full one.
pub fn survival_csv(meta: &Metadata, samples: &[SurvivalSample]) -> String {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                fmt_f64(s.t),
                fmt_f64(s.s_plus),
                fmt_f64(s.s_minus),
                fmt_f64(s.norm_plus),
                fmt_f64(s.norm_minus),
            ]
        })
        .collect();
    render(
        meta,
        &["T_us", "S_plus", "S_minus", "norm_plus", "norm_minus"],
        &rows,
    )
}

/// Work distribution as (W, prob). The metadata line always carries beta,
/// J_i, J_f, theta_k, T and the exponentiated-work average, appended after
/// any caller-supplied pairs.
pub fn work_csv(
    meta: &Metadata,
    wd: &WorkDistribution,
    th: &ThermalState,
    j_f: f64,
    theta_k: f64,
    t: f64,
) -> String {
    let mut meta = meta.clone();
    meta.push_f64("beta", th.beta)
        .push_f64("J_i", th.j_i)
        .push_f64("J_f", j_f)
        .push_f64("theta_k", theta_k)
        .push_f64("T", t)
        .push_f64("exp_work", wd.exp_work);
    let rows: Vec<Vec<String>> = wd
        .support
        .iter()
        .zip(&wd.probs)
        .map(|(w, p)| vec![fmt_f64(*w), fmt_f64(*p)])
        .collect();
    render(&meta, &["W", "prob"], &rows)
}

/// Revival scan as (T_us, Re_h_par, Im_h_par, Re_h_perp, Im_h_perp, Re_h_y,
/// Im_h_y, residual).
pub fn revival_csv(meta: &Metadata, scan: &[ScanPoint]) -> String {
    let rows: Vec<Vec<String>> = scan
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.t),
                fmt_f64(p.h_par.re),
                fmt_f64(p.h_par.im),
                fmt_f64(p.h_perp.re),
                fmt_f64(p.h_perp.im),
                fmt_f64(p.h_y.re),
                fmt_f64(p.h_y.im),
                fmt_f64(p.residual),
            ]
        })
        .collect();
    render(
        meta,
        &[
            "T_us", "Re_h_par", "Im_h_par", "Re_h_perp", "Im_h_perp", "Re_h_y", "Im_h_y",
            "residual",
        ],
        &rows,
    )
}

/// Shot estimates as (T_us, P_pp, P_pp_std, P_mm, P_mm_std, P_pm, P_pm_std,
/// P_mp, P_mp_std, exp_work, exp_work_std, survivors_plus, survivors_minus).
/// Index convention: pm estimates the plus outcome from the minus initial.
pub fn shots_csv(meta: &Metadata, points: &[ShotEstimate]) -> String {
    use Branch::{Minus as M, Plus as P};
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|e| {
            vec![
                fmt_f64(e.t),
                fmt_f64(e.p_hat(P, P)),
                fmt_f64(e.p_block_std(P, P)),
                fmt_f64(e.p_hat(M, M)),
                fmt_f64(e.p_block_std(M, M)),
                fmt_f64(e.p_hat(P, M)),
                fmt_f64(e.p_block_std(P, M)),
                fmt_f64(e.p_hat(M, P)),
                fmt_f64(e.p_block_std(M, P)),
                fmt_f64(e.exp_work_hat),
                fmt_f64(e.exp_work_std),
                e.counts.survived(P).to_string(),
                e.counts.survived(M).to_string(),
            ]
        })
        .collect();
    render(
        meta,
        &[
            "T_us",
            "P_pp",
            "P_pp_std",
            "P_mm",
            "P_mm_std",
            "P_pm",
            "P_pm_std",
            "P_mp",
            "P_mp_std",
            "exp_work",
            "exp_work_std",
            "survivors_plus",
            "survivors_minus",
        ],
        &rows,
    )
}
