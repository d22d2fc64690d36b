//! Finite-shot Monte Carlo emulation of the postselected experiment.
//!
//! Each prepared eigenstate either survives a run (with the full-norm
//! survival probability of the chosen mode) or is discarded as a leak event;
//! survivors draw their measured outcome from the conditional transition
//! probabilities. Shots are grouped into independent temporal blocks whose
//! scatter supplies the error bars, mirroring the blocked repetition scheme
//! of the experiment.
//!
//! Randomness is counter-based: every (duration, block, lane) triple derives
//! its own stream from the master seed, so results are bit-identical no
//! matter how blocks or grid points are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NhjeError, Result};
use crate::evolution::{piecewise_detail, transition_table};
use crate::model::{Branch, DriveKind, DriveProtocol};
use crate::thermo::ThermalState;

/// Default repetitions per prepared eigenstate at one grid point.
pub const DEFAULT_SHOTS: usize = 4500;
/// Default number of independent temporal blocks.
pub const DEFAULT_BLOCKS: usize = 15;
/// Default master seed.
pub const DEFAULT_SEED: u64 = 0x6e68_6a65;

/// How one shot's survival probability is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleMode {
    /// One uninterrupted run over [0, T]; survival is the full-norm factor.
    Continuous,
    /// The segmented re-preparation scheme: the run is cut into `segments`
    /// equal pieces with exact state re-preparation between them, and a shot
    /// only has to survive the final segment. This trades classical
    /// bookkeeping for a far gentler exponential budget.
    Piecewise { segments: usize },
}

/// How initial states enter the work estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Prepare both eigenstates deterministically and weight the measured
    /// conditionals with the exact Boltzmann factors (the default scheme).
    #[default]
    Theoretical,
    /// Draw each shot's initial state from the thermal distribution and
    /// weight with the per-block empirical fractions; a sensitivity mode.
    ThermalSampling,
}

/// Whether `shots_per_point` counts repetitions per prepared eigenstate or
/// the total budget split across both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotBudget {
    /// `shots_per_point` repetitions for each initial eigenstate.
    #[default]
    PerInitial,
    /// `shots_per_point` repetitions in total, split evenly.
    SplitAcrossInitials,
}

/// Slow per-block Gaussian drift of the drive amplitude and the dissipation
/// rate, emulating low-frequency parameter wander between blocks. Draws are
/// additive and clamped so parameters stay physical.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Standard deviation of the additive drift on every J-like drive
    /// parameter, rad/us.
    pub sigma_j: f64,
    /// Standard deviation of the additive drift on gamma, 1/us.
    pub sigma_gamma: f64,
}

/// Sampling configuration for one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShotConfig {
    pub shots_per_point: usize,
    pub blocks: usize,
    pub seed: u64,
    pub mode: SampleMode,
    pub weighting: Weighting,
    pub budget: ShotBudget,
    pub drift: Option<DriftModel>,
}

impl Default for ShotConfig {
    fn default() -> Self {
        ShotConfig {
            shots_per_point: DEFAULT_SHOTS,
            blocks: DEFAULT_BLOCKS,
            seed: DEFAULT_SEED,
            mode: SampleMode::Continuous,
            weighting: Weighting::Theoretical,
            budget: ShotBudget::PerInitial,
            drift: None,
        }
    }
}

impl ShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(NhjeError::InvalidParam("blocks must be positive".into()));
        }
        if self.shots_per_point == 0 {
            return Err(NhjeError::InvalidParam(
                "shots_per_point must be positive".into(),
            ));
        }
        if self.shots_per_point % self.blocks != 0 {
            return Err(NhjeError::InvalidParam(format!(
                "shots_per_point ({}) must be divisible by blocks ({})",
                self.shots_per_point, self.blocks
            )));
        }
        if self.budget == ShotBudget::SplitAcrossInitials
            && self.shots_per_point % (2 * self.blocks) != 0
        {
            return Err(NhjeError::InvalidParam(format!(
                "split budget needs shots_per_point ({}) divisible by 2 x blocks ({})",
                self.shots_per_point,
                2 * self.blocks
            )));
        }
        if let SampleMode::Piecewise { segments } = self.mode {
            if segments == 0 {
                return Err(NhjeError::InvalidParam(
                    "piecewise mode needs at least one segment".into(),
                ));
            }
        }
        if let Some(d) = self.drift {
            if !(d.sigma_j.is_finite() && d.sigma_j >= 0.0)
                || !(d.sigma_gamma.is_finite() && d.sigma_gamma >= 0.0)
            {
                return Err(NhjeError::InvalidParam(
                    "drift standard deviations must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Repetitions prepared in each eigenstate at one point.
    pub fn per_initial(&self) -> usize {
        match self.budget {
            ShotBudget::PerInitial => self.shots_per_point,
            ShotBudget::SplitAcrossInitials => self.shots_per_point / 2,
        }
    }
}

/// Raw tallies accumulated over every block, valid or not. Index 0 is the
/// plus eigenstate, index 1 the minus eigenstate, matching the transition
/// table convention.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ShotCounts {
    /// Shots initialized per eigenstate.
    pub prepared: [u64; 2],
    /// Shots whose run survived postselection, per initial eigenstate.
    pub survived: [u64; 2],
    /// Shots lost to the leak channel, per initial eigenstate.
    pub leaked: [u64; 2],
    /// Measured outcome tallies, outcomes[f][i] among survivors.
    pub outcomes: [[u64; 2]; 2],
}

impl ShotCounts {
    pub fn survived(&self, i: Branch) -> u64 {
        self.survived[idx(i)]
    }

    pub fn leaked(&self, i: Branch) -> u64 {
        self.leaked[idx(i)]
    }
}

/// Block-aggregated estimate at one grid point.
///
/// `p_hat` is the mean of the per-block conditional estimates over valid
/// blocks; `p_block_std` is their sample standard deviation (the scatter of
/// a single block) and `p_stderr` the standard error of the mean, which is
/// the error bar attached to `p_hat`. Blocks in which at least one prepared
/// eigenstate had zero survivors carry no conditional information; they are
/// excluded from the estimates and listed in `invalid_blocks`.
#[derive(Clone, Debug, Serialize)]
pub struct ShotEstimate {
    /// Protocol duration, us.
    pub t: f64,
    pub counts: ShotCounts,
    p_hat: [[f64; 2]; 2],
    p_block_std: [[f64; 2]; 2],
    p_stderr: [[f64; 2]; 2],
    /// Mean exponentiated-work estimate over valid blocks.
    pub exp_work_hat: f64,
    /// Sample standard deviation of the per-block work estimates.
    pub exp_work_std: f64,
    /// Standard error of `exp_work_hat`.
    pub exp_work_stderr: f64,
    /// Number of blocks entering the estimates.
    pub valid_blocks: usize,
    /// Indices of blocks excluded for having zero survivors.
    pub invalid_blocks: Vec<usize>,
}

fn idx(b: Branch) -> usize {
    match b {
        Branch::Plus => 0,
        Branch::Minus => 1,
    }
}

impl ShotEstimate {
    /// Estimated conditional probability of measuring f given initial i.
    pub fn p_hat(&self, f: Branch, i: Branch) -> f64 {
        self.p_hat[idx(f)][idx(i)]
    }

    /// Per-block sample standard deviation of the estimate.
    pub fn p_block_std(&self, f: Branch, i: Branch) -> f64 {
        self.p_block_std[idx(f)][idx(i)]
    }

    /// Standard error of the mean of [`Self::p_hat`].
    pub fn p_stderr(&self, f: Branch, i: Branch) -> f64 {
        self.p_stderr[idx(f)][idx(i)]
    }

    /// Estimated diagonal asymmetry P_++ - P_--.
    pub fn delta_p(&self) -> f64 {
        self.p_hat(Branch::Plus, Branch::Plus) - self.p_hat(Branch::Minus, Branch::Minus)
    }
}

// ----- counter-based streams -------------------------------------------------

const LANE_PLUS: u64 = 0;
const LANE_MINUS: u64 = 1;
const LANE_DRIFT: u64 = 2;
const LANE_INIT: u64 = 3;

// splitmix64 finalizer step
fn sm(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// independent stream id for a (duration, block, lane) triple
fn stream_seed(master: u64, t_bits: u64, block: u64, lane: u64) -> u64 {
    sm(sm(sm(sm(master) ^ t_bits) ^ block) ^ lane)
}

// ----- per-block theory ------------------------------------------------------

// deterministic inputs one block samples against
#[derive(Clone, Copy)]
struct BlockTheory {
    // conditional outcome probabilities p[f][i]
    p: [[f64; 2]; 2],
    // per-shot survival probability per initial eigenstate
    s_shot: [f64; 2],
}

fn shifted_kind(kind: DriveKind, dj: f64) -> DriveKind {
    match kind {
        DriveKind::ConstantJ { j1 } => DriveKind::ConstantJ {
            j1: (j1 + dj).max(0.0),
        },
        DriveKind::TriangleJ { j_min, j_max } => {
            let lo = (j_min + dj).max(0.0);
            DriveKind::TriangleJ {
                j_min: lo,
                j_max: (j_max + dj).max(lo),
            }
        }
        DriveKind::SinDetuning { j2, delta1 } => DriveKind::SinDetuning {
            j2: (j2 + dj).max(0.0),
            delta1,
        },
    }
}

fn block_theory(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t: f64,
    mode: SampleMode,
) -> Result<BlockTheory> {
    let branches = [Branch::Plus, Branch::Minus];
    match mode {
        SampleMode::Continuous => {
            let tt = transition_table(proto, gamma, theta_k, t)?;
            let mut p = [[0.0; 2]; 2];
            for (f, bf) in branches.into_iter().enumerate() {
                for (i, bi) in branches.into_iter().enumerate() {
                    p[f][i] = tt.p(bf, bi);
                }
            }
            Ok(BlockTheory {
                p,
                s_shot: [tt.survival(Branch::Plus), tt.survival(Branch::Minus)],
            })
        }
        SampleMode::Piecewise { segments } => {
            let d = piecewise_detail(proto, gamma, theta_k, t, segments)?;
            let mut p = [[0.0; 2]; 2];
            for (f, bf) in branches.into_iter().enumerate() {
                for (i, bi) in branches.into_iter().enumerate() {
                    p[f][i] = d.table.p(bf, bi);
                }
            }
            let last = |i: usize| -> f64 {
                *d.segments[i]
                    .full_survivals
                    .last()
                    .expect("piecewise detail has at least one segment")
            };
            Ok(BlockTheory {
                p,
                s_shot: [last(0), last(1)],
            })
        }
    }
}

// ----- block sampling ---------------------------------------------------------

struct BlockOutcome {
    prepared: [u64; 2],
    survived: [u64; 2],
    leaked: [u64; 2],
    outcomes: [[u64; 2]; 2],
    valid: bool,
    p_b: [[f64; 2]; 2],
    ew_b: f64,
}

// exponentiated-work average of one block: sum_i w_i sum_f e^{-beta (E_f - E_i)} P_fi
// with the cyclic two-level spectrum E_+- = +-J
fn block_exp_work(p: &[[f64; 2]; 2], w_plus: f64, w_minus: f64, beta: f64, j: f64) -> f64 {
    let up = (2.0 * beta * j).exp();
    let down = (-2.0 * beta * j).exp();
    w_plus * (p[0][0] + up * p[1][0]) + w_minus * (down * p[0][1] + p[1][1])
}

fn run_block(
    block: usize,
    per_block: usize,
    theory: &BlockTheory,
    th: &ThermalState,
    cfg: &ShotConfig,
    t_bits: u64,
) -> BlockOutcome {
    let b = block as u64;
    let mut prepared = [0u64; 2];
    match cfg.weighting {
        Weighting::Theoretical => prepared = [per_block as u64; 2],
        Weighting::ThermalSampling => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, t_bits, b, LANE_INIT));
            for _ in 0..2 * per_block {
                if rng.random::<f64>() < th.p_plus {
                    prepared[0] += 1;
                } else {
                    prepared[1] += 1;
                }
            }
        }
    }

    let mut survived = [0u64; 2];
    let mut leaked = [0u64; 2];
    let mut outcomes = [[0u64; 2]; 2];
    for (lane, i) in [(LANE_PLUS, 0), (LANE_MINUS, 1)] {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, t_bits, b, lane));
        for _ in 0..prepared[i] {
            if rng.random::<f64>() < theory.s_shot[i] {
                survived[i] += 1;
                let f = if rng.random::<f64>() < theory.p[0][i] { 0 } else { 1 };
                outcomes[f][i] += 1;
            } else {
                leaked[i] += 1;
            }
        }
    }

    let valid = (0..2).all(|i| prepared[i] > 0 && survived[i] > 0);
    let mut p_b = [[0.0; 2]; 2];
    let mut ew_b = 0.0;
    if valid {
        for i in 0..2 {
            for f in 0..2 {
                p_b[f][i] = outcomes[f][i] as f64 / survived[i] as f64;
            }
        }
        let (w_plus, w_minus) = match cfg.weighting {
            Weighting::Theoretical => (th.p_plus, th.p_minus),
            Weighting::ThermalSampling => {
                let total = (prepared[0] + prepared[1]) as f64;
                (prepared[0] as f64 / total, prepared[1] as f64 / total)
            }
        };
        ew_b = block_exp_work(&p_b, w_plus, w_minus, th.beta, th.j_i);
    }

    BlockOutcome {
        prepared,
        survived,
        leaked,
        outcomes,
        valid,
        p_b,
        ew_b,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Emulates the full shot budget at one duration `t` of `proto` and reduces
/// it to block statistics.
///
/// Every shot prepares an exact eigenstate, survives with the mode's
/// survival probability, and (if it survives) draws its outcome from the
/// conditional transition probabilities. The exponentiated-work estimate
/// weights the per-block measured conditionals with the Boltzmann weights of
/// `th` (or the empirically sampled fractions under
/// [`Weighting::ThermalSampling`]).
///
/// Errors if every block ends up with zero survivors for some initial
/// eigenstate, since no conditional estimate exists in that case.
pub fn sample_point(
    proto: &DriveProtocol,
    gamma: f64,
    theta_k: f64,
    t: f64,
    th: &ThermalState,
    cfg: &ShotConfig,
) -> Result<ShotEstimate> {
    cfg.validate()?;
    let per_block = cfg.per_initial() / cfg.blocks;
    let t_bits = t.to_bits();

    // one shared theory when parameters are static, per-block under drift
    let theories: Vec<BlockTheory> = match cfg.drift {
        None => {
            let shared = block_theory(proto, gamma, theta_k, t, cfg.mode)?;
            vec![shared; cfg.blocks]
        }
        Some(d) => (0..cfg.blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
                    cfg.seed, t_bits, b as u64, LANE_DRIFT,
                ));
                let dj = Normal::new(0.0, d.sigma_j)
                    .expect("validated sigma")
                    .sample(&mut rng);
                let dg = Normal::new(0.0, d.sigma_gamma)
                    .expect("validated sigma")
                    .sample(&mut rng);
                let proto_b = DriveProtocol::new(shifted_kind(proto.kind, dj), proto.t_total)?;
                block_theory(&proto_b, (gamma + dg).max(0.0), theta_k, t, cfg.mode)
            })
            .collect::<Result<_>>()?,
    };

    let blocks: Vec<BlockOutcome> = (0..cfg.blocks)
        .into_par_iter()
        .map(|b| run_block(b, per_block, &theories[b], th, cfg, t_bits))
        .collect();

    let mut counts = ShotCounts::default();
    let mut invalid_blocks = Vec::new();
    for (b, out) in blocks.iter().enumerate() {
        for i in 0..2 {
            counts.prepared[i] += out.prepared[i];
            counts.survived[i] += out.survived[i];
            counts.leaked[i] += out.leaked[i];
            counts.outcomes[0][i] += out.outcomes[0][i];
            counts.outcomes[1][i] += out.outcomes[1][i];
        }
        if !out.valid {
            invalid_blocks.push(b);
        }
    }

    let valid: Vec<&BlockOutcome> = blocks.iter().filter(|b| b.valid).collect();
    if valid.is_empty() {
        let s_max = theories
            .iter()
            .flat_map(|th| th.s_shot)
            .fold(0.0f64, f64::max);
        return Err(NhjeError::DegenerateSurvival { s: s_max });
    }
    let n_valid = valid.len() as f64;

    let mut p_hat = [[0.0; 2]; 2];
    let mut p_block_std = [[0.0; 2]; 2];
    let mut p_stderr = [[0.0; 2]; 2];
    for f in 0..2 {
        for i in 0..2 {
            let xs: Vec<f64> = valid.iter().map(|b| b.p_b[f][i]).collect();
            let (m, s) = mean_std(&xs);
            p_hat[f][i] = m;
            p_block_std[f][i] = s;
            p_stderr[f][i] = s / n_valid.sqrt();
        }
    }
    let ew: Vec<f64> = valid.iter().map(|b| b.ew_b).collect();
    let (exp_work_hat, exp_work_std) = mean_std(&ew);

    Ok(ShotEstimate {
        t,
        counts,
        p_hat,
        p_block_std,
        p_stderr,
        exp_work_hat,
        exp_work_std,
        exp_work_stderr: exp_work_std / n_valid.sqrt(),
        valid_blocks: valid.len(),
        invalid_blocks,
    })
}

/// One sample of the deterministic diagonal asymmetry, for overlaying on a
/// shot scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OverlayPoint {
    pub t: f64,
    /// Deterministic P_++ - P_--.
    pub delta_p: f64,
}

/// A fine temporal scan of shot estimates plus the deterministic overlay.
#[derive(Clone, Debug, Serialize)]
pub struct FineScan {
    pub points: Vec<ShotEstimate>,
    pub overlay: Vec<OverlayPoint>,
}

/// Runs [`sample_point`] across a duration window, instantiating the drive
/// kind at each grid duration, and pairs the estimates with the
/// deterministic diagonal-asymmetry curve on the same grid.
pub fn fine_scan(
    kind: DriveKind,
    gamma: f64,
    theta_k: f64,
    window: [f64; 2],
    step: f64,
    th: &ThermalState,
    cfg: &ShotConfig,
) -> Result<FineScan> {
    let [lo, hi] = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(NhjeError::InvalidParam(format!(
            "window must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(step > 0.0) {
        return Err(NhjeError::InvalidParam(format!(
            "step must be positive, got {step}"
        )));
    }
    cfg.validate()?;

    let n = ((hi - lo) / step).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if hi - ts[n] > 1e-9 {
        ts.push(hi);
    }

    let results: Vec<(ShotEstimate, OverlayPoint)> = ts
        .par_iter()
        .map(|&t| {
            let proto = DriveProtocol::new(kind, t)?;
            let est = sample_point(&proto, gamma, theta_k, t, th, cfg)?;
            let tt = transition_table(&proto, gamma, theta_k, t)?;
            let delta_p =
                tt.p(Branch::Plus, Branch::Plus) - tt.p(Branch::Minus, Branch::Minus);
            Ok((est, OverlayPoint { t, delta_p }))
        })
        .collect::<Result<_>>()?;

    let (points, overlay) = results.into_iter().unzip();
    Ok(FineScan { points, overlay })
}

/// Linear-interpolation zero crossings of a sampled curve, as the crossing
/// abscissas. Exact zeros count once; same-sign neighbors contribute none.
pub fn zero_crossings(samples: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in samples.windows(2) {
        let [(t0, v0), (t1, v1)] = [w[0], w[1]];
        if v0 == 0.0 {
            out.push(t0);
        } else if v0 * v1 < 0.0 {
            out.push(t0 + (t1 - t0) * v0 / (v0 - v1));
        }
    }
    if let Some(&(t, v)) = samples.last() {
        if v == 0.0 {
            out.push(t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::{exp_work_closed_form, gibbs};
    use std::f64::consts::FRAC_PI_2;

    fn fig3_point() -> (DriveProtocol, f64, f64, f64, ThermalState) {
        let proto = DriveProtocol::constant_j(0.03, 30.0).unwrap();
        let th = gibbs(20.0, 0.03).unwrap();
        (proto, 0.02, FRAC_PI_2, 30.0, th)
    }

    #[test]
    fn config_validation_catches_bad_splits() {
        let mut cfg = ShotConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.shots_per_point = 100; // not divisible by 15
        assert!(cfg.validate().is_err());
        cfg = ShotConfig {
            blocks: 0,
            ..ShotConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = ShotConfig {
            budget: ShotBudget::SplitAcrossInitials,
            shots_per_point: 4485, // divisible by 15 but not by 30
            ..ShotConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.shots_per_point = 9000;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.per_initial(), 4500);
        cfg = ShotConfig {
            mode: SampleMode::Piecewise { segments: 0 },
            ..ShotConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = ShotConfig {
            drift: Some(DriftModel {
                sigma_j: -0.1,
                sigma_gamma: 0.0,
            }),
            ..ShotConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unitary_limit_never_leaks() {
        let proto = DriveProtocol::constant_j(0.05, 17.0).unwrap();
        let th = gibbs(20.0, 0.05).unwrap();
        let cfg = ShotConfig::default();
        let est = sample_point(&proto, 0.0, 0.7, 17.0, &th, &cfg).unwrap();
        assert_eq!(est.counts.leaked, [0, 0]);
        assert_eq!(est.counts.survived, [4500, 4500]);
        assert!(est.invalid_blocks.is_empty());
        let tt = transition_table(&proto, 0.0, 0.7, 17.0).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                let p = tt.p(f, i);
                let sigma = (p * (1.0 - p) / 4500.0).sqrt();
                assert!(
                    (est.p_hat(f, i) - p).abs() < 3.0 * sigma + 1e-12,
                    "{f}{i}: {} vs {p}",
                    est.p_hat(f, i)
                );
            }
        }
    }

    #[test]
    fn counts_are_conserved_and_rows_normalized() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let cfg = ShotConfig::default();
        let est = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        for i in 0..2 {
            assert_eq!(
                est.counts.prepared[i],
                est.counts.survived[i] + est.counts.leaked[i]
            );
            assert_eq!(
                est.counts.survived[i],
                est.counts.outcomes[0][i] + est.counts.outcomes[1][i]
            );
            let row = est.p_hat[0][i] + est.p_hat[1][i];
            assert!((row - 1.0).abs() < 1e-12, "row sum {row}");
        }
        assert_eq!(est.counts.prepared, [4500, 4500]);
        assert_eq!(est.valid_blocks, 15);
    }

    #[test]
    fn identical_seeds_are_bit_identical_and_seeds_matter() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let cfg = ShotConfig::default();
        let a = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        let b = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        assert_eq!(a.counts.survived, b.counts.survived);
        assert_eq!(a.counts.outcomes, b.counts.outcomes);
        for f in 0..2 {
            for i in 0..2 {
                assert_eq!(a.p_hat[f][i].to_bits(), b.p_hat[f][i].to_bits());
            }
        }
        assert_eq!(a.exp_work_hat.to_bits(), b.exp_work_hat.to_bits());

        let other = ShotConfig {
            seed: 1,
            ..ShotConfig::default()
        };
        let c = sample_point(&proto, gamma, theta_k, t, &th, &other).unwrap();
        assert_ne!(a.counts.outcomes, c.counts.outcomes);
    }

    #[test]
    fn estimator_is_consistent_at_large_shot_counts() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let cfg = ShotConfig {
            shots_per_point: 1_000_000,
            blocks: 10,
            ..ShotConfig::default()
        };
        let est = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        let tt = transition_table(&proto, gamma, theta_k, t).unwrap();
        for f in [Branch::Plus, Branch::Minus] {
            for i in [Branch::Plus, Branch::Minus] {
                let p = tt.p(f, i);
                let n = est.counts.survived(i) as f64;
                let sigma = (p * (1.0 - p) / n).sqrt();
                assert!(
                    (est.p_hat(f, i) - p).abs() < 5.0 * sigma,
                    "{f}{i}: {:.6} vs {p:.6}",
                    est.p_hat(f, i)
                );
            }
        }
        let ew = exp_work_closed_form(&tt, &th, th.j_i).unwrap();
        assert!((est.exp_work_hat - ew).abs() < 5.0 * est.exp_work_stderr.max(1e-4));
    }

    #[test]
    fn leak_fraction_tracks_mean_survival() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let cfg = ShotConfig::default();
        let est = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        let tt = transition_table(&proto, gamma, theta_k, t).unwrap();
        for i in [Branch::Plus, Branch::Minus] {
            let s = tt.survival(i);
            let n = est.counts.prepared[idx(i)] as f64;
            let observed = est.counts.leaked(i) as f64 / n;
            let sigma = (s * (1.0 - s) / n).sqrt();
            assert!(
                (observed - (1.0 - s)).abs() < 3.0 * sigma,
                "leak fraction {observed:.4} vs {:.4}",
                1.0 - s
            );
        }
    }

    #[test]
    fn piecewise_mode_keeps_p_but_multiplies_survivors() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let cont = sample_point(&proto, gamma, theta_k, t, &th, &ShotConfig::default()).unwrap();
        let cfg = ShotConfig {
            mode: SampleMode::Piecewise { segments: 5 },
            ..ShotConfig::default()
        };
        let pw = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        for i in [Branch::Plus, Branch::Minus] {
            assert!(pw.counts.survived(i) > cont.counts.survived(i));
            for f in [Branch::Plus, Branch::Minus] {
                let gap = (pw.p_hat(f, i) - cont.p_hat(f, i)).abs();
                let scale = (pw.p_stderr(f, i).powi(2) + cont.p_stderr(f, i).powi(2)).sqrt();
                assert!(gap < 5.0 * scale + 1e-12, "{f}{i} gap {gap:.4}");
            }
        }
    }

    #[test]
    fn starved_blocks_are_flagged_and_excluded() {
        // oscillatory regime (J > gamma) decays uniformly: survival ~ 1e-3
        // per shot, well under one survivor per 300-shot block
        let proto = DriveProtocol::constant_j(0.1, 45.0).unwrap();
        let th = gibbs(20.0, 0.1).unwrap();
        let cfg = ShotConfig::default();
        let est = sample_point(&proto, 0.08, FRAC_PI_2, 45.0, &th, &cfg).unwrap();
        assert!(!est.invalid_blocks.is_empty(), "expected starved blocks");
        assert_eq!(est.valid_blocks, 15 - est.invalid_blocks.len());
        assert!(est.valid_blocks > 0);
        // tallies still account for every prepared shot
        for i in 0..2 {
            assert_eq!(
                est.counts.prepared[i],
                est.counts.survived[i] + est.counts.leaked[i]
            );
        }
    }

    #[test]
    fn total_extinction_is_an_error() {
        // still oscillatory (J > gamma) but 2 gamma T = 35: survival ~ 6e-16,
        // so no shot in any block survives
        let proto = DriveProtocol::constant_j(0.6, 35.0).unwrap();
        let th = gibbs(20.0, 0.6).unwrap();
        let err = sample_point(&proto, 0.5, FRAC_PI_2, 35.0, &th, &ShotConfig::default());
        assert!(matches!(err, Err(NhjeError::DegenerateSurvival { .. })));
    }

    #[test]
    fn thermal_sampling_agrees_with_theoretical_weighting() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let big = ShotConfig {
            shots_per_point: 150_000,
            ..ShotConfig::default()
        };
        let a = sample_point(&proto, gamma, theta_k, t, &th, &big).unwrap();
        let cfg = ShotConfig {
            weighting: Weighting::ThermalSampling,
            ..big
        };
        let b = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        // thermal preparation splits the same budget by Boltzmann weight
        assert_eq!(
            b.counts.prepared[0] + b.counts.prepared[1],
            2 * big.shots_per_point as u64
        );
        let frac = b.counts.prepared[0] as f64 / (2.0 * big.shots_per_point as f64);
        assert!((frac - th.p_plus).abs() < 0.01, "plus fraction {frac:.4}");
        assert!(
            (a.exp_work_hat - b.exp_work_hat).abs() < 0.05,
            "{} vs {}",
            a.exp_work_hat,
            b.exp_work_hat
        );
    }

    #[test]
    fn block_drift_inflates_block_scatter() {
        let (proto, gamma, theta_k, t, th) = fig3_point();
        let still = sample_point(&proto, gamma, theta_k, t, &th, &ShotConfig::default()).unwrap();
        let cfg = ShotConfig {
            drift: Some(DriftModel {
                sigma_j: 0.01,
                sigma_gamma: 0.004,
            }),
            ..ShotConfig::default()
        };
        let drifted = sample_point(&proto, gamma, theta_k, t, &th, &cfg).unwrap();
        let width = |e: &ShotEstimate| {
            let mut w: f64 = 0.0;
            for f in [Branch::Plus, Branch::Minus] {
                for i in [Branch::Plus, Branch::Minus] {
                    w = w.max(e.p_block_std(f, i));
                }
            }
            w
        };
        assert!(
            width(&drifted) > width(&still),
            "drift {:.4} vs static {:.4}",
            width(&drifted),
            width(&still)
        );
    }

    #[test]
    fn unitary_evolution_has_zero_asymmetry() {
        let th = gibbs(20.0, 0.03).unwrap();
        let cfg = ShotConfig::default();
        // an undriven eigenstate never transitions: the estimate is exactly 0
        let scan = fine_scan(
            DriveKind::ConstantJ { j1: 0.03 },
            0.0,
            FRAC_PI_2,
            [10.0, 14.0],
            1.0,
            &th,
            &cfg,
        )
        .unwrap();
        for (est, ov) in scan.points.iter().zip(&scan.overlay) {
            assert!(ov.delta_p.abs() < 1e-12);
            assert_eq!(est.delta_p(), 0.0);
        }
        // a detuned unitary drive does cause transitions, yet the diagonal
        // asymmetry still vanishes identically; estimates scatter around 0
        let th = gibbs(20.0, 0.12).unwrap();
        let scan = fine_scan(
            DriveKind::SinDetuning {
                j2: 0.12,
                delta1: 0.5,
            },
            0.0,
            FRAC_PI_2,
            [10.0, 14.0],
            1.0,
            &th,
            &cfg,
        )
        .unwrap();
        let mut saw_scatter = false;
        for (est, ov) in scan.points.iter().zip(&scan.overlay) {
            assert!(ov.delta_p.abs() < 1e-12);
            let sigma = est
                .p_stderr(Branch::Plus, Branch::Plus)
                .hypot(est.p_stderr(Branch::Minus, Branch::Minus));
            assert!(
                est.delta_p().abs() <= 4.0 * sigma + 1e-15,
                "delta_p {} at T {}",
                est.delta_p(),
                est.t
            );
            saw_scatter |= est.delta_p() != 0.0;
        }
        assert!(saw_scatter, "detuned drive should produce binomial noise");
    }

    #[test]
    fn fine_scan_crossings_match_deterministic_overlay() {
        let kind = DriveKind::SinDetuning {
            j2: 0.12,
            delta1: 0.5,
        };
        let th = gibbs(20.0, 0.12).unwrap();
        let cfg = ShotConfig::default();
        for (window, near) in [([25.0, 28.0], 26.7), ([33.0, 36.0], 34.6)] {
            let scan = fine_scan(kind, 0.02, FRAC_PI_2, window, 0.2, &th, &cfg).unwrap();
            let det: Vec<(f64, f64)> =
                scan.overlay.iter().map(|o| (o.t, o.delta_p)).collect();
            let det_cross = zero_crossings(&det);
            assert_eq!(det_cross.len(), 1, "crossings {det_cross:?}");
            assert!(
                (det_cross[0] - near).abs() < 0.3,
                "deterministic crossing {:.3} vs {near}",
                det_cross[0]
            );
            let est: Vec<(f64, f64)> =
                scan.points.iter().map(|p| (p.t, p.delta_p())).collect();
            let est_cross = zero_crossings(&est);
            assert!(
                est_cross.iter().any(|c| (c - det_cross[0]).abs() <= 0.2 + 1e-9),
                "estimated crossings {est_cross:?} vs {:.3}",
                det_cross[0]
            );
        }
    }

    #[test]
    fn fine_scan_rejects_bad_windows() {
        let th = gibbs(20.0, 0.03).unwrap();
        let cfg = ShotConfig::default();
        let kind = DriveKind::ConstantJ { j1: 0.03 };
        assert!(fine_scan(kind, 0.02, 0.0, [5.0, 4.0], 0.2, &th, &cfg).is_err());
        assert!(fine_scan(kind, 0.02, 0.0, [0.0, 4.0], 0.2, &th, &cfg).is_err());
        assert!(fine_scan(kind, 0.02, 0.0, [1.0, 4.0], 0.0, &th, &cfg).is_err());
    }

    #[test]
    fn zero_crossing_helper_interpolates() {
        let samples = [(0.0, -1.0), (1.0, 1.0), (2.0, 1.0), (3.0, -3.0)];
        let roots = zero_crossings(&samples);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 0.5).abs() < 1e-12);
        assert!((roots[1] - 2.25).abs() < 1e-12);
        assert_eq!(zero_crossings(&[(0.0, 1.0), (1.0, 2.0)]).len(), 0);
    }
}
