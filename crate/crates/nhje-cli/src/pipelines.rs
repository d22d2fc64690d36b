//! The six data pipelines behind the subcommands. Each takes a validated
//! scenario, runs the matching nhje-core operations per configured angle,
//! and returns rendered artifacts; the presets reuse the same builders.

use crate::artifact::{artifact_name, json_payload, Artifact, OutputFormat};
use crate::config::{angle_tag, GridSpec, ScenarioConfig};
use crate::error::{at_stage, CliError, Result};
use nhje_core::evolution::{
    bloch_trajectory, survival_curve, transition_table, transition_table_with_steps,
};
use nhje_core::export::{
    fmt_f64, revival_csv, shots_csv, survival_csv, table_csv, trajectory_csv, Metadata,
};
use nhje_core::floquet::{extract_floquet, find_revivals, FloquetResult, RevivalReport};
use nhje_core::model::{Branch, DriveKind, DriveProtocol};
use nhje_core::shots::{sample_point, ShotConfig, ShotEstimate};
use nhje_core::thermo::{gibbs, work_distribution, ThermalState};
use serde::Serialize;

/// Version stamp carried in every metadata header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default phase-tracking grid resolution for Floquet extraction, us.
const PHASE_RESOLUTION: f64 = 0.25;

/// The initial (and, for these cyclic schedules, final) drive strength.
pub fn j_initial(kind: DriveKind) -> f64 {
    match kind {
        DriveKind::ConstantJ { j1 } => j1,
        DriveKind::TriangleJ { j_min, .. } => j_min,
        DriveKind::SinDetuning { j2, .. } => j2,
    }
}

/// Metadata shared by every artifact: version, protocol parameters, gamma,
/// and the hybridization angle.
pub fn base_meta(kind: DriveKind, gamma: f64, theta_k: f64) -> Metadata {
    let mut meta = Metadata::new();
    meta.push_str("version", VERSION);
    match kind {
        DriveKind::ConstantJ { j1 } => {
            meta.push_str("protocol", "constant_j").push_f64("J1", j1);
        }
        DriveKind::TriangleJ { j_min, j_max } => {
            meta.push_str("protocol", "triangle_j")
                .push_f64("J_min", j_min)
                .push_f64("J_max", j_max);
        }
        DriveKind::SinDetuning { j2, delta1 } => {
            meta.push_str("protocol", "sin_detuning")
                .push_f64("J2", j2)
                .push_f64("Delta1", delta1);
        }
    }
    meta.push_f64("gamma", gamma).push_f64("theta_k", theta_k);
    meta
}

pub fn grid_meta(meta: &mut Metadata, grid: &GridSpec) {
    meta.push_f64("T_start", grid.start)
        .push_f64("T_stop", grid.stop)
        .push_f64("T_step", grid.step);
}

/// Records the full sampling configuration, including the master seed.
pub fn shot_meta(meta: &mut Metadata, sc: &ShotConfig) {
    meta.push_u64("shots_per_point", sc.shots_per_point as u64)
        .push_u64("blocks", sc.blocks as u64)
        .push_u64("seed", sc.seed);
    match sc.mode {
        nhje_core::shots::SampleMode::Continuous => {
            meta.push_str("mode", "continuous");
        }
        nhje_core::shots::SampleMode::Piecewise { segments } => {
            meta.push_str("mode", "piecewise")
                .push_u64("segments", segments as u64);
        }
    }
    meta.push_str(
        "weighting",
        match sc.weighting {
            nhje_core::shots::Weighting::Theoretical => "theoretical",
            nhje_core::shots::Weighting::ThermalSampling => "thermal_sampling",
        },
    );
    meta.push_str(
        "budget",
        match sc.budget {
            nhje_core::shots::ShotBudget::PerInitial => "per_initial",
            nhje_core::shots::ShotBudget::SplitAcrossInitials => "split_across_initials",
        },
    );
    if let Some(d) = sc.drift {
        meta.push_f64("drift_sigma_j", d.sigma_j)
            .push_f64("drift_sigma_gamma", d.sigma_gamma);
    }
}

fn tag_for(angles: &[f64], theta: f64) -> Option<String> {
    (angles.len() > 1).then(|| angle_tag(theta))
}

/// One duration of the deterministic sweep: normalized conditional
/// transition probabilities, relative survivals, and the Jarzynski average.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub p_pp: f64,
    pub p_mm: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub exp_work: f64,
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "T_us", "P_pp", "P_mm", "P_pm", "P_mp", "S_plus", "S_minus", "exp_work",
];

pub fn sweep_csv_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                fmt_f64(r.t),
                fmt_f64(r.p_pp),
                fmt_f64(r.p_mm),
                fmt_f64(r.p_pm),
                fmt_f64(r.p_mp),
                fmt_f64(r.s_plus),
                fmt_f64(r.s_minus),
                fmt_f64(r.exp_work),
            ]
        })
        .collect()
}

/// Runs the deterministic pipeline over the duration grid for one angle.
pub fn deterministic_sweep(
    kind: DriveKind,
    gamma: f64,
    theta_k: f64,
    th: &ThermalState,
    grid: &[f64],
    steps: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let j_f = j_initial(kind);
    grid.iter()
        .map(|&t| {
            let proto = DriveProtocol::new(kind, t).map_err(at_stage("protocol setup"))?;
            let tt = match steps {
                Some(n) => transition_table_with_steps(&proto, gamma, theta_k, t, n),
                None => transition_table(&proto, gamma, theta_k, t),
            }
            .map_err(at_stage("transition sweep"))?;
            let wd = work_distribution(&tt, th, j_f).map_err(at_stage("work statistics"))?;
            Ok(SweepRow {
                t,
                p_pp: tt.p(Branch::Plus, Branch::Plus),
                p_mm: tt.p(Branch::Minus, Branch::Minus),
                p_pm: tt.p(Branch::Plus, Branch::Minus),
                p_mp: tt.p(Branch::Minus, Branch::Plus),
                s_plus: tt.survival(Branch::Plus),
                s_minus: tt.survival(Branch::Minus),
                exp_work: wd.exp_work,
            })
        })
        .collect()
}

fn thermal_state(beta: f64, kind: DriveKind) -> Result<ThermalState> {
    gibbs(beta, j_initial(kind)).map_err(at_stage("thermal state"))
}

/// `simulate`: the deterministic sweep, one artifact per angle.
pub fn simulate(
    cfg: &ScenarioConfig,
    fmt: OutputFormat,
    steps: Option<usize>,
) -> Result<Vec<Artifact>> {
    let th = thermal_state(cfg.beta, cfg.protocol)?;
    let grid = cfg.grid.values();
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "sweep".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let rows = deterministic_sweep(cfg.protocol, cfg.gamma, theta, &th, &grid, steps)?;
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        meta.push_f64("beta", cfg.beta);
        grid_meta(&mut meta, &cfg.grid);
        if let Some(n) = steps {
            meta.push_u64("steps", n as u64);
        }
        let name = artifact_name(&stem, tag_for(&angles, theta).as_deref(), fmt);
        let contents = match fmt {
            OutputFormat::Csv => table_csv(&meta, &SWEEP_COLUMNS, &sweep_csv_rows(&rows)),
            OutputFormat::Json => json_payload(&meta, &rows),
        };
        out.push(Artifact { name, contents });
    }
    Ok(out)
}

/// Runs the shot emulator over the grid for one angle.
pub fn shot_sweep(
    kind: DriveKind,
    gamma: f64,
    theta_k: f64,
    th: &ThermalState,
    grid: &[f64],
    sc: &ShotConfig,
) -> Result<Vec<ShotEstimate>> {
    grid.iter()
        .map(|&t| {
            let proto = DriveProtocol::new(kind, t).map_err(at_stage("protocol setup"))?;
            sample_point(&proto, gamma, theta_k, t, th, sc).map_err(at_stage("shot emulation"))
        })
        .collect()
}

/// `shots`: the finite-shot Monte Carlo emulation, one artifact per angle.
pub fn shots(cfg: &ScenarioConfig, fmt: OutputFormat, seed: Option<u64>) -> Result<Vec<Artifact>> {
    let mut sc = cfg.shots.unwrap_or_default();
    if let Some(s) = seed {
        sc.seed = s;
    }
    let th = thermal_state(cfg.beta, cfg.protocol)?;
    let grid = cfg.grid.values();
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "shots".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let points = shot_sweep(cfg.protocol, cfg.gamma, theta, &th, &grid, &sc)?;
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        meta.push_f64("beta", cfg.beta);
        grid_meta(&mut meta, &cfg.grid);
        shot_meta(&mut meta, &sc);
        let name = artifact_name(&stem, tag_for(&angles, theta).as_deref(), fmt);
        let contents = match fmt {
            OutputFormat::Csv => shots_csv(&meta, &points),
            OutputFormat::Json => json_payload(&meta, &points),
        };
        out.push(Artifact { name, contents });
    }
    Ok(out)
}

/// `bloch`: postselected trajectories from both initial eigenstates over
/// [0, grid.stop], one artifact per angle.
pub fn bloch(cfg: &ScenarioConfig, fmt: OutputFormat, steps: Option<usize>) -> Result<Vec<Artifact>> {
    let samples = steps.unwrap_or(201);
    if samples < 2 {
        return Err(CliError::Config(
            "--steps: a trajectory needs at least 2 samples".into(),
        ));
    }
    let t_total = cfg.grid.stop;
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "bloch".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let proto =
            DriveProtocol::new(cfg.protocol, t_total).map_err(at_stage("protocol setup"))?;
        let mut traj = bloch_trajectory(&proto, cfg.gamma, theta, Branch::Minus, samples)
            .map_err(at_stage("bloch export"))?;
        traj.extend(
            bloch_trajectory(&proto, cfg.gamma, theta, Branch::Plus, samples)
                .map_err(at_stage("bloch export"))?,
        );
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        meta.push_f64("T", t_total)
            .push_u64("samples", samples as u64);
        let name = artifact_name(&stem, tag_for(&angles, theta).as_deref(), fmt);
        let contents = match fmt {
            OutputFormat::Csv => trajectory_csv(&meta, &traj),
            OutputFormat::Json => json_payload(&meta, &traj),
        };
        out.push(Artifact { name, contents });
    }
    Ok(out)
}

pub const FLOQUET_COLUMNS: [&str; 11] = [
    "T_us",
    "Re_E_F",
    "Im_E_F",
    "Re_h_par",
    "Im_h_par",
    "Re_h_perp",
    "Im_h_perp",
    "Re_h_y",
    "Im_h_y",
    "revival_residual",
    "recon_residual",
];

fn floquet_csv_rows(results: &[FloquetResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.t),
                fmt_f64(r.e_f.re),
                fmt_f64(r.e_f.im),
                fmt_f64(r.proj.h_par.re),
                fmt_f64(r.proj.h_par.im),
                fmt_f64(r.proj.h_perp.re),
                fmt_f64(r.proj.h_perp.im),
                fmt_f64(r.proj.h_y.re),
                fmt_f64(r.proj.h_y.im),
                fmt_f64(r.revival_residual()),
                fmt_f64(r.recon_residual),
            ]
        })
        .collect()
}

/// `floquet`: effective-generator extraction at each grid duration, one
/// artifact per angle. `steps` overrides the phase-tracking grid as a count
/// of intervals per duration.
pub fn floquet(
    cfg: &ScenarioConfig,
    fmt: OutputFormat,
    steps: Option<usize>,
) -> Result<Vec<Artifact>> {
    let grid = cfg.grid.values();
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "floquet".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let results: Vec<FloquetResult> = grid
            .iter()
            .map(|&t| {
                let proto =
                    DriveProtocol::new(cfg.protocol, t).map_err(at_stage("protocol setup"))?;
                let res = match steps {
                    Some(n) => (t / n as f64).min(0.5),
                    None => PHASE_RESOLUTION,
                };
                extract_floquet(&proto, cfg.gamma, theta, t, res)
                    .map_err(at_stage("floquet extraction"))
            })
            .collect::<Result<_>>()?;
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        grid_meta(&mut meta, &cfg.grid);
        let name = artifact_name(&stem, tag_for(&angles, theta).as_deref(), fmt);
        let contents = match fmt {
            OutputFormat::Csv => table_csv(&meta, &FLOQUET_COLUMNS, &floquet_csv_rows(&results)),
            OutputFormat::Json => json_payload(&meta, &results),
        };
        out.push(Artifact { name, contents });
    }
    Ok(out)
}

pub const ROOT_COLUMNS: [&str; 7] = [
    "tau_us",
    "J_eff",
    "gamma_eff",
    "res_re_h_perp",
    "res_re_h_y",
    "res_im_h_par",
    "res_im_h_y",
];

pub fn root_csv_rows(report: &RevivalReport) -> Vec<Vec<String>> {
    report
        .roots
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.tau),
                fmt_f64(r.j_eff),
                fmt_f64(r.gamma_eff),
                fmt_f64(r.residuals[0]),
                fmt_f64(r.residuals[1]),
                fmt_f64(r.residuals[2]),
                fmt_f64(r.residuals[3]),
            ]
        })
        .collect()
}

/// `revival`: symmetry-revival search over [grid.start, grid.stop]. CSV mode
/// writes a scan file and a roots file per angle; JSON mode writes one
/// document per angle with the whole report.
pub fn revival(cfg: &ScenarioConfig, fmt: OutputFormat) -> Result<Vec<Artifact>> {
    if cfg.grid.stop > 200.0 {
        return Err(CliError::Config(format!(
            "field `grid.stop`: the revival search window is limited to 200 us, got {}",
            cfg.grid.stop
        )));
    }
    let coarse = cfg.grid.step.min(1.0);
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "revival".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let report = find_revivals(
            cfg.protocol,
            cfg.gamma,
            theta,
            [cfg.grid.start, cfg.grid.stop],
            coarse,
        )
        .map_err(at_stage("revival search"))?;
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        grid_meta(&mut meta, &cfg.grid);
        meta.push_f64("coarse_step", coarse).push_str(
            "uniformly_symmetric",
            if report.uniformly_symmetric { "true" } else { "false" },
        );
        let tag = tag_for(&angles, theta);
        match fmt {
            OutputFormat::Csv => {
                out.push(Artifact {
                    name: artifact_name(&format!("{stem}_scan"), tag.as_deref(), fmt),
                    contents: revival_csv(&meta, &report.scan),
                });
                out.push(Artifact {
                    name: artifact_name(&format!("{stem}_roots"), tag.as_deref(), fmt),
                    contents: table_csv(&meta, &ROOT_COLUMNS, &root_csv_rows(&report)),
                });
            }
            OutputFormat::Json => out.push(Artifact {
                name: artifact_name(&stem, tag.as_deref(), fmt),
                contents: json_payload(&meta, &report),
            }),
        }
    }
    Ok(out)
}

/// `survival`: relative and full-norm survival over the grid, one artifact
/// per angle.
pub fn survival(cfg: &ScenarioConfig, fmt: OutputFormat) -> Result<Vec<Artifact>> {
    let grid = cfg.grid.values();
    let angles = cfg.theta_k.values();
    let stem = cfg.output.stem.clone().unwrap_or_else(|| "survival".into());
    let mut out = Vec::new();
    for &theta in &angles {
        let samples = survival_curve(cfg.protocol, cfg.gamma, theta, &grid)
            .map_err(at_stage("survival scan"))?;
        let mut meta = base_meta(cfg.protocol, cfg.gamma, theta);
        grid_meta(&mut meta, &cfg.grid);
        let name = artifact_name(&stem, tag_for(&angles, theta).as_deref(), fmt);
        let contents = match fmt {
            OutputFormat::Csv => survival_csv(&meta, &samples),
            OutputFormat::Json => json_payload(&meta, &samples),
        };
        out.push(Artifact { name, contents });
    }
    Ok(out)
}
