//! Built-in scenario presets. Each preset bundles the exact parameters of
//! one published data set and writes its panel files in a single run, so a
//! full reproduction is one command per figure.

use crate::artifact::{json_payload, Artifact, OutputFormat};
use crate::config::GridSpec;
use crate::error::{at_stage, CliError, Result};
use crate::pipelines::{
    base_meta, deterministic_sweep, grid_meta, j_initial, root_csv_rows, shot_meta,
    sweep_csv_rows, ROOT_COLUMNS, SWEEP_COLUMNS, VERSION,
};
use nhje_core::evolution::{bloch_trajectory, survival_curve};
use nhje_core::export::{
    fmt_f64, revival_csv, shots_csv, survival_csv, table_csv, trajectory_csv, Metadata,
};
use nhje_core::floquet::find_revivals;
use nhje_core::model::{Branch, DriveKind, DriveProtocol};
use nhje_core::shots::{fine_scan, ShotConfig};
use nhje_core::thermo::gibbs;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

/// Dissipation rate shared by every preset, 1/us.
const GAMMA: f64 = 0.02;
/// Inverse temperature shared by every preset, us/rad.
const BETA: f64 = 20.0;
/// The two endpoint angles of the hybrid family.
const APT: f64 = 0.0;
const PT: f64 = FRAC_PI_2;

/// The detuned drive used by fig5, figA3, and figA4.
const DETUNED: DriveKind = DriveKind::SinDetuning {
    j2: 0.12,
    delta1: 0.5,
};

struct Ctx {
    fmt: OutputFormat,
    seed: Option<u64>,
}

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn(&Ctx) -> Result<Vec<Artifact>>,
}

const PRESETS: [Preset; 8] = [
    Preset {
        name: "fig1",
        summary: "Bloch trajectories from both initial eigenstates at theta_k in {0, pi/4, pi/2} under constant J",
        build: fig1,
    },
    Preset {
        name: "fig3",
        summary: "constant-J exponential work and transition probabilities at theta_k in {0, pi/2} for J = 0.03 and 0.06 (six panels)",
        build: fig3,
    },
    Preset {
        name: "fig4",
        summary: "triangle-ramp J(t) exponential work and transition probabilities at theta_k in {0, pi/2}",
        build: fig4,
    },
    Preset {
        name: "fig5",
        summary: "sinusoidal-detuning exponential work and probabilities with symmetry-revival markers",
        build: fig5,
    },
    Preset {
        name: "figA2",
        summary: "continuous survival-probability decay for J = 0.03 to 0.12",
        build: fig_a2,
    },
    Preset {
        name: "figA3",
        summary: "Floquet coefficient scan and certified revival roots for the detuned drive",
        build: fig_a3,
    },
    Preset {
        name: "figA4",
        summary: "high-resolution finite-shot scans around both revival times with deterministic overlays",
        build: fig_a4,
    },
    Preset {
        name: "figA5",
        summary: "all three drive protocols at the maximally hybridized angle pi/4 (six panels)",
        build: fig_a5,
    },
];

/// One line per preset, for `presets list`.
pub fn render_list() -> String {
    let mut out = String::new();
    for p in &PRESETS {
        out.push_str(&format!("{:<7} {}\n", p.name, p.summary));
    }
    out
}

/// Builds the named preset's artifacts, or a config error naming the
/// available presets.
pub fn build(name: &str, fmt: OutputFormat, seed: Option<u64>) -> Result<Vec<Artifact>> {
    let ctx = Ctx { fmt, seed };
    match PRESETS.iter().find(|p| p.name == name) {
        Some(p) => (p.build)(&ctx),
        None => Err(CliError::Config(format!(
            "unknown preset `{name}`; available: {}",
            PRESETS
                .iter()
                .map(|p| p.name)
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

fn artifact<T: Serialize>(
    ctx: &Ctx,
    stem: &str,
    meta: &Metadata,
    csv: impl FnOnce() -> String,
    data: &T,
) -> Artifact {
    let contents = match ctx.fmt {
        OutputFormat::Csv => csv(),
        OutputFormat::Json => json_payload(meta, data),
    };
    Artifact {
        name: format!("{stem}.{}", ctx.fmt.ext()),
        contents,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
struct EwRow {
    t: f64,
    exp_work: f64,
}

const EW_COLUMNS: [&str; 2] = ["T_us", "exp_work"];

fn ew_csv_rows(rows: &[EwRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![fmt_f64(r.t), fmt_f64(r.exp_work)])
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
struct EwJRow {
    t: f64,
    j1: f64,
    exp_work: f64,
}

const EWJ_COLUMNS: [&str; 3] = ["T_us", "J1", "exp_work"];

/// Builds the (exponential work, probabilities) panel pair for one drive and
/// angle; `markers` adds T1/T2 revival annotations to both headers.
fn ew_prob_pair(
    ctx: &Ctx,
    kind: DriveKind,
    theta: f64,
    grid_spec: GridSpec,
    ew_stem: &str,
    p_stem: &str,
    markers: &[f64],
) -> Result<[Artifact; 2]> {
    let th = gibbs(BETA, j_initial(kind)).map_err(at_stage("thermal state"))?;
    let rows = deterministic_sweep(kind, GAMMA, theta, &th, &grid_spec.values(), None)?;
    let mut meta = base_meta(kind, GAMMA, theta);
    meta.push_f64("beta", BETA);
    grid_meta(&mut meta, &grid_spec);
    for (i, tau) in markers.iter().enumerate() {
        meta.push_f64(&format!("T{}", i + 1), *tau);
    }
    let ew: Vec<EwRow> = rows
        .iter()
        .map(|r| EwRow {
            t: r.t,
            exp_work: r.exp_work,
        })
        .collect();
    let a = artifact(
        ctx,
        ew_stem,
        &meta,
        || table_csv(&meta, &EW_COLUMNS, &ew_csv_rows(&ew)),
        &ew,
    );
    let b = artifact(
        ctx,
        p_stem,
        &meta,
        || table_csv(&meta, &SWEEP_COLUMNS, &sweep_csv_rows(&rows)),
        &rows,
    );
    Ok([a, b])
}

/// Trajectories from both eigenstates, three hybridization angles. Panel a
/// starts from the lower eigenstate, panel b from the upper one.
fn fig1(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let kind = DriveKind::ConstantJ { j1: 0.03 };
    let proto = DriveProtocol::new(kind, 50.0).map_err(at_stage("protocol setup"))?;
    let mut out = Vec::new();
    for (tag, theta) in [("apt", APT), ("hybrid", FRAC_PI_4), ("pt", PT)] {
        for (panel, source) in [("a", Branch::Minus), ("b", Branch::Plus)] {
            let traj = bloch_trajectory(&proto, GAMMA, theta, source, 251)
                .map_err(at_stage("bloch export"))?;
            let mut meta = base_meta(kind, GAMMA, theta);
            meta.push_f64("T", 50.0).push_u64("samples", 251).push_str(
                "source",
                match source {
                    Branch::Minus => "minus",
                    Branch::Plus => "plus",
                },
            );
            out.push(artifact(
                ctx,
                &format!("fig1{panel}_{tag}"),
                &meta,
                || trajectory_csv(&meta, &traj),
                &traj,
            ));
        }
    }
    Ok(out)
}

/// Constant-J panels: per angle, one exponential-work file covering both
/// drive strengths plus one probability file per strength.
fn fig3(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let grid_spec = GridSpec {
        start: 10.0,
        stop: 50.0,
        step: 2.0,
    };
    let grid = grid_spec.values();
    let mut out = Vec::new();
    for (theta, ew_panel, p_panels) in [(PT, "a", ["b", "c"]), (APT, "d", ["e", "f"])] {
        let mut ew: Vec<EwJRow> = Vec::new();
        let mut prob_arts = Vec::new();
        for (j, p_panel) in [(0.03, p_panels[0]), (0.06, p_panels[1])] {
            let kind = DriveKind::ConstantJ { j1: j };
            let th = gibbs(BETA, j).map_err(at_stage("thermal state"))?;
            let rows = deterministic_sweep(kind, GAMMA, theta, &th, &grid, None)?;
            ew.extend(rows.iter().map(|r| EwJRow {
                t: r.t,
                j1: j,
                exp_work: r.exp_work,
            }));
            let mut meta = base_meta(kind, GAMMA, theta);
            meta.push_f64("beta", BETA);
            grid_meta(&mut meta, &grid_spec);
            prob_arts.push(artifact(
                ctx,
                &format!("fig3{p_panel}"),
                &meta,
                || table_csv(&meta, &SWEEP_COLUMNS, &sweep_csv_rows(&rows)),
                &rows,
            ));
        }
        let mut meta = Metadata::new();
        meta.push_str("version", VERSION)
            .push_str("protocol", "constant_j")
            .push_f64("J1_a", 0.03)
            .push_f64("J1_b", 0.06)
            .push_f64("gamma", GAMMA)
            .push_f64("theta_k", theta)
            .push_f64("beta", BETA);
        grid_meta(&mut meta, &grid_spec);
        let ew_rows: Vec<Vec<String>> = ew
            .iter()
            .map(|r| vec![fmt_f64(r.t), fmt_f64(r.j1), fmt_f64(r.exp_work)])
            .collect();
        out.push(artifact(
            ctx,
            &format!("fig3{ew_panel}"),
            &meta,
            || table_csv(&meta, &EWJ_COLUMNS, &ew_rows),
            &ew,
        ));
        out.append(&mut prob_arts);
    }
    Ok(out)
}

/// Triangle-ramp panels: exponential work and probabilities per angle.
fn fig4(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let kind = DriveKind::TriangleJ {
        j_min: 0.03,
        j_max: 0.06,
    };
    let grid_spec = GridSpec {
        start: 10.0,
        stop: 50.0,
        step: 2.0,
    };
    let mut out = Vec::new();
    for (theta, ew_panel, p_panel) in [(PT, "a", "b"), (APT, "c", "d")] {
        let pair = ew_prob_pair(
            ctx,
            kind,
            theta,
            grid_spec,
            &format!("fig4{ew_panel}"),
            &format!("fig4{p_panel}"),
            &[],
        )?;
        out.extend(pair);
    }
    Ok(out)
}

/// Detuned-drive panels with the certified revival durations stamped into
/// every header as T1/T2 markers.
fn fig5(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let grid_spec = GridSpec {
        start: 10.0,
        stop: 50.0,
        step: 0.5,
    };
    let report = find_revivals(DETUNED, GAMMA, PT, [20.0, 40.0], 0.5)
        .map_err(at_stage("revival search"))?;
    let markers: Vec<f64> = report.roots.iter().map(|r| r.tau).collect();
    let mut out = Vec::new();
    for (theta, ew_panel, p_panel) in [(PT, "a", "b"), (APT, "c", "d")] {
        let pair = ew_prob_pair(
            ctx,
            DETUNED,
            theta,
            grid_spec,
            &format!("fig5{ew_panel}"),
            &format!("fig5{p_panel}"),
            &markers,
        )?;
        out.extend(pair);
    }
    Ok(out)
}

/// Survival decay curves, one file per drive strength.
fn fig_a2(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let grid_spec = GridSpec {
        start: 0.25,
        stop: 50.0,
        step: 0.25,
    };
    let grid = grid_spec.values();
    let mut out = Vec::new();
    for j in [0.03, 0.06, 0.09, 0.12] {
        let kind = DriveKind::ConstantJ { j1: j };
        let samples =
            survival_curve(kind, GAMMA, PT, &grid).map_err(at_stage("survival scan"))?;
        let mut meta = base_meta(kind, GAMMA, PT);
        grid_meta(&mut meta, &grid_spec);
        out.push(artifact(
            ctx,
            &format!("figA2_J{j:.2}"),
            &meta,
            || survival_csv(&meta, &samples),
            &samples,
        ));
    }
    Ok(out)
}

/// The full Floquet coefficient scan with its certified roots.
fn fig_a3(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let report = find_revivals(DETUNED, GAMMA, PT, [10.0, 50.0], 0.25)
        .map_err(at_stage("revival search"))?;
    let mut meta = base_meta(DETUNED, GAMMA, PT);
    meta.push_f64("T_start", 10.0)
        .push_f64("T_stop", 50.0)
        .push_f64("T_step", 0.25)
        .push_u64("roots", report.roots.len() as u64);
    let mut out = Vec::new();
    match ctx.fmt {
        OutputFormat::Csv => {
            out.push(Artifact {
                name: "figA3_scan.csv".into(),
                contents: revival_csv(&meta, &report.scan),
            });
            out.push(Artifact {
                name: "figA3_roots.csv".into(),
                contents: table_csv(&meta, &ROOT_COLUMNS, &root_csv_rows(&report)),
            });
        }
        OutputFormat::Json => out.push(Artifact {
            name: "figA3.json".into(),
            contents: json_payload(&meta, &report),
        }),
    }
    Ok(out)
}

/// Finite-shot fine scans across both revival windows, paired with the
/// deterministic asymmetry overlay.
fn fig_a4(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let th = gibbs(BETA, j_initial(DETUNED)).map_err(at_stage("thermal state"))?;
    let mut sc = ShotConfig::default();
    if let Some(s) = ctx.seed {
        sc.seed = s;
    }
    let mut out = Vec::new();
    for (label, window) in [("T1", [25.0, 28.0]), ("T2", [33.0, 36.0])] {
        let report = find_revivals(DETUNED, GAMMA, PT, window, 0.5)
            .map_err(at_stage("revival search"))?;
        let scan = fine_scan(DETUNED, GAMMA, PT, window, 0.2, &th, &sc)
            .map_err(at_stage("shot emulation"))?;
        let mut meta = base_meta(DETUNED, GAMMA, PT);
        meta.push_f64("beta", BETA)
            .push_f64("T_start", window[0])
            .push_f64("T_stop", window[1])
            .push_f64("T_step", 0.2);
        for root in &report.roots {
            meta.push_f64(label, root.tau);
        }
        shot_meta(&mut meta, &sc);
        match ctx.fmt {
            OutputFormat::Csv => {
                out.push(Artifact {
                    name: format!("figA4_{label}_shots.csv"),
                    contents: shots_csv(&meta, &scan.points),
                });
                let overlay_rows: Vec<Vec<String>> = scan
                    .overlay
                    .iter()
                    .map(|o| vec![fmt_f64(o.t), fmt_f64(o.delta_p)])
                    .collect();
                out.push(Artifact {
                    name: format!("figA4_{label}_overlay.csv"),
                    contents: table_csv(&meta, &["T_us", "delta_P"], &overlay_rows),
                });
            }
            OutputFormat::Json => out.push(Artifact {
                name: format!("figA4_{label}.json"),
                contents: json_payload(&meta, &scan),
            }),
        }
    }
    Ok(out)
}

/// All three drives at the maximally hybridized angle.
fn fig_a5(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let theta = FRAC_PI_4;
    let main_grid = GridSpec {
        start: 10.0,
        stop: 50.0,
        step: 2.0,
    };
    let dense_grid = GridSpec {
        start: 10.0,
        stop: 50.0,
        step: 0.5,
    };
    let mut out = Vec::new();
    let pair = ew_prob_pair(
        ctx,
        DriveKind::ConstantJ { j1: 0.03 },
        theta,
        main_grid,
        "figA5a",
        "figA5b",
        &[],
    )?;
    out.extend(pair);
    let pair = ew_prob_pair(
        ctx,
        DriveKind::TriangleJ {
            j_min: 0.03,
            j_max: 0.06,
        },
        theta,
        main_grid,
        "figA5c",
        "figA5d",
        &[],
    )?;
    out.extend(pair);
    let report = find_revivals(DETUNED, GAMMA, theta, [20.0, 40.0], 0.5)
        .map_err(at_stage("revival search"))?;
    let markers: Vec<f64> = report.roots.iter().map(|r| r.tau).collect();
    let pair = ew_prob_pair(ctx, DETUNED, theta, dense_grid, "figA5e", "figA5f", &markers)?;
    out.extend(pair);
    Ok(out)
}
