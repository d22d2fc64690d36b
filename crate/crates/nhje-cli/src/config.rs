//! The declarative scenario description shared by every subcommand: a small
//! TOML schema with one nesting level per block, validated with field-level
//! diagnostics so a bad file points at the offending key.
//!
//! ```toml
//! gamma = 0.02
//! theta_k = [0.0, 1.5707963267948966]   # a single angle also works
//! beta = 20.0
//!
//! [protocol]
//! kind = "constant_j"                   # constant_j | triangle_j | sin_detuning
//! j1 = 0.03
//!
//! [grid]
//! start = 10.0                          # durations in us, inclusive of stop
//! stop = 50.0
//! step = 2.0
//!
//! [shots]                               # optional; omitted fields use defaults
//! shots_per_point = 4500
//! blocks = 15
//! seed = 1852336741
//!
//! [output]                              # optional
//! dir = "out"
//! stem = "scan"
//! ```

use crate::error::{CliError, Result};
use nhje_core::model::{DriveKind, DriveProtocol};
use nhje_core::shots::ShotConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// One scenario: a drive protocol, the physical parameters, the duration
/// grid, and optional sampling and output blocks.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: DriveKind,
    /// Dissipation rate, 1/us.
    pub gamma: f64,
    /// Hybridization angle(s), radians.
    pub theta_k: AngleSpec,
    /// Inverse temperature of the initial Gibbs state, us/rad.
    pub beta: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub shots: Option<ShotConfig>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A single angle or a list of angles; each angle produces its own file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    One(f64),
    Many(Vec<f64>),
}

impl AngleSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AngleSpec::One(v) => vec![*v],
            AngleSpec::Many(v) => v.clone(),
        }
    }
}

/// Inclusive duration grid start, stop, step (us).
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    /// Expands to the grid values; `stop` is included up to float slack.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// Where artifacts land; the --out flag overrides `dir`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub stem: Option<String>,
}

/// File-name tag for one angle; six decimals keep distinct angles distinct.
pub fn angle_tag(theta: f64) -> String {
    format!("{theta:.6}")
}

/// Reads and validates a scenario file, turning parser spans and field
/// violations into config errors.
pub fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}:\n{e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!(
                "field `gamma`: must be a finite non-negative rate, got {}",
                self.gamma
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!(
                "field `beta`: must be a finite positive inverse temperature, got {}",
                self.beta
            ));
        }
        let angles = self.theta_k.values();
        if angles.is_empty() {
            return bad("field `theta_k`: need at least one angle".into());
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return bad("field `theta_k`: angles must be finite".into());
        }
        let mut tags: Vec<String> = angles.iter().map(|&a| angle_tag(a)).collect();
        tags.sort();
        tags.dedup();
        if tags.len() != angles.len() {
            return bad(
                "field `theta_k`: two angles collide at the 1e-6 rad file-naming resolution"
                    .into(),
            );
        }
        let g = self.grid;
        if !(g.start.is_finite() && g.start > 0.0) {
            return bad(format!(
                "field `grid.start`: durations must be positive, got {}",
                g.start
            ));
        }
        if !(g.stop.is_finite() && g.stop > g.start) {
            return bad(format!(
                "field `grid.stop`: must exceed grid.start = {}, got {}",
                g.start, g.stop
            ));
        }
        if !(g.step.is_finite() && g.step > 0.0) {
            return bad(format!("field `grid.step`: must be positive, got {}", g.step));
        }
        DriveProtocol::new(self.protocol, g.stop)
            .map_err(|e| CliError::Config(format!("table `protocol`: {e}")))?;
        if let Some(sc) = &self.shots {
            sc.validate()
                .map_err(|e| CliError::Config(format!("table `shots`: {e}")))?;
        }
        Ok(())
    }
}
