//! Output artifacts: encodings, file naming, and filesystem writes.

use crate::error::{CliError, Result};
use clap::ValueEnum;
use nhje_core::export::Metadata;
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

/// Artifact encoding selected by --format.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Lossless CSV with a one-line '#' metadata header.
    #[default]
    Csv,
    /// A `{"meta": ..., "data": ...}` document carrying the same metadata
    /// pairs and the full structured results.
    Json,
}

impl OutputFormat {
    pub fn ext(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// One file to be written: a name relative to the output directory plus the
/// fully rendered contents.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Renders the JSON encoding; metadata values stay in their exact header
/// spelling so the two formats agree byte for byte on every parameter.
pub fn json_payload<T: Serialize>(meta: &Metadata, data: &T) -> String {
    let mut pairs = serde_json::Map::new();
    for (k, v) in meta.pairs() {
        pairs.insert(k.clone(), json!(v));
    }
    let doc = json!({ "meta": pairs, "data": data });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable artifact");
    text.push('\n');
    text
}

/// File name for a stem, an optional per-angle tag, and the format.
pub fn artifact_name(stem: &str, tag: Option<&str>, fmt: OutputFormat) -> String {
    match tag {
        Some(t) => format!("{stem}_tk{t}.{}", fmt.ext()),
        None => format!("{stem}.{}", fmt.ext()),
    }
}

/// Writes every artifact under `dir`, creating it as needed, and returns the
/// paths in order.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}
