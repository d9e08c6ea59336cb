use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Format, OutputArgs};

/// Everything needed to rerun a command and get the same report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// Loss in the `key = value` config format, when the command uses one.
    pub loss: Option<String>,
    pub k: Option<usize>,
    pub seed: u64,
    pub sampling: Option<serde_json::Value>,
    pub tolerances: Option<serde_json::Value>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub format: String,
    pub artifact_version: String,
    /// The invocation, arguments shell-quoted where needed.
    pub reproduce: String,
}

impl RunConfig {
    pub fn new(subcommand: &str, argv: &[String], output: &OutputArgs, format: Format) -> Self {
        RunConfig {
            subcommand: subcommand.to_string(),
            loss: None,
            k: None,
            seed: 0,
            sampling: None,
            tolerances: None,
            out: output.out.clone(),
            out_dir: output.out_dir.clone(),
            format: format_name(format).to_string(),
            artifact_version: gammaphi::ARTIFACT_VERSION.to_string(),
            reproduce: reproduce_line(argv),
        }
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Pretty => "pretty",
    }
}

fn reproduce_line(argv: &[String]) -> String {
    let mut parts = vec!["gammaphi".to_string()];
    for a in argv.iter().skip(1) {
        let plain = !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_.,:/=+".contains(c));
        parts.push(if plain { a.clone() } else { format!("'{}'", a.replace('\'', "'\\''")) });
    }
    parts.join(" ")
}

/// Report document: the run configuration followed by the module report.
#[derive(Debug, Serialize)]
pub struct Document<'a, R: Serialize> {
    pub run_config: &'a RunConfig,
    pub report: &'a R,
}

pub fn to_json<R: Serialize>(run: &RunConfig, report: &R) -> String {
    let mut s = serde_json::to_string_pretty(&Document { run_config: run, report }).expect("serializable");
    s.push('\n');
    s
}

/// Writes the JSON report to `--out` and every artifact to `--out-dir`.
pub fn write_artifacts(output: &OutputArgs, json: &str, extra: &[(&str, String)]) -> std::io::Result<()> {
    if let Some(path) = &output.out {
        write_file(path, json)?;
    }
    if let Some(dir) = &output.out_dir {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("report.json"), json)?;
        for (name, body) in extra {
            write_file(&dir.join(name), body)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, body)
}

pub fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
