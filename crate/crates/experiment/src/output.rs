//! CSV and manifest emission.
//!
//! Each table becomes `<name>.csv`: `#`-prefixed metadata lines (version,
//! preset, resolved config as JSON, grid, derived tunings), then a header row
//! and one row per sweep point. Numbers use Rust's shortest round-trip
//! formatting (`{:?}`, exponent form for tiny values). Nothing time-dependent goes into the CSVs; wall time lives in
//! `manifest.json` only.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::Result;
use crate::runner::{RunOutput, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn render_csv(out: &RunOutput, table: &Table) -> Result<String> {
    let mut text = String::new();
    text.push_str(&format!("# dcs-experiment {VERSION}\n"));
    text.push_str(&format!("# preset: {}\n", out.config.name));
    text.push_str(&format!("# observable: {}\n", table.observable));
    if let Some(d) = table.amplitude_error {
        text.push_str(&format!("# amplitude_error: {d}\n"));
    }
    text.push_str(&format!("# grid: {}\n", out.grid_note()));
    for t in &out.tunings {
        text.push_str(&format!("# tuning: {}\n", t.describe()));
    }
    let config = serde_json::to_string(&out.config).map_err(|e| crate::ExperimentError::Io(e.to_string()))?;
    text.push_str(&format!("# config: {config}\n"));

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec![out.axis.column_name().to_string()];
    header.extend(table.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, x) in out.axis_values.iter().enumerate() {
        let mut row = vec![format!("{x:?}")];
        row.extend(table.columns.iter().map(|(_, v)| format!("{:?}", v[i])));
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| crate::ExperimentError::Io(e.to_string()))?;
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(text)
}

/// Writes every table plus `manifest.json` into `dir`; returns the files written.
pub fn write_outputs(out: &RunOutput, dir: &Path, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &out.tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, render_csv(out, t)?)?;
        files.push(path);
    }
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    let manifest = json!({
        "name": out.config.name,
        "version": VERSION,
        "wall_time_s": wall_time_s,
        "grid": out.grid_note(),
        "tunings": out.tunings.iter().map(|t| t.describe()).collect::<Vec<_>>(),
        "files": names,
        "config": out.config,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| crate::ExperimentError::Io(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    files.push(path);
    Ok(files)
}
