//! CSV and JSON output of rate experiments.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::rates::{Manifest, RateResult};

pub const DATA_HEADER: [&str; 6] = ["experiment_id", "metric", "n", "mean_excess", "stderr", "replicates"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "experiment_id",
    "metric",
    "slope",
    "slope_stderr",
    "tau_target",
    "pass",
];

/// Sibling of `path` with `suffix` appended to its stem.
fn sibling(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}

/// Writes the report and returns the files created.
///
/// CSV output is split in two: per-size rows at `path` and slope rows at
/// `<stem>_summary.csv`. JSON output holds the whole result in one file. A
/// `<stem>_manifest.json` with the configuration hash and seeds accompanies both.
pub fn emit_report(
    result: &RateResult,
    manifest: Option<&Manifest>,
    path: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let mut data = csv_writer(path)?;
            data.write_record(DATA_HEADER).map_err(csv_error)?;
            for row in &result.data {
                data.serialize(row).map_err(csv_error)?;
            }
            data.flush()?;
            written.push(path.to_path_buf());

            let summary_path = sibling(path, "_summary", "csv");
            let mut summary = csv_writer(&summary_path)?;
            summary.write_record(SUMMARY_HEADER).map_err(csv_error)?;
            for row in &result.summary {
                summary.serialize(row).map_err(csv_error)?;
            }
            summary.flush()?;
            written.push(summary_path);
        }
        OutputFormat::Json => {
            let mut file = File::create(path)?;
            serde_json::to_writer_pretty(&mut file, result)?;
            file.write_all(b"\n")?;
            written.push(path.to_path_buf());
        }
    }
    if let Some(manifest) = manifest {
        let manifest_path = sibling(path, "_manifest", "json");
        let mut file = File::create(&manifest_path)?;
        serde_json::to_writer_pretty(&mut file, manifest)?;
        file.write_all(b"\n")?;
        written.push(manifest_path);
    }
    Ok(written)
}

pub fn read_json_report(path: &Path) -> Result<RateResult> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(path)?))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
