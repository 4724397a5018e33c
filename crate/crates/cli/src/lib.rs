//! Command-line front end: scenario files, subcommands and table output.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::{Path, PathBuf};

use config::{Loaded, OutputFormat};
use error::{CliError, CliResult};
use table::{Metadata, ResultTable};

pub const TOOL: &str = concat!("capacity-rct ", env!("CARGO_PKG_VERSION"));

pub fn metadata(cfg: &Loaded, subcommand: &str) -> Metadata {
    Metadata {
        tool: TOOL.to_string(),
        subcommand: subcommand.to_string(),
        config_sha256: cfg.hash(),
        config: cfg.canonical_json(),
    }
}

/// Writes each table to `<out>/<table>.csv` (or `.json`) and returns the paths.
pub fn write_tables(tables: &[ResultTable], cfg: &Loaded, subcommand: &str) -> CliResult<Vec<PathBuf>> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        context: format!("creating {}", dir.display()),
        source,
    })?;
    let meta = metadata(cfg, subcommand);
    let format = cfg.format()?;
    tables
        .iter()
        .map(|t| {
            let (ext, body) = match format {
                OutputFormat::Csv => ("csv", t.to_csv(&meta)?),
                OutputFormat::Json => ("json", t.to_json(&meta)),
            };
            let path = dir.join(format!("{}.{ext}", t.name));
            write_file(&path, &body)?;
            Ok(path)
        })
        .collect()
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

/// Caps the global thread pool when `CAPACITY_RCT_THREADS` is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("CAPACITY_RCT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CAPACITY_RCT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Output(format!("thread pool: {e}")))
}
