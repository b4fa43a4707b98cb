//! Artifact directory with write-once, atomic files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use approach_core::bridge::io::{to_binary, write_csv};
use approach_core::bridge::TimeSlicedGrid;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `bytes` to a temporary file next to the target and renames it
    /// into place.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.path(name), bytes)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `<stem>.grid` (binary) and `<stem>.csv`.
    pub fn write_grid(&self, stem: &str, grid: &TimeSlicedGrid) -> Result<(), CliError> {
        self.write(&format!("{stem}.grid"), &to_binary(grid))?;
        let mut csv = Vec::new();
        write_csv(grid, &mut csv)?;
        self.write(&format!("{stem}.csv"), &csv)
    }

    /// Binary only, for bulky per-iterate artifacts.
    pub fn write_grid_binary(&self, stem: &str, grid: &TimeSlicedGrid) -> Result<(), CliError> {
        self.write(&format!("{stem}.grid"), &to_binary(grid))
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Wall-clock seconds per stage; kept out of the deterministic report.
#[derive(Debug, Default, Serialize)]
pub struct Timings {
    stages: Vec<Stage>,
}

#[derive(Debug, Serialize)]
struct Stage {
    name: String,
    seconds: f64,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3} s");
        self.stages.push(Stage { name: stage.to_string(), seconds });
        out
    }
}
