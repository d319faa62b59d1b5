//! Output plumbing: CSV files with a `#`-prefixed header block, JSON
//! summaries, and a run manifest. Floats print with 17 significant digits
//! so a re-run can be compared byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header lines shared by every file a subcommand writes.
pub struct RunContext {
    pub subcommand: String,
    pub config_sha256: String,
    pub config_toml: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    written: Vec<(String, String)>,
}

impl RunContext {
    pub fn new(subcommand: &str, config_toml: String, out_dir: PathBuf) -> Self {
        RunContext {
            subcommand: subcommand.to_string(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            config_toml,
            out_dir,
            seeds: Vec::new(),
            written: Vec::new(),
        }
    }

    fn header(&self, columns: &[&str]) -> String {
        let mut h = String::new();
        let _ = writeln!(h, "# thincell {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(h, "# subcommand = {}", self.subcommand);
        let _ = writeln!(h, "# config_sha256 = {}", self.config_sha256);
        for seed in &self.seeds {
            let _ = writeln!(h, "# seed = {seed}");
        }
        let _ = writeln!(h, "# columns: {}", columns.join(","));
        h
    }

    /// Writes one CSV with the standard header block. Rows are already
    /// formatted cells.
    pub fn write_csv(
        &mut self,
        name: &str,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<PathBuf, CliError> {
        let mut body = self.header(columns);
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let _ = writeln!(body, "{}", row.join(","));
        }
        self.write_file(name, body.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serialize {name}: {e}")))?;
        body.push('\n');
        self.write_file(name, body.as_bytes())
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    /// Writes `<subcommand>.manifest.json` next to the outputs and returns
    /// its path. Re-running with the embedded config reproduces every file
    /// hash for a fixed seed.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct OutputEntry {
            path: String,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest {
            tool_version: String,
            subcommand: String,
            timestamp_unix: u64,
            config_sha256: String,
            config_toml: String,
            seeds: Vec<u64>,
            outputs: Vec<OutputEntry>,
        }
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.clone(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config_sha256: self.config_sha256.clone(),
            config_toml: self.config_toml.clone(),
            seeds: self.seeds.clone(),
            outputs: self
                .written
                .iter()
                .map(|(p, h)| OutputEntry { path: p.clone(), sha256: h.clone() })
                .collect(),
        };
        let name = format!("{}.manifest.json", self.subcommand.replace('-', "_"));
        let mut body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("serialize manifest: {e}")))?;
        body.push('\n');
        let path = self.out_dir.join(&name);
        std::fs::write(&path, body.as_bytes())
            .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Parses a spectrum CSV: `#` and blank lines skipped, two columns
/// (B_tesla, value) or three (B_tesla, value, stderr).
pub fn read_spectrum_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut b = Vec::new();
    let mut y = Vec::new();
    let mut s: Vec<f64> = Vec::new();
    let mut saw_three = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 && cells.len() != 3 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 2 or 3 comma-separated columns, got {}",
                path.display(),
                lineno + 1,
                cells.len()
            )));
        }
        let parse = |cell: &str| {
            cell.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}:{}: `{cell}` is not a number",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        b.push(parse(cells[0])?);
        y.push(parse(cells[1])?);
        if cells.len() == 3 {
            saw_three = true;
            s.push(parse(cells[2])?);
        } else if saw_three {
            return Err(CliError::Config(format!(
                "{}:{}: mixed 2- and 3-column rows",
                path.display(),
                lineno + 1
            )));
        }
    }
    if b.is_empty() {
        return Err(CliError::Config(format!("{}: no data rows", path.display())));
    }
    if saw_three && s.len() != b.len() {
        return Err(CliError::Config(format!(
            "{}: mixed 2- and 3-column rows",
            path.display()
        )));
    }
    Ok((b, y, saw_three.then_some(s)))
}
