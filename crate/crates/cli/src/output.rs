//! File plumbing shared by every command: atomic writes, hashing, report
//! path layout and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp-{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

/// Refuses to let an output path overwrite one of the command's inputs.
pub fn ensure_distinct(output: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let out = canon(output);
    for input in inputs {
        if canon(input) == out {
            return Err(CliError::Usage(format!(
                "output {} would overwrite input {}",
                output.display(),
                input.display()
            )));
        }
    }
    Ok(())
}

/// `--report foo` or `--report foo.csv` both yield `foo.csv`, `foo.json`,
/// `foo.manifest.json` and optionally `foo.<tag>.svg`.
pub struct ReportPaths {
    base: PathBuf,
}

impl ReportPaths {
    pub fn new(report: &Path) -> Self {
        let base = match report.extension().and_then(|e| e.to_str()) {
            Some("csv" | "json") => report.with_extension(""),
            _ => report.to_path_buf(),
        };
        Self { base }
    }

    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut s = self.base.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    }

    pub fn csv(&self) -> PathBuf {
        self.with_suffix(".csv")
    }

    pub fn json(&self) -> PathBuf {
        self.with_suffix(".json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.with_suffix(".manifest.json")
    }

    pub fn svg(&self, tag: &str) -> PathBuf {
        self.with_suffix(&format!(".{tag}.svg"))
    }
}

pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub model_pre_sha256: Option<String>,
    pub model_post_sha256: Option<String>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    /// Only recorded with `--timing`, so default manifests stay reproducible.
    pub wall_clock_ms: Option<u128>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            tool_version: TOOL_VERSION.to_string(),
            seed: None,
            model_pre_sha256: None,
            model_post_sha256: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_clock_ms: None,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) -> String {
        let sha = sha256_hex(bytes);
        self.inputs.insert(role.to_string(), FileDigest { path: path.display().to_string(), sha256: sha.clone() });
        sha
    }

    /// Writes `bytes` atomically and records its digest.
    pub fn emit(&mut self, role: &str, path: &Path, bytes: &[u8]) -> Result<String, CliError> {
        write_atomic(path, bytes)?;
        let sha = sha256_hex(bytes);
        self.outputs.insert(role.to_string(), FileDigest { path: path.display().to_string(), sha256: sha.clone() });
        Ok(sha)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
