//! Artifact writing and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Serialize)]
struct Record {
    file: String,
    sha256: String,
}

/// One invocation: resolved parameters, inputs read and artifacts written.
#[derive(Debug)]
pub struct Run {
    command: &'static str,
    seed: u64,
    dir: PathBuf,
    stem: String,
    config: Value,
    tolerances: Value,
    inputs: Vec<Record>,
    artifacts: Vec<Record>,
}

impl Run {
    /// Artifacts are named `<prefix>_<suffix>`; a prefix naming a directory
    /// gets the subcommand as its stem.
    pub fn new(command: &'static str, seed: u64, prefix: &Path) -> Self {
        let is_dir = prefix.as_os_str().to_string_lossy().ends_with(['/', '\\']) || prefix.is_dir();
        let (dir, stem) = match (is_dir, prefix.file_name()) {
            (false, Some(name)) => (
                prefix.parent().map(Path::to_path_buf).unwrap_or_default(),
                name.to_string_lossy().into_owned(),
            ),
            _ => (prefix.to_path_buf(), command.to_string()),
        };
        Self {
            command,
            seed,
            dir,
            stem,
            config: Value::Null,
            tolerances: Value::Null,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_config<C: Serialize>(&mut self, config: &C) {
        self.config = serde_json::to_value(config).expect("config serializes");
    }

    pub fn set_tolerances(&mut self, tolerances: Value) {
        self.tolerances = tolerances;
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(Record {
            file: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    fn write(&mut self, suffix: &str, bytes: &[u8]) -> Result<(), CliError> {
        if !self.dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        }
        let name = format!("{}_{suffix}", self.stem);
        let path = self.dir.join(&name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.artifacts.push(Record {
            file: name,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// RFC-4180 CSV with a header row; floats use the shortest round-trip form.
    pub fn csv<R: Serialize>(
        &mut self,
        suffix: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = R>,
    ) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Config(format!("csv encoding failed: {e}"));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.serialize(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv encoding failed: {e}")))?;
        self.write(suffix, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.write(suffix, &bytes)
    }

    /// Row-major little-endian float64 values.
    pub fn binary(&mut self, suffix: &str, values: &[f64]) -> Result<(), CliError> {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.write(suffix, &bytes)
    }

    /// Digest of everything that determines the outputs; the worker count is excluded.
    pub fn config_hash(&self) -> String {
        let canonical = json!({
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }

    /// Writes `<prefix>_manifest.json` and returns its path.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash(),
            "config": self.config,
            "tolerances": self.tolerances,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
        });
        self.write("manifest.json", &[serde_json::to_vec_pretty(&manifest).expect("manifest serializes"), vec![b'\n']].concat())?;
        Ok(self.dir.join(format!("{}_manifest.json", self.stem)))
    }
}
