use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Plain-text `key = value` record written before any computation starts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub master_seed: u64,
    pub problem: String,
    pub dimension: usize,
    pub config_sha256: String,
    pub created_unix: u64,
    pub extra: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        master_seed: u64,
        problem: String,
        dimension: usize,
        config_text: &str,
    ) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        Self {
            command: command.to_string(),
            code_version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            master_seed,
            problem,
            dimension,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "code_version = {}", self.code_version);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "problem = {}", self.problem);
        let _ = writeln!(s, "dimension = {}", self.dimension);
        let _ = writeln!(s, "config_sha256 = {}", self.config_sha256);
        let _ = writeln!(s, "created_unix = {}", self.created_unix);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
