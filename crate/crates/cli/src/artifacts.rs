//! Output files and the manifest that lists them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Collects output files in memory; [`Artifacts::finish`] writes them all
/// together with a manifest, so failed runs leave nothing behind.
pub struct Artifacts {
    dir: PathBuf,
    pending: BTreeMap<String, Vec<u8>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    files: &'a BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            pending: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.pending.insert(name.to_string(), bytes.to_vec());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("results serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// A table as `<stem>.csv`, or as `<stem>.json` holding `value`.
    pub fn table<T: Serialize>(&mut self, stem: &str, csv: impl FnOnce() -> String, value: &T, as_json: bool) -> Result<(), CliError> {
        if as_json {
            self.json(&format!("{stem}.json"), value)
        } else {
            self.write(&format!("{stem}.csv"), csv().as_bytes())
        }
    }

    /// Writes every file, then the manifest hashing them.
    pub fn finish(self, config: &RunConfig) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut files = BTreeMap::new();
        for (name, bytes) in &self.pending {
            std::fs::write(self.dir.join(name), bytes)?;
            files.insert(name.clone(), sha256_hex(bytes));
        }
        let versions = BTreeMap::from([("crl-risklab", env!("CARGO_PKG_VERSION"))]);
        let manifest = Manifest {
            config,
            seed: config.seed(),
            versions,
            files: &files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}
