//! JSON-lines log of model interactions.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Serve recorded entries, call the provider for the rest and append them.
    Record,
    /// Serve recorded entries only; never touch the network.
    Replay,
    /// Call the provider; cache in memory, write nothing.
    Passthrough,
}

impl FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            "passthrough" => Ok(CassetteMode::Passthrough),
            other => Err(format!("unknown mode `{other}` (record|replay|passthrough)")),
        }
    }
}

impl fmt::Display for CassetteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CassetteMode::Record => "record",
            CassetteMode::Replay => "replay",
            CassetteMode::Passthrough => "passthrough",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub kind: String,
    pub request: Value,
    pub response: Value,
    /// Seconds since the Unix epoch when the entry was recorded.
    pub timestamp: u64,
}

/// Entries keyed by fingerprint, optionally backed by a file.
#[derive(Debug, Default)]
pub struct Cassette {
    path: Option<PathBuf>,
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Reads a cassette file. A missing file is an error unless
    /// `allow_missing` is set, in which case it will be created on first write.
    pub fn open(path: &Path, allow_missing: bool) -> Result<Self, GatewayError> {
        let mut cassette = Cassette {
            path: Some(path.to_path_buf()),
            ..Default::default()
        };
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && allow_missing => return Ok(cassette),
            Err(e) => return Err(GatewayError::Cassette(format!("cannot open {}: {e}", path.display()))),
        };
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Cassette(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Cassette(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if cassette.index.contains_key(&entry.fingerprint) {
                return Err(GatewayError::Cassette(format!(
                    "{}:{}: duplicate fingerprint {}",
                    path.display(),
                    n + 1,
                    entry.fingerprint
                )));
            }
            cassette.push(entry);
        }
        Ok(cassette)
    }

    fn push(&mut self, entry: CassetteEntry) {
        self.index.insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.index.get(fingerprint).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds an entry, appending it to the backing file when `persist` is set.
    /// An existing fingerprint is left untouched.
    pub fn insert(&mut self, entry: CassetteEntry, persist: bool) -> Result<(), GatewayError> {
        if self.index.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        if persist {
            if let Some(path) = &self.path {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| GatewayError::Cassette(e.to_string()))?;
                }
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| GatewayError::Cassette(format!("cannot write {}: {e}", path.display())))?;
                let line = serde_json::to_string(&entry).map_err(|e| GatewayError::Cassette(e.to_string()))?;
                writeln!(file, "{line}").map_err(|e| GatewayError::Cassette(e.to_string()))?;
            }
        }
        self.push(entry);
        Ok(())
    }
}
