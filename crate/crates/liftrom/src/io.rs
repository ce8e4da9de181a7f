//! Artifact persistence: deterministic JSON for operators and bases, plus
//! run manifests.
//!
//! Every artifact-producing command writes a `manifest.json` that embeds the
//! fully resolved configuration (not just a path to it) together with
//! content hashes of each artifact, so a run can be reproduced from the
//! manifest alone. Manifests contain no wall-clock data; reruns of the same
//! configuration and code version produce byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes a value as pretty JSON and returns the bytes' SHA-256.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let bytes = to_json_bytes(value)?;
    let digest = sha256_hex(&bytes);
    std::fs::write(path, bytes)?;
    Ok(digest)
}

/// Reads a JSON artifact back.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Record of one run: which command produced what, from which
/// configuration. `config` holds the fully resolved configuration as a JSON
/// value; `artifacts` maps file names to their content hashes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    /// Extra scalar facts worth recording (e.g. reduced dimensions).
    pub facts: BTreeMap<String, serde_json::Value>,
    /// Artifact file name → SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    /// Starts a manifest for `command` with a resolved configuration.
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Manifest> {
        let config = serde_json::to_value(config)?;
        let config_sha256 = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Manifest {
            tool: "liftrom".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256,
            config,
            facts: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        })
    }

    /// Records a scalar fact (reduced dimension, snapshot count, ...).
    pub fn record_fact<V: Serialize>(&mut self, key: &str, value: V) -> Result<()> {
        self.facts.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Registers an artifact by name and content hash.
    pub fn record_artifact(&mut self, name: &str, sha256: String) {
        self.artifacts.insert(name.into(), sha256);
    }

    /// Hashes and registers every named file in `dir`.
    pub fn record_files(&mut self, dir: &Path, names: &[String]) -> Result<()> {
        for name in names {
            let bytes = std::fs::read(dir.join(name))?;
            self.record_artifact(name, sha256_hex(&bytes));
        }
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let bytes = to_json_bytes(self)?;
        std::fs::write(dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

/// Lists the regular files of a directory (names only, sorted).
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Parses configuration text as TOML or JSON depending on `path`'s
/// extension (`.json` → JSON, anything else → TOML). Unknown keys are
/// rejected by the target types' serde attributes.
pub fn parse_config<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    if is_json {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::InvalidConfig(format!("{}: key `{}`: {e}", path.display(), e.path())))
    } else {
        toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Loads a configuration file (see [`parse_config`]).
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_config(path, &text)
}
