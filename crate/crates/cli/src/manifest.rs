//! Run manifests: the resolved configuration plus content hashes of every
//! input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// SHA-256 over `blob <len>\0<content>`, the object hash git uses.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hashes of a file, or of every file below a directory keyed by relative path.
pub fn hash_path(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        let mut stack = vec![path.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().is_none_or(|n| n != MANIFEST_NAME) {
                    let rel = p.strip_prefix(path).unwrap_or(&p);
                    out.insert(rel.display().to_string(), blob_hash(&fs::read(&p)?));
                }
            }
        }
    } else {
        out.insert(String::new(), blob_hash(&fs::read(path)?));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub results: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            results: serde_json::Value::Null,
        }
    }

    fn record(map: &mut BTreeMap<String, String>, path: &Path) -> CliResult<()> {
        for (rel, hash) in hash_path(path)? {
            let key = if rel.is_empty() {
                path.display().to_string()
            } else {
                format!("{}/{rel}", path.display())
            };
            map.insert(key, hash);
        }
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        Self::record(&mut self.inputs, path)
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        Self::record(&mut self.outputs, path)
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_object_format() {
        // sha256 of "blob 0\0"
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
