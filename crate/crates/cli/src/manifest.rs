//! `manifest.json`: what each stage consumed and produced.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: &str = "vulnrank-manifest-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub duration_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            version: MANIFEST_VERSION.to_string(),
            stages: BTreeMap::new(),
        }
    }
}

impl Manifest {
    pub fn load(workspace: &Path) -> CliResult<Self> {
        let path = workspace.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(vulnrank_core::Error::from)?;
        if m.version != MANIFEST_VERSION {
            return Err(vulnrank_core::Error::Data(format!(
                "{}: unsupported manifest version `{}`",
                path.display(),
                m.version
            ))
            .into());
        }
        Ok(m)
    }

    pub fn save(&self, workspace: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(vulnrank_core::Error::from)? + "\n";
        atomic_write(&workspace.join(MANIFEST_FILE), |tmp| {
            fs::write(tmp, &text).map_err(|e| CliError::io(tmp, e))
        })
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(to_hex(&h.finalize()))
}

/// Hash over (relative path, content hash) of every listed file.
pub fn hash_tree(root: &Path, files: &[std::path::PathBuf]) -> CliResult<String> {
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(hash_file(&root.join(rel))?.as_bytes());
        h.update([b'\n']);
    }
    Ok(to_hex(&h.finalize()))
}

/// Runs `write` against a sibling temp path, then renames it over `path`.
pub fn atomic_write<F>(path: &Path, write: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> CliResult<()>,
{
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    let result = write(&tmp);
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            hash_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_leaves_no_temp_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out.txt");
        let err = atomic_write(&target, |tmp| {
            fs::write(tmp, "partial").unwrap();
            Err(vulnrank_core::Error::Data("boom".into()).into())
        });
        assert!(err.is_err());
        assert!(!target.exists());
        assert!(!dir.path().join("out.txt.tmp").exists());
        atomic_write(&target, |tmp| fs::write(tmp, "done").map_err(|e| CliError::io(tmp, e))).unwrap();
        assert_eq!(fs::read_to_string(&target).unwrap(), "done");
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::default();
        m.stages.insert(
            "extract".into(),
            StageEntry {
                config_hash: "c".into(),
                inputs: BTreeMap::from([("a".into(), "1".into())]),
                outputs: BTreeMap::new(),
                duration_ms: 3,
            },
        );
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }
}
