//! Run manifests: the flags, seed and input digests behind an output file.

use std::path::{Path, PathBuf};

use edgecause_core::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub flags: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub version: String,
    pub duration_s: f64,
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `dir/stem.csv` → `dir/stem.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&edgecause_core::io::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Re-runs the command recorded in `manifest` (optionally writing to `out`)
/// and checks that every input and the output digest still match.
pub fn replay(manifest: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let m = RunManifest::read(manifest)?;
    if m.command == "replay" {
        return Err(Error::InvalidConfig("cannot replay a replay manifest".into()));
    }
    for input in &m.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(Error::InvalidConfig(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let mut flags = m.flags.clone();
    let pos = flags
        .iter()
        .position(|f| f == "--out")
        .filter(|p| p + 1 < flags.len())
        .ok_or_else(|| Error::InvalidConfig("manifest flags have no --out".into()))?;
    let target = match out {
        Some(p) => {
            flags[pos + 1] = p.display().to_string();
            p.to_path_buf()
        }
        None => PathBuf::from(&flags[pos + 1]),
    };
    let expected = m
        .outputs
        .first()
        .ok_or_else(|| Error::InvalidConfig("manifest records no output".into()))?
        .sha256
        .clone();
    let mut argv = vec!["edgecause".to_string()];
    argv.extend(flags.iter().cloned());
    let cli = <crate::Cli as clap::Parser>::try_parse_from(&argv)
        .map_err(|e| Error::InvalidConfig(format!("manifest flags do not parse: {e}")))?;
    crate::run(cli, &flags)?;
    let got = sha256_file(&target)?;
    if got != expected {
        return Err(Error::InvalidConfig(format!(
            "replayed output {} has digest {got}, manifest records {expected}",
            target.display()
        )));
    }
    Ok(target)
}
