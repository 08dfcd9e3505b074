use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Run record: flags, seed, input digests and a timestamp.
#[derive(Debug, Default)]
pub struct Provenance {
    inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn digest(&mut self, path: &Path, digest: String) {
        self.inputs.insert(path.display().to_string(), digest);
    }

    pub fn write(&self, dest: &Path, command: &str, seed: u64, argv: &[OsString]) -> Result<()> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
        let record = json!({
            "tool": "geoforensics",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "args": args,
            "seed": seed,
            "inputs": self.inputs,
            "timestamp_unix": stamp,
        });
        let text = serde_json::to_string_pretty(&record)? + "\n";
        fs::write(dest, text).with_context(|| format!("writing {}", dest.display()))
    }
}

/// `DIR/provenance.json` for directory outputs, `FILE.provenance.json` otherwise.
pub fn path_for(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("provenance.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".provenance.json");
        PathBuf::from(s)
    }
}
