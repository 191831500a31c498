use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Output {
    pub path: PathBuf,
    pub bytes: usize,
    pub sha256: String,
}

/// Record of one invocation. Replaying `params` with the same version
/// reproduces every output byte for byte.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub params: Value,
    /// sha256 of the canonical JSON of `command` and `params`.
    pub input_hash: String,
    pub outputs: Vec<Output>,
    pub wall_clock_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory plus the list of files written so far.
pub struct Run {
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub pseudo_inverse: bool,
    outputs: Vec<Output>,
}

impl Run {
    pub fn new(out: PathBuf, seed: u64, jobs: usize, pseudo_inverse: bool) -> Self {
        Self {
            out,
            seed,
            jobs,
            pseudo_inverse,
            outputs: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        self.outputs.push(Output {
            path: path.clone(),
            bytes: contents.len(),
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self, command: &str, params: Value, wall_clock_s: f64) -> Result<PathBuf> {
        let mut params = params;
        if let Value::Object(m) = &mut params {
            m.insert("seed".into(), self.seed.into());
            if self.pseudo_inverse {
                m.insert("pseudo-inverse".into(), true.into());
            }
        }
        let canonical = serde_json::to_string(&serde_json::json!({ "command": command, "params": params }))?;
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            params,
            input_hash: sha256_hex(canonical.as_bytes()),
            outputs: std::mem::take(&mut self.outputs),
            wall_clock_s,
        };
        let name = format!("{}.manifest.json", command.replace(' ', "-"));
        let path = self.out.join(&name);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
