//! Run manifests and the artifact writer.
//!
//! A run's digest covers the command, input contents, effective config,
//! seed and tool version, but not timestamps, paths or outputs. Every
//! artifact carries it: JSON objects in a `run_manifest_digest` field, CSV
//! files in a `# run_manifest_digest=...` first line, safetensors files in
//! header metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use svshape::digest::{file_digest, json_digest, sha256_hex};
use svshape::lora::{export_adapter_with_metadata, manifest_path, LoraInitBundle};
use svshape::tensors::{emit_tensors, StoreDtype};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIGEST_KEY: &str = "run_manifest_digest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Digest of a file, or of every `.safetensors`/`.json` file in a directory.
pub fn input_digest(path: &Path) -> Result<InputDigest> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let sha256 = if path.is_dir() {
        let mut parts = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && matches!(p.extension().and_then(|e| e.to_str()), Some("safetensors" | "json"))
            })
            .collect();
        entries.sort();
        for p in entries {
            let file = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            parts.push(format!("{file}:{}", file_digest(&p)?));
        }
        sha256_hex(parts.join("\n").as_bytes())
    } else {
        file_digest(path)?
    };
    Ok(InputDigest { name, sha256 })
}

#[derive(Serialize)]
struct DigestBasis<'a> {
    command: &'a str,
    inputs: &'a [InputDigest],
    config_digest: &'a str,
    seed: u64,
    tool_version: &'a str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub config: Value,
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub digest: String,
    pub artifacts: Vec<Artifact>,
    pub exit_status: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes artifacts into one directory and records them in the manifest.
pub struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    pub fn create(
        dir: &Path,
        command: &str,
        inputs: Vec<InputDigest>,
        config: &impl Serialize,
        seed: u64,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let config = serde_json::to_value(config)?;
        let config_digest = json_digest(&config)?;
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let digest = json_digest(&DigestBasis {
            command,
            inputs: &inputs,
            config_digest: &config_digest,
            seed,
            tool_version: &tool_version,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                inputs,
                config,
                config_digest,
                seed,
                tool_version,
                digest,
                artifacts: Vec::new(),
                exit_status: "incomplete".into(),
                started_unix: now(),
                finished_unix: 0,
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let sha256 = file_digest(&self.path(name))?;
        self.manifest.artifacts.push(Artifact {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name)
    }

    /// Pretty JSON; objects gain a `run_manifest_digest` field.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut value = serde_json::to_value(value)?;
        if let Value::Object(map) = &mut value {
            map.insert(DIGEST_KEY.into(), Value::String(self.manifest.digest.clone()));
        }
        let text = serde_json::to_string_pretty(&value)? + "\n";
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# {DIGEST_KEY}={}\n{body}", self.manifest.digest);
        self.write(name, text.as_bytes())
    }

    pub fn tensors<'a>(
        &mut self,
        name: &str,
        tensors: impl IntoIterator<Item = (&'a str, &'a nalgebra::DMatrix<f64>)>,
        dtype: StoreDtype,
    ) -> Result<()> {
        let metadata = BTreeMap::from([(DIGEST_KEY.to_string(), self.manifest.digest.clone())]);
        emit_tensors(tensors, &self.path(name), dtype, &metadata)?;
        self.record(name)
    }

    /// Adapter safetensors plus its JSON sidecar, both tagged.
    pub fn adapter(&mut self, name: &str, bundle: &LoraInitBundle) -> Result<()> {
        let path = self.path(name);
        let metadata = BTreeMap::from([(DIGEST_KEY.to_string(), self.manifest.digest.clone())]);
        export_adapter_with_metadata(bundle, &path, &metadata)?;
        self.record(name)?;
        let sidecar = manifest_path(&path);
        let sidecar_name = sidecar
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.json(&sidecar_name, &bundle.manifest)
    }

    /// Writes `manifest.json`.
    pub fn finish(mut self, exit_status: &str) -> Result<RunManifest> {
        self.manifest.exit_status = exit_status.to_string();
        self.manifest.finished_unix = now();
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}
