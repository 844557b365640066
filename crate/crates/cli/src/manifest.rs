//! Run manifests. Inputs are embedded verbatim so a replay does not depend
//! on the original files still being around; outputs are recorded by hash.

use crate::args::Command;
use freedenoise_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const FILE: &str = "manifest.json";
pub const SCHEMA: &str = "manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub file: String,
    pub schema: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// grids, ε, seeds and tolerances as actually used
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
    /// numerical health figures (defects, conservation, residues)
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Where a command reads its inputs and writes its outputs.
pub struct Run {
    out: PathBuf,
    /// inputs served from a manifest instead of the filesystem
    replay: Option<Vec<Input>>,
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl Run {
    pub fn new(out: &Path, replay: Option<Vec<Input>>) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
        Ok(Run {
            out: out.to_path_buf(),
            replay,
            inputs: vec![],
            outputs: vec![],
            parameters: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
        })
    }

    pub fn read(&mut self, role: &str, path: &Path) -> Result<String> {
        let key = path.display().to_string();
        let content = match &self.replay {
            Some(inputs) => inputs
                .iter()
                .find(|i| i.role == role && i.path == key)
                .map(|i| i.content.clone())
                .ok_or_else(|| Error::InvalidInput(format!("manifest has no {role} input {key}")))?,
            None => std::fs::read_to_string(path).map_err(|e| io(path, e))?,
        };
        self.inputs.push(Input { role: role.into(), path: key, sha256: sha256(content.as_bytes()), content: content.clone() });
        Ok(content)
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(key.into(), serde_json::to_value(value).expect("parameters serialise"));
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics.insert(key.into(), serde_json::to_value(value).expect("diagnostics serialise"));
    }

    /// Render into memory, then write and record the file.
    pub fn write(&mut self, file: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<String>) -> Result<()> {
        let mut buf = Vec::new();
        let schema = render(&mut buf)?;
        let path = self.out.join(file);
        std::fs::write(&path, &buf).map_err(|e| io(&path, e))?;
        self.outputs.push(Output { file: file.into(), schema, sha256: sha256(&buf) });
        Ok(())
    }

    pub fn finish(self, command: Command) -> Result<Manifest> {
        let m = Manifest {
            schema: SCHEMA.into(),
            tool: "freedenoise".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            parameters: self.parameters,
            inputs: self.inputs,
            outputs: self.outputs,
            diagnostics: self.diagnostics,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Io(e.to_string()))? + "\n";
        let path = self.out.join(FILE);
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(m)
    }
}

pub fn load(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
    if m.schema != SCHEMA {
        return Err(Error::InvalidInput(format!("manifest schema {:?}, expected {SCHEMA}", m.schema)));
    }
    Ok(m)
}
