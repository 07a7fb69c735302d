//! Run manifests: every output file gets a JSON sidecar recording the command
//! line, a content hash of the spec-plus-flags configuration, and the full
//! output list. Identical manifests imply byte-identical outputs.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command_line: Vec<String>,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command_line: Vec<String>,
        spec_bytes: &[u8],
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(spec_bytes);
        hasher.update([0x1f]);
        hasher.update(command_line.join("\x1f").as_bytes());
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command_line,
            config_hash: hex(&hasher.finalize()),
            seed,
            outputs,
        }
    }

    /// Writes `<output>.manifest.json` next to each output file.
    pub fn write_sidecars(&self, out_dir: &Path) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        for name in &self.outputs {
            std::fs::write(out_dir.join(format!("{name}.manifest.json")), &body)?;
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short content hash of the scenario spec, stamped into table CSV headers.
pub fn scenario_hash(spec_bytes: &[u8]) -> String {
    hex(&Sha256::digest(spec_bytes))[..16].to_string()
}
