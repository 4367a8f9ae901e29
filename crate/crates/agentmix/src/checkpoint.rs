//! Checkpoint files: one line of JSON holding the full trainer state, then a
//! line `{"digest":"sha256:<hex>"}` over the bytes of the first line.

use std::fs;
use std::path::Path;

use agentmix_core::data::SplitManifest;
use agentmix_core::train::TrainerState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset_io::{json_err, write_atomic};
use crate::embedding::ProviderConfig;
use crate::error::{io, Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u64,
    pub partition_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Provider used to embed a text dataset; `None` for vector data.
    pub provider: Option<ProviderConfig>,
    /// The split the model was trained on.
    pub split: Option<SplitManifest>,
    pub trainer: TrainerState,
}

impl Checkpoint {
    pub fn new(
        trainer: TrainerState,
        partition_names: Vec<String>,
        class_names: Vec<String>,
        provider: Option<ProviderConfig>,
        split: Option<SplitManifest>,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            partition_names,
            class_names,
            provider,
            split,
            trainer,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DigestLine {
    digest: String,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn checkpoint_to_bytes(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let body = serde_json::to_string(checkpoint).map_err(json_err)?;
    let digest = serde_json::to_string(&DigestLine {
        digest: format!("sha256:{}", sha256_hex(body.as_bytes())),
    })
    .map_err(json_err)?;
    Ok(format!("{body}\n{digest}\n").into_bytes())
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(checkpoint)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io(path))?;
    parse_checkpoint(&bytes, path)
}

/// Verifies the digest before anything else is parsed, then the version.
pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let integrity = |message: String| Error::Integrity {
        path: path.to_path_buf(),
        message,
    };
    let text = std::str::from_utf8(bytes).map_err(|_| integrity("not UTF-8".into()))?;
    let mut lines = text.split_terminator('\n');
    let (Some(body), Some(digest_line), None) = (lines.next(), lines.next(), lines.next()) else {
        return Err(integrity("expected a body line and a digest line".into()));
    };
    let digest: DigestLine =
        serde_json::from_str(digest_line).map_err(|e| integrity(format!("unreadable digest line: {e}")))?;
    let expected = format!("sha256:{}", sha256_hex(body.as_bytes()));
    if digest.digest != expected {
        return Err(integrity(format!("digest {} does not match content {expected}", digest.digest)));
    }
    let probe: VersionProbe =
        serde_json::from_str(body).map_err(|e| integrity(format!("body lacks format_version: {e}")))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_str(body).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}
