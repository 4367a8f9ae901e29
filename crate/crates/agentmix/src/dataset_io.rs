//! JSON-lines dataset files, split manifests and the synthetic ground-truth
//! sidecar.
//!
//! Line 1 is a header `{"partition_names": [..], "class_names": [..]}`; each
//! further line is one case
//! `{"id": .., "partitions": {"<name>": text | [f64]}, "global": .., "labels": [0|1]}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use agentmix_core::data::{default_global, Case, Dataset, InformativeMap, Payload, Schema, SplitManifest};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{io, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    partition_names: Vec<String>,
    class_names: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseLine {
    id: String,
    partitions: BTreeMap<String, Payload>,
    #[serde(default)]
    global: Option<Payload>,
    labels: Vec<u8>,
}

/// Serializes partitions as a map in declared order.
struct OrderedPartitions<'a> {
    names: &'a [String],
    payloads: &'a [Payload],
}

impl Serialize for OrderedPartitions<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.names.len()))?;
        for (name, payload) in self.names.iter().zip(self.payloads) {
            map.serialize_entry(name, payload)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct CaseLineOut<'a> {
    id: &'a str,
    partitions: OrderedPartitions<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    global: Option<&'a Payload>,
    labels: &'a [u8],
}

/// Expected partition and class counts, checked against the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedShape {
    pub agents: usize,
    pub classes: usize,
}

/// Reads a dataset. Text-mode cases without a global payload get the
/// partition texts joined in declared order.
pub fn load_dataset(path: &Path, expected: Option<ExpectedShape>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    parse_dataset(&text, path, expected)
}

pub fn parse_dataset(text: &str, path: &Path, expected: Option<ExpectedShape>) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let Some((header_line, header)) = lines.next() else {
        return Err(parse_err(1, "empty file, expected a header line".into()));
    };
    let header: Header =
        serde_json::from_str(header).map_err(|e| parse_err(header_line, format!("bad header: {e}")))?;
    if let Some(shape) = expected {
        if header.partition_names.len() != shape.agents || header.class_names.len() != shape.classes {
            return Err(parse_err(
                header_line,
                format!(
                    "header declares {} partitions and {} classes, expected {} and {}",
                    header.partition_names.len(),
                    header.class_names.len(),
                    shape.agents,
                    shape.classes
                ),
            ));
        }
    }

    let mut schema = Schema::new(header.partition_names.len(), header.class_names.len());
    let mut cases = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, raw) in lines {
        let parsed: CaseLine = serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        if !seen.insert(parsed.id.clone()) {
            return Err(parse_err(line, format!("duplicate case id {:?}", parsed.id)));
        }
        if parsed.partitions.len() != header.partition_names.len() {
            return Err(parse_err(
                line,
                format!(
                    "case {:?} has {} partitions, expected {}",
                    parsed.id,
                    parsed.partitions.len(),
                    header.partition_names.len()
                ),
            ));
        }
        let mut partitions = Vec::with_capacity(header.partition_names.len());
        let mut by_name = parsed.partitions;
        for name in &header.partition_names {
            let payload = by_name
                .remove(name)
                .ok_or_else(|| parse_err(line, format!("case {:?} lacks partition {name:?}", parsed.id)))?;
            partitions.push(payload);
        }
        let mut case = Case {
            id: parsed.id,
            partitions,
            global: parsed.global,
            labels: parsed.labels,
        };
        schema.check(&case).map_err(|e| parse_err(line, e.to_string()))?;
        if case.global.is_none() && matches!(case.partitions.first(), Some(Payload::Text(_))) {
            case.global = Some(default_global(&case.partitions).map_err(|e| parse_err(line, e.to_string()))?);
        }
        cases.push(case);
    }
    Dataset::new(header.partition_names, header.class_names, cases)
        .map_err(|e| parse_err(header_line, e.to_string()))
}

pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    let mut out = serde_json::to_string(&Header {
        partition_names: dataset.partition_names.clone(),
        class_names: dataset.class_names.clone(),
    })
    .map_err(json_err)?;
    out.push('\n');
    for case in &dataset.cases {
        let line = CaseLineOut {
            id: &case.id,
            partitions: OrderedPartitions {
                names: &dataset.partition_names,
                payloads: &case.partitions,
            },
            global: case.global.as_ref(),
            labels: &case.labels,
        };
        out.push_str(&serde_json::to_string(&line).map_err(json_err)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, dataset_to_string(dataset)?.as_bytes())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn save_split_manifest(path: &Path, manifest: &SplitManifest) -> Result<()> {
    save_json(path, manifest)
}

pub fn load_split_manifest(path: &Path) -> Result<SplitManifest> {
    load_json(path)
}

/// Ground truth written next to a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub noise_std: f64,
    pub informative_map: InformativeMap,
    /// Planted agent per class (largest strength).
    pub planted_agents: Vec<Option<usize>>,
}

/// Writes through a temporary file in the same directory, then renames, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub(crate) fn json_err(e: serde_json::Error) -> Error {
    Error::Config(format!("serialization failed: {e}"))
}
