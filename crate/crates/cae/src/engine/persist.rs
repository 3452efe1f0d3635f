use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cae_core::model::sha256_hex;
use serde::{Deserialize, Serialize};

use super::{Lineage, Snapshot, StructuredUnderstanding};

pub const CONFIG_FILE: &str = "config.json";
pub const LINEAGE_FILE: &str = "lineage.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const TIMINGS_FILE: &str = "timings.json";
pub const UNDERSTANDING_FILE: &str = "understanding.json";

pub fn snapshot_file(generation: u32) -> String {
    format!("generation_{generation}.json")
}

/// Validation wall times per generation, keyed by individual id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub generations: BTreeMap<u32, BTreeMap<String, f64>>,
}

/// `runs/<UTC timestamp>_<8 hex>/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    path: PathBuf,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

impl RunDir {
    /// Creates a fresh run directory under `root`; `salt` feeds the digest.
    pub fn create(root: &Path, salt: &str) -> io::Result<Self> {
        let now = chrono::Utc::now();
        let nanos = now.timestamp_nanos_opt().unwrap_or_default();
        let digest = sha256_hex(format!("{salt}:{nanos}:{}", std::process::id()).as_bytes());
        let run_id = format!("{}_{}", now.format("%Y%m%dT%H%M%SZ"), &digest[..8]);
        let path = root.join(run_id);
        fs::create_dir_all(&path)?;
        Ok(RunDir { path })
    }

    pub fn open(path: &Path) -> Self {
        RunDir { path: path.to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn run_id(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.path.join(TRANSCRIPT_FILE)
    }

    pub fn write_snapshot(&self, snapshot: &Snapshot) -> io::Result<()> {
        write_json(&self.path.join(snapshot_file(snapshot.generation)), snapshot)
    }

    pub fn write_lineage(&self, lineage: &Lineage) -> io::Result<()> {
        write_json(&self.path.join(LINEAGE_FILE), lineage)
    }

    pub fn write_timings(&self, timings: &Timings) -> io::Result<()> {
        write_json(&self.path.join(TIMINGS_FILE), timings)
    }

    pub fn write_understanding(&self, s: &StructuredUnderstanding) -> io::Result<()> {
        write_json(&self.path.join(UNDERSTANDING_FILE), s)
    }

    /// Snapshots in generation order.
    pub fn snapshots(&self) -> io::Result<Vec<Snapshot>> {
        let mut found: Vec<(u32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&self.path)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if let Some(t) = name
                .strip_prefix("generation_")
                .and_then(|r| r.strip_suffix(".json"))
                .and_then(|r| r.parse().ok())
            {
                found.push((t, path));
            }
        }
        found.sort();
        found.iter().map(|(_, p)| read_json(p)).collect()
    }

    pub fn lineage(&self) -> io::Result<Lineage> {
        read_json(&self.path.join(LINEAGE_FILE))
    }
}
