//! Drives one configured run end to end, and replays finished runs.

use std::path::{Path, PathBuf};

use crate::config::{ConfigError, ProviderConfig, RunConfig};
use crate::engine::{EngineError, RunDir, RunResult, Snapshot, CONFIG_FILE};
use crate::gateway::GatewayError;
use crate::report::{self, Format, ReportError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{source} (partial artifacts in {})", dir.display())]
    Engine { dir: PathBuf, source: EngineError },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay diverged in: {}", .0.join(", "))]
    Diverged(Vec<String>),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Engine { source, .. } => match source {
                EngineError::SeedExhausted { .. } | EngineError::Gateway(GatewayError::BudgetExceeded(_)) => EXIT_BUDGET,
                EngineError::InvalidSpec(_) | EngineError::Config(_) => EXIT_CONFIG,
                _ => EXIT_INTERNAL,
            },
            RunError::Report(ReportError::EmptyRun(_)) => EXIT_CONFIG,
            _ => EXIT_INTERNAL,
        }
    }
}

pub struct Evolved {
    pub dir: RunDir,
    pub result: RunResult,
}

/// Creates a run directory under `cfg.output_dir`, records the transcript
/// there and writes the CSV report when the run completes.
pub fn evolve(cfg: &RunConfig, progress: &mut dyn FnMut(&Snapshot)) -> Result<Evolved, RunError> {
    let prepared = cfg.prepare()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let dir = RunDir::create(&cfg.output_dir, &cfg.to_json())?;
    std::fs::write(dir.path().join(CONFIG_FILE), cfg.to_json())?;
    let gateway = cfg.gateway(Some(&dir.transcript_path()))?;
    let engine = prepared.engine(cfg, &gateway);
    let result = engine.run(Some(&dir), progress).map_err(|source| RunError::Engine {
        dir: dir.path().to_path_buf(),
        source,
    })?;
    if let Err(e) = report::write_report(dir.path(), Format::Csv) {
        log::warn!("report for {}: {e}", dir.path().display());
    }
    Ok(Evolved { dir, result })
}

pub struct Replayed {
    pub original: PathBuf,
    pub replay: RunDir,
    pub mismatches: Vec<String>,
}

/// Re-runs `run` against its own transcript into a fresh directory under
/// `out_root` and compares the deterministic artifacts.
pub fn replay(run: &Path, out_root: &Path) -> Result<Replayed, RunError> {
    let text = std::fs::read_to_string(run.join(CONFIG_FILE)).map_err(|e| ConfigError::Io {
        path: run.join(CONFIG_FILE),
        message: e.to_string(),
    })?;
    let mut cfg = RunConfig::from_json(&text, run)?;
    cfg.provider = ProviderConfig::Replay {
        transcript: RunDir::open(run).transcript_path(),
    };
    cfg.output_dir = out_root.to_path_buf();
    let evolved = evolve(&cfg, &mut |_| {})?;
    if !run.join(report::REPORT_CSV).exists() {
        report::write_report(run, Format::Csv)?;
    }
    let mismatches = report::compare_runs(run, evolved.dir.path())?;
    Ok(Replayed {
        original: run.to_path_buf(),
        replay: evolved.dir,
        mismatches,
    })
}
