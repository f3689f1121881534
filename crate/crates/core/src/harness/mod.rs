//! Scenario loading, simulation runs, trace persistence, analysis, and
//! report rendering.

mod analyze;
mod report;
mod scenario;
mod simulate;
mod trace;

pub use analyze::{
    analyze, analyze_paths, AnalysisReport, AnalyzeOptions, ClassRow, ComparisonRow, EcdfSeries, FitRow,
    GroupComparison, InputMeta, Interval, LowessPoint, LowessSeries, QfiRow, RawGroup, ReportMetadata, TraceInput,
};
pub use report::{render_report, render_tables, ReportFormat, Table};
pub use scenario::{load_scenario, parse_scenario, Issue, NamedFlow, OutputConfig, ScenarioConfig, SCHEMA_VERSION};
pub use simulate::{run_scenario, simulate, ScenarioRun, SimulationOutput};
pub use trace::{parse_trace, read_trace, trace_bytes, write_trace, TRACE_HEADER};

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datapath::DatapathError;
use crate::probe::ProbeError;
use crate::stats::StatsError;
use crate::traffic::TrafficError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "UPFLAB_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", format_issues(.0))]
    Validation(Vec<Issue>),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Trace { path: String, line: u64, message: String },
    #[error("no Baseline samples: pass at least one --baseline trace")]
    MissingBaseline,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Datapath(#[from] DatapathError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn format_issues(issues: &[Issue]) -> String {
    let mut s = format!("{} validation error(s):", issues.len());
    for i in issues {
        let _ = write!(s, "\n  {i}");
    }
    s
}

impl HarnessError {
    /// 1 for invalid input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_)
            | HarnessError::Parse { .. }
            | HarnessError::Trace { .. }
            | HarnessError::MissingBaseline
            | HarnessError::Traffic(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Resolves the output directory: explicit flag, then scenario setting, then
/// `UPFLAB_OUT_DIR`, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, configured: Option<&Path>) -> PathBuf {
    flag.or(configured)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `bytes` to a temporary file next to `path` and renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}
