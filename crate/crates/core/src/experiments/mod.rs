//! Named, seeded scenario pipelines and their on-disk outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cancellation::CancelError;
use crate::geometry::GeometryError;
use crate::magnetostatics::FieldError;
use crate::spin::SpinError;
use crate::table::write_atomic;

pub mod config;
mod reference;
mod scenarios;

pub use config::{
    ConfigError, Duration, Frequency, GeometryConfig, GyroRatio, ScenarioConfig, ScenarioName,
    SpinConfig, SweepConfig,
};
pub use reference::{
    compare_to_reference, published_reference, CompareError, ComparisonReport, MetricCheck,
    Reference, ReferenceMetric,
};
pub use scenarios::{build_loops, required_metrics, target_point};

/// Error raised inside one pipeline stage.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Cancel(#[from] CancelError),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario {scenario}, stage `{stage}`: {source}")]
    Stage {
        scenario: ScenarioName,
        stage: &'static str,
        source: StageError,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Configuration problems, as opposed to domain or I/O failures.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}

pub(crate) trait StageExt<T> {
    fn at(self, scenario: ScenarioName, stage: &'static str) -> Result<T, ExperimentError>;
}

impl<T, E: Into<StageError>> StageExt<T> for Result<T, E> {
    fn at(self, scenario: ScenarioName, stage: &'static str) -> Result<T, ExperimentError> {
        self.map_err(|e| ExperimentError::Stage {
            scenario,
            stage,
            source: e.into(),
        })
    }
}

/// A summary entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Number(f64),
    Flag(bool),
    Text(String),
}

impl Metric {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Metric::Number(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Metric {
    fn from(v: f64) -> Self {
        Metric::Number(v)
    }
}

impl From<bool> for Metric {
    fn from(v: bool) -> Self {
        Metric::Flag(v)
    }
}

impl From<&str> for Metric {
    fn from(v: &str) -> Self {
        Metric::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub hash8: String,
    pub seed: u64,
    pub version: String,
}

/// A named CSV output. The table called `main` becomes `<scenario>__<hash8>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTable {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: ScenarioName,
    pub tables: Vec<NamedTable>,
    pub summary: BTreeMap<String, Metric>,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    scenario: &'a str,
    provenance: &'a Provenance,
    summary: &'a BTreeMap<String, Metric>,
}

impl ScenarioResult {
    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables.iter().find(|t| t.name == name).map(|t| t.csv.as_str())
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.summary.get(name).and_then(Metric::as_f64)
    }

    pub fn summary_toml(&self) -> String {
        toml::to_string(&SummaryRecord {
            scenario: self.scenario.as_str(),
            provenance: &self.provenance,
            summary: &self.summary,
        })
        .expect("summary serialises")
    }

    fn stem(&self) -> String {
        format!("{}__{}", self.scenario, self.provenance.hash8)
    }

    /// File name for a table.
    pub fn file_name(&self, table: &str) -> String {
        if table == "main" {
            format!("{}.csv", self.stem())
        } else {
            format!("{}.{table}.csv", self.stem())
        }
    }

    /// Write every table and the summary into `dir`, each file atomically.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut written = Vec::new();
        let mut put = |name: String, bytes: &[u8]| {
            let path = dir.join(name);
            write_atomic(&path, bytes).map_err(|source| ExperimentError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
            Ok::<_, ExperimentError>(())
        };
        for t in &self.tables {
            put(self.file_name(&t.name), t.csv.as_bytes())?;
        }
        put(format!("{}.summary.toml", self.stem()), self.summary_toml().as_bytes())?;
        Ok(written)
    }
}

/// Run the scenario named in `config`.
pub fn run(config: &ScenarioConfig) -> Result<ScenarioResult, ExperimentError> {
    let name = config.scenario.ok_or(ConfigError::NoScenario)?;
    config.validate()?;
    let (tables, summary) = scenarios::dispatch(name, config)?;
    Ok(ScenarioResult {
        scenario: name,
        tables,
        summary,
        provenance: Provenance {
            config_hash: config.hash(),
            hash8: config.hash8(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}
