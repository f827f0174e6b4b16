//! Metric-by-metric comparison of a scenario summary against a reference table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ScenarioName};
use super::ScenarioResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("reference is for `{reference}` but the result is `{result}`")]
    ScenarioMismatch { reference: String, result: String },
    #[error("metric `{0}` is missing from the result summary")]
    MissingMetric(String),
    #[error("metric `{0}` is not numeric")]
    NotNumeric(String),
    #[error("metric `{0}` declares no tolerance")]
    NoTolerance(String),
    #[error(transparent)]
    Parse(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceMetric {
    pub name: String,
    pub value: f64,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

impl ReferenceMetric {
    /// Allowed deviation; when both are given the looser one applies.
    pub fn tolerance(&self) -> Option<f64> {
        let rel = self.rel_tol.map(|r| r * self.value.abs());
        match (self.abs_tol, rel) {
            (Some(a), Some(r)) => Some(a.max(r)),
            (a, r) => a.or(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub scenario: String,
    pub source: Option<String>,
    pub metric: Vec<ReferenceMetric>,
}

impl Reference {
    pub fn from_toml(text: &str) -> Result<Self, CompareError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| {
                let before = &text[..s.start.min(text.len())];
                (
                    before.matches('\n').count() + 1,
                    before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1,
                )
            });
            CompareError::Parse(ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            })
        })
    }
}

/// Reference values shipped with the crate, if any, for a scenario.
pub fn published_reference(name: ScenarioName) -> Option<Reference> {
    match name {
        ScenarioName::Fig4RabiSuite => Some(
            Reference::from_toml(include_str!("../../references/fig4_rabi_suite.toml"))
                .expect("shipped reference parses"),
        ),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub checks: Vec<MetricCheck>,
    pub pass: bool,
}

pub fn compare_to_reference(
    result: &ScenarioResult,
    reference: &Reference,
) -> Result<ComparisonReport, CompareError> {
    if reference.scenario != result.scenario.as_str() {
        return Err(CompareError::ScenarioMismatch {
            reference: reference.scenario.clone(),
            result: result.scenario.to_string(),
        });
    }
    let mut checks = Vec::with_capacity(reference.metric.len());
    for m in &reference.metric {
        let got = result
            .summary
            .get(&m.name)
            .ok_or_else(|| CompareError::MissingMetric(m.name.clone()))?;
        let actual = got
            .as_f64()
            .ok_or_else(|| CompareError::NotNumeric(m.name.clone()))?;
        let tolerance = m
            .tolerance()
            .ok_or_else(|| CompareError::NoTolerance(m.name.clone()))?;
        let deviation = (actual - m.value).abs();
        checks.push(MetricCheck {
            name: m.name.clone(),
            expected: m.value,
            actual,
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        });
    }
    Ok(ComparisonReport {
        scenario: reference.scenario.clone(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}
