//! Experiment documents: a TOML file holding a `SimConfig` at the top level
//! plus an optional `[experiment]` table, then command-line overrides.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use xrsched_core::engine::SimConfig;
use xrsched_core::scheduler::SchedulerKind;
use xrsched_core::Invalid;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "XRSCHED_OUT";
pub const DEFAULT_OUT_DIR: &str = "xrsched-out";

/// Drops and TTIs of the desk preset.
pub const DESK_DROPS: u32 = 5;
pub const DESK_TTIS: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentTable {
    schedulers: Vec<String>,
    output_dir: Option<PathBuf>,
    emit_tti_records: bool,
    compare: bool,
}

impl Default for ExperimentTable {
    fn default() -> Self {
        Self {
            schedulers: vec![SchedulerKind::PaoiWpf.name().to_string()],
            output_dir: None,
            emit_tti_records: false,
            compare: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub schedulers: Vec<SchedulerKind>,
    pub output_dir: PathBuf,
    pub emit_tti_records: bool,
    pub compare: bool,
}

/// Command-line values; each `Some` beats the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub drops: Option<u32>,
    pub ttis: Option<u64>,
    pub schedulers: Option<Vec<String>>,
    pub output_dir: Option<PathBuf>,
    pub emit_tti_records: Option<bool>,
    pub compare: Option<bool>,
    /// Applies the desk preset before the explicit drop and TTI counts.
    pub desk: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Malformed(String),
    #[error("invalid configuration:\n{}", Listing(.0))]
    Invalid(Vec<Invalid>),
}

struct Listing<'a>(&'a [Invalid]);

impl fmt::Display for Listing<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", issue.field, issue.reason)?;
        }
        Ok(())
    }
}

impl ConfigError {
    /// Field paths of every reported problem.
    pub fn fields(&self) -> Vec<&str> {
        match self {
            ConfigError::Malformed(_) => Vec::new(),
            ConfigError::Invalid(issues) => issues.iter().map(|i| i.field.as_str()).collect(),
        }
    }
}

/// Parses and validates a document, then applies `overrides`.
///
/// `env_out_dir` is the value of [`OUT_DIR_ENV`], if set; it sits between
/// the document and the built-in default.
pub fn parse_config(
    document: &str,
    overrides: &Overrides,
    env_out_dir: Option<PathBuf>,
) -> Result<ExperimentSpec, ConfigError> {
    let mut table: toml::Table =
        toml::from_str(document).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let explicit_gains = table
        .get("channel")
        .and_then(|c| c.get("per_ue_gain_db"))
        .is_some();
    let experiment: ExperimentTable = match table.remove("experiment") {
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Malformed(format!("[experiment]: {e}")))?,
        None => ExperimentTable::default(),
    };
    let mut base: SimConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Malformed(e.to_string()))?;

    // Default gains follow n_ues and the spread unless the document pins them.
    if !explicit_gains {
        base.channel.per_ue_gain_db.clear();
    }
    if overrides.desk {
        base.drops = DESK_DROPS;
        base.ttis = DESK_TTIS;
    }
    if let Some(seed) = overrides.seed {
        base.seed = seed;
    }
    if let Some(drops) = overrides.drops {
        base.drops = drops;
    }
    if let Some(ttis) = overrides.ttis {
        base.ttis = ttis;
    }
    base.fill_gains();

    let names = overrides
        .schedulers
        .clone()
        .unwrap_or(experiment.schedulers);
    let mut issues = base.validate();
    if names.is_empty() {
        issues.push(Invalid::new("experiment.schedulers", "must name at least one scheduler"));
    }
    let mut schedulers = Vec::new();
    for name in &names {
        match name.parse::<SchedulerKind>() {
            Ok(kind) if schedulers.contains(&kind) => issues.push(Invalid::new(
                "experiment.schedulers",
                format!("`{name}` is listed twice"),
            )),
            Ok(kind) => schedulers.push(kind),
            Err(e) => issues.push(Invalid::new("experiment.schedulers", e.to_string())),
        }
    }
    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }

    let output_dir = overrides
        .output_dir
        .clone()
        .or(experiment.output_dir)
        .or(env_out_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(ExperimentSpec {
        base,
        schedulers,
        output_dir,
        emit_tti_records: overrides.emit_tti_records.unwrap_or(experiment.emit_tti_records),
        compare: overrides.compare.unwrap_or(experiment.compare),
    })
}

/// Serializes the effective spec as a document `parse_config` accepts.
pub fn to_document(spec: &ExperimentSpec) -> String {
    let experiment = ExperimentTable {
        schedulers: spec.schedulers.iter().map(|k| k.name().to_string()).collect(),
        output_dir: Some(spec.output_dir.clone()),
        emit_tti_records: spec.emit_tti_records,
        compare: spec.compare,
    };
    let mut table = toml::Table::try_from(&spec.base).expect("SimConfig serializes to a table");
    table.insert(
        "experiment".into(),
        toml::Value::try_from(&experiment).expect("experiment table serializes"),
    );
    toml::to_string(&table).expect("TOML tables always serialize")
}
