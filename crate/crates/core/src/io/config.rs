//! TOML configuration with dotted `section.key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ecg::RPeakConfig;
use crate::error::{BcgError, Result};
use crate::fiducials::FiducialConfig;
use crate::io::pipeline::{FilterConfig, MetricsConfig, PipelineConfig, TransformConfig};
use crate::io::record::ColumnMap;
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Records processed in parallel; 0 means available parallelism.
    pub workers: usize,
}

impl RunConfig {
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub filters: FilterConfig,
    pub transforms: TransformConfig,
    pub fiducials: FiducialConfig,
    pub ecg: RPeakConfig,
    pub metrics: MetricsConfig,
    pub columns: ColumnMap,
    pub synth: SynthSpec,
    pub run: RunConfig,
}

impl Config {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            filters: self.filters,
            transforms: self.transforms,
            fiducials: self.fiducials,
            ecg: self.ecg,
            metrics: self.metrics,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BcgError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path` when given (defaults otherwise) and applies `overrides`
    /// in order. Each override is `section.key=value` with a TOML value;
    /// a value that does not parse as TOML is taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| BcgError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| BcgError::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| BcgError::Config(e.to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| BcgError::Config(format!("override `{item}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(BcgError::Config(format!(
            "override `{item}` has an empty key"
        )));
    }
    let (last, parents) = path.split_last().expect("non-empty");
    let mut node = table;
    for p in parents {
        let next = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = next.as_table_mut().ok_or_else(|| {
            BcgError::Config(format!("override `{item}`: `{p}` is not a section"))
        })?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
