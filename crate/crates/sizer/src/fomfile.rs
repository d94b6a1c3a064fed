//! FoM configuration files (TOML).
//!
//! ```toml
//! violation_penalty = -1.0
//! [[metric]]
//! name = "Gain"
//! weight = 1.0
//! min = 10.0
//! max = 4000.0
//! bound = 2000.0
//! [[spec]]
//! metric = "Power"
//! relation = "<="
//! threshold = 1e-3
//! ```
//!
//! `min`/`max` may be left out until `gcn-sizer calibrate` fills them in.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use gcn_sizer_core::fom::DEFAULT_VIOLATION_PENALTY;
use gcn_sizer_core::{FomConfig, HardSpec, MetricSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomFile {
    #[serde(default = "default_penalty")]
    pub violation_penalty: f64,
    pub metric: Vec<MetricEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spec: Vec<HardSpec>,
}

fn default_penalty() -> f64 {
    DEFAULT_VIOLATION_PENALTY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntry {
    pub name: String,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl FomFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("FoM file {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.metric.iter().map(|m| m.name.clone()).collect()
    }

    /// Fails when any metric still lacks its normalizers.
    pub fn to_config(&self) -> Result<FomConfig> {
        let metrics = self
            .metric
            .iter()
            .map(|m| {
                let (Some(lo), Some(hi)) = (m.min, m.max) else {
                    return Err(anyhow!(
                        "metric `{}` has no min/max; run `gcn-sizer calibrate` first",
                        m.name
                    ));
                };
                let spec = MetricSpec::new(&m.name, m.weight, lo, hi);
                Ok(match m.bound {
                    Some(b) => spec.with_bound(b),
                    None => spec,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FomConfig::new(metrics, self.spec.clone(), self.violation_penalty)?)
    }

    /// Copy with `min`/`max` replaced for every metric found in `ranges`.
    /// A bound below the sampled maximum becomes the maximum, so a bounded
    /// metric spans the full normalized range up to its bound.
    pub fn with_ranges(&self, ranges: &BTreeMap<String, (f64, f64)>) -> Self {
        let mut out = self.clone();
        for m in &mut out.metric {
            if let Some(&(lo, hi)) = ranges.get(&m.name) {
                m.min = Some(lo);
                m.max = Some(match m.bound {
                    Some(b) if b > lo && b < hi => b,
                    _ => hi,
                });
            }
        }
        out
    }
}
