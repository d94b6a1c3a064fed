//! Figure of Merit: weighted sum of normalized metrics with an optional
//! per-metric saturation bound and a fixed penalty when a hard spec fails.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitTopology, TechnologyNode};
use crate::params::action_to_design;
use crate::sim::{Metrics, SimulatorBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FomError {
    #[error("metric `{0}` missing from measurement")]
    MissingMetric(String),
    #[error("metric `{name}` has non-finite value {value}")]
    NonFinite { name: String, value: f64 },
    #[error("invalid FoM configuration: {0}")]
    Config(String),
    #[error("calibration needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("calibration failed: {failed} of {total} evaluations errored")]
    CalibrationFailures { failed: usize, total: usize },
    #[error("metric `{0}` is constant over the calibration samples")]
    DegenerateRange(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub weight: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub m_bound: Option<f64>,
}

impl MetricSpec {
    pub fn new(name: &str, weight: f64, m_min: f64, m_max: f64) -> Self {
        Self {
            name: name.into(),
            weight,
            m_min,
            m_max,
            m_bound: None,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.m_bound = Some(bound);
        self
    }

    /// Weighted normalized contribution of one measured value.
    pub fn contribution(&self, value: f64) -> f64 {
        let m = match self.m_bound {
            Some(b) => value.min(b),
            None => value,
        };
        self.weight * (m - self.m_min) / (self.m_max - self.m_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<=")]
    AtMost,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AtLeast => ">=",
            Self::AtMost => "<=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSpec {
    pub metric: String,
    pub relation: Relation,
    pub threshold: f64,
}

impl HardSpec {
    pub fn is_met(&self, value: f64) -> bool {
        match self.relation {
            Relation::AtLeast => value >= self.threshold,
            Relation::AtMost => value <= self.threshold,
        }
    }
}

pub const DEFAULT_VIOLATION_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomConfig {
    metrics: Vec<MetricSpec>,
    specs: Vec<HardSpec>,
    violation_penalty: f64,
}

impl FomConfig {
    pub fn new(metrics: Vec<MetricSpec>, specs: Vec<HardSpec>, violation_penalty: f64) -> Result<Self, FomError> {
        if !(violation_penalty < 0.0) {
            return Err(FomError::Config(alloc::format!(
                "violation penalty must be negative, got {violation_penalty}"
            )));
        }
        let mut names = BTreeSet::new();
        for m in &metrics {
            if !names.insert(m.name.as_str()) {
                return Err(FomError::Config(alloc::format!("duplicate metric `{}`", m.name)));
            }
            if !(m.m_max > m.m_min) {
                return Err(FomError::Config(alloc::format!(
                    "metric `{}` needs max > min ({} vs {})",
                    m.name,
                    m.m_max,
                    m.m_min
                )));
            }
            if let Some(b) = m.m_bound {
                if b < m.m_min {
                    return Err(FomError::Config(alloc::format!("metric `{}` bound below min", m.name)));
                }
            }
        }
        for s in &specs {
            if !names.contains(s.metric.as_str()) {
                return Err(FomError::Config(alloc::format!(
                    "spec references unknown metric `{}`",
                    s.metric
                )));
            }
        }
        Ok(Self {
            metrics,
            specs,
            violation_penalty,
        })
    }

    pub fn metrics(&self) -> &[MetricSpec] {
        &self.metrics
    }

    pub fn specs(&self) -> &[HardSpec] {
        &self.specs
    }

    pub fn violation_penalty(&self) -> f64 {
        self.violation_penalty
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.metrics {
            m.weight *= factor;
        }
        out
    }

    /// Copy with `m_min`/`m_max` replaced by calibrated ranges where present.
    pub fn with_normalizers(&self, ranges: &BTreeMap<String, (f64, f64)>) -> Result<Self, FomError> {
        let mut metrics = self.metrics.clone();
        for m in &mut metrics {
            if let Some(&(lo, hi)) = ranges.get(&m.name) {
                m.m_min = lo;
                m.m_max = hi;
            }
        }
        Self::new(metrics, self.specs.clone(), self.violation_penalty)
    }
}

fn lookup(measured: &Metrics, name: &str) -> Result<f64, FomError> {
    let v = *measured
        .get(name)
        .ok_or_else(|| FomError::MissingMetric(name.into()))?;
    if !v.is_finite() {
        return Err(FomError::NonFinite {
            name: name.into(),
            value: v,
        });
    }
    Ok(v)
}

/// Weighted normalized sum of the configured metrics, or the violation
/// penalty when any hard spec fails.
pub fn compute_fom(measured: &Metrics, config: &FomConfig) -> Result<f64, FomError> {
    let values = config
        .metrics
        .iter()
        .map(|m| lookup(measured, &m.name))
        .collect::<Result<Vec<_>, _>>()?;
    for s in &config.specs {
        if !s.is_met(lookup(measured, &s.metric)?) {
            return Ok(config.violation_penalty);
        }
    }
    Ok(config
        .metrics
        .iter()
        .zip(values)
        .map(|(m, v)| m.contribution(v))
        .sum())
}

/// Per-metric `(min, max)` over `sample_count` uniformly random refined designs.
pub fn calibrate_normalizers(
    backend: &dyn SimulatorBackend,
    topology: &CircuitTopology,
    tech: &TechnologyNode,
    sample_count: usize,
    seed: u64,
) -> Result<BTreeMap<String, (f64, f64)>, FomError> {
    if sample_count < 2 {
        return Err(FomError::TooFewSamples(sample_count));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut failed = 0;
    for _ in 0..sample_count {
        let raw = crate::agent::warmup_sample(topology, &mut rng);
        let metrics = action_to_design(&raw, topology, tech)
            .map_err(|e| crate::sim::SimError::Config(alloc::format!("{e}")))
            .and_then(|d| backend.evaluate(topology, &d));
        let metrics = match metrics {
            Ok(m) if m.values().all(|v| v.is_finite()) => m,
            Ok(_) | Err(_) => {
                failed += 1;
                continue;
            }
        };
        for (name, v) in metrics {
            ranges
                .entry(name)
                .and_modify(|(lo, hi)| {
                    *lo = lo.min(v);
                    *hi = hi.max(v);
                })
                .or_insert((v, v));
        }
    }
    if failed * 2 > sample_count {
        return Err(FomError::CalibrationFailures {
            failed,
            total: sample_count,
        });
    }
    if let Some((name, _)) = ranges.iter().find(|(_, (lo, hi))| lo == hi) {
        return Err(FomError::DegenerateRange(name.clone()));
    }
    Ok(ranges)
}
