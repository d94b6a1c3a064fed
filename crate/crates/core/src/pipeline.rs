//! Raw action → refined design → metrics → FoM, plus the per-step trace
//! shared by every optimizer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::{CircuitTopology, TechnologyNode};
use crate::fom::{compute_fom, FomConfig};
use crate::params::{action_to_design, ActionMatrix, DesignPoint, ParamError};
use crate::sim::{Metrics, SimError, SimulatorBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("FoM metric `{metric}` is not produced by the backend (available: {available})")]
    UnknownMetric { metric: String, available: String },
    #[error("backend configuration error: {0}")]
    Backend(String),
}

/// Outcome of one evaluation. Failed simulations carry the violation penalty
/// as their FoM.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub design: DesignPoint,
    pub metrics: Option<Metrics>,
    pub fom: f64,
    pub failure: Option<String>,
}

impl Evaluation {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Everything an optimizer needs to score a raw action.
pub struct SizingProblem<'a> {
    pub topology: &'a CircuitTopology,
    pub tech: &'a TechnologyNode,
    pub backend: &'a dyn SimulatorBackend,
    pub fom: &'a FomConfig,
    evaluations: usize,
    failures: usize,
}

impl<'a> SizingProblem<'a> {
    pub fn new(
        topology: &'a CircuitTopology,
        tech: &'a TechnologyNode,
        backend: &'a dyn SimulatorBackend,
        fom: &'a FomConfig,
    ) -> Result<Self, PipelineError> {
        let available = backend.metric_names();
        let names = fom
            .metrics()
            .iter()
            .map(|m| &m.name)
            .chain(fom.specs().iter().map(|s| &s.metric));
        for name in names {
            if !available.contains(name) {
                return Err(PipelineError::UnknownMetric {
                    metric: name.clone(),
                    available: available.join(", "),
                });
            }
        }
        Ok(Self {
            topology,
            tech,
            backend,
            fom,
            evaluations: 0,
            failures: 0,
        })
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Refines `raw`, simulates and scores it. Simulation failures become the
    /// violation penalty; backend configuration errors are fatal.
    pub fn evaluate(&mut self, raw: &ActionMatrix) -> Result<Evaluation, PipelineError> {
        let design = action_to_design(raw, self.topology, self.tech)?;
        self.evaluate_design(design)
    }

    pub fn evaluate_design(&mut self, design: DesignPoint) -> Result<Evaluation, PipelineError> {
        self.evaluations += 1;
        let failure = match self.backend.evaluate(self.topology, &design) {
            Ok(metrics) => match compute_fom(&metrics, self.fom) {
                Ok(fom) => {
                    return Ok(Evaluation {
                        design,
                        metrics: Some(metrics),
                        fom,
                        failure: None,
                    })
                }
                Err(e) => format!("{e}"),
            },
            Err(SimError::Config(msg)) => return Err(PipelineError::Backend(msg)),
            Err(e) => format!("{e}"),
        };
        log::warn!("evaluation {} failed: {failure}", self.evaluations);
        self.failures += 1;
        Ok(Evaluation {
            design,
            metrics: None,
            fom: self.fom.violation_penalty(),
            failure: Some(failure),
        })
    }
}

/// First 16 hex digits of SHA-256 over the little-endian bits of every
/// design value, row-major.
pub fn design_hash(design: &DesignPoint) -> String {
    let mut h = Sha256::new();
    for v in design.iter_values() {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub fom: f64,
    pub best_fom: f64,
    pub design_hash: String,
}

/// Per-evaluation history with the running best.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
}

impl SearchTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, fom: f64, design: &DesignPoint) -> &TraceStep {
        let best_fom = match self.steps.last() {
            Some(prev) if prev.best_fom >= fom => prev.best_fom,
            _ => fom,
        };
        self.steps.push(TraceStep {
            step: self.steps.len() + 1,
            fom,
            best_fom,
            design_hash: design_hash(design),
        });
        self.steps.last().expect("just pushed")
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn best_fom(&self) -> Option<f64> {
        self.steps.last().map(|s| s.best_fom)
    }
}

/// Best design seen by an optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_design: DesignPoint,
    pub best_raw: ActionMatrix,
    pub best_fom: f64,
    pub trace: SearchTrace,
}

/// Incumbent tracking shared by the optimizers.
#[derive(Debug, Clone, Default)]
pub(crate) struct Incumbent {
    pub best: Option<(f64, DesignPoint, ActionMatrix)>,
}

impl Incumbent {
    pub fn offer(&mut self, fom: f64, design: &DesignPoint, raw: &ActionMatrix) {
        if self.best.as_ref().is_none_or(|(b, _, _)| fom > *b) {
            self.best = Some((fom, design.clone(), raw.clone()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = DesignPoint(vec![vec![1e-6, 2e-7, 3.0], vec![1000.0]]);
        let mut b = a.clone();
        assert_eq!(design_hash(&a), design_hash(&b));
        assert_eq!(design_hash(&a).len(), 16);
        b.0[1][0] = 1000.0000000001;
        assert_ne!(design_hash(&a), design_hash(&b));
    }

    #[test]
    fn trace_tracks_running_best() {
        let d = DesignPoint(vec![vec![1.0]]);
        let mut t = SearchTrace::new();
        for f in [0.1, -0.5, 0.3, 0.2] {
            t.push(f, &d);
        }
        let best: Vec<f64> = t.steps.iter().map(|s| s.best_fom).collect();
        assert_eq!(best, vec![0.1, 0.1, 0.3, 0.3]);
        assert_eq!(t.steps[3].step, 4);
    }
}
