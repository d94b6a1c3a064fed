use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ActorNetwork, AgentError, CriticNetwork};
use crate::circuit::{CircuitTopology, ComponentKind, EncodingMode};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained weights plus what is needed to decide where they can be reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub encoding: EncodingMode,
    pub ng_mode: bool,
    pub kinds: Vec<ComponentKind>,
    pub state_dim: usize,
    pub hidden: usize,
    pub action_hidden: usize,
    pub gcn_layers: usize,
    pub source_topology: String,
    pub source_components: usize,
    pub actor: ActorNetwork,
    pub critic: CriticNetwork,
}

impl AgentCheckpoint {
    /// Version and internal shape consistency (guards against edited or
    /// truncated documents).
    pub fn check_consistent(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::Checkpoint(msg));
        if self.version != CHECKPOINT_VERSION {
            return bad(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            ));
        }
        for m in self.actor.parameters().into_iter().chain(self.critic.parameters()) {
            if m.data().len() != m.rows() * m.cols() || !m.is_finite() {
                return bad("weight matrix is malformed or non-finite".into());
            }
        }
        let a = &self.actor;
        let c = &self.critic;
        let ok = a.state_dim() == self.state_dim
            && a.hidden() == self.hidden
            && a.gcn.len() == self.gcn_layers
            && a.gcn.iter().all(|l| l.weight.shape() == (self.hidden, self.hidden))
            && a.kinds() == self.kinds
            && a.heads.iter().all(|(k, h)| h.weight.shape() == (self.hidden, k.arity()) && h.bias.shape() == (1, k.arity()))
            && a.input.bias.shape() == (1, self.hidden)
            && c.encoders.iter().map(|(k, _)| *k).collect::<Vec<_>>() == self.kinds
            && c.encoders.iter().all(|(k, e)| {
                e.weight.shape() == (k.arity(), self.action_hidden) && e.bias.shape() == (1, self.action_hidden)
            })
            && c.input.weight.shape() == (self.state_dim + self.action_hidden, self.hidden)
            && c.input.bias.shape() == (1, self.hidden)
            && c.gcn.len() == self.gcn_layers
            && c.gcn.iter().all(|l| l.weight.shape() == (self.hidden, self.hidden))
            && c.output.weight.shape() == (self.hidden, 1)
            && c.output.bias.shape() == (1, 1);
        if !ok {
            return bad("layer shapes disagree with the declared dimensions".into());
        }
        Ok(())
    }

    /// Whether these weights can drive an agent on `topology`.
    pub fn check_compatible(&self, topology: &CircuitTopology) -> Result<(), AgentError> {
        self.check_consistent()?;
        if self.encoding == EncodingMode::OneHotIndex && topology.len() != self.source_components {
            return Err(AgentError::Dimension(format!(
                "checkpoint uses one-hot index encoding for {} components but `{}` has {}; \
                 train with scalar-index encoding to transfer across topologies",
                self.source_components,
                topology.name(),
                topology.len()
            )));
        }
        let dim = self.encoding.state_dim(topology.len());
        if dim != self.state_dim {
            return Err(AgentError::Dimension(format!(
                "state width {dim} on `{}` does not match checkpoint width {}",
                topology.name(),
                self.state_dim
            )));
        }
        if let Some(k) = topology.kind_set().into_iter().find(|k| !self.kinds.contains(k)) {
            return Err(AgentError::Dimension(format!(
                "checkpoint has no decoder for component kind {k} used by `{}`",
                topology.name()
            )));
        }
        Ok(())
    }
}
