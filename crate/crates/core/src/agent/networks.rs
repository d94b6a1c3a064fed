//! Actor and critic graph networks.
//!
//! Both networks work on a batch of `B` copies of one circuit graph stacked
//! row-wise (`B·n` rows); graph propagation is applied per block.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::circuit::ComponentKind;
use crate::nn::{Activation, DenseLayer, GcnLayer, Matrix, NnError, Tape, Var};

/// Row bookkeeping for per-kind heads over a stacked batch.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchLayout {
    pub n: usize,
    pub batch: usize,
    pub groups: Vec<KindGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KindGroup {
    pub kind: ComponentKind,
    /// Component ids of this kind within one graph.
    pub nodes: Vec<usize>,
    /// Same components across the whole batch, graph-major.
    pub rows: Vec<usize>,
}

impl BatchLayout {
    pub fn new(kinds: &[ComponentKind], batch: usize) -> Self {
        let n = kinds.len();
        let groups = ComponentKind::ALL
            .iter()
            .filter_map(|&kind| {
                let nodes: Vec<usize> = (0..n).filter(|&k| kinds[k] == kind).collect();
                if nodes.is_empty() {
                    return None;
                }
                let rows = (0..batch).flat_map(|b| nodes.iter().map(move |k| b * n + k)).collect();
                Some(KindGroup { kind, nodes, rows })
            })
            .collect();
        Self { n, batch, groups }
    }
}

fn dense(tape: &mut Tape, x: Var, w: Var, b: Var, act: Activation) -> Result<Var, NnError> {
    let y = tape.matmul(x, w)?;
    let y = tape.add_bias(y, b)?;
    Ok(tape.activation(y, act))
}

fn gcn(tape: &mut Tape, h: Var, w: Var, adj: &Matrix) -> Result<Var, NnError> {
    let hw = tape.matmul(h, w)?;
    let agg = tape.propagate(adj, hw)?;
    Ok(tape.activation(agg, Activation::Relu))
}

/// Records `params` on the tape, as differentiable leaves or as constants.
pub(crate) fn register(tape: &mut Tape, params: Vec<&Matrix>, trainable: bool) -> Vec<Var> {
    params
        .into_iter()
        .map(|p| {
            if trainable {
                tape.leaf(p.clone())
            } else {
                tape.constant(p.clone())
            }
        })
        .collect()
}

fn head_index<T>(heads: &[(ComponentKind, T)], kind: ComponentKind) -> Result<usize, AgentError> {
    heads
        .iter()
        .position(|(k, _)| *k == kind)
        .ok_or_else(|| AgentError::Dimension(alloc::format!("network has no head for component kind {kind}")))
}

/// Shared input layer, graph layers, then one tanh decoder per component kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorNetwork {
    pub input: DenseLayer,
    pub gcn: Vec<GcnLayer>,
    pub heads: Vec<(ComponentKind, DenseLayer)>,
}

impl ActorNetwork {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        state_dim: usize,
        hidden: usize,
        gcn_layers: usize,
        kinds: &[ComponentKind],
    ) -> Self {
        let input = DenseLayer::new(rng, state_dim, hidden);
        let gcn = (0..gcn_layers).map(|_| GcnLayer::new(rng, hidden, hidden)).collect();
        let heads = kinds
            .iter()
            .map(|&k| (k, DenseLayer::new(rng, hidden, k.arity())))
            .collect();
        Self { input, gcn, heads }
    }

    pub fn state_dim(&self) -> usize {
        self.input.d_in()
    }

    pub fn hidden(&self) -> usize {
        self.input.d_out()
    }

    pub fn kinds(&self) -> Vec<ComponentKind> {
        self.heads.iter().map(|(k, _)| *k).collect()
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.input.weight, &self.input.bias];
        out.extend(self.gcn.iter().map(|l| &l.weight));
        for (_, h) in &self.heads {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.input.weight, &mut self.input.bias];
        out.extend(self.gcn.iter_mut().map(|l| &mut l.weight));
        for (_, h) in &mut self.heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Records the actor on `tape` for `batch` stacked copies of a graph whose
    /// components have `kinds`. Returns the parameter handles (in
    /// [`ActorNetwork::parameters`] order) and one output per kind present,
    /// in canonical kind order, rows graph-major.
    pub fn record(
        &self,
        tape: &mut Tape,
        states: Var,
        kinds: &[ComponentKind],
        batch: usize,
        adj: &Matrix,
        trainable: bool,
    ) -> Result<(Vec<Var>, Vec<Var>), AgentError> {
        let params = register(tape, self.parameters(), trainable);
        let layout = BatchLayout::new(kinds, batch);
        let outs = self.forward(tape, &params, states, &layout, adj)?;
        Ok((params, outs))
    }

    /// One output per layout group (rows in group order), each in `[-1, 1]`.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        states: Var,
        layout: &BatchLayout,
        adj: &Matrix,
    ) -> Result<Vec<Var>, AgentError> {
        let mut h = dense(tape, states, params[0], params[1], Activation::Relu)?;
        for l in 0..self.gcn.len() {
            h = gcn(tape, h, params[2 + l], adj)?;
        }
        let head_base = 2 + self.gcn.len();
        layout
            .groups
            .iter()
            .map(|g| {
                let i = head_index(&self.heads, g.kind)?;
                let x = tape.gather_rows(h, &g.rows)?;
                let (w, b) = (params[head_base + 2 * i], params[head_base + 2 * i + 1]);
                Ok(dense(tape, x, w, b, Activation::Tanh)?)
            })
            .collect()
    }
}

/// Per-kind action encoders, shared input layer over `[state, encoded
/// action]`, graph layers, a per-node scalar output and mean pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNetwork {
    pub encoders: Vec<(ComponentKind, DenseLayer)>,
    pub input: DenseLayer,
    pub gcn: Vec<GcnLayer>,
    pub output: DenseLayer,
}

impl CriticNetwork {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        state_dim: usize,
        hidden: usize,
        action_hidden: usize,
        gcn_layers: usize,
        kinds: &[ComponentKind],
    ) -> Self {
        let encoders = kinds
            .iter()
            .map(|&k| (k, DenseLayer::new(rng, k.arity(), action_hidden)))
            .collect();
        let input = DenseLayer::new(rng, state_dim + action_hidden, hidden);
        let gcn = (0..gcn_layers).map(|_| GcnLayer::new(rng, hidden, hidden)).collect();
        let output = DenseLayer::new(rng, hidden, 1);
        Self {
            encoders,
            input,
            gcn,
            output,
        }
    }

    pub fn action_hidden(&self) -> usize {
        self.encoders.first().map_or(0, |(_, e)| e.d_out())
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for (_, e) in &self.encoders {
            out.push(&e.weight);
            out.push(&e.bias);
        }
        out.push(&self.input.weight);
        out.push(&self.input.bias);
        out.extend(self.gcn.iter().map(|l| &l.weight));
        out.push(&self.output.weight);
        out.push(&self.output.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for (_, e) in &mut self.encoders {
            out.push(&mut e.weight);
            out.push(&mut e.bias);
        }
        out.push(&mut self.input.weight);
        out.push(&mut self.input.bias);
        out.extend(self.gcn.iter_mut().map(|l| &mut l.weight));
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    /// Records the critic on `tape`; `actions` holds one matrix per kind
    /// present, laid out like [`ActorNetwork::record`] outputs. Returns the
    /// parameter handles and the `batch × 1` value column.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &self,
        tape: &mut Tape,
        states: Var,
        actions: &[Var],
        kinds: &[ComponentKind],
        batch: usize,
        adj: &Matrix,
        trainable: bool,
    ) -> Result<(Vec<Var>, Var), AgentError> {
        let params = register(tape, self.parameters(), trainable);
        let layout = BatchLayout::new(kinds, batch);
        if actions.len() != layout.groups.len() {
            return Err(AgentError::Dimension(alloc::format!(
                "expected {} action groups, got {}",
                layout.groups.len(),
                actions.len()
            )));
        }
        let q = self.forward(tape, &params, states, actions, &layout, adj)?;
        Ok((params, q))
    }

    /// `Q(S, A)` for each graph in the batch, as a `batch × 1` column.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        states: Var,
        actions: &[Var],
        layout: &BatchLayout,
        adj: &Matrix,
    ) -> Result<Var, AgentError> {
        let total = layout.n * layout.batch;
        let mut encoded: Option<Var> = None;
        for (g, &a) in layout.groups.iter().zip(actions) {
            let i = head_index(&self.encoders, g.kind)?;
            let e = dense(tape, a, params[2 * i], params[2 * i + 1], Activation::Identity)?;
            let e = tape.scatter_rows(e, &g.rows, total)?;
            encoded = Some(match encoded {
                Some(acc) => tape.add(acc, e)?,
                None => e,
            });
        }
        let encoded = encoded.ok_or_else(|| AgentError::Dimension("empty action batch".into()))?;
        let base = 2 * self.encoders.len();
        let x = tape.concat_cols(states, encoded)?;
        let mut h = dense(tape, x, params[base], params[base + 1], Activation::Relu)?;
        for l in 0..self.gcn.len() {
            h = gcn(tape, h, params[base + 2 + l], adj)?;
        }
        let out = base + 2 + self.gcn.len();
        let q = dense(tape, h, params[out], params[out + 1], Activation::Identity)?;
        Ok(tape.mean_pool_blocks(q, layout.n)?)
    }
}
