//! One-step actor-critic agent over the circuit graph.
//!
//! Each episode proposes one full sizing, scores it, stores it and (after
//! warm-up) takes one critic and one actor gradient step on a replay batch.
//! The critic regresses the advantage `R − B` against an EMA baseline; no
//! next state or discount is involved.

mod checkpoint;
mod explore;
mod networks;

pub use checkpoint::{AgentCheckpoint, CHECKPOINT_VERSION};
pub use explore::{BaselineTracker, NoiseProcess, ReplayBuffer, ReplayRecord};
pub use networks::{ActorNetwork, CriticNetwork};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{adjacency_matrix, encode_state, CircuitTopology, ComponentKind, EncodingMode, StateMatrix, TechnologyNode};
use crate::nn::{normalize_adjacency, Matrix, NnError, ParamUpdater, Tape};
use crate::params::ActionMatrix;
use crate::pipeline::{Incumbent, PipelineError, SearchResult, SearchTrace, SizingProblem};
use networks::{register, BatchLayout};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("non-finite {which} loss {value} at episode {episode}")]
    NonFiniteLoss {
        episode: usize,
        which: &'static str,
        value: f64,
    },
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
}

/// Independent random streams derived from one seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const WARMUP: u64 = 3;
    pub const REPLAY: u64 = 4;
    pub const BACKEND: u64 = 5;
    pub const SEARCH: u64 = 6;
}

pub fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: usize,
    pub action_hidden: usize,
    pub gcn_layers: usize,
    pub episodes: usize,
    pub warmup: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Replace graph propagation by the identity (no neighbour aggregation).
    pub ng_mode: bool,
    pub encoding: EncodingMode,
    pub seed: u64,
    pub noise_std: f64,
    pub noise_decay: f64,
    /// Truncation in multiples of the current noise std.
    pub noise_truncation: f64,
    pub baseline_beta: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            action_hidden: 64,
            gcn_layers: 7,
            episodes: 10_000,
            warmup: 100,
            batch_size: 64,
            buffer_capacity: 5000,
            ng_mode: false,
            encoding: EncodingMode::OneHotIndex,
            seed: 0,
            noise_std: 0.5,
            noise_decay: 0.999,
            noise_truncation: 2.0,
            baseline_beta: 0.95,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.warmup >= self.episodes {
            return Err(AgentError::Config(format!(
                "warm-up ({}) must be smaller than the episode count ({})",
                self.warmup, self.episodes
            )));
        }
        self.validate_shape()
    }

    fn validate_shape(&self) -> Result<(), AgentError> {
        let bad = |msg: &str| Err(AgentError::Config(msg.into()));
        if self.hidden == 0 || self.action_hidden == 0 {
            return bad("hidden dimensions must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return bad("noise std must be positive");
        }
        if !(self.noise_decay > 0.0 && self.noise_decay <= 1.0) {
            return bad("noise decay must lie in (0, 1]");
        }
        if !(self.noise_truncation > 0.0) {
            return bad("noise truncation must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_beta) {
            return bad("baseline smoothing must lie in [0, 1)");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.actor_lr.is_finite() && self.critic_lr.is_finite()) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// Raw action with every entry i.i.d. uniform in `[-1, 1]`.
pub fn warmup_sample<R: Rng + ?Sized>(topology: &CircuitTopology, rng: &mut R) -> ActionMatrix {
    ActionMatrix(
        topology
            .components()
            .iter()
            .map(|c| (0..c.kind.arity()).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect(),
    )
}

/// Actor output for one graph, optionally perturbed by truncated noise and
/// clamped back into `[-1, 1]`.
pub fn act<R: Rng + ?Sized>(
    actor: &ActorNetwork,
    state: &StateMatrix,
    adj: &Matrix,
    kinds: &[ComponentKind],
    explore: Option<(&NoiseProcess, &mut R)>,
) -> Result<ActionMatrix, AgentError> {
    if state.dim() != actor.state_dim() {
        return Err(AgentError::Dimension(format!(
            "state width {} does not match actor input {}",
            state.dim(),
            actor.state_dim()
        )));
    }
    if state.rows() != kinds.len() || adj.rows() != kinds.len() || adj.cols() != kinds.len() {
        return Err(AgentError::Dimension(format!(
            "state has {} rows, propagation is {:?}, topology has {} components",
            state.rows(),
            adj.shape(),
            kinds.len()
        )));
    }
    let layout = BatchLayout::new(kinds, 1);
    let mut tape = Tape::new();
    let params = register(&mut tape, actor.parameters(), false);
    let s = tape.constant(state.matrix.clone());
    let outs = actor.forward(&mut tape, &params, s, &layout, adj)?;
    let mut rows: Vec<Vec<f64>> = alloc::vec![Vec::new(); kinds.len()];
    for (g, out) in layout.groups.iter().zip(outs) {
        let m = tape.value(out);
        for (r, &node) in g.nodes.iter().enumerate() {
            rows[node] = m.row(r).to_vec();
        }
    }
    if let Some((noise, rng)) = explore {
        for v in rows.iter_mut().flatten() {
            *v = (*v + noise.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    Ok(ActionMatrix(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub episode: usize,
    pub fom: f64,
    pub warmup: bool,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

/// Stacked network inputs for a replay batch.
struct BatchTensors {
    states: Matrix,
    actions: Vec<Matrix>,
    rewards: Vec<f64>,
    layout: BatchLayout,
}

pub struct Agent {
    config: AgentConfig,
    actor: ActorNetwork,
    critic: CriticNetwork,
    actor_opt: ParamUpdater,
    critic_opt: ParamUpdater,
    buffer: ReplayBuffer,
    baseline: BaselineTracker,
    noise: NoiseProcess,
    state: StateMatrix,
    propagation: Matrix,
    node_kinds: Vec<ComponentKind>,
    topology_name: String,
    noise_rng: ChaCha8Rng,
    warmup_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    episode: usize,
    trace: SearchTrace,
    incumbent: Incumbent,
}

impl Agent {
    pub fn new(config: AgentConfig, topology: &CircuitTopology, tech: &TechnologyNode) -> Result<Self, AgentError> {
        config.validate()?;
        let kinds = topology.kind_set();
        let dim = config.encoding.state_dim(topology.len());
        let mut rng = sub_rng(config.seed, streams::INIT);
        let actor = ActorNetwork::new(&mut rng, dim, config.hidden, config.gcn_layers, &kinds);
        let critic = CriticNetwork::new(
            &mut rng,
            dim,
            config.hidden,
            config.action_hidden,
            config.gcn_layers,
            &kinds,
        );
        Self::assemble(config, actor, critic, topology, tech)
    }

    /// Agent with networks taken from `checkpoint`; architecture fields of
    /// `config` are overridden by the checkpoint's.
    pub fn from_checkpoint(
        checkpoint: &AgentCheckpoint,
        topology: &CircuitTopology,
        tech: &TechnologyNode,
        mut config: AgentConfig,
    ) -> Result<Self, AgentError> {
        checkpoint.check_compatible(topology)?;
        config.hidden = checkpoint.hidden;
        config.action_hidden = checkpoint.action_hidden;
        config.gcn_layers = checkpoint.gcn_layers;
        config.encoding = checkpoint.encoding;
        config.ng_mode = checkpoint.ng_mode;
        config.validate_shape()?;
        Self::assemble(
            config,
            checkpoint.actor.clone(),
            checkpoint.critic.clone(),
            topology,
            tech,
        )
    }

    fn assemble(
        config: AgentConfig,
        actor: ActorNetwork,
        critic: CriticNetwork,
        topology: &CircuitTopology,
        tech: &TechnologyNode,
    ) -> Result<Self, AgentError> {
        let state = encode_state(topology, tech, config.encoding);
        let propagation = if config.ng_mode {
            Matrix::identity(topology.len())
        } else {
            normalize_adjacency(&adjacency_matrix(topology))
        };
        let actor_opt = ParamUpdater::new(config.actor_lr, actor.parameters());
        let critic_opt = ParamUpdater::new(config.critic_lr, critic.parameters());
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            baseline: BaselineTracker::new(config.baseline_beta),
            noise: NoiseProcess::new(config.noise_std, config.noise_decay, config.noise_truncation),
            noise_rng: sub_rng(config.seed, streams::NOISE),
            warmup_rng: sub_rng(config.seed, streams::WARMUP),
            replay_rng: sub_rng(config.seed, streams::REPLAY),
            node_kinds: topology.kinds(),
            topology_name: topology.name().into(),
            state,
            propagation,
            actor,
            critic,
            actor_opt,
            critic_opt,
            config,
            episode: 0,
            trace: SearchTrace::new(),
            incumbent: Incumbent::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &ActorNetwork {
        &self.actor
    }

    pub fn critic(&self) -> &CriticNetwork {
        &self.critic
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn propagation(&self) -> &Matrix {
        &self.propagation
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn baseline(&self) -> &BaselineTracker {
        &self.baseline
    }

    pub fn noise(&self) -> &NoiseProcess {
        &self.noise
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn trace(&self) -> &SearchTrace {
        &self.trace
    }

    /// Replaces the propagation matrix used by both networks.
    pub fn set_propagation(&mut self, propagation: Matrix) -> Result<(), AgentError> {
        let n = self.node_kinds.len();
        if propagation.shape() != (n, n) {
            return Err(AgentError::Dimension(format!(
                "propagation must be {n}x{n}, got {:?}",
                propagation.shape()
            )));
        }
        self.propagation = propagation;
        Ok(())
    }

    /// Deterministic policy output.
    pub fn greedy_action(&self) -> Result<ActionMatrix, AgentError> {
        act::<ChaCha8Rng>(&self.actor, &self.state, &self.propagation, &self.node_kinds, None)
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            version: CHECKPOINT_VERSION,
            encoding: self.config.encoding,
            ng_mode: self.config.ng_mode,
            kinds: self.actor.kinds(),
            state_dim: self.actor.state_dim(),
            hidden: self.config.hidden,
            action_hidden: self.config.action_hidden,
            gcn_layers: self.config.gcn_layers,
            source_topology: self.topology_name.clone(),
            source_components: self.node_kinds.len(),
            actor: self.actor.clone(),
            critic: self.critic.clone(),
        }
    }

    fn check_problem(&self, problem: &SizingProblem<'_>) -> Result<(), AgentError> {
        if problem.topology.kinds() != self.node_kinds {
            return Err(AgentError::Dimension(format!(
                "agent was built for `{}` ({} components); problem topology `{}` differs",
                self.topology_name,
                self.node_kinds.len(),
                problem.topology.name()
            )));
        }
        Ok(())
    }

    pub fn train_episode(&mut self, problem: &mut SizingProblem<'_>) -> Result<EpisodeReport, AgentError> {
        self.check_problem(problem)?;
        self.episode += 1;
        let e = self.episode;
        let warmup = e <= self.config.warmup;
        let raw = if warmup {
            warmup_sample(problem.topology, &mut self.warmup_rng)
        } else {
            act(
                &self.actor,
                &self.state,
                &self.propagation,
                &self.node_kinds,
                Some((&self.noise, &mut self.noise_rng)),
            )?
        };
        let eval = problem.evaluate(&raw)?;
        self.trace.push(eval.fom, &eval.design);
        self.incumbent.offer(eval.fom, &eval.design, &raw);
        self.buffer.push(ReplayRecord {
            state: self.state.clone(),
            action: raw,
            reward: eval.fom,
        });

        let (mut critic_loss, mut actor_loss) = (None, None);
        if !warmup {
            let baseline = self.baseline.value().unwrap_or(eval.fom);
            let batch = {
                let records = self.buffer.sample(&mut self.replay_rng, self.config.batch_size);
                self.batch_tensors(&records)
            };
            critic_loss = Some(self.critic_update(&batch, baseline)?);
            actor_loss = Some(self.actor_update(&batch)?);
        }
        self.baseline.update(eval.fom);
        self.noise.advance();
        if e % 100 == 0 {
            log::info!(
                "episode {e}: fom {:.6} best {:.6} noise std {:.4}",
                eval.fom,
                self.trace.best_fom().unwrap_or(eval.fom),
                self.noise.std()
            );
        }
        Ok(EpisodeReport {
            episode: e,
            fom: eval.fom,
            warmup,
            critic_loss,
            actor_loss,
        })
    }

    /// Runs the remaining configured episodes and returns the best design.
    pub fn train(&mut self, problem: &mut SizingProblem<'_>) -> Result<SearchResult, AgentError> {
        while self.episode < self.config.episodes {
            self.train_episode(problem)?;
        }
        self.result()
    }

    pub fn result(&self) -> Result<SearchResult, AgentError> {
        let (best_fom, best_design, best_raw) = self
            .incumbent
            .best
            .clone()
            .ok_or_else(|| AgentError::Config("no episodes were run".into()))?;
        Ok(SearchResult {
            best_design,
            best_raw,
            best_fom,
            trace: self.trace.clone(),
        })
    }

    fn batch_tensors(&self, records: &[&ReplayRecord]) -> BatchTensors {
        let layout = BatchLayout::new(&self.node_kinds, records.len());
        let n = self.node_kinds.len();
        let dim = self.state.dim();
        let mut states = Matrix::zeros(n * records.len(), dim);
        for (b, r) in records.iter().enumerate() {
            for k in 0..n {
                states.row_mut(b * n + k).copy_from_slice(r.state.matrix.row(k));
            }
        }
        let actions = layout
            .groups
            .iter()
            .map(|g| {
                let arity = g.kind.arity();
                let mut m = Matrix::zeros(g.rows.len(), arity);
                let mut i = 0;
                for r in records {
                    for &node in &g.nodes {
                        m.row_mut(i).copy_from_slice(r.action.row(node));
                        i += 1;
                    }
                }
                m
            })
            .collect();
        BatchTensors {
            states,
            actions,
            rewards: records.iter().map(|r| r.reward).collect(),
            layout,
        }
    }

    /// One gradient step of the critic on a fixed batch against the given
    /// baseline. Returns the loss before the step.
    pub fn critic_step(&mut self, batch: &[ReplayRecord], baseline: f64) -> Result<f64, AgentError> {
        let refs: Vec<&ReplayRecord> = batch.iter().collect();
        self.check_records(&refs)?;
        let tensors = self.batch_tensors(&refs);
        self.critic_update(&tensors, baseline)
    }

    /// Critic loss `mean (R − B − Q(S, A))²` without updating.
    pub fn critic_loss(&self, batch: &[ReplayRecord], baseline: f64) -> Result<f64, AgentError> {
        let refs: Vec<&ReplayRecord> = batch.iter().collect();
        self.check_records(&refs)?;
        let tensors = self.batch_tensors(&refs);
        let mut tape = Tape::new();
        let params = register(&mut tape, self.critic.parameters(), false);
        let loss = self.critic_loss_on_tape(&mut tape, &params, &tensors, baseline)?;
        Ok(tape.value(loss).get(0, 0))
    }

    fn check_records(&self, records: &[&ReplayRecord]) -> Result<(), AgentError> {
        if records.is_empty() {
            return Err(AgentError::Config("empty replay batch".into()));
        }
        let n = self.node_kinds.len();
        for r in records {
            if r.state.rows() != n || r.state.dim() != self.state.dim() || r.action.len() != n {
                return Err(AgentError::Dimension("replay record does not match the agent's topology".into()));
            }
        }
        Ok(())
    }

    fn critic_loss_on_tape(
        &self,
        tape: &mut Tape,
        params: &[crate::nn::Var],
        batch: &BatchTensors,
        baseline: f64,
    ) -> Result<crate::nn::Var, AgentError> {
        let s = tape.constant(batch.states.clone());
        let actions: Vec<_> = batch.actions.iter().map(|a| tape.constant(a.clone())).collect();
        let q = self
            .critic
            .forward(tape, params, s, &actions, &batch.layout, &self.propagation)?;
        let targets: Vec<f64> = batch.rewards.iter().map(|r| r - baseline).collect();
        Ok(tape.mse(q, &targets)?)
    }

    fn critic_update(&mut self, batch: &BatchTensors, baseline: f64) -> Result<f64, AgentError> {
        let mut tape = Tape::new();
        let params = register(&mut tape, self.critic.parameters(), true);
        let loss = self.critic_loss_on_tape(&mut tape, &params, batch, baseline)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(AgentError::NonFiniteLoss {
                episode: self.episode,
                which: "critic",
                value,
            });
        }
        let grads = tape.backward(loss)?;
        let grads: Vec<Matrix> = params.iter().map(|&p| grads.get_or_zeros(p, &tape)).collect();
        self.critic_opt.update(self.critic.parameters_mut(), &grads)?;
        Ok(value)
    }

    /// Ascends the batch-mean `Q(S, μ(S))`. Repeated states are evaluated
    /// once and weighted by their multiplicity.
    fn actor_update(&mut self, batch: &BatchTensors) -> Result<f64, AgentError> {
        let n = self.node_kinds.len();
        let total = batch.layout.batch;
        let mut unique: Vec<(usize, usize)> = Vec::new();
        for b in 0..total {
            let rows = &batch.states.data()[b * n * batch.states.cols()..(b + 1) * n * batch.states.cols()];
            let hit = unique.iter_mut().find(|(u, _)| {
                &batch.states.data()[u * n * batch.states.cols()..(u + 1) * n * batch.states.cols()] == rows
            });
            match hit {
                Some((_, count)) => *count += 1,
                None => unique.push((b, 1)),
            }
        }
        let dim = batch.states.cols();
        let mut states = Matrix::zeros(unique.len() * n, dim);
        for (i, (b, _)) in unique.iter().enumerate() {
            for k in 0..n {
                states.row_mut(i * n + k).copy_from_slice(batch.states.row(b * n + k));
            }
        }
        let weights: Vec<f64> = unique.iter().map(|(_, c)| -(*c as f64) / total as f64).collect();
        let layout = BatchLayout::new(&self.node_kinds, unique.len());

        let mut tape = Tape::new();
        let actor_params = register(&mut tape, self.actor.parameters(), true);
        let critic_params = register(&mut tape, self.critic.parameters(), false);
        let s = tape.constant(states);
        let actions = self
            .actor
            .forward(&mut tape, &actor_params, s, &layout, &self.propagation)?;
        let q = self
            .critic
            .forward(&mut tape, &critic_params, s, &actions, &layout, &self.propagation)?;
        let loss = tape.weighted_sum(q, &weights)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(AgentError::NonFiniteLoss {
                episode: self.episode,
                which: "actor",
                value,
            });
        }
        let grads = tape.backward(loss)?;
        let grads: Vec<Matrix> = actor_params.iter().map(|&p| grads.get_or_zeros(p, &tape)).collect();
        self.actor_opt.update(self.actor.parameters_mut(), &grads)?;
        Ok(value)
    }
}

/// Fine-tunes a checkpointed agent on a new node or topology with budget
/// `(episodes, warmup)`; warm-up is still performed. `warmup == episodes`
/// is allowed and yields the best warm-up design.
pub fn transfer_run(
    checkpoint: &AgentCheckpoint,
    problem: &mut SizingProblem<'_>,
    episodes: usize,
    warmup: usize,
    mut config: AgentConfig,
) -> Result<(SearchResult, Agent), AgentError> {
    if warmup > episodes || episodes == 0 {
        return Err(AgentError::Config(format!(
            "transfer budget needs 0 < episodes and warm-up <= episodes, got ({episodes}, {warmup})"
        )));
    }
    config.episodes = episodes;
    config.warmup = warmup;
    let mut agent = Agent::from_checkpoint(checkpoint, problem.topology, problem.tech, config)?;
    let result = agent.train(problem)?;
    Ok((result, agent))
}
