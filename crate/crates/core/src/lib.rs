//! Graph-convolutional actor-critic engine for analog transistor sizing.
//!
//! The crate is `no_std` (with `alloc`) by default; the `std` feature only
//! switches dependencies to their std builds. File formats, processes and the
//! command line live in the `gcn-sizer` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agent;
pub mod baselines;
pub mod circuit;
pub mod fom;
pub mod nn;
pub mod params;
pub mod pipeline;
pub mod sim;

pub use agent::{act, transfer_run, warmup_sample, Agent, AgentCheckpoint, AgentConfig, AgentError};
pub use baselines::{es_optimize, random_search, EsConfig, SearchError};
pub use circuit::{
    adjacency_matrix, encode_state, CircuitError, CircuitTopology, Component, ComponentDecl, ComponentKind,
    DeviceModelFeatures, EncodingMode, StateMatrix, TechnologyNode,
};
pub use fom::{calibrate_normalizers, compute_fom, FomConfig, FomError, HardSpec, MetricSpec, Relation};
pub use params::{action_to_design, denormalize, refine, ActionMatrix, DesignPoint, ParamError, ParamName, ParamSpec, Scale};
pub use pipeline::{design_hash, Evaluation, PipelineError, SearchResult, SearchTrace, SizingProblem, TraceStep};
pub use sim::{
    AmpConstants, AnalyticalAmpModel, BenchmarkKind, Metrics, SimError, SimulatorBackend, Stage, SyntheticBenchmark,
};
