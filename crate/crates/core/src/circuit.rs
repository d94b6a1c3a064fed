//! Circuit topologies as graphs, technology-node device data, and the
//! per-component state encoding consumed by the agent.
//!
//! Vertices are components; two components are adjacent when they share at
//! least one net that is not marked global.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;
use crate::params::{ParamName, ParamSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("topology has no components")]
    Empty,
    #[error("duplicate component name `{0}`")]
    DuplicateName(String),
    #[error("component `{0}` is not connected to any net")]
    NoNets(String),
    #[error("matching group `{group}` mixes {first} and {second}")]
    GroupKindMismatch {
        group: String,
        first: ComponentKind,
        second: ComponentKind,
    },
    #[error("technology node `{node}`: {reason}")]
    Technology { node: String, reason: String },
}

/// Device category of a circuit component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Nmos,
    Pmos,
    Resistor,
    Capacitor,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [Self::Nmos, Self::Pmos, Self::Resistor, Self::Capacitor];

    /// Number of sizing parameters the agent emits for this kind.
    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    /// Parameter order within an action or design row.
    pub fn param_names(self) -> &'static [ParamName] {
        match self {
            Self::Nmos | Self::Pmos => &[ParamName::W, ParamName::L, ParamName::M],
            Self::Resistor => &[ParamName::R],
            Self::Capacitor => &[ParamName::C],
        }
    }

    /// Position in the kind one-hot block.
    pub fn index(self) -> usize {
        match self {
            Self::Nmos => 0,
            Self::Pmos => 1,
            Self::Resistor => 2,
            Self::Capacitor => 3,
        }
    }

    pub fn is_mos(self) -> bool {
        matches!(self, Self::Nmos | Self::Pmos)
    }

    /// Netlist token.
    pub fn token(self) -> &'static str {
        match self {
            Self::Nmos => "nmos",
            Self::Pmos => "pmos",
            Self::Resistor => "res",
            Self::Capacitor => "cap",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.token() == token)
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    pub name: String,
    pub kind: ComponentKind,
    pub nets: Vec<String>,
    pub matching_group: Option<String>,
}

/// Component description before ids and edges are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDecl {
    pub name: String,
    pub kind: ComponentKind,
    pub nets: Vec<String>,
    pub matching_group: Option<String>,
}

impl ComponentDecl {
    pub fn new(name: &str, kind: ComponentKind, nets: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind,
            nets: nets.iter().map(|n| String::from(*n)).collect(),
            matching_group: None,
        }
    }

    pub fn grouped(mut self, group: &str) -> Self {
        self.matching_group = Some(group.into());
        self
    }
}

/// Fixed circuit graph: components in declaration order plus shared-net edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitTopology {
    name: String,
    components: Vec<Component>,
    /// Sorted `(i, j)` pairs with `i < j`.
    edges: Vec<(usize, usize)>,
    global_nets: Vec<String>,
}

impl CircuitTopology {
    /// Builds the graph, assigning dense ids in declaration order and
    /// connecting every pair of components that shares a non-global net.
    pub fn new(
        name: &str,
        decls: Vec<ComponentDecl>,
        global_nets: &[String],
    ) -> Result<Self, CircuitError> {
        if decls.is_empty() {
            return Err(CircuitError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut group_kinds: BTreeMap<&str, ComponentKind> = BTreeMap::new();
        for d in &decls {
            if !seen.insert(d.name.as_str()) {
                return Err(CircuitError::DuplicateName(d.name.clone()));
            }
            if d.nets.is_empty() {
                return Err(CircuitError::NoNets(d.name.clone()));
            }
            if let Some(g) = &d.matching_group {
                match group_kinds.get(g.as_str()) {
                    Some(&k) if k != d.kind => {
                        return Err(CircuitError::GroupKindMismatch {
                            group: g.clone(),
                            first: k,
                            second: d.kind,
                        })
                    }
                    Some(_) => {}
                    None => {
                        group_kinds.insert(g, d.kind);
                    }
                }
            }
        }

        let globals: BTreeSet<&str> = global_nets.iter().map(String::as_str).collect();
        let mut net_members: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (id, d) in decls.iter().enumerate() {
            for net in &d.nets {
                if !globals.contains(net.as_str()) {
                    net_members.entry(net.as_str()).or_default().insert(id);
                }
            }
        }
        let mut edges = BTreeSet::new();
        for members in net_members.values() {
            let m: Vec<usize> = members.iter().copied().collect();
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    edges.insert((i, j));
                }
            }
        }

        let components = decls
            .into_iter()
            .enumerate()
            .map(|(id, d)| Component {
                id,
                name: d.name,
                kind: d.kind,
                nets: d.nets,
                matching_group: d.matching_group,
            })
            .collect();
        let topo = Self {
            name: name.into(),
            components,
            edges: edges.into_iter().collect(),
            global_nets: global_nets.to_vec(),
        };
        if !topo.is_connected() {
            log::warn!("topology `{}` is not connected", topo.name);
        }
        Ok(topo)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: usize) -> &Component {
        &self.components[id]
    }

    pub fn find(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn global_nets(&self) -> &[String] {
        &self.global_nets
    }

    pub fn kinds(&self) -> Vec<ComponentKind> {
        self.components.iter().map(|c| c.kind).collect()
    }

    /// Distinct kinds present, in canonical order.
    pub fn kind_set(&self) -> Vec<ComponentKind> {
        ComponentKind::ALL
            .into_iter()
            .filter(|k| self.components.iter().any(|c| c.kind == *k))
            .collect()
    }

    /// Matching group label → member ids in ascending order.
    pub fn matching_groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for c in &self.components {
            if let Some(g) = &c.matching_group {
                groups.entry(g.as_str()).or_default().push(c.id);
            }
        }
        groups
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Symmetric 0/1 adjacency with zero diagonal.
pub fn adjacency_matrix(topology: &CircuitTopology) -> Matrix {
    let n = topology.len();
    let mut a = Matrix::zeros(n, n);
    for &(i, j) in topology.edges() {
        a.set(i, j, 1.0);
        a.set(j, i, 1.0);
    }
    a
}

/// Transistor model parameters used as node features. Zero for passives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceModelFeatures {
    pub v_sat: f64,
    pub v_th0: f64,
    pub v_fb: f64,
    pub mu0: f64,
    pub u_c: f64,
}

impl DeviceModelFeatures {
    pub const LEN: usize = 5;
    pub const ZERO: Self = Self {
        v_sat: 0.0,
        v_th0: 0.0,
        v_fb: 0.0,
        mu0: 0.0,
        u_c: 0.0,
    };

    pub fn to_array(self) -> [f64; 5] {
        [self.v_sat, self.v_th0, self.v_fb, self.mu0, self.u_c]
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Device features and sizing grids of one fabrication process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyNode {
    name: String,
    features: BTreeMap<ComponentKind, DeviceModelFeatures>,
    /// Per kind, specs in [`ComponentKind::param_names`] order.
    param_specs: BTreeMap<ComponentKind, Vec<ParamSpec>>,
}

impl TechnologyNode {
    pub fn new(
        name: &str,
        features: BTreeMap<ComponentKind, DeviceModelFeatures>,
        param_specs: BTreeMap<ComponentKind, Vec<ParamSpec>>,
    ) -> Result<Self, CircuitError> {
        let err = |reason: String| CircuitError::Technology {
            node: name.into(),
            reason,
        };
        for kind in ComponentKind::ALL {
            let f = features
                .get(&kind)
                .ok_or_else(|| err(alloc::format!("missing features for {kind}")))?;
            if !f.is_finite() {
                return Err(err(alloc::format!("non-finite features for {kind}")));
            }
            if !kind.is_mos() && *f != DeviceModelFeatures::ZERO {
                return Err(err(alloc::format!("{kind} features must be zero")));
            }
            let specs = param_specs
                .get(&kind)
                .ok_or_else(|| err(alloc::format!("missing parameter specs for {kind}")))?;
            let names: Vec<ParamName> = specs.iter().map(|s| s.name).collect();
            if names != kind.param_names() {
                return Err(err(alloc::format!(
                    "{kind} expects parameters {:?}, got {:?}",
                    kind.param_names(),
                    names
                )));
            }
        }
        if features[&ComponentKind::Nmos] == DeviceModelFeatures::ZERO
            && features[&ComponentKind::Pmos] == DeviceModelFeatures::ZERO
        {
            return Err(err("NMOS and PMOS features are both zero".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            param_specs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self, kind: ComponentKind) -> DeviceModelFeatures {
        self.features[&kind]
    }

    pub fn param_specs(&self, kind: ComponentKind) -> &[ParamSpec] {
        &self.param_specs[&kind]
    }

    pub fn param_spec(&self, kind: ComponentKind, name: ParamName) -> Option<&ParamSpec> {
        self.param_specs[&kind].iter().find(|s| s.name == name)
    }
}

/// How the component index enters the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    /// `n`-wide one-hot index; ties the state width to the topology size.
    OneHotIndex,
    /// Single scalar `k/(n−1)`; state width is topology independent.
    ScalarIndex,
}

impl EncodingMode {
    pub fn state_dim(self, n: usize) -> usize {
        match self {
            Self::OneHotIndex => n + 4 + DeviceModelFeatures::LEN,
            Self::ScalarIndex => 1 + 4 + DeviceModelFeatures::LEN,
        }
    }
}

/// Column-standardized per-component state vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub mode: EncodingMode,
    pub matrix: Matrix,
}

impl StateMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Rows `(index, kind one-hot, device features)` before standardization.
pub fn raw_state_rows(topology: &CircuitTopology, tech: &TechnologyNode, mode: EncodingMode) -> Matrix {
    let n = topology.len();
    let dim = mode.state_dim(n);
    let mut m = Matrix::zeros(n, dim);
    for c in topology.components() {
        let row = m.row_mut(c.id);
        let offset = match mode {
            EncodingMode::OneHotIndex => {
                row[c.id] = 1.0;
                n
            }
            EncodingMode::ScalarIndex => {
                row[0] = if n > 1 { c.id as f64 / (n - 1) as f64 } else { 0.0 };
                1
            }
        };
        row[offset + c.kind.index()] = 1.0;
        row[offset + 4..].copy_from_slice(&tech.features(c.kind).to_array());
    }
    m
}

/// Encodes every component and standardizes each column across components
/// (mean 0, sample standard deviation 1). Constant columns become zero.
pub fn encode_state(topology: &CircuitTopology, tech: &TechnologyNode, mode: EncodingMode) -> StateMatrix {
    let mut m = raw_state_rows(topology, tech, mode);
    let n = m.rows();
    for c in 0..m.cols() {
        let first = m.get(0, c);
        if (1..n).all(|r| m.get(r, c) == first) {
            for r in 0..n {
                m.set(r, c, 0.0);
            }
            continue;
        }
        let mean = (0..n).map(|r| m.get(r, c)).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (m.get(r, c) - mean) * (m.get(r, c) - mean)).sum::<f64>() / (n - 1) as f64;
        let std = libm::sqrt(var);
        for r in 0..n {
            let v = (m.get(r, c) - mean) / std;
            m.set(r, c, v);
        }
    }
    StateMatrix { mode, matrix: m }
}
