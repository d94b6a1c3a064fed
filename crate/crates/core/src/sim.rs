//! Evaluation backends turning a refined design into named metrics.
//!
//! Two in-process backends live here: a square-law amplifier surrogate and
//! quadratic benchmarks with a known optimum. Process-based adapters live in
//! the std companion crate and implement the same trait.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitTopology, ComponentKind, TechnologyNode};
use crate::params::{action_to_design, design_to_normalized, ActionMatrix, DesignPoint};

/// Metric name → measured value.
pub type Metrics = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("evaluation timed out after {0} ms")]
    Timeout(u64),
}

/// Black-box evaluator of a refined design.
pub trait SimulatorBackend {
    /// Metrics every successful evaluation produces.
    fn metric_names(&self) -> Vec<String>;

    fn evaluate(&self, topology: &CircuitTopology, design: &DesignPoint) -> Result<Metrics, SimError>;
}

/// Gain stage of the analytical amplifier: a driving transistor and the
/// components loading its output node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub driver: usize,
    pub loads: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpConstants {
    pub k_gm: f64,
    pub k_ro: f64,
    pub v_dd: f64,
    pub c_load: f64,
    pub k_noise: f64,
}

impl Default for AmpConstants {
    fn default() -> Self {
        Self {
            k_gm: 1e-3,
            k_ro: 1e6,
            v_dd: 1.8,
            c_load: 1e-12,
            k_noise: 1e-9,
        }
    }
}

pub const ANALYTICAL_METRICS: [&str; 5] = ["BW", "Gain", "Power", "Noise", "GBW"];

/// Square-law surrogate for a cascade of gain stages.
///
/// Per transistor: `gm = k_gm·√(W/L·M)`, `ro = k_ro·L/(W·M)`,
/// `I = (W/L)·M·1µA`. Each stage gains `gm_driver · (ro_driver ∥ loads)`;
/// bandwidth comes from the output stage resistance and load capacitance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalAmpModel {
    pub stages: Vec<Stage>,
    pub constants: AmpConstants,
    pub formula_version: u32,
}

struct MosSmallSignal {
    gm: f64,
    ro: f64,
    current: f64,
}

fn mos_small_signal(c: &AmpConstants, w: f64, l: f64, m: f64) -> MosSmallSignal {
    let ratio = w / l * m;
    MosSmallSignal {
        gm: c.k_gm * libm::sqrt(ratio),
        ro: c.k_ro * l / (w * m),
        current: ratio * 1e-6,
    }
}

impl AnalyticalAmpModel {
    pub const FORMULA_VERSION: u32 = 1;

    pub fn new(stages: Vec<Stage>, constants: AmpConstants) -> Result<Self, SimError> {
        if stages.is_empty() {
            return Err(SimError::Config("analytical model needs at least one stage".into()));
        }
        let k = constants;
        if ![k.k_gm, k.k_ro, k.v_dd, k.c_load, k.k_noise]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(SimError::Config("analytical constants must be positive".into()));
        }
        Ok(Self {
            stages,
            constants,
            formula_version: Self::FORMULA_VERSION,
        })
    }

    /// Resolves stage members by component name.
    pub fn from_names(
        topology: &CircuitTopology,
        stages: &[(String, Vec<String>)],
        constants: AmpConstants,
    ) -> Result<Self, SimError> {
        let id = |name: &str| {
            topology
                .find(name)
                .map(|c| c.id)
                .ok_or_else(|| SimError::Config(alloc::format!("stage references unknown component `{name}`")))
        };
        let stages = stages
            .iter()
            .map(|(d, loads)| {
                Ok(Stage {
                    driver: id(d)?,
                    loads: loads.iter().map(|l| id(l)).collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let model = Self::new(stages, constants)?;
        model.check_topology(topology)?;
        Ok(model)
    }

    pub fn check_topology(&self, topology: &CircuitTopology) -> Result<(), SimError> {
        for (s, stage) in self.stages.iter().enumerate() {
            for &id in core::iter::once(&stage.driver).chain(&stage.loads) {
                if id >= topology.len() {
                    return Err(SimError::Config(alloc::format!(
                        "stage {s} references component {id} outside topology `{}`",
                        topology.name()
                    )));
                }
            }
            if !topology.component(stage.driver).kind.is_mos() {
                return Err(SimError::Config(alloc::format!(
                    "stage {s} driver `{}` is not a transistor",
                    topology.component(stage.driver).name
                )));
            }
        }
        Ok(())
    }
}

pub fn evaluate_analytical(
    model: &AnalyticalAmpModel,
    topology: &CircuitTopology,
    design: &DesignPoint,
) -> Result<Metrics, SimError> {
    model.check_topology(topology)?;
    design
        .check_shape(topology)
        .map_err(|e| SimError::Config(e.to_string()))?;
    let k = &model.constants;
    let devices: Vec<Option<MosSmallSignal>> = topology
        .components()
        .iter()
        .map(|c| {
            c.kind.is_mos().then(|| {
                let p = design.row(c.id);
                mos_small_signal(k, p[0], p[1], p[2])
            })
        })
        .collect();

    let mut gain = 1.0;
    let mut r_out = 0.0;
    let mut c_out = 0.0;
    for stage in &model.stages {
        let driver = devices[stage.driver].as_ref().expect("driver checked to be a transistor");
        let mut conductance = 1.0 / driver.ro;
        let mut cap = 0.0;
        for &id in &stage.loads {
            match topology.component(id).kind {
                ComponentKind::Nmos | ComponentKind::Pmos => {
                    conductance += 1.0 / devices[id].as_ref().expect("transistor").ro;
                }
                ComponentKind::Resistor => conductance += 1.0 / design.row(id)[0],
                ComponentKind::Capacitor => cap += design.row(id)[0],
            }
        }
        let r = 1.0 / conductance;
        gain *= driver.gm * r;
        r_out = r;
        c_out = k.c_load + cap;
    }
    let bw = 1.0 / (2.0 * core::f64::consts::PI * r_out * c_out);
    let power = k.v_dd * devices.iter().flatten().map(|d| d.current).sum::<f64>();
    let noise = k.k_noise * libm::sqrt(devices.iter().flatten().map(|d| 1.0 / d.gm).sum::<f64>());

    let mut out = Metrics::new();
    out.insert("BW".into(), bw);
    out.insert("Gain".into(), gain);
    out.insert("Power".into(), power);
    out.insert("Noise".into(), noise);
    out.insert("GBW".into(), gain * bw);
    if out.values().any(|v| !v.is_finite()) {
        return Err(SimError::Evaluation("non-finite analytical metric".into()));
    }
    Ok(out)
}

impl SimulatorBackend for AnalyticalAmpModel {
    fn metric_names(&self) -> Vec<String> {
        ANALYTICAL_METRICS.iter().map(|s| String::from(*s)).collect()
    }

    fn evaluate(&self, topology: &CircuitTopology, design: &DesignPoint) -> Result<Metrics, SimError> {
        evaluate_analytical(self, topology, design)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    GraphQuadratic,
    Sphere,
}

pub const SYNTHETIC_METRIC: &str = "Score";
pub const DEFAULT_COUPLING: f64 = 0.5;

/// Concave quadratic with a known maximum of 0 at `target`, measured in
/// normalized `[-1, 1]` parameter coordinates.
///
/// `GraphQuadratic` adds a penalty on every edge for deviating from the
/// target's neighbour differences (over the leading parameters both
/// endpoints have), which makes the landscape depend on the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBenchmark {
    pub kind: BenchmarkKind,
    pub coupling: f64,
    target: DesignPoint,
    target_coords: ActionMatrix,
    tech: TechnologyNode,
}

impl SyntheticBenchmark {
    pub fn new(
        kind: BenchmarkKind,
        coupling: f64,
        target: DesignPoint,
        topology: &CircuitTopology,
        tech: &TechnologyNode,
    ) -> Result<Self, SimError> {
        target
            .check_shape(topology)
            .map_err(|e| SimError::Config(e.to_string()))?;
        for c in topology.components() {
            for (v, s) in target.row(c.id).iter().zip(tech.param_specs(c.kind)) {
                if !s.is_legal(*v) {
                    return Err(SimError::Config(alloc::format!(
                        "target value {v} for `{}` is not a legal grid point",
                        c.name
                    )));
                }
            }
        }
        if !(coupling >= 0.0 && coupling.is_finite()) {
            return Err(SimError::Config("coupling must be non-negative".into()));
        }
        let target_coords = design_to_normalized(&target, topology, tech);
        Ok(Self {
            kind,
            coupling,
            target,
            target_coords,
            tech: tech.clone(),
        })
    }

    /// Benchmark whose optimum is a refined design drawn from `seed`, with raw
    /// coordinates kept inside `[-0.8, 0.8]` so the optimum is interior.
    pub fn with_random_target(
        kind: BenchmarkKind,
        coupling: f64,
        topology: &CircuitTopology,
        tech: &TechnologyNode,
        seed: u64,
    ) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = ActionMatrix(
            topology
                .components()
                .iter()
                .map(|c| (0..c.kind.arity()).map(|_| rng.random_range(-0.8..=0.8)).collect())
                .collect(),
        );
        let target = action_to_design(&raw, topology, tech).map_err(|e| SimError::Config(e.to_string()))?;
        Self::new(kind, coupling, target, topology, tech)
    }

    pub fn target(&self) -> &DesignPoint {
        &self.target
    }

    fn effective_coupling(&self) -> f64 {
        match self.kind {
            BenchmarkKind::GraphQuadratic => self.coupling,
            BenchmarkKind::Sphere => 0.0,
        }
    }
}

/// Score of a design against the benchmark; 0 exactly at the target.
pub fn evaluate_synthetic(
    bench: &SyntheticBenchmark,
    topology: &CircuitTopology,
    design: &DesignPoint,
) -> Result<Metrics, SimError> {
    design
        .check_shape(topology)
        .map_err(|e| SimError::Config(e.to_string()))?;
    bench
        .target_coords
        .check_shape(topology)
        .map_err(|e| SimError::Config(alloc::format!("benchmark/topology mismatch: {e}")))?;
    let x = design_to_normalized(design, topology, &bench.tech);
    let t = &bench.target_coords;
    let dev: Vec<Vec<f64>> = x
        .rows()
        .iter()
        .zip(t.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - v).collect())
        .collect();
    let node_term: f64 = dev.iter().flatten().map(|d| d * d).sum();
    let lambda = bench.effective_coupling();
    let mut edge_term = 0.0;
    if lambda > 0.0 {
        for &(i, j) in topology.edges() {
            let shared = dev[i].len().min(dev[j].len());
            for p in 0..shared {
                let d = dev[i][p] - dev[j][p];
                edge_term += d * d;
            }
        }
    }
    let mut out = Metrics::new();
    out.insert(SYNTHETIC_METRIC.into(), -node_term - lambda * edge_term);
    Ok(out)
}

impl SimulatorBackend for SyntheticBenchmark {
    fn metric_names(&self) -> Vec<String> {
        vec![SYNTHETIC_METRIC.into()]
    }

    fn evaluate(&self, topology: &CircuitTopology, design: &DesignPoint) -> Result<Metrics, SimError> {
        evaluate_synthetic(self, topology, design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::tests::test_tech;
    use crate::circuit::ComponentDecl;

    fn single_stage() -> CircuitTopology {
        CircuitTopology::new(
            "cs",
            vec![
                ComponentDecl::new("M1", ComponentKind::Nmos, &["in", "out"]),
                ComponentDecl::new("R1", ComponentKind::Resistor, &["out"]),
            ],
            &[],
        )
        .unwrap()
    }

    fn cs_model(c: AmpConstants) -> AnalyticalAmpModel {
        AnalyticalAmpModel::new(vec![Stage { driver: 0, loads: vec![1] }], c).unwrap()
    }

    #[test]
    fn transconductance_formula() {
        let t = CircuitTopology::new("m", vec![ComponentDecl::new("M1", ComponentKind::Nmos, &["a"])], &[]).unwrap();
        let model = AnalyticalAmpModel::new(vec![Stage { driver: 0, loads: vec![] }], AmpConstants::default()).unwrap();
        // W/L = 10, M = 2.
        let d = DesignPoint(vec![vec![10e-6, 1e-6, 2.0]]);
        let m = evaluate_analytical(&model, &t, &d).unwrap();
        let gm = 1e-3 * libm::sqrt(20.0);
        let ro = 1e6 * 1e-6 / (10e-6 * 2.0);
        assert!((m["Gain"] - gm * ro).abs() <= 1e-12 * gm * ro);
        assert!((m["Power"] - 1.8 * 20.0e-6).abs() < 1e-18);
        assert!((m["Noise"] - 1e-9 * libm::sqrt(1.0 / gm)).abs() < 1e-20);
    }

    #[test]
    fn doubling_load_cap_halves_bandwidth() {
        let t = single_stage();
        let d = DesignPoint(vec![vec![5e-6, 0.5e-6, 3.0], vec![2000.0]]);
        let base = evaluate_analytical(&cs_model(AmpConstants::default()), &t, &d).unwrap();
        let doubled = AmpConstants {
            c_load: 2e-12,
            ..AmpConstants::default()
        };
        let m = evaluate_analytical(&cs_model(doubled), &t, &d).unwrap();
        assert_eq!(m["Gain"], base["Gain"]);
        assert!((m["BW"] * 2.0 - base["BW"]).abs() <= 1e-12 * base["BW"]);
    }

    #[test]
    fn power_increases_with_width() {
        let t = single_stage();
        let model = cs_model(AmpConstants::default());
        let mut prev = 0.0;
        for w in [1e-6, 2e-6, 4e-6, 8e-6] {
            let d = DesignPoint(vec![vec![w, 1e-6, 1.0], vec![1000.0]]);
            let p = evaluate_analytical(&model, &t, &d).unwrap()["Power"];
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn stage_mismatch_is_config_error() {
        let t = single_stage();
        let bad_driver = AnalyticalAmpModel::new(vec![Stage { driver: 1, loads: vec![] }], AmpConstants::default()).unwrap();
        let d = DesignPoint(vec![vec![1e-6, 1e-6, 1.0], vec![1000.0]]);
        assert!(matches!(evaluate_analytical(&bad_driver, &t, &d), Err(SimError::Config(_))));
        let out_of_range = AnalyticalAmpModel::new(vec![Stage { driver: 0, loads: vec![7] }], AmpConstants::default()).unwrap();
        assert!(matches!(evaluate_analytical(&out_of_range, &t, &d), Err(SimError::Config(_))));
        assert!(AnalyticalAmpModel::new(vec![], AmpConstants::default()).is_err());
    }

    fn chain() -> CircuitTopology {
        CircuitTopology::new(
            "chain",
            vec![
                ComponentDecl::new("M1", ComponentKind::Nmos, &["a", "b"]),
                ComponentDecl::new("M2", ComponentKind::Pmos, &["b", "c"]),
                ComponentDecl::new("R1", ComponentKind::Resistor, &["c"]),
            ],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn synthetic_target_scores_zero_and_others_negative() {
        let t = chain();
        let tech = test_tech();
        let bench = SyntheticBenchmark::with_random_target(BenchmarkKind::GraphQuadratic, 0.5, &t, &tech, 9).unwrap();
        let at = evaluate_synthetic(&bench, &t, bench.target()).unwrap();
        assert_eq!(at[SYNTHETIC_METRIC], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let raw = crate::agent::warmup_sample(&t, &mut rng);
            let d = action_to_design(&raw, &t, &tech).unwrap();
            let s = evaluate_synthetic(&bench, &t, &d).unwrap()[SYNTHETIC_METRIC];
            assert!(s < 0.0);
        }
    }

    #[test]
    fn zero_coupling_equals_sphere() {
        let t = chain();
        let tech = test_tech();
        let gq = SyntheticBenchmark::with_random_target(BenchmarkKind::GraphQuadratic, 0.0, &t, &tech, 4).unwrap();
        let sp = SyntheticBenchmark::new(BenchmarkKind::Sphere, 0.5, gq.target().clone(), &t, &tech).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let raw = crate::agent::warmup_sample(&t, &mut rng);
            let d = action_to_design(&raw, &t, &tech).unwrap();
            assert_eq!(evaluate_synthetic(&gq, &t, &d).unwrap(), evaluate_synthetic(&sp, &t, &d).unwrap());
        }
    }

    #[test]
    fn off_grid_target_rejected() {
        let t = chain();
        let tech = test_tech();
        let d = DesignPoint(vec![vec![1.234567e-6, 1e-6, 1.0], vec![1e-6, 1e-6, 1.0], vec![1000.0]]);
        assert!(SyntheticBenchmark::new(BenchmarkKind::Sphere, 0.0, d, &t, &tech).is_err());
    }
}
