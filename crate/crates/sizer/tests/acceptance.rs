//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p gcn-sizer --test acceptance` runs all ten; pass criterion
//! numbers after `--` to run a subset.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gcn_sizer::artifacts::write_trace;
use gcn_sizer::fomfile::FomFile;
use gcn_sizer::netlist::{export_netlist, parse_netlist, Netlist};
use gcn_sizer::tech::load_tech;
use gcn_sizer_core::agent::{streams, sub_rng, ActorNetwork, BaselineTracker, CriticNetwork, ReplayRecord};
use gcn_sizer_core::nn::{gcn_forward, normalize_adjacency, Activation, GcnLayer, Matrix, Tape, Var};
use gcn_sizer_core::sim::{evaluate_synthetic, DEFAULT_COUPLING};
use gcn_sizer_core::{
    act, action_to_design, adjacency_matrix, calibrate_normalizers, compute_fom, encode_state, random_search, refine,
    transfer_run, warmup_sample, ActionMatrix, Agent, AgentCheckpoint, AgentConfig, AgentError, AmpConstants,
    AnalyticalAmpModel, BenchmarkKind, CircuitTopology, ComponentDecl, ComponentKind, EncodingMode, FomConfig,
    HardSpec, MetricSpec, Metrics, Relation, SimulatorBackend, SizingProblem, SyntheticBenchmark, TechnologyNode,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Option<Duration>, Check); 10] = [
        (1, "gradient correctness", Some(Duration::from_secs(30)), c1_gradients),
        (2, "GCN algebra", None, c2_gcn_algebra),
        (3, "FoM engine", None, c3_fom),
        (4, "refinement", None, c4_refinement),
        (5, "training mechanics", None, c5_mechanics),
        (6, "optimizer ordering", Some(Duration::from_secs(600)), c6_ordering),
        (7, "NG-RL ablation", None, c7_ablation),
        (8, "technology-node transfer", Some(Duration::from_secs(900)), c8_node_transfer),
        (9, "topology transfer", None, c9_topology_transfer),
        (10, "determinism and checkpointing", None, c10_determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut o = check();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<30} {} ({:.1}s) {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- fixtures

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn tech(node: &str) -> TechnologyNode {
    load_tech(&data(&format!("tech/{node}.toml"))).unwrap()
}

fn netlist(name: &str) -> Netlist {
    let text = std::fs::read_to_string(data(&format!("netlists/{name}.net"))).unwrap();
    parse_netlist(name, &text).unwrap()
}

fn amp_model(net: &Netlist) -> AnalyticalAmpModel {
    AnalyticalAmpModel::from_names(&net.topology, &net.stages, AmpConstants::default()).unwrap()
}

/// FoM file with normalizers from 5000 random designs, as `calibrate` does.
fn calibrated(fom: &str, backend: &dyn SimulatorBackend, topo: &CircuitTopology, tech: &TechnologyNode) -> FomConfig {
    let file = FomFile::load(&data(&format!("fom/{fom}.toml"))).unwrap();
    let ranges = calibrate_normalizers(backend, topo, tech, 5000, 0).unwrap();
    file.with_ranges(&ranges).to_config().unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, grouped: bool) -> CircuitTopology {
    let kinds: Vec<ComponentKind> = (0..n).map(|_| ComponentKind::ALL[rng.random_range(0..4)]).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    let decls = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut nets = vec![format!("p{i}")];
            nets.extend(edges.iter().filter(|(a, b)| *a == i || *b == i).map(|(a, b)| format!("e{a}_{b}")));
            let nets: Vec<&str> = nets.iter().map(String::as_str).collect();
            let d = ComponentDecl::new(&format!("X{i}"), k, &nets);
            if grouped && rng.random_bool(0.4) {
                d.grouped(&format!("{k}{}", rng.random_range(0..2)))
            } else {
                d
            }
        })
        .collect();
    CircuitTopology::new("random", decls, &[]).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------- 1

const H: f64 = 1e-6;

/// Counts parameters whose analytic gradient is within relative error 1e-4
/// of the central difference. Entries where both are exactly zero agree.
fn fd_check<F: Fn(&[Matrix]) -> f64>(params: &mut [Matrix], analytic: &[Matrix], loss: F) -> (usize, usize) {
    let (mut ok, mut total) = (0, 0);
    for p in 0..params.len() {
        for i in 0..params[p].data().len() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + H;
            let up = loss(params);
            params[p].data_mut()[i] = orig - H;
            let down = loss(params);
            params[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[p].data()[i];
            let scale = a.abs().max(numeric.abs());
            total += 1;
            if scale == 0.0 || (a - numeric).abs() <= 1e-4 * scale {
                ok += 1;
            }
        }
    }
    (ok, total)
}

fn readout(tape: &mut Tape, x: Var, v: &Matrix, w: &[f64]) -> Var {
    let vv = tape.constant(v.clone());
    let col = tape.matmul(x, vv).unwrap();
    tape.weighted_sum(col, w).unwrap()
}

fn gradient_case(n: usize, seed: u64, tech: &TechnologyNode) -> (usize, usize) {
    let mut rng = sub_rng(seed, 20);
    let topo = random_graph(&mut rng, n, false);
    let kinds = topo.kinds();
    let kind_set = topo.kind_set();
    let state = encode_state(&topo, tech, EncodingMode::OneHotIndex);
    let adj = normalize_adjacency(&adjacency_matrix(&topo));
    let actor = ActorNetwork::new(&mut rng, state.dim(), 16, 7, &kind_set);
    let critic = CriticNetwork::new(&mut rng, state.dim(), 16, 8, 7, &kind_set);
    let batch = 3;
    let mut states = Matrix::zeros(n * batch, state.dim());
    for b in 0..batch {
        for k in 0..n {
            states.row_mut(b * n + k).copy_from_slice(state.matrix.row(k));
        }
    }
    let rows_of = |k: &ComponentKind| kinds.iter().filter(|x| *x == k).count() * batch;
    let vs: Vec<Matrix> = kind_set.iter().map(|k| random_matrix(&mut rng, k.arity(), 1)).collect();
    let ws: Vec<Vec<f64>> = kind_set
        .iter()
        .map(|k| (0..rows_of(k)).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let actions: Vec<Matrix> = kind_set.iter().map(|k| random_matrix(&mut rng, rows_of(k), k.arity())).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();

    let actor_loss = |net: &ActorNetwork, grads: bool| {
        let mut tape = Tape::new();
        let s = tape.constant(states.clone());
        let (params, outs) = net.record(&mut tape, s, &kinds, batch, &adj, true).unwrap();
        let mut total: Option<Var> = None;
        for ((o, v), w) in outs.iter().zip(&vs).zip(&ws) {
            let r = readout(&mut tape, *o, v, w);
            total = Some(match total {
                Some(t) => tape.add(t, r).unwrap(),
                None => r,
            });
        }
        let l = total.unwrap();
        let value = tape.value(l).get(0, 0);
        let g = grads.then(|| {
            let g = tape.backward(l).unwrap();
            params.iter().map(|p| g.get_or_zeros(*p, &tape)).collect::<Vec<_>>()
        });
        (value, g)
    };
    let critic_loss = |net: &CriticNetwork, grads: bool| {
        let mut tape = Tape::new();
        let s = tape.constant(states.clone());
        let a: Vec<Var> = actions.iter().map(|m| tape.constant(m.clone())).collect();
        let (params, q) = net.record(&mut tape, s, &a, &kinds, batch, &adj, true).unwrap();
        let l = tape.mse(q, &targets).unwrap();
        let value = tape.value(l).get(0, 0);
        let g = grads.then(|| {
            let g = tape.backward(l).unwrap();
            params.iter().map(|p| g.get_or_zeros(*p, &tape)).collect::<Vec<_>>()
        });
        (value, g)
    };

    let analytic = actor_loss(&actor, true).1.unwrap();
    let mut ps: Vec<Matrix> = actor.parameters().into_iter().cloned().collect();
    let (ok_a, total_a) = fd_check(&mut ps, &analytic, |p| {
        let mut net = actor.clone();
        for (dst, src) in net.parameters_mut().into_iter().zip(p) {
            *dst = src.clone();
        }
        actor_loss(&net, false).0
    });
    let analytic = critic_loss(&critic, true).1.unwrap();
    let mut ps: Vec<Matrix> = critic.parameters().into_iter().cloned().collect();
    let (ok_c, total_c) = fd_check(&mut ps, &analytic, |p| {
        let mut net = critic.clone();
        for (dst, src) in net.parameters_mut().into_iter().zip(p) {
            *dst = src.clone();
        }
        critic_loss(&net, false).0
    });
    (ok_a + ok_c, total_a + total_c)
}

fn c1_gradients() -> Outcome {
    let tech = tech("n180");
    let (mut ok, mut total) = (0, 0);
    for (i, n) in (4..=8).enumerate() {
        let (o, t) = gradient_case(n, 100 + i as u64, &tech);
        ok += o;
        total += t;
    }
    let frac = ok as f64 / total as f64;
    outcome(frac >= 0.999, format!("{ok}/{total} parameters agree ({:.4}%), graphs of 4..8 nodes", 100.0 * frac))
}

// ---------------------------------------------------------------- 2

fn c2_gcn_algebra() -> Outcome {
    let mut rng = sub_rng(2, 20);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let topo = random_graph(&mut rng, n, false);
        let hat = normalize_adjacency(&adjacency_matrix(&topo));
        let deg: Vec<f64> = (0..n)
            .map(|i| 1.0 + topo.edges().iter().filter(|(a, b)| *a == i || *b == i).count() as f64)
            .collect();
        for i in 0..n {
            for j in 0..n {
                let linked = i == j || topo.edges().contains(&(i.min(j), i.max(j)));
                let expect = if linked { 1.0 / (deg[i] * deg[j]).sqrt() } else { 0.0 };
                worst = worst.max((hat.get(i, j) - expect).abs());
            }
        }
    }
    let mut equivariant = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let topo = random_graph(&mut rng, n, false);
        let adj = normalize_adjacency(&adjacency_matrix(&topo));
        let layer = GcnLayer::new(&mut rng, 6, 5);
        let h = random_matrix(&mut rng, n, 6);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let out = gcn_forward(&h, &adj, &layer, Activation::Relu).unwrap();
        let out_p = gcn_forward(&h.permute_rows(&perm), &adj.permute_symmetric(&perm), &layer, Activation::Relu).unwrap();
        if out_p == out.permute_rows(&perm) {
            equivariant += 1;
        }
    }
    outcome(
        worst <= 1e-12 && equivariant == 100,
        format!("max |Â - closed form| = {worst:.2e} over 100 graphs; {equivariant}/100 permutations bit-equal"),
    )
}

// ---------------------------------------------------------------- 3

fn metrics(pairs: &[(&str, f64)]) -> Metrics {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn c3_fom() -> Outcome {
    let one = FomConfig::new(vec![MetricSpec::new("A", 1.0, 2.0, 7.0)], vec![], -1.0).unwrap();
    let two = FomConfig::new(
        vec![MetricSpec::new("A", 1.0, 0.0, 10.0), MetricSpec::new("B", -1.0, 0.0, 10.0)],
        vec![],
        -1.0,
    )
    .unwrap();
    let strict = FomConfig::new(
        two.metrics().to_vec(),
        vec![HardSpec {
            metric: "B".into(),
            relation: Relation::AtMost,
            threshold: 2.0,
        }],
        -1.0,
    )
    .unwrap();
    let ab = metrics(&[("A", 8.0), ("B", 3.0)]);
    let examples = [
        compute_fom(&metrics(&[("A", 2.0)]), &one).unwrap() == 0.0,
        compute_fom(&metrics(&[("A", 7.0)]), &one).unwrap() == 1.0,
        compute_fom(&ab, &two).unwrap() == 0.8 - 0.3,
        (compute_fom(&ab, &two).unwrap() - 0.5).abs() < 1e-15,
        compute_fom(&ab, &strict).unwrap() == -1.0,
    ];
    let examples_ok = examples.iter().all(|b| *b);

    let mut rng = sub_rng(3, 20);
    let mut violations = 0;
    for _ in 0..10_000 {
        let (wa, wb) = (rng.random_range(0.1..3.0), -rng.random_range(0.1..3.0));
        let bound = rng.random_range(5.0..15.0);
        let cfg = FomConfig::new(
            vec![
                MetricSpec::new("A", wa, 0.0, 10.0).with_bound(bound),
                MetricSpec::new("B", wb, 0.0, 10.0),
            ],
            vec![HardSpec {
                metric: "B".into(),
                relation: Relation::AtMost,
                threshold: 100.0,
            }],
            -1.0,
        )
        .unwrap();
        let (a, b) = (rng.random_range(-5.0..20.0), rng.random_range(-5.0..20.0));
        let (da, db) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let f = |x: f64, y: f64| compute_fom(&metrics(&[("A", x), ("B", y)]), &cfg).unwrap();
        let base = f(a, b);
        if f(a + da, b) < base || f(a, b + db) > base {
            violations += 1;
        }
        if f(bound + da, b) != f(bound, b) {
            violations += 1;
        }
    }
    outcome(
        examples_ok && violations == 0,
        format!(
            "examples {}/5 exact; {violations} monotonicity or saturation violations in 10^4 perturbations",
            examples.iter().filter(|b| **b).count()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn c4_refinement() -> Outcome {
    let nodes: Vec<TechnologyNode> = ["n250", "n180", "n130", "n65", "n45"].iter().map(|n| tech(n)).collect();
    let fixtures: Vec<Netlist> = ["two_tia", "three_tia", "two_volt", "ldo"].iter().map(|n| netlist(n)).collect();
    let mut rng = sub_rng(4, 20);
    let (mut idem, mut grid, mut bounds, mut matching) = (0, 0, 0, 0);
    for i in 0..10_000 {
        let topo = &fixtures[i % fixtures.len()].topology;
        let tech = &nodes[(i / fixtures.len()) % nodes.len()];
        let raw = ActionMatrix(
            topo.components()
                .iter()
                .map(|c| (0..c.kind.arity()).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect(),
        );
        let design = action_to_design(&raw, topo, tech).unwrap();
        if refine(&design, topo, tech).unwrap() != design {
            idem += 1;
        }
        for c in topo.components() {
            for (v, s) in design.row(c.id).iter().zip(tech.param_specs(c.kind)) {
                let k = ((v - s.lower) / s.precision).round();
                if s.lower + k * s.precision != *v || !s.is_legal(*v) {
                    grid += 1;
                }
                if *v < s.lower || *v > s.upper {
                    bounds += 1;
                }
            }
        }
        for members in topo.matching_groups().values() {
            if members.iter().any(|m| design.row(*m) != design.row(members[0])) {
                matching += 1;
            }
        }
    }
    outcome(
        idem + grid + bounds + matching == 0,
        format!(
            "10^4 raw actions over 4 fixtures x 5 nodes: {idem} idempotence, {grid} grid, {bounds} bound, {matching} matching failures"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn c5_mechanics() -> Outcome {
    let tech = tech("n180");
    let topo = netlist("two_tia").topology;

    let mut rng = sub_rng(5, streams::WARMUP);
    let (mut sum, mut count) = (0.0, 0usize);
    while count < 100_000 {
        for v in warmup_sample(&topo, &mut rng).iter_values() {
            sum += v;
            count += 1;
        }
    }
    let mean = sum / count as f64;

    let mut b = BaselineTracker::new(0.95);
    let rewards = [0.3, -1.0, 0.7, 0.25, 1.5];
    let mut hand = rewards[0];
    let mut ema_err: f64 = 0.0;
    for (i, r) in rewards.iter().enumerate() {
        b.update(*r);
        if i > 0 {
            hand = 0.95 * hand + 0.05 * r;
        }
        ema_err = ema_err.max((b.value().unwrap() - hand).abs());
    }

    let (mut decreasing, mut monotone) = (0, 0);
    for seed in 0..5 {
        let mut agent = Agent::new(
            AgentConfig {
                seed,
                episodes: 200,
                ..AgentConfig::default()
            },
            &topo,
            &tech,
        )
        .unwrap();
        let mut rng = sub_rng(seed, 21);
        let batch: Vec<ReplayRecord> = (0..64)
            .map(|_| ReplayRecord {
                state: agent.state().clone(),
                action: warmup_sample(&topo, &mut rng),
                reward: rng.random_range(-1.0..1.0),
            })
            .collect();
        // Loss before step k is losses[k - 1].
        let losses: Vec<f64> = (0..50).map(|_| agent.critic_step(&batch, 0.1).unwrap()).collect();
        if losses[49] < losses[0] {
            decreasing += 1;
        }
        if losses.windows(2).all(|w| w[1] < w[0]) {
            monotone += 1;
        }
    }
    outcome(
        mean.abs() <= 0.01 && ema_err <= 1e-12 && decreasing >= 4,
        format!(
            "warm-up mean {mean:+.5} over 10^5 draws; EMA error {ema_err:.1e}; critic loss at step 50 below step 1 for {decreasing}/5 seeds (every step lower for {monotone}/5)"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn rl_config(seed: u64, episodes: usize, warmup: usize) -> AgentConfig {
    AgentConfig {
        seed,
        episodes,
        warmup,
        ..AgentConfig::default()
    }
}

fn c6_ordering() -> Outcome {
    const BUDGET: usize = 3000;
    let tech = tech("n180");
    let topo = netlist("quad6").topology;
    let bench =
        SyntheticBenchmark::with_random_target(BenchmarkKind::GraphQuadratic, DEFAULT_COUPLING, &topo, &tech, 0).unwrap();
    let fom = calibrated("score", &bench, &topo, &tech);
    let score = |r: &gcn_sizer_core::SearchResult| evaluate_synthetic(&bench, &topo, &r.best_design).unwrap()["Score"];

    let (mut gcn, mut ng, mut rnd) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5 {
        for (ng_mode, out) in [(false, &mut gcn), (true, &mut ng)] {
            let cfg = AgentConfig {
                ng_mode,
                ..rl_config(seed, BUDGET, 100)
            };
            let mut agent = Agent::new(cfg, &topo, &tech).unwrap();
            let mut p = SizingProblem::new(&topo, &tech, &bench, &fom).unwrap();
            out.push(score(&agent.train(&mut p).unwrap()));
        }
        let mut p = SizingProblem::new(&topo, &tech, &bench, &fom).unwrap();
        rnd.push(score(&random_search(&mut p, BUDGET, seed).unwrap()));
    }

    let mut rng = sub_rng(6, 20);
    let (mut total, mut best) = (0.0, f64::NEG_INFINITY);
    for _ in 0..100_000 {
        let d = action_to_design(&warmup_sample(&topo, &mut rng), &topo, &tech).unwrap();
        let s = evaluate_synthetic(&bench, &topo, &d).unwrap()["Score"];
        total += s;
        best = best.max(s);
    }
    let mean = total / 100_000.0;
    let (mg, mn, mr) = (median(gcn.clone()), median(ng.clone()), median(rnd.clone()));
    let closed = (mg - mean) / (0.0 - mean);
    outcome(
        mg >= mn && mn >= mr && closed >= 0.95,
        format!(
            "median Score gcn {mg:.5} ng {mn:.5} random {mr:.5}; gcn closes {:.2}% of the gap from the sample mean {mean:.3} to 0 (brute-force best of 10^5: {best:.4}); gcn {} ng {} random {}",
            100.0 * closed,
            fmt_list(&gcn),
            fmt_list(&ng),
            fmt_list(&rnd)
        ),
    )
}

// ---------------------------------------------------------------- 7

fn c7_ablation() -> Outcome {
    let tech = tech("n180");
    let topo = netlist("quad6").topology;
    let bench =
        SyntheticBenchmark::with_random_target(BenchmarkKind::GraphQuadratic, DEFAULT_COUPLING, &topo, &tech, 0).unwrap();
    let fom = calibrated("score", &bench, &topo, &tech);
    let mut identical = 0;
    for seed in 0..3 {
        let run = |ng_mode: bool| {
            let cfg = AgentConfig {
                ng_mode,
                ..rl_config(seed, 400, 100)
            };
            let mut agent = Agent::new(cfg, &topo, &tech).unwrap();
            if !ng_mode {
                agent.set_propagation(Matrix::identity(topo.len())).unwrap();
            }
            let mut p = SizingProblem::new(&topo, &tech, &bench, &fom).unwrap();
            let r = agent.train(&mut p).unwrap();
            let mut csv = Vec::new();
            write_trace(&mut csv, &r.trace).unwrap();
            (r, csv, agent.checkpoint().actor)
        };
        let (a, b) = (run(false), run(true));
        let bits = |r: &gcn_sizer_core::SearchResult| r.trace.steps.iter().map(|s| s.fom.to_bits()).collect::<Vec<_>>();
        if a.0 == b.0 && bits(&a.0) == bits(&b.0) && a.1 == b.1 && a.2 == b.2 {
            identical += 1;
        }
    }
    outcome(
        identical == 3,
        format!("{identical}/3 seeds give bit-identical traces and actor weights over 400 episodes"),
    )
}

// ---------------------------------------------------------------- 8, 9

const TRANSFER: (usize, usize) = (300, 100);
const PRETRAIN: usize = 2000;

fn pretrain(topo: &CircuitTopology, tech: &TechnologyNode, backend: &dyn SimulatorBackend, fom: &FomConfig, encoding: EncodingMode) -> AgentCheckpoint {
    let cfg = AgentConfig {
        encoding,
        ..rl_config(0, PRETRAIN, 100)
    };
    let mut agent = Agent::new(cfg, topo, tech).unwrap();
    let mut p = SizingProblem::new(topo, tech, backend, fom).unwrap();
    agent.train(&mut p).unwrap();
    agent.checkpoint()
}

/// Median best FoM over seeds 0..5 with and without the checkpoint.
fn transfer_vs_fresh(
    ckpt: &AgentCheckpoint,
    topo: &CircuitTopology,
    tech: &TechnologyNode,
    backend: &dyn SimulatorBackend,
    fom: &FomConfig,
) -> (Vec<f64>, Vec<f64>) {
    let (episodes, warmup) = TRANSFER;
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let mut p = SizingProblem::new(topo, tech, backend, fom).unwrap();
        let cfg = AgentConfig {
            seed,
            ..AgentConfig::default()
        };
        with.push(transfer_run(ckpt, &mut p, episodes, warmup, cfg).unwrap().0.best_fom);
        let cfg = AgentConfig {
            encoding: ckpt.encoding,
            ..rl_config(seed, episodes, warmup)
        };
        let mut agent = Agent::new(cfg, topo, tech).unwrap();
        let mut p = SizingProblem::new(topo, tech, backend, fom).unwrap();
        without.push(agent.train(&mut p).unwrap().best_fom);
    }
    (with, without)
}

fn c8_node_transfer() -> Outcome {
    let net = netlist("two_tia");
    let model = amp_model(&net);
    let source = tech("n180");
    let fom = calibrated("amp", &model, &net.topology, &source);
    let ckpt = pretrain(&net.topology, &source, &model, &fom, EncodingMode::OneHotIndex);
    let mut wins = 0;
    let mut lines = Vec::new();
    for node in ["n45", "n65", "n130", "n250"] {
        let target = tech(node);
        let fom = calibrated("amp", &model, &net.topology, &target);
        let (with, without) = transfer_vs_fresh(&ckpt, &net.topology, &target, &model, &fom);
        let (mw, mf) = (median(with), median(without));
        if mw >= mf {
            wins += 1;
        }
        lines.push(format!("{node} {mw:.4} vs {mf:.4}"));
    }
    outcome(
        wins >= 3,
        format!("transfer median >= fresh on {wins}/4 nodes ({})", lines.join(", ")),
    )
}

fn c9_topology_transfer() -> Outcome {
    let tech = tech("n180");
    let (two, three) = (netlist("two_tia"), netlist("three_tia"));
    let (m2, m3) = (amp_model(&two), amp_model(&three));
    let f2 = calibrated("amp", &m2, &two.topology, &tech);
    let f3 = calibrated("amp_three_stage", &m3, &three.topology, &tech);

    let scalar = pretrain(&two.topology, &tech, &m2, &f2, EncodingMode::ScalarIndex);
    let (with, without) = transfer_vs_fresh(&scalar, &three.topology, &tech, &m3, &f3);
    let (mw, mf) = (median(with.clone()), median(without.clone()));

    // The one-hot agent only needs its shape; a short run is enough.
    let cfg = AgentConfig {
        encoding: EncodingMode::OneHotIndex,
        ..rl_config(0, 20, 10)
    };
    let onehot = Agent::new(cfg, &two.topology, &tech).unwrap().checkpoint();
    let mut p = SizingProblem::new(&three.topology, &tech, &m3, &f3).unwrap();
    let rejected = matches!(
        transfer_run(&onehot, &mut p, TRANSFER.0, TRANSFER.1, AgentConfig::default()),
        Err(AgentError::Dimension(_))
    );
    outcome(
        mw > mf && rejected,
        format!(
            "two_tia -> three_tia median best FoM {mw:.4} with transfer vs {mf:.4} fresh ({} vs {}); one-hot checkpoint {}",
            fmt_list(&with),
            fmt_list(&without),
            if rejected { "rejected with a dimension error" } else { "NOT rejected" }
        ),
    )
}

// ---------------------------------------------------------------- 10

fn c10_determinism() -> Outcome {
    let tech = tech("n180");
    let net = netlist("two_tia");
    let model = amp_model(&net);
    let topo = &net.topology;
    let fom = calibrated("amp", &model, topo, &tech);

    let run = |seed: u64| {
        let mut agent = Agent::new(rl_config(seed, 300, 100), topo, &tech).unwrap();
        let mut p = SizingProblem::new(topo, &tech, &model, &fom).unwrap();
        let r = agent.train(&mut p).unwrap();
        let mut csv = Vec::new();
        write_trace(&mut csv, &r.trace).unwrap();
        (csv, agent)
    };
    let (csv_a, agent) = run(7);
    let (csv_b, _) = run(7);
    let traces_equal = csv_a == csv_b;

    let json = serde_json::to_string(&agent.checkpoint()).unwrap();
    let loaded: AgentCheckpoint = serde_json::from_str(&json).unwrap();
    let restored = Agent::from_checkpoint(&loaded, topo, &tech, agent.config().clone()).unwrap();
    let a = agent.greedy_action().unwrap();
    let b = restored.greedy_action().unwrap();
    let bits = |m: &ActionMatrix| m.iter_values().map(f64::to_bits).collect::<Vec<_>>();
    let mut noisy_equal = true;
    for s in 0..10 {
        let mut r1 = sub_rng(s, 22);
        let mut r2 = sub_rng(s, 22);
        let x = act(agent.actor(), agent.state(), agent.propagation(), &topo.kinds(), Some((agent.noise(), &mut r1)));
        let y = act(restored.actor(), restored.state(), restored.propagation(), &topo.kinds(), Some((agent.noise(), &mut r2)));
        noisy_equal &= bits(&x.unwrap()) == bits(&y.unwrap());
    }
    let actions_equal = bits(&a) == bits(&b) && noisy_equal;

    let fixtures: Vec<Netlist> = ["two_tia", "three_tia", "two_volt", "ldo", "quad6"].iter().map(|n| netlist(n)).collect();
    let mut rng = sub_rng(10, 20);
    let mut round_trips = 0;
    for i in 0..100 {
        let net = &fixtures[i % fixtures.len()];
        let raw = warmup_sample(&net.topology, &mut rng);
        let design = action_to_design(&raw, &net.topology, &tech).unwrap();
        let text = export_netlist(&net.topology, &net.stages, Some(&design));
        let back = parse_netlist(net.topology.name(), &text).unwrap();
        let same_values = back
            .design
            .as_ref()
            .is_some_and(|d| d.iter_values().map(f64::to_bits).eq(design.iter_values().map(f64::to_bits)));
        if back.topology == net.topology && back.stages == net.stages && same_values {
            round_trips += 1;
        }
    }
    outcome(
        traces_equal && actions_equal && round_trips == 100,
        format!(
            "trace CSV byte-identical: {traces_equal}; checkpoint JSON round trip bit-identical actions: {actions_equal}; export/parse identity {round_trips}/100"
        ),
    )
}
