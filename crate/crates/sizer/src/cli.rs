//! Subcommands. Exit status 1 means bad input or configuration, 2 means the
//! backend or the optimizer failed at run time.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gcn_sizer_core::agent::{streams, sub_rng};
use gcn_sizer_core::fom::calibrate_normalizers;
use gcn_sizer_core::sim::DEFAULT_COUPLING;
use gcn_sizer_core::{
    es_optimize, random_search, transfer_run, Agent, AgentConfig, AgentError, AmpConstants, AnalyticalAmpModel,
    BenchmarkKind, EncodingMode, EsConfig, FomError, PipelineError, SearchError, SearchResult, SimulatorBackend,
    SizingProblem, SyntheticBenchmark, TechnologyNode,
};
use rand::RngCore;
use serde_json::json;

use crate::artifacts::{read_checkpoint, read_trace, write_checkpoint, write_design, write_trace};
use crate::external::{AdapterConfig, ExternalBackend};
use crate::fomfile::FomFile;
use crate::netlist::{export_netlist, parse_netlist, Netlist};
use crate::report::{merge, svg_plot};
use crate::tech::load_tech;

#[derive(Debug, Parser)]
#[command(name = "gcn-sizer", version, about = "Graph-convolutional RL transistor sizing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one circuit from scratch.
    Size(SizeArgs),
    /// Fill in FoM normalizers by random sampling.
    Calibrate(CalibrateArgs),
    /// Continue from a trained checkpoint on a new circuit or node.
    Transfer(TransferArgs),
    /// Merge trace files into best-so-far curves.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    GcnRl,
    NgRl,
    Es,
    Random,
    Bo,
    Mace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Analytical,
    Synthetic,
    Sphere,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Encoding {
    OneHot,
    Scalar,
}

impl From<Encoding> for EncodingMode {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::OneHot => EncodingMode::OneHotIndex,
            Encoding::Scalar => EncodingMode::ScalarIndex,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub netlist: PathBuf,
    #[arg(long)]
    pub tech: PathBuf,
    #[arg(long)]
    pub fom: PathBuf,
    #[arg(long, value_enum, default_value = "analytical")]
    pub backend: BackendKind,
    /// Adapter file for the external backend.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    /// Seed of the synthetic optimum; derived from --seed when absent.
    #[arg(long)]
    pub target_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "gcn-rl")]
    pub algo: Algo,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "one-hot")]
    pub encoding: Encoding,
    /// TOML overriding agent hyperparameters (hidden, gcn_layers, ...).
    #[arg(long)]
    pub agent_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving the calibrated `fom.toml`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub agent_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Backend(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Backend(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Self::Config(e) | Self::Backend(e) => e,
        }
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn backend<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Backend(e.into())
}

fn from_pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::Backend(_) => backend(e),
        PipelineError::Param(_) | PipelineError::UnknownMetric { .. } => config(e),
    }
}

fn from_agent(e: AgentError) -> Failure {
    match e {
        AgentError::Config(_) | AgentError::Dimension(_) | AgentError::Checkpoint(_) => config(e),
        AgentError::Pipeline(p) => from_pipeline(p),
        AgentError::Nn(_) | AgentError::NonFiniteLoss { .. } => backend(e),
    }
}

fn from_search(e: SearchError) -> Failure {
    match e {
        SearchError::Config(_) => config(e),
        SearchError::AllFailed(_) => backend(e),
        SearchError::Pipeline(p) => from_pipeline(p),
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Size(a) => cmd_size(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Transfer(a) => cmd_transfer(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Parsed inputs shared by the problem-based subcommands.
pub struct Loaded {
    pub netlist: Netlist,
    pub tech: TechnologyNode,
    pub fom: FomFile,
    pub backend: Box<dyn SimulatorBackend>,
    pub target_seed: Option<u64>,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "circuit".into())
}

pub fn load_problem(args: &ProblemArgs, seed: u64, work_dir: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&args.netlist)
        .with_context(|| format!("reading {}", args.netlist.display()))
        .map_err(config)?;
    let netlist = parse_netlist(&file_stem(&args.netlist), &text)
        .with_context(|| format!("netlist {}", args.netlist.display()))
        .map_err(config)?;
    let tech = load_tech(&args.tech).map_err(config)?;
    let fom = FomFile::load(&args.fom).map_err(config)?;
    let topo = &netlist.topology;
    let mut target_seed = None;
    let backend: Box<dyn SimulatorBackend> = match args.backend {
        BackendKind::Analytical => {
            if netlist.stages.is_empty() {
                return Err(config(anyhow!("the analytical backend needs `.stage` lines in the netlist")));
            }
            Box::new(AnalyticalAmpModel::from_names(topo, &netlist.stages, AmpConstants::default()).map_err(config)?)
        }
        BackendKind::Synthetic | BackendKind::Sphere => {
            let kind = if args.backend == BackendKind::Sphere {
                BenchmarkKind::Sphere
            } else {
                BenchmarkKind::GraphQuadratic
            };
            let s = args
                .target_seed
                .unwrap_or_else(|| sub_rng(seed, streams::BACKEND).next_u64());
            target_seed = Some(s);
            Box::new(SyntheticBenchmark::with_random_target(kind, DEFAULT_COUPLING, topo, &tech, s).map_err(config)?)
        }
        BackendKind::External => {
            let path = args
                .adapter
                .as_ref()
                .ok_or_else(|| config(anyhow!("--backend external needs --adapter")))?;
            let adapter = AdapterConfig::load(path).map_err(config)?;
            Box::new(ExternalBackend::new(adapter, &work_dir.join("sim")).map_err(config)?)
        }
    };
    if args.backend != BackendKind::External && args.adapter.is_some() {
        log::warn!("--adapter is ignored unless --backend external");
    }
    Ok(Loaded {
        netlist,
        tech,
        fom,
        backend,
        target_seed,
    })
}

/// Applies a TOML table of overrides to `base`.
pub fn agent_config(base: AgentConfig, path: Option<&Path>) -> Result<AgentConfig, Failure> {
    let Some(path) = path else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config)?;
    let overrides: toml::Table = toml::from_str(&text).map_err(config)?;
    let mut table = toml::Table::try_from(&base).map_err(config)?;
    for (k, v) in overrides {
        if !table.contains_key(&k) {
            return Err(config(anyhow!("unknown agent setting `{k}` in {}", path.display())));
        }
        table.insert(k, v);
    }
    table.try_into().map_err(config)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(config)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(backend)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(backend)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_outputs(out: &Path, loaded: &Loaded, result: &SearchResult) -> Result<(), Failure> {
    let topo = &loaded.netlist.topology;
    let trace_path = out.join("trace.csv");
    let f = File::create(&trace_path)
        .with_context(|| format!("writing {}", trace_path.display()))
        .map_err(backend)?;
    write_trace(BufWriter::new(f), &result.trace).map_err(backend)?;
    write_design(&out.join("best_design.json"), topo, &result.best_design).map_err(backend)?;
    let net = export_netlist(topo, &loaded.netlist.stages, Some(&result.best_design));
    std::fs::write(out.join("best_design.net"), net).map_err(backend)?;
    Ok(())
}

fn cmd_size(a: &SizeArgs) -> Result<(), Failure> {
    if matches!(a.algo, Algo::Bo | Algo::Mace) {
        return Err(config(anyhow!("--algo {:?} is not implemented", a.algo)));
    }
    let rl = matches!(a.algo, Algo::GcnRl | Algo::NgRl);
    if a.steps == 0 {
        return Err(config(anyhow!("--steps must be positive")));
    }
    if rl && a.steps <= a.warmup {
        return Err(config(anyhow!(
            "--steps ({}) must exceed --warmup ({})",
            a.steps,
            a.warmup
        )));
    }
    let cfg = agent_config(
        AgentConfig {
            episodes: a.steps,
            warmup: a.warmup,
            seed: a.seed,
            encoding: a.encoding.into(),
            ng_mode: a.algo == Algo::NgRl,
            ..AgentConfig::default()
        },
        a.agent_config.as_deref(),
    )?;
    create_out(&a.out)?;
    let loaded = load_problem(&a.problem, a.seed, &a.out)?;
    let fom = loaded.fom.to_config().map_err(config)?;
    let topo = &loaded.netlist.topology;
    let mut problem = SizingProblem::new(topo, &loaded.tech, loaded.backend.as_ref(), &fom).map_err(from_pipeline)?;

    let mut meta = json!({
        "command": "size",
        "netlist": a.problem.netlist,
        "tech": a.problem.tech,
        "fom": a.problem.fom,
        "backend": format!("{:?}", a.problem.backend).to_lowercase(),
        "adapter": a.problem.adapter,
        "target_seed": loaded.target_seed,
        "algo": a.algo.to_possible_value().map(|v| v.get_name().to_string()),
        "steps": a.steps,
        "warmup": a.warmup,
        "seed": a.seed,
        "encoding": cfg.encoding,
        "agent": if rl { serde_json::to_value(&cfg).map_err(backend)? } else { serde_json::Value::Null },
        "started_unix": unix_now(),
        "wall_time_secs": null,
    });
    write_json(&a.out.join("run_meta.json"), &meta)?;

    let start = Instant::now();
    let result = match a.algo {
        Algo::GcnRl | Algo::NgRl => {
            let mut agent = Agent::new(cfg, topo, &loaded.tech).map_err(from_agent)?;
            let r = agent.train(&mut problem).map_err(from_agent)?;
            write_checkpoint(&a.out.join("checkpoint.json"), &agent.checkpoint()).map_err(backend)?;
            r
        }
        Algo::Es => es_optimize(
            &mut problem,
            a.steps,
            EsConfig {
                seed: a.seed,
                ..EsConfig::default()
            },
        )
        .map_err(from_search)?,
        Algo::Random => random_search(&mut problem, a.steps, a.seed).map_err(from_search)?,
        Algo::Bo | Algo::Mace => unreachable!("rejected above"),
    };
    write_outputs(&a.out, &loaded, &result)?;
    meta["wall_time_secs"] = json!(start.elapsed().as_secs_f64());
    meta["best_fom"] = json!(result.best_fom);
    meta["failed_evaluations"] = json!(problem.failures());
    write_json(&a.out.join("run_meta.json"), &meta)?;
    log::info!("best FoM {} after {} evaluations", result.best_fom, result.trace.len());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), Failure> {
    create_out(&a.out)?;
    let loaded = load_problem(&a.problem, a.seed, &a.out)?;
    let available = loaded.backend.metric_names();
    if let Some(m) = loaded.fom.metric.iter().find(|m| !available.contains(&m.name)) {
        return Err(config(anyhow!(
            "FoM metric `{}` is not produced by the backend (available: {})",
            m.name,
            available.join(", ")
        )));
    }
    let ranges = calibrate_normalizers(
        loaded.backend.as_ref(),
        &loaded.netlist.topology,
        &loaded.tech,
        a.samples,
        a.seed,
    )
    .map_err(|e| match e {
        FomError::TooFewSamples(_) => config(e),
        _ => backend(e),
    })?;
    let wanted = loaded.fom.metric_names();
    let ranges = ranges.into_iter().filter(|(k, _)| wanted.contains(k)).collect();
    let calibrated = loaded.fom.with_ranges(&ranges);
    calibrated.to_config().map_err(backend)?;
    let path = a.out.join("fom.toml");
    std::fs::write(&path, calibrated.to_toml().map_err(backend)?)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(backend)?;
    for (name, (lo, hi)) in &ranges {
        log::info!("{name}: [{lo}, {hi}]");
    }
    Ok(())
}

fn cmd_transfer(a: &TransferArgs) -> Result<(), Failure> {
    if a.steps == 0 || a.warmup > a.steps {
        return Err(config(anyhow!(
            "transfer budget needs 0 < --steps and --warmup <= --steps, got ({}, {})",
            a.steps,
            a.warmup
        )));
    }
    let ckpt = read_checkpoint(&a.checkpoint).map_err(config)?;
    create_out(&a.out)?;
    let loaded = load_problem(&a.problem, a.seed, &a.out)?;
    let topo = &loaded.netlist.topology;
    ckpt.check_compatible(topo).map_err(from_agent)?;
    let fom = loaded.fom.to_config().map_err(config)?;
    let mut problem = SizingProblem::new(topo, &loaded.tech, loaded.backend.as_ref(), &fom).map_err(from_pipeline)?;
    let cfg = agent_config(
        AgentConfig {
            seed: a.seed,
            ..AgentConfig::default()
        },
        a.agent_config.as_deref(),
    )?;

    let mut meta = json!({
        "command": "transfer",
        "netlist": a.problem.netlist,
        "tech": a.problem.tech,
        "fom": a.problem.fom,
        "backend": format!("{:?}", a.problem.backend).to_lowercase(),
        "adapter": a.problem.adapter,
        "target_seed": loaded.target_seed,
        "steps": a.steps,
        "warmup": a.warmup,
        "seed": a.seed,
        "encoding": ckpt.encoding,
        "started_unix": unix_now(),
        "wall_time_secs": null,
    });
    write_json(&a.out.join("run_meta.json"), &meta)?;
    write_json(
        &a.out.join("transfer_meta.json"),
        &json!({
            "checkpoint": a.checkpoint,
            "source_topology": ckpt.source_topology,
            "source_components": ckpt.source_components,
            "target_topology": topo.name(),
            "target_components": topo.len(),
            "encoding": ckpt.encoding,
            "ng_mode": ckpt.ng_mode,
        }),
    )?;

    let start = Instant::now();
    let (result, agent) = transfer_run(&ckpt, &mut problem, a.steps, a.warmup, cfg).map_err(from_agent)?;
    write_checkpoint(&a.out.join("checkpoint.json"), &agent.checkpoint()).map_err(backend)?;
    write_outputs(&a.out, &loaded, &result)?;
    meta["wall_time_secs"] = json!(start.elapsed().as_secs_f64());
    meta["best_fom"] = json!(result.best_fom);
    meta["failed_evaluations"] = json!(problem.failures());
    write_json(&a.out.join("run_meta.json"), &meta)?;
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<(), Failure> {
    let mut labeled = Vec::new();
    for (i, path) in a.traces.iter().enumerate() {
        let f = File::open(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config)?;
        let trace = read_trace(f)
            .with_context(|| format!("trace {}", path.display()))
            .map_err(config)?;
        labeled.push((format!("run{}", i + 1), trace));
    }
    create_out(&a.out)?;
    let report = merge(&labeled);
    let csv_path = a.out.join("report.csv");
    std::fs::write(&csv_path, report.to_csv())
        .with_context(|| format!("writing {}", csv_path.display()))
        .map_err(backend)?;
    for ((label, _), (curve, path)) in labeled.iter().zip(report.curves.iter().zip(&a.traces)) {
        let title = format!("{label}: {}", path.display());
        std::fs::write(a.out.join(format!("{label}.svg")), svg_plot(&title, &[(label, curve)])).map_err(backend)?;
    }
    let mut all: Vec<(&str, &[f64])> = labeled
        .iter()
        .zip(&report.curves)
        .map(|((l, _), c)| (l.as_str(), c.as_slice()))
        .collect();
    all.push(("max", &report.merged));
    std::fs::write(a.out.join("report.svg"), svg_plot("best FoM so far", &all)).map_err(backend)?;
    Ok(())
}
