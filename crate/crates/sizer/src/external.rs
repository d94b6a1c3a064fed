//! Backend that shells out to an external simulator.
//!
//! Adapter file (TOML):
//!
//! ```toml
//! command = "ngspice-wrapper {netlist} {out}"
//! metrics = ["Gain", "BW", "Power"]
//! timeout_secs = 120
//! ```
//!
//! Per evaluation the adapter writes `design.net` (netlist plus `param`
//! lines) and `design.json` into its working directory, runs the command with
//! `{netlist}`, `{design}` and `{out}` substituted, and reads `metrics.txt`
//! (`<name> <value>` per line) from `{out}`.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use gcn_sizer_core::{CircuitTopology, DesignPoint, Metrics, SimError, SimulatorBackend};
use serde::Deserialize;
use wait_timeout::ChildExt;

use crate::artifacts::design_to_doc;
use crate::netlist::export_netlist;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub command: String,
    pub metrics: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    300
}

impl AdapterConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        if c.command.split_whitespace().next().is_none() {
            bail!("adapter command is empty");
        }
        if c.metrics.is_empty() {
            bail!("adapter must list the metrics it produces");
        }
        if c.timeout_secs == 0 {
            bail!("timeout_secs must be positive");
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("adapter file {}", path.display()))
    }
}

#[derive(Debug)]
pub struct ExternalBackend {
    config: AdapterConfig,
    work_dir: PathBuf,
    lock: Mutex<()>,
}

impl ExternalBackend {
    pub fn new(config: AdapterConfig, work_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(work_dir).with_context(|| format!("creating {}", work_dir.display()))?;
        Ok(Self {
            config,
            work_dir: work_dir.to_path_buf(),
            lock: Mutex::new(()),
        })
    }

    fn run(&self, topology: &CircuitTopology, design: &DesignPoint) -> Result<Metrics, SimError> {
        let io = |e: std::io::Error| SimError::Evaluation(format!("adapter I/O: {e}"));
        let netlist = self.work_dir.join("design.net");
        let design_file = self.work_dir.join("design.json");
        let out = self.work_dir.join("metrics.txt");
        std::fs::write(&netlist, export_netlist(topology, &[], Some(design))).map_err(io)?;
        let doc = serde_json::to_string_pretty(&design_to_doc(topology, design))
            .map_err(|e| SimError::Evaluation(e.to_string()))?;
        std::fs::write(&design_file, doc).map_err(io)?;
        match std::fs::remove_file(&out) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(io(e)),
            _ => {}
        }

        let argv: Vec<String> = self
            .config
            .command
            .split_whitespace()
            .map(|t| {
                t.replace("{netlist}", &netlist.to_string_lossy())
                    .replace("{design}", &design_file.to_string_lossy())
                    .replace("{out}", &out.to_string_lossy())
            })
            .collect();
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(&self.work_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SimError::Evaluation(format!("cannot start `{}`: {e}", argv[0])))?;
        let status = match child
            .wait_timeout(Duration::from_secs(self.config.timeout_secs))
            .map_err(io)?
        {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SimError::Timeout(self.config.timeout_secs));
            }
        };
        if !status.success() {
            return Err(SimError::Evaluation(format!("simulator exited with {status}")));
        }
        let text = std::fs::read_to_string(&out)
            .map_err(|e| SimError::Evaluation(format!("reading {}: {e}", out.display())))?;
        let metrics = parse_metrics(&text)?;
        if let Some(m) = self.config.metrics.iter().find(|m| !metrics.contains_key(*m)) {
            return Err(SimError::Evaluation(format!("simulator did not report `{m}`")));
        }
        Ok(metrics)
    }
}

/// `<name> <value>` lines; blank lines and `#` comments are skipped.
pub fn parse_metrics(text: &str) -> Result<Metrics, SimError> {
    let mut out = Metrics::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || SimError::Evaluation(format!("metrics line {}: `{line}`", i + 1));
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let value: f64 = value.parse().map_err(|_| bad())?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

impl SimulatorBackend for ExternalBackend {
    fn metric_names(&self) -> Vec<String> {
        self.config.metrics.clone()
    }

    fn evaluate(&self, topology: &CircuitTopology, design: &DesignPoint) -> Result<Metrics, SimError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        self.run(topology, design)
    }
}
