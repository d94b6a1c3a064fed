//! Design, checkpoint and trace files.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gcn_sizer_core::{AgentCheckpoint, CircuitTopology, DesignPoint, SearchTrace, TraceStep};

pub const TRACE_HEADER: [&str; 4] = ["step", "fom", "best_fom", "design_hash"];

/// Component name → parameter token → value.
pub type DesignDoc = BTreeMap<String, BTreeMap<String, f64>>;

pub fn design_to_doc(topology: &CircuitTopology, design: &DesignPoint) -> DesignDoc {
    topology
        .components()
        .iter()
        .map(|c| {
            let params = c
                .kind
                .param_names()
                .iter()
                .zip(design.row(c.id))
                .map(|(p, v)| (p.token().to_string(), *v))
                .collect();
            (c.name.clone(), params)
        })
        .collect()
}

pub fn design_from_doc(topology: &CircuitTopology, doc: &DesignDoc) -> Result<DesignPoint> {
    if let Some(extra) = doc.keys().find(|k| topology.find(k).is_none()) {
        bail!("design names unknown component `{extra}`");
    }
    let rows = topology
        .components()
        .iter()
        .map(|c| {
            let params = doc
                .get(&c.name)
                .ok_or_else(|| anyhow!("design is missing component `{}`", c.name))?;
            if params.len() != c.kind.arity() {
                bail!("component `{}` needs exactly {} parameters", c.name, c.kind.arity());
            }
            c.kind
                .param_names()
                .iter()
                .map(|p| {
                    params
                        .get(p.token())
                        .copied()
                        .ok_or_else(|| anyhow!("component `{}` is missing `{}`", c.name, p.token()))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DesignPoint(rows))
}

pub fn write_design(path: &Path, topology: &CircuitTopology, design: &DesignPoint) -> Result<()> {
    let text = serde_json::to_string_pretty(&design_to_doc(topology, design))?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_design(path: &Path, topology: &CircuitTopology) -> Result<DesignPoint> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: DesignDoc = serde_json::from_str(&text).with_context(|| format!("design file {}", path.display()))?;
    design_from_doc(topology, &doc)
}

pub fn write_checkpoint(path: &Path, ckpt: &AgentCheckpoint) -> Result<()> {
    let text = serde_json::to_string(ckpt)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> Result<AgentCheckpoint> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("checkpoint file {}", path.display()))
}

pub fn write_trace<W: Write>(out: W, trace: &SearchTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for s in &trace.steps {
        w.write_record([
            s.step.to_string(),
            s.fom.to_string(),
            s.best_fom.to_string(),
            s.design_hash.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<SearchTrace> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        bail!("expected header {}", TRACE_HEADER.join(","));
    }
    let mut steps = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| anyhow!("row {row}: bad {} `{}`", TRACE_HEADER[k], &rec[k]))
        };
        steps.push(TraceStep {
            step: rec[0].parse().map_err(|_| anyhow!("row {row}: bad step `{}`", &rec[0]))?,
            fom: num(1)?,
            best_fom: num(2)?,
            design_hash: rec[3].to_string(),
        });
    }
    if steps.is_empty() {
        bail!("trace has no rows");
    }
    Ok(SearchTrace { steps })
}
