//! Line-oriented netlist format.
//!
//! ```text
//! # comment
//! .global vdd gnd
//! .stage M1 R1 C1
//! M1 nmos in x gnd group=inpair
//! param M1 W=2.2e-6m L=180e-9m M=2
//! ```
//!
//! Component lines are `<name> <nmos|pmos|res|cap> <net>+ [group=<label>]`.
//! `.stage` lists a driving transistor followed by its loads and is only read
//! by the analytical backend. `param` lines carry a design point, one value
//! per parameter with its unit appended.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use gcn_sizer_core::{CircuitError, CircuitTopology, ComponentDecl, ComponentKind, DesignPoint, ParamName};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Topology(#[from] CircuitError),
    #[error("param lines cover {covered} of {total} components")]
    PartialDesign { covered: usize, total: usize },
}

fn syntax(line: usize, message: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub topology: CircuitTopology,
    /// `(driver, loads)` by component name, in file order.
    pub stages: Vec<(String, Vec<String>)>,
    /// Present when every component has a `param` line.
    pub design: Option<DesignPoint>,
}

pub fn parse_netlist(name: &str, text: &str) -> Result<Netlist, NetlistError> {
    let mut decls: Vec<ComponentDecl> = Vec::new();
    let mut globals: Vec<String> = Vec::new();
    let mut stages = Vec::new();
    let mut params: Vec<(usize, String, Vec<(String, String)>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().expect("non-empty line");
        match head {
            ".global" => {
                let nets: Vec<String> = tokens.map(String::from).collect();
                if nets.is_empty() {
                    return Err(syntax(line_no, ".global needs at least one net"));
                }
                globals.extend(nets);
            }
            ".stage" => {
                let members: Vec<String> = tokens.map(String::from).collect();
                let Some((driver, loads)) = members.split_first() else {
                    return Err(syntax(line_no, ".stage needs a driver"));
                };
                stages.push((driver.clone(), loads.to_vec()));
            }
            "param" => {
                let comp = tokens
                    .next()
                    .ok_or_else(|| syntax(line_no, "param line needs a component name"))?;
                let mut values = Vec::new();
                for t in tokens {
                    let (k, v) = t
                        .split_once('=')
                        .ok_or_else(|| syntax(line_no, format!("expected key=value, got `{t}`")))?;
                    values.push((k.to_string(), v.to_string()));
                }
                params.push((line_no, comp.to_string(), values));
            }
            d if d.starts_with('.') => return Err(syntax(line_no, format!("unknown directive `{d}`"))),
            comp => {
                let kind_tok = tokens
                    .next()
                    .ok_or_else(|| syntax(line_no, format!("component `{comp}` has no kind")))?;
                let kind = ComponentKind::from_token(kind_tok)
                    .ok_or_else(|| syntax(line_no, format!("unknown component kind `{kind_tok}`")))?;
                let mut nets = Vec::new();
                let mut group = None;
                for t in tokens {
                    match t.strip_prefix("group=") {
                        Some("") => return Err(syntax(line_no, "empty group label")),
                        Some(g) if group.is_none() => group = Some(g),
                        Some(_) => return Err(syntax(line_no, "more than one group label")),
                        None if t.contains('=') => return Err(syntax(line_no, format!("unexpected `{t}`"))),
                        None => nets.push(t),
                    }
                }
                if nets.is_empty() {
                    return Err(syntax(line_no, format!("component `{comp}` has no nets")));
                }
                if decls.iter().any(|d| d.name == comp) {
                    return Err(syntax(line_no, format!("duplicate component name `{comp}`")));
                }
                let mut decl = ComponentDecl::new(comp, kind, &nets);
                if let Some(g) = group {
                    decl = decl.grouped(g);
                }
                decls.push(decl);
            }
        }
    }

    let topology = CircuitTopology::new(name, decls, &globals)?;
    let design = design_from_params(&topology, &params)?;
    Ok(Netlist {
        topology,
        stages,
        design,
    })
}

fn design_from_params(
    topology: &CircuitTopology,
    params: &[(usize, String, Vec<(String, String)>)],
) -> Result<Option<DesignPoint>, NetlistError> {
    if params.is_empty() {
        return Ok(None);
    }
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; topology.len()];
    for (line, comp, values) in params {
        let c = topology
            .find(comp)
            .ok_or_else(|| syntax(*line, format!("param line for unknown component `{comp}`")))?;
        if rows[c.id].is_some() {
            return Err(syntax(*line, format!("second param line for `{comp}`")));
        }
        let names = c.kind.param_names();
        let mut row = vec![f64::NAN; names.len()];
        let mut seen = BTreeSet::new();
        for (key, text) in values {
            let pos = names
                .iter()
                .position(|p| p.token() == key)
                .ok_or_else(|| syntax(*line, format!("`{key}` is not a parameter of {}", c.kind)))?;
            if !seen.insert(pos) {
                return Err(syntax(*line, format!("`{key}` given twice")));
            }
            row[pos] = parse_value(names[pos], text).ok_or_else(|| syntax(*line, format!("bad value `{text}` for {key}")))?;
        }
        if seen.len() != names.len() {
            return Err(syntax(*line, format!("`{comp}` needs values for all of {}", tokens(names))));
        }
        rows[c.id] = Some(row);
    }
    let covered = rows.iter().filter(|r| r.is_some()).count();
    if covered != topology.len() {
        return Err(NetlistError::PartialDesign {
            covered,
            total: topology.len(),
        });
    }
    Ok(Some(DesignPoint(rows.into_iter().map(Option::unwrap).collect())))
}

fn tokens(names: &[ParamName]) -> String {
    names.iter().map(|p| p.token()).collect::<Vec<_>>().join(", ")
}

fn parse_value(name: ParamName, text: &str) -> Option<f64> {
    let number = text.strip_suffix(name.unit()).unwrap_or(text);
    number.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Shortest round-trip decimal with the exponent moved to a multiple of 3.
pub fn engineering(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let sci = format!("{value:e}");
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let shift = exp.rem_euclid(3) as usize;
    let eng_exp = exp - shift as i32;
    let mut int_part: String = digits.chars().take(shift + 1).collect();
    while int_part.len() < shift + 1 {
        int_part.push('0');
    }
    let frac: String = digits.chars().skip(shift + 1).collect();
    let mut out = format!("{sign}{int_part}");
    if !frac.is_empty() {
        out.push('.');
        out.push_str(&frac);
    }
    if eng_exp != 0 {
        let _ = write!(out, "e{eng_exp}");
    }
    out
}

/// Writes the topology (with `.stage` lines when given) and, optionally, a
/// design as `param` lines.
pub fn export_netlist(
    topology: &CircuitTopology,
    stages: &[(String, Vec<String>)],
    design: Option<&DesignPoint>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", topology.name());
    if !topology.global_nets().is_empty() {
        let _ = writeln!(out, ".global {}", topology.global_nets().join(" "));
    }
    for (driver, loads) in stages {
        let mut line = format!(".stage {driver}");
        for l in loads {
            line.push(' ');
            line.push_str(l);
        }
        let _ = writeln!(out, "{line}");
    }
    for c in topology.components() {
        let _ = write!(out, "{} {} {}", c.name, c.kind.token(), c.nets.join(" "));
        if let Some(g) = &c.matching_group {
            let _ = write!(out, " group={g}");
        }
        out.push('\n');
    }
    if let Some(d) = design {
        for c in topology.components() {
            let _ = write!(out, "param {}", c.name);
            for (p, v) in c.kind.param_names().iter().zip(d.row(c.id)) {
                let _ = write!(out, " {}={}{}", p.token(), engineering(*v), p.unit());
            }
            out.push('\n');
        }
    }
    out
}
