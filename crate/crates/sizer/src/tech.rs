//! Technology node files (TOML).
//!
//! ```toml
//! name = "n180"
//! [features.nmos]
//! v_sat = 8.0e4
//! v_th0 = 0.45
//! v_fb = -0.9
//! mu0 = 0.03
//! u_c = 1.0e-10
//! [params.nmos]
//! W = { lower = 2.2e-7, upper = 1.0e-4, precision = 1.0e-8, scale = "log" }
//! ```
//!
//! Feature blocks for `res` and `cap` may be omitted (they are zero). `scale`
//! defaults to log for W, r, c and linear for L, M.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gcn_sizer_core::params::Scale;
use gcn_sizer_core::{ComponentKind, DeviceModelFeatures, ParamName, ParamSpec, TechnologyNode};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TechFile {
    name: String,
    #[serde(default)]
    features: BTreeMap<String, DeviceModelFeatures>,
    params: BTreeMap<String, BTreeMap<String, SpecEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecEntry {
    lower: f64,
    upper: f64,
    precision: f64,
    scale: Option<Scale>,
}

fn kind(token: &str) -> Result<ComponentKind> {
    ComponentKind::from_token(token).ok_or_else(|| anyhow!("unknown component kind `{token}`"))
}

pub fn parse_tech(text: &str) -> Result<TechnologyNode> {
    let file: TechFile = toml::from_str(text)?;
    let mut features = BTreeMap::new();
    for (k, f) in file.features {
        features.insert(kind(&k)?, f);
    }
    for k in [ComponentKind::Resistor, ComponentKind::Capacitor] {
        features.entry(k).or_insert(DeviceModelFeatures::ZERO);
    }
    let mut specs = BTreeMap::new();
    for (k, entries) in file.params {
        let k = kind(&k)?;
        let mut list = Vec::new();
        for &p in k.param_names() {
            let e = entries
                .get(p.token())
                .ok_or_else(|| anyhow!("[params.{}] is missing `{}`", k.token(), p.token()))?;
            list.push(ParamSpec::new(p, e.lower, e.upper, e.precision, e.scale.unwrap_or(p.default_scale()))?);
        }
        if let Some(extra) = entries.keys().find(|key| ParamName::from_token(key).is_none_or(|p| !k.param_names().contains(&p))) {
            bail!("[params.{}] has unexpected parameter `{extra}`", k.token());
        }
        specs.insert(k, list);
    }
    Ok(TechnologyNode::new(&file.name, features, specs)?)
}

pub fn load_tech(path: &Path) -> Result<TechnologyNode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_tech(&text).with_context(|| format!("technology file {}", path.display()))
}
