//! Mapping from raw agent actions in `[-1, 1]` to legal device parameters:
//! denormalization, matching, grid rounding and bound truncation.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitTopology, TechnologyNode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid spec for {name}: {reason}")]
    InvalidSpec { name: ParamName, reason: &'static str },
    #[error("row count {got} does not match topology size {expected}")]
    RowCount { expected: usize, got: usize },
    #[error("component {component}: expected {expected} values, got {got}")]
    RowArity {
        component: usize,
        expected: usize,
        got: usize,
    },
    #[error("component {component}: non-finite value")]
    NonFinite { component: usize },
}

/// Sizing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamName {
    W,
    L,
    M,
    #[serde(rename = "r")]
    R,
    #[serde(rename = "c")]
    C,
}

impl ParamName {
    pub fn token(self) -> &'static str {
        match self {
            Self::W => "W",
            Self::L => "L",
            Self::M => "M",
            Self::R => "r",
            Self::C => "c",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        [Self::W, Self::L, Self::M, Self::R, Self::C]
            .into_iter()
            .find(|p| p.token() == s)
    }

    /// Log for quantities spanning decades (W, r, c), linear otherwise.
    pub fn default_scale(self) -> Scale {
        match self {
            Self::W | Self::R | Self::C => Scale::Log,
            Self::L | Self::M => Scale::Linear,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::W | Self::L => "m",
            Self::M => "",
            Self::R => "ohm",
            Self::C => "F",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// Bounds, grid step and mapping scale of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: ParamName,
    pub lower: f64,
    pub upper: f64,
    pub precision: f64,
    pub scale: Scale,
}

impl ParamSpec {
    pub fn new(name: ParamName, lower: f64, upper: f64, precision: f64, scale: Scale) -> Result<Self, ParamError> {
        let bad = |reason| Err(ParamError::InvalidSpec { name, reason });
        if !(lower.is_finite() && upper.is_finite() && precision.is_finite()) {
            return bad("non-finite field");
        }
        if lower >= upper {
            return bad("lower must be below upper");
        }
        if precision <= 0.0 {
            return bad("precision must be positive");
        }
        if scale == Scale::Log && lower <= 0.0 {
            return bad("log scale needs a positive lower bound");
        }
        Ok(Self {
            name,
            lower,
            upper,
            precision,
            scale,
        })
    }

    /// Maps `raw ∈ [-1, 1]` onto `[lower, upper]` without rounding. Inputs
    /// outside the interval are clamped.
    pub fn denormalize(&self, raw: f64) -> f64 {
        let raw = if (-1.0..=1.0).contains(&raw) {
            raw
        } else {
            log::warn!("raw action {raw} for {} outside [-1, 1]; clamping", self.name);
            raw.clamp(-1.0, 1.0)
        };
        let t = (raw + 1.0) / 2.0;
        match self.scale {
            Scale::Linear => self.lower + t * (self.upper - self.lower),
            Scale::Log => self.lower * libm::exp(t * libm::log(self.upper / self.lower)),
        }
    }

    /// Inverse of [`ParamSpec::denormalize`] for values inside the bounds.
    pub fn normalize(&self, value: f64) -> f64 {
        let t = match self.scale {
            Scale::Linear => (value - self.lower) / (self.upper - self.lower),
            Scale::Log => libm::log(value / self.lower) / libm::log(self.upper / self.lower),
        };
        2.0 * t - 1.0
    }

    /// Largest grid index whose point does not exceed `upper`.
    pub fn max_grid_index(&self) -> f64 {
        let mut k = libm::floor((self.upper - self.lower) / self.precision + 1e-9);
        while k > 0.0 && self.grid_point(k) > self.upper {
            k -= 1.0;
        }
        k
    }

    #[inline]
    pub fn grid_point(&self, index: f64) -> f64 {
        self.lower + index * self.precision
    }

    /// Grid index nearest to `value` (unclamped).
    pub fn nearest_index(&self, value: f64) -> f64 {
        libm::round((value - self.lower) / self.precision)
    }

    /// Rounds to the nearest grid point anchored at `lower`, then truncates to
    /// the grid points inside `[lower, upper]`.
    pub fn snap(&self, value: f64) -> f64 {
        let k = self.nearest_index(value).clamp(0.0, self.max_grid_index());
        self.grid_point(k)
    }

    /// Whether `value` is exactly a grid point inside the bounds.
    pub fn is_legal(&self, value: f64) -> bool {
        let k = self.nearest_index(value);
        k >= 0.0 && k <= self.max_grid_index() && self.grid_point(k) == value
    }
}

pub fn denormalize(raw: f64, spec: &ParamSpec) -> f64 {
    spec.denormalize(raw)
}

macro_rules! component_rows {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<Vec<f64>>);

        impl $name {
            pub fn new(rows: Vec<Vec<f64>>) -> Self {
                Self(rows)
            }

            pub fn rows(&self) -> &[Vec<f64>] {
                &self.0
            }

            pub fn row(&self, k: usize) -> &[f64] {
                &self.0[k]
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
                self.0.iter().flatten().copied()
            }

            /// Zero-filled rows shaped for `topology`.
            pub fn zeros_for(topology: &CircuitTopology) -> Self {
                Self(
                    topology
                        .components()
                        .iter()
                        .map(|c| alloc::vec![0.0; c.kind.arity()])
                        .collect(),
                )
            }

            pub fn check_shape(&self, topology: &CircuitTopology) -> Result<(), ParamError> {
                check_rows(&self.0, topology)
            }
        }
    };
}

component_rows!(
    /// Raw agent output: one row per component, entries in `[-1, 1]`.
    ActionMatrix
);

component_rows!(
    /// Device parameters, one row per component (`W, L, M` for transistors,
    /// `r` or `c` for passives), in technology-file units.
    DesignPoint
);

fn check_rows(rows: &[Vec<f64>], topology: &CircuitTopology) -> Result<(), ParamError> {
    if rows.len() != topology.len() {
        return Err(ParamError::RowCount {
            expected: topology.len(),
            got: rows.len(),
        });
    }
    for (c, row) in topology.components().iter().zip(rows) {
        if row.len() != c.kind.arity() {
            return Err(ParamError::RowArity {
                component: c.id,
                expected: c.kind.arity(),
                got: row.len(),
            });
        }
    }
    Ok(())
}

/// Enforces matching (lowest-id representative), then grid rounding, then
/// bound truncation, in that order.
pub fn refine(design: &DesignPoint, topology: &CircuitTopology, tech: &TechnologyNode) -> Result<DesignPoint, ParamError> {
    design.check_shape(topology)?;
    let mut out = design.clone();
    for members in topology.matching_groups().values() {
        let rep = out.0[members[0]].clone();
        for &m in &members[1..] {
            out.0[m].clone_from(&rep);
        }
    }
    for c in topology.components() {
        let specs = tech.param_specs(c.kind);
        for (v, spec) in out.0[c.id].iter_mut().zip(specs) {
            if !v.is_finite() {
                return Err(ParamError::NonFinite { component: c.id });
            }
            *v = spec.snap(*v);
        }
    }
    Ok(out)
}

/// Denormalizes every raw entry with its kind's spec, then refines.
pub fn action_to_design(
    raw: &ActionMatrix,
    topology: &CircuitTopology,
    tech: &TechnologyNode,
) -> Result<DesignPoint, ParamError> {
    raw.check_shape(topology)?;
    let rows = topology
        .components()
        .iter()
        .map(|c| {
            raw.row(c.id)
                .iter()
                .zip(tech.param_specs(c.kind))
                .map(|(r, s)| s.denormalize(*r))
                .collect()
        })
        .collect();
    refine(&DesignPoint(rows), topology, tech)
}

/// Maps a legal design back to normalized coordinates in `[-1, 1]`.
pub fn design_to_normalized(design: &DesignPoint, topology: &CircuitTopology, tech: &TechnologyNode) -> ActionMatrix {
    ActionMatrix(
        topology
            .components()
            .iter()
            .map(|c| {
                design
                    .row(c.id)
                    .iter()
                    .zip(tech.param_specs(c.kind))
                    .map(|(v, s)| s.normalize(*v))
                    .collect()
            })
            .collect(),
    )
}
