#![allow(dead_code)]

use std::collections::BTreeMap;

use gcn_sizer_core::params::Scale;
use gcn_sizer_core::{
    CircuitTopology, ComponentDecl, ComponentKind, DeviceModelFeatures, ParamName, ParamSpec, TechnologyNode,
};

pub fn tech() -> TechnologyNode {
    let mut features = BTreeMap::new();
    features.insert(
        ComponentKind::Nmos,
        DeviceModelFeatures {
            v_sat: 8.0e4,
            v_th0: 0.45,
            v_fb: -0.9,
            mu0: 0.03,
            u_c: 1.0e-10,
        },
    );
    features.insert(
        ComponentKind::Pmos,
        DeviceModelFeatures {
            v_sat: 7.0e4,
            v_th0: -0.42,
            v_fb: 0.8,
            mu0: 0.011,
            u_c: -5.0e-11,
        },
    );
    features.insert(ComponentKind::Resistor, DeviceModelFeatures::ZERO);
    features.insert(ComponentKind::Capacitor, DeviceModelFeatures::ZERO);
    let mos = || {
        vec![
            ParamSpec::new(ParamName::W, 2.2e-7, 1.0e-4, 1.0e-8, Scale::Log).unwrap(),
            ParamSpec::new(ParamName::L, 1.8e-7, 2.0e-6, 1.0e-8, Scale::Linear).unwrap(),
            ParamSpec::new(ParamName::M, 1.0, 16.0, 1.0, Scale::Linear).unwrap(),
        ]
    };
    let mut specs = BTreeMap::new();
    specs.insert(ComponentKind::Nmos, mos());
    specs.insert(ComponentKind::Pmos, mos());
    specs.insert(
        ComponentKind::Resistor,
        vec![ParamSpec::new(ParamName::R, 100.0, 1.0e5, 1.0, Scale::Log).unwrap()],
    );
    specs.insert(
        ComponentKind::Capacitor,
        vec![ParamSpec::new(ParamName::C, 1.0e-14, 1.0e-11, 1.0e-15, Scale::Log).unwrap()],
    );
    TechnologyNode::new("t180", features, specs).unwrap()
}

/// Connected graph of `n` components with kinds cycling through all four
/// and a chord every third node.
pub fn mixed_topology(n: usize) -> CircuitTopology {
    let kinds = [ComponentKind::Nmos, ComponentKind::Pmos, ComponentKind::Resistor, ComponentKind::Capacitor];
    let decls = (0..n)
        .map(|i| {
            let mut nets = vec![format!("n{i}"), format!("n{}", i + 1)];
            if i % 3 == 2 {
                nets.push("n0".into());
            }
            let nets: Vec<&str> = nets.iter().map(String::as_str).collect();
            ComponentDecl::new(&format!("X{i}"), kinds[i % 4], &nets)
        })
        .collect();
    CircuitTopology::new(&format!("mixed{n}"), decls, &[]).unwrap()
}

/// `n` components with the given kinds, one private net each plus one net per
/// listed edge. Components sharing a `groups` label are matched.
pub fn graph_topology(kinds: &[ComponentKind], edges: &[(usize, usize)], groups: &[Option<&str>]) -> CircuitTopology {
    let decls = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut nets = vec![format!("p{i}")];
            for &(a, b) in edges {
                if a == i || b == i {
                    nets.push(format!("e{a}_{b}"));
                }
            }
            let nets: Vec<&str> = nets.iter().map(String::as_str).collect();
            let d = ComponentDecl::new(&format!("X{i}"), k, &nets);
            match groups.get(i).copied().flatten() {
                Some(g) => d.grouped(g),
                None => d,
            }
        })
        .collect();
    CircuitTopology::new("graph", decls, &[]).unwrap()
}

pub fn kind_of(i: u8) -> ComponentKind {
    ComponentKind::ALL[i as usize % 4]
}
