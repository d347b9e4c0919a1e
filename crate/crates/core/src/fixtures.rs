//! Hand-built reference instances with known-by-construction optima,
//! used by tests, examples, and documentation.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::instancer::{HostConfig, Instance};
use crate::scenario::{bundled_scenario, parse_scenario, serialize_scenario, ScenarioSpec, SubnetSpec};

fn strings(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Scenario behind [`t1`]: the bundled catalogs over a two-subnet chain
/// internet - dmz - service, with a certainly-sensitive service subnet.
pub fn t1_spec() -> ScenarioSpec {
    let mut spec = bundled_scenario("sm_entry_dmz_two_subnets").expect("bundled");
    spec.name = "t1".into();
    spec.subnets = vec![
        SubnetSpec { name: "dmz".into(), size: [1, 1], sensitivity: 0.0 },
        SubnetSpec { name: "service".into(), size: [1, 1], sensitivity: 1.0 },
    ];
    spec.topology = vec![
        ["internet".into(), "dmz".into()],
        ["dmz".into(), "service".into()],
    ];
    spec.entry = vec!["dmz".into()];
    parse_scenario(&serialize_scenario(&spec)).expect("t1 spec is valid")
}

/// The T1 instance: one WordPress host in the dmz, one sensitive
/// Drupal + MySQL host behind it.
///
/// Optimal play loots the service host in 4 steps (exploit the entry
/// host, SubnetScan from it, exploit the sensitive host, escalate), for
/// a total reward of 100 - 4 = 96.
pub fn t1() -> Arc<Instance> {
    let spec = Arc::new(t1_spec());
    Arc::new(Instance {
        spec,
        subnet_sizes: vec![1, 1],
        hosts: vec![
            HostConfig {
                address: (1, 0),
                os: "windows".into(),
                services: strings(&["wordpress"]),
                processes: BTreeSet::new(),
                sensitive: false,
                value: 0.0,
            },
            HostConfig {
                address: (2, 0),
                os: "linux".into(),
                services: strings(&["drupal", "mysql"]),
                processes: BTreeSet::new(),
                sensitive: true,
                value: 100.0,
            },
        ],
        topology: vec![(0, 1), (1, 2)],
        entry: vec![1],
        seed: 0,
    })
}

/// Small dynamic scenario (at most 6 hosts) sized for the brute-force
/// planner: a chain internet - dmz - user - service with coin-flip
/// sensitivity behind the dmz.
pub fn oracle_probe_spec() -> ScenarioSpec {
    let mut spec = bundled_scenario("sm_entry_dmz_two_subnets").expect("bundled");
    spec.name = "oracle_probe".into();
    spec.subnets = vec![
        SubnetSpec { name: "dmz".into(), size: [1, 1], sensitivity: 0.0 },
        SubnetSpec { name: "user".into(), size: [1, 2], sensitivity: 0.5 },
        SubnetSpec { name: "service".into(), size: [1, 3], sensitivity: 0.5 },
    ];
    spec.topology = vec![
        ["internet".into(), "dmz".into()],
        ["dmz".into(), "user".into()],
        ["user".into(), "service".into()],
    ];
    spec.entry = vec!["dmz".into()];
    parse_scenario(&serialize_scenario(&spec)).expect("oracle_probe spec is valid")
}
