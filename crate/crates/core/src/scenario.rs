//! Dynamic scenario descriptions: parsing, validation, and the unified
//! feature schema shared by a set of scenarios.
//!
//! A scenario describes a *family* of networks: the subnet topology and
//! per-subnet size ranges are fixed, while concrete host counts and
//! configurations are sampled per instance (see [`crate::instancer`]).
//! The on-disk format is strict UTF-8 JSON; unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the pseudo-node that represents the outside world in topologies.
pub const INTERNET: &str = "internet";

/// Number of non-exploit, non-privesc action slots: the four scans plus
/// the terminal action.
pub const FIXED_ACTION_SLOTS: usize = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("reference error in scenario '{scenario}': {kind} '{name}' is not declared")]
    Reference {
        scenario: String,
        kind: &'static str,
        name: String,
    },
    #[error("range error in scenario '{scenario}': {what}")]
    Range { scenario: String, what: String },
    #[error("topology error in scenario '{scenario}': {what}")]
    Topology { scenario: String, what: String },
}

/// Access level granted by an exploit or privilege escalation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrantedAccess {
    User,
    Root,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubnetSpec {
    pub name: String,
    /// Inclusive [min, max] host count range.
    pub size: [usize; 2],
    /// Probability that a host in this subnet is sensitive.
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDef {
    pub id: String,
    /// Operating systems this service can run on.
    pub os: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDef {
    pub id: String,
    pub os: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploitDef {
    pub id: String,
    /// Service that must run on the target for the exploit to succeed.
    pub service: String,
    pub access: GrantedAccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivescDef {
    pub id: String,
    /// Target OS the escalation applies to.
    pub os: String,
    /// Process that must run on the target, if any.
    pub process: Option<String>,
    pub access: GrantedAccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfigSpec {
    pub services_per_host: [usize; 2],
    pub processes_per_host: [usize; 2],
    /// Service forced onto every sensitive host (the learnable cue).
    pub sensitive_marker_service: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rewards {
    /// Cost charged for every non-terminal step.
    pub step_cost: f64,
    /// Value of looting a sensitive host.
    pub sensitive_value: f64,
}

/// A validated dynamic scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub subnets: Vec<SubnetSpec>,
    /// Unordered subnet-name pairs; `"internet"` is a permitted endpoint.
    pub topology: Vec<[String; 2]>,
    /// Subnets adjacent to the internet where the attacker starts.
    pub entry: Vec<String>,
    pub os_list: Vec<String>,
    pub services: Vec<ServiceDef>,
    pub processes: Vec<ProcessDef>,
    pub exploits: Vec<ExploitDef>,
    pub privescs: Vec<PrivescDef>,
    pub host_config: HostConfigSpec,
    pub rewards: Rewards,
}

impl ScenarioSpec {
    /// Index of a subnet by name. Subnet ids are 1-based; id 0 is the
    /// internet pseudo-node.
    pub fn subnet_id(&self, name: &str) -> Option<usize> {
        self.subnets.iter().position(|s| s.name == name).map(|i| i + 1)
    }

    pub fn service(&self, id: &str) -> Option<&ServiceDef> {
        self.services.iter().find(|s| s.id == id)
    }

    pub fn exploit(&self, id: &str) -> Option<&ExploitDef> {
        self.exploits.iter().find(|e| e.id == id)
    }

    pub fn privesc(&self, id: &str) -> Option<&PrivescDef> {
        self.privescs.iter().find(|p| p.id == id)
    }

    /// Topology as subnet-id adjacency, id 0 = internet.
    pub fn adjacency_ids(&self) -> Vec<(usize, usize)> {
        let id = |name: &str| {
            if name == INTERNET {
                0
            } else {
                self.subnet_id(name).expect("validated topology")
            }
        };
        let mut edges: Vec<(usize, usize)> = self
            .topology
            .iter()
            .map(|[a, b]| {
                let (x, y) = (id(a), id(b));
                (x.min(y), x.max(y))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Entry subnet ids, ascending.
    pub fn entry_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .entry
            .iter()
            .map(|n| self.subnet_id(n).expect("validated entry"))
            .collect();
        ids.sort_unstable();
        ids
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let scenario = self.name.clone();
        let refer = |kind: &'static str, name: &str| ScenarioError::Reference {
            scenario: scenario.clone(),
            kind,
            name: name.to_string(),
        };
        let range = |what: String| ScenarioError::Range {
            scenario: scenario.clone(),
            what,
        };

        if self.subnets.is_empty() {
            return Err(range("scenario declares no subnets".into()));
        }
        let subnet_names: BTreeSet<&str> = self.subnets.iter().map(|s| s.name.as_str()).collect();
        if subnet_names.len() != self.subnets.len() {
            return Err(range("duplicate subnet name".into()));
        }
        if subnet_names.contains(INTERNET) {
            return Err(range(format!("'{INTERNET}' is reserved and cannot name a subnet")));
        }
        for s in &self.subnets {
            if s.size[0] < 1 || s.size[0] > s.size[1] {
                return Err(range(format!(
                    "subnet '{}' has size range [{}, {}]; need 1 <= min <= max",
                    s.name, s.size[0], s.size[1]
                )));
            }
            if !(0.0..=1.0).contains(&s.sensitivity) {
                return Err(range(format!(
                    "subnet '{}' has sensitivity {}; need a probability in [0, 1]",
                    s.name, s.sensitivity
                )));
            }
        }

        let os_set: BTreeSet<&str> = self.os_list.iter().map(|s| s.as_str()).collect();
        let service_ids: BTreeSet<&str> = self.services.iter().map(|s| s.id.as_str()).collect();
        let process_ids: BTreeSet<&str> = self.processes.iter().map(|p| p.id.as_str()).collect();

        for svc in &self.services {
            for os in &svc.os {
                if !os_set.contains(os.as_str()) {
                    return Err(refer("os", os));
                }
            }
        }
        for proc in &self.processes {
            for os in &proc.os {
                if !os_set.contains(os.as_str()) {
                    return Err(refer("os", os));
                }
            }
        }
        for e in &self.exploits {
            if !service_ids.contains(e.service.as_str()) {
                return Err(refer("service", &e.service));
            }
        }
        for p in &self.privescs {
            if !os_set.contains(p.os.as_str()) {
                return Err(refer("os", &p.os));
            }
            if let Some(proc) = &p.process {
                if !process_ids.contains(proc.as_str()) {
                    return Err(refer("process", proc));
                }
            }
            if p.access != GrantedAccess::Root {
                return Err(range(format!(
                    "privesc '{}' must grant root access",
                    p.id
                )));
            }
        }
        if let Some(marker) = &self.host_config.sensitive_marker_service {
            if !service_ids.contains(marker.as_str()) {
                return Err(refer("service", marker));
            }
        }

        let [smin, smax] = self.host_config.services_per_host;
        if smin > smax {
            return Err(range(format!("services_per_host range [{smin}, {smax}] has min > max")));
        }
        let [pmin, pmax] = self.host_config.processes_per_host;
        if pmin > pmax {
            return Err(range(format!("processes_per_host range [{pmin}, {pmax}] has min > max")));
        }
        if self.rewards.step_cost < 0.0 {
            return Err(range(format!("step_cost {} must be non-negative", self.rewards.step_cost)));
        }
        if self.rewards.sensitive_value <= 0.0 {
            return Err(range(format!(
                "sensitive_value {} must be positive",
                self.rewards.sensitive_value
            )));
        }

        // Topology: declared names only, entry adjacent to internet, connected.
        let topo = |what: String| ScenarioError::Topology {
            scenario: scenario.clone(),
            what,
        };
        let mut internet_adjacent: BTreeSet<&str> = BTreeSet::new();
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for [a, b] in &self.topology {
            for end in [a, b] {
                if end != INTERNET && !subnet_names.contains(end.as_str()) {
                    return Err(refer("subnet", end));
                }
            }
            if a == b {
                return Err(topo(format!("self-loop on '{a}'")));
            }
            if a == INTERNET || b == INTERNET {
                let other = if a == INTERNET { b } else { a };
                internet_adjacent.insert(other.as_str());
            }
            adj.entry(a.as_str()).or_default().insert(b.as_str());
            adj.entry(b.as_str()).or_default().insert(a.as_str());
        }
        if self.entry.is_empty() {
            return Err(topo("scenario declares no entry subnet".into()));
        }
        let entry_set: BTreeSet<&str> = self.entry.iter().map(|e| e.as_str()).collect();
        for e in &entry_set {
            if !subnet_names.contains(*e) {
                return Err(refer("subnet", e));
            }
            if !internet_adjacent.contains(*e) {
                return Err(topo(format!("entry subnet '{e}' is not adjacent to '{INTERNET}'")));
            }
        }

        // Connectivity over declared subnets plus internet.
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![INTERNET];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(next) = adj.get(n) {
                stack.extend(next.iter().copied());
            }
        }
        for s in &self.subnets {
            if !seen.contains(s.name.as_str()) {
                return Err(topo(format!("subnet '{}' is disconnected from '{INTERNET}'", s.name)));
            }
        }
        Ok(())
    }
}

/// Parse and validate a scenario file.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec: ScenarioSpec = serde_json::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

/// Serialize a scenario back to its canonical file form.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    serde_json::to_string_pretty(spec).expect("scenario serialization cannot fail")
}

/// The host-vector layout and action space shared by a scenario set.
///
/// Identifier index maps are unions over the set in lexicographic order, so
/// the schema is independent of the order scenarios are listed in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// Width of the subnet one-hot. Subnet ids are 1-based (0 is the
    /// internet pseudo-node), so this is 1 + the largest subnet count.
    pub s_max: usize,
    /// Largest host count any subnet can reach (max of size ranges).
    pub h_max: usize,
    pub os_ids: Vec<String>,
    pub service_ids: Vec<String>,
    pub process_ids: Vec<String>,
    pub exploit_ids: Vec<String>,
    pub privesc_ids: Vec<String>,
}

impl FeatureSchema {
    pub fn host_vector_dim(&self) -> usize {
        // subnet one-hot + host one-hot + [reached, compromised, root]
        // + services_scanned + service bits + os_scanned + os one-hot
        // + processes_scanned + process bits + [sensitivity_known, sensitive]
        // + normalized value
        self.s_max
            + self.h_max
            + 3
            + 1
            + self.service_ids.len()
            + 1
            + self.os_ids.len()
            + 1
            + self.process_ids.len()
            + 2
            + 1
    }

    pub fn action_dim(&self) -> usize {
        self.exploit_ids.len() + self.privesc_ids.len() + FIXED_ACTION_SLOTS
    }

    pub fn os_index(&self, id: &str) -> Option<usize> {
        self.os_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    pub fn service_index(&self, id: &str) -> Option<usize> {
        self.service_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    pub fn process_index(&self, id: &str) -> Option<usize> {
        self.process_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    pub fn exploit_index(&self, id: &str) -> Option<usize> {
        self.exploit_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    pub fn privesc_index(&self, id: &str) -> Option<usize> {
        self.privesc_ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }
}

/// Compute the unified feature schema over a non-empty set of validated
/// scenarios: element-wise maxima for dimensions, sorted unions for
/// identifier maps.
pub fn unify_feature_schema(specs: &[ScenarioSpec]) -> FeatureSchema {
    assert!(!specs.is_empty(), "schema unification needs at least one scenario");
    let mut os = BTreeSet::new();
    let mut services = BTreeSet::new();
    let mut processes = BTreeSet::new();
    let mut exploits = BTreeSet::new();
    let mut privescs = BTreeSet::new();
    let mut max_subnets = 0usize;
    let mut h_max = 0usize;
    for spec in specs {
        max_subnets = max_subnets.max(spec.subnets.len());
        for s in &spec.subnets {
            h_max = h_max.max(s.size[1]);
        }
        os.extend(spec.os_list.iter().cloned());
        services.extend(spec.services.iter().map(|s| s.id.clone()));
        processes.extend(spec.processes.iter().map(|p| p.id.clone()));
        exploits.extend(spec.exploits.iter().map(|e| e.id.clone()));
        privescs.extend(spec.privescs.iter().map(|p| p.id.clone()));
    }
    FeatureSchema {
        s_max: max_subnets + 1,
        h_max,
        os_ids: os.into_iter().collect(),
        service_ids: services.into_iter().collect(),
        process_ids: processes.into_iter().collect(),
        exploit_ids: exploits.into_iter().collect(),
        privesc_ids: privescs.into_iter().collect(),
    }
}

macro_rules! bundled {
    ($($name:literal),+ $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".json")))),+]
    };
}

const BUNDLED: &[(&str, &str)] = bundled![
    "sm_entry_dmz_one_subnet",
    "sm_entry_dmz_two_subnets",
    "sm_entry_dmz_three_subnets",
    "sm_entry_user_three_subnets",
    "md_entry_dmz_one_subnet",
    "md_entry_dmz_two_subnets",
    "md_entry_dmz_three_subnets",
    "md_entry_user_three_subnets",
];

/// The eight benchmark scenarios shipped with the simulator: four
/// topologies, each in a small (`sm_`) and medium (`md_`) size variant.
pub fn bundled_scenarios() -> BTreeMap<String, ScenarioSpec> {
    BUNDLED
        .iter()
        .map(|(name, text)| {
            let spec = parse_scenario(text).expect("bundled scenarios are valid");
            debug_assert_eq!(&spec.name, name);
            (name.to_string(), spec)
        })
        .collect()
}

/// Look up one bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Option<ScenarioSpec> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("bundled scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "subnets": [{ "name": "dmz", "size": [1, 1], "sensitivity": 0.0 }],
        "topology": [["internet", "dmz"]],
        "entry": ["dmz"],
        "os_list": ["linux"],
        "services": [{ "id": "ftp", "os": ["linux"] }],
        "processes": [],
        "exploits": [{ "id": "e_ftp", "service": "ftp", "access": "user" }],
        "privescs": [],
        "host_config": {
            "services_per_host": [1, 1],
            "processes_per_host": [0, 0],
            "sensitive_marker_service": null
        },
        "rewards": { "step_cost": 1.0, "sensitive_value": 100.0 }
    }"#;

    #[test]
    fn parses_minimal_scenario() {
        let spec = parse_scenario(MINIMAL).unwrap();
        assert_eq!(spec.subnets.len(), 1);
        assert_eq!(spec.entry, vec!["dmz"]);
    }

    #[test]
    fn bundled_two_subnets_has_figure_size_ranges() {
        let spec = bundled_scenario("sm_entry_dmz_two_subnets").unwrap();
        let sizes: Vec<(&str, [usize; 2])> = spec
            .subnets
            .iter()
            .map(|s| (s.name.as_str(), s.size))
            .collect();
        assert_eq!(
            sizes,
            vec![("dmz", [1, 1]), ("user", [1, 3]), ("service", [2, 5])]
        );
    }

    #[test]
    fn undeclared_service_reference_names_the_culprit() {
        let text = MINIMAL.replace(r#""service": "ftp""#, r#""service": "smb""#);
        let err = parse_scenario(&text).unwrap_err();
        match err {
            ScenarioError::Reference { kind, name, .. } => {
                assert_eq!(kind, "service");
                assert_eq!(name, "smb");
            }
            other => panic!("expected reference error, got {other}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scenario("{ \"name\": ").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "expected position info, got: {msg}");
    }

    #[test]
    fn range_errors_are_rejected() {
        let bad_size = MINIMAL.replace("\"size\": [1, 1]", "\"size\": [3, 2]");
        assert!(matches!(parse_scenario(&bad_size), Err(ScenarioError::Range { .. })));
        let zero_min = MINIMAL.replace("\"size\": [1, 1]", "\"size\": [0, 2]");
        assert!(matches!(parse_scenario(&zero_min), Err(ScenarioError::Range { .. })));
        let bad_sens = MINIMAL.replace("\"sensitivity\": 0.0", "\"sensitivity\": 1.5");
        assert!(matches!(parse_scenario(&bad_sens), Err(ScenarioError::Range { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"name\": \"minimal\",", "\"name\": \"minimal\", \"extra\": 1,");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Syntax(_))));
    }

    #[test]
    fn disconnected_topology_is_rejected() {
        let text = MINIMAL
            .replace(
                r#""subnets": [{ "name": "dmz", "size": [1, 1], "sensitivity": 0.0 }]"#,
                r#""subnets": [{ "name": "dmz", "size": [1, 1], "sensitivity": 0.0 },
                              { "name": "lost", "size": [1, 1], "sensitivity": 0.0 }]"#,
            );
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Topology { .. })));
    }

    #[test]
    fn entry_must_touch_internet() {
        let text = MINIMAL
            .replace(
                r#""subnets": [{ "name": "dmz", "size": [1, 1], "sensitivity": 0.0 }]"#,
                r#""subnets": [{ "name": "dmz", "size": [1, 1], "sensitivity": 0.0 },
                              { "name": "inner", "size": [1, 1], "sensitivity": 0.0 }]"#,
            )
            .replace(
                r#""topology": [["internet", "dmz"]]"#,
                r#""topology": [["internet", "dmz"], ["dmz", "inner"]]"#,
            )
            .replace(r#""entry": ["dmz"]"#, r#""entry": ["inner"]"#);
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Topology { .. })));
    }

    #[test]
    fn unify_single_spec_matches_its_own_dimensions() {
        let spec = parse_scenario(MINIMAL).unwrap();
        let schema = unify_feature_schema(std::slice::from_ref(&spec));
        assert_eq!(schema.s_max, 2); // internet slot + 1 subnet
        assert_eq!(schema.h_max, 1);
        assert_eq!(schema.service_ids, vec!["ftp"]);
        assert_eq!(schema.action_dim(), 1 + 0 + FIXED_ACTION_SLOTS);
        // subnet(2) + host(1) + flags(3) + svc_scanned(1) + svc(1)
        // + os_scanned(1) + os(1) + proc_scanned(1) + proc(0) + sens(2) + value(1)
        assert_eq!(schema.host_vector_dim(), 2 + 1 + 3 + 1 + 1 + 1 + 1 + 1 + 0 + 2 + 1);
    }

    #[test]
    fn unify_small_pair_counts_subnet_slots() {
        let a = bundled_scenario("sm_entry_dmz_two_subnets").unwrap();
        let b = bundled_scenario("sm_entry_dmz_one_subnet").unwrap();
        let schema = unify_feature_schema(&[a, b]);
        assert_eq!(schema.s_max, 4);
        assert_eq!(schema.h_max, 5);
    }

    #[test]
    fn unify_disjoint_service_sets() {
        let a = parse_scenario(MINIMAL).unwrap();
        let mut b = a.clone();
        b.services[0].id = "web".into();
        b.exploits[0].service = "web".into();
        let schema = unify_feature_schema(&[a, b]);
        assert_eq!(schema.service_ids, vec!["ftp", "web"]);
    }

    #[test]
    fn unify_is_order_independent_and_idempotent() {
        let specs: Vec<ScenarioSpec> = bundled_scenarios().into_values().collect();
        let forward = unify_feature_schema(&specs);
        let mut reversed = specs.clone();
        reversed.reverse();
        assert_eq!(forward, unify_feature_schema(&reversed));
        let doubled: Vec<ScenarioSpec> = specs.iter().chain(specs.iter()).cloned().collect();
        assert_eq!(forward, unify_feature_schema(&doubled));
    }

    #[test]
    fn bundled_scenarios_validate_and_round_trip() {
        let all = bundled_scenarios();
        assert_eq!(all.len(), 8);
        for (name, spec) in &all {
            let text = serialize_scenario(spec);
            let reparsed = parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&reparsed, spec, "round trip failed for {name}");
        }
    }

    #[test]
    fn bundled_md_three_subnets_places_db_behind_user() {
        let spec = bundled_scenario("md_entry_dmz_three_subnets").unwrap();
        assert!(spec
            .topology
            .iter()
            .any(|[a, b]| (a == "user" && b == "db") || (a == "db" && b == "user")));
        assert!(!spec
            .topology
            .iter()
            .any(|[a, b]| (a == "dmz" && b == "db") || (a == "db" && b == "dmz")));
        let db = spec.subnets.iter().find(|s| s.name == "db").unwrap();
        assert_eq!(db.sensitivity, 1.0);
    }

    #[test]
    fn bundled_user_entry_starts_in_user_segment() {
        let spec = bundled_scenario("sm_entry_user_three_subnets").unwrap();
        assert_eq!(spec.entry, vec!["user"]);
    }

    #[test]
    fn bundled_one_subnet_has_no_sensitive_nodes() {
        for name in ["sm_entry_dmz_one_subnet", "md_entry_dmz_one_subnet"] {
            let spec = bundled_scenario(name).unwrap();
            assert!(spec.subnets.iter().all(|s| s.sensitivity == 0.0), "{name}");
        }
    }

    #[test]
    fn bundled_exploit_services_are_os_consistent() {
        for (name, spec) in bundled_scenarios() {
            for e in &spec.exploits {
                let svc = spec.service(&e.service).unwrap();
                assert!(!svc.os.is_empty(), "{name}: exploit {} targets a service with no OS", e.id);
            }
        }
    }

    #[test]
    fn full_bundle_schema_dimensions() {
        let specs: Vec<ScenarioSpec> = bundled_scenarios().into_values().collect();
        let schema = unify_feature_schema(&specs);
        assert_eq!(schema.s_max, 5);
        assert_eq!(schema.h_max, 10);
        assert_eq!(schema.exploit_ids.len(), 5);
        assert_eq!(schema.privesc_ids.len(), 1);
        assert_eq!(schema.action_dim(), 11);
    }
}
