//! DOT output sanity over random episodes: structural grammar checks
//! with a small line-oriented parser, no graphviz dependency.

use std::collections::BTreeSet;
use std::sync::Arc;

use attacksim::agents::RandomAgent;
use attacksim::engine::EngineState;
use attacksim::instancer::instantiate;
use attacksim::observation::render_dot;
use attacksim::scenario::{bundled_scenario, bundled_scenarios, unify_feature_schema};

struct ParsedDot {
    nodes: BTreeSet<String>,
    edges: Vec<(String, String)>,
}

/// Accepts the subset of DOT this crate emits: one statement per line,
/// node declarations as `name [attrs];`, edges as `a -> b [attrs];`.
fn parse_dot(text: &str) -> ParsedDot {
    assert!(text.starts_with("digraph "), "missing digraph header");
    assert!(text.ends_with("}\n"), "missing closing brace");
    let mut depth = 0i32;
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        depth += trimmed.matches('{').count() as i32;
        depth -= trimmed.matches('}').count() as i32;
        assert!(depth >= 0, "unbalanced braces at: {line}");
        let unescaped = trimmed.replace("\\\"", "");
        assert_eq!(
            unescaped.matches('"').count() % 2,
            0,
            "unbalanced quotes at: {line}"
        );
        if let Some((lhs, _)) = trimmed.split_once(" [") {
            if !lhs.contains("->") && !lhs.contains(' ') {
                nodes.insert(lhs.to_string());
                continue;
            }
        }
        if let Some((a, rest)) = trimmed.split_once(" -> ") {
            let b = rest.split([' ', ';']).next().unwrap();
            edges.push((a.to_string(), b.to_string()));
        }
    }
    assert_eq!(depth, 0, "unbalanced braces overall");
    ParsedDot { nodes, edges }
}

#[test]
fn every_edge_references_a_declared_node_across_random_play() {
    let mut frames = 0;
    for name in bundled_scenarios().keys() {
        let spec = Arc::new(bundled_scenario(name).unwrap());
        let plain = vec![(*spec).clone()];
        let schema = unify_feature_schema(&plain);
        for seed in 0..6u64 {
            let instance = Arc::new(instantiate(&spec, seed).unwrap());
            let mut agent = RandomAgent::new(schema.clone(), seed.wrapping_mul(31));
            let (mut state, mut obs) = EngineState::reset(instance);
            for _ in 0..40 {
                let parsed = parse_dot(&render_dot(&obs));
                for (a, b) in &parsed.edges {
                    assert!(parsed.nodes.contains(a), "{name}: undeclared edge tail {a}");
                    assert!(parsed.nodes.contains(b), "{name}: undeclared edge head {b}");
                }
                frames += 1;
                let action = agent.act(&obs).unwrap();
                if action == attacksim::Action::Terminal {
                    break;
                }
                obs = state.step(&action).unwrap().observation;
            }
        }
    }
    assert!(frames > 300, "rendered only {frames} frames");
}

#[test]
fn the_initial_frame_shows_exactly_the_entry_hosts() {
    let spec = Arc::new(bundled_scenario("md_entry_dmz_three_subnets").unwrap());
    let instance = Arc::new(instantiate(&spec, 3).unwrap());
    let entry_hosts: usize =
        instance.entry.iter().map(|&s| instance.subnet_sizes[s - 1]).sum();
    let (_, obs) = EngineState::reset(instance);
    let parsed = parse_dot(&render_dot(&obs));
    let host_nodes =
        parsed.nodes.iter().filter(|n| n.starts_with("host_")).count();
    assert_eq!(host_nodes, entry_hosts);
    assert!(render_dot(&obs).contains("initial state"));
}

#[test]
fn the_last_action_target_is_highlighted() {
    let spec = Arc::new(bundled_scenario("sm_entry_dmz_two_subnets").unwrap());
    let instance = Arc::new(instantiate(&spec, 1).unwrap());
    let entry = instance.entry[0];
    let (mut state, _) = EngineState::reset(instance);
    let result = state
        .step(&attacksim::Action::ServiceScan { target: (entry, 0) })
        .unwrap();
    let dot = render_dot(&result.observation);
    assert!(dot.contains("color=red"), "highlight missing:\n{dot}");
    assert!(dot.contains("last action: service_scan"));
}
