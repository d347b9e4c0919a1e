//! Ground-truth planner for small instances: exhaustive depth-first
//! search over action sequences with canonical-state memoization, plus
//! an unlimited-step solvability check. A test oracle, not a planner
//! that scales.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{AccessLevel, Action, EngineState};
use crate::instancer::{Address, Instance};
use crate::scenario::GrantedAccess;

/// Hard size guard; beyond this the search space stops being a test
/// fixture and starts being a research problem.
pub const MAX_ORACLE_HOSTS: usize = 8;
pub const MAX_ORACLE_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance has {hosts} hosts, oracle guard allows at most {MAX_ORACLE_HOSTS}")]
    TooManyHosts { hosts: usize },
    #[error("step cap {cap} exceeds oracle guard {MAX_ORACLE_CAP}")]
    CapTooLarge { cap: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanResult {
    pub optimal_reward: f64,
    /// One optimal action sequence. Terminal is implicit: an empty plan
    /// means terminating immediately is optimal.
    pub plan: Vec<Action>,
    pub states_explored: usize,
    pub solvable: bool,
    pub unreachable: Vec<Address>,
}

fn granted_level(access: GrantedAccess) -> AccessLevel {
    match access {
        GrantedAccess::User => AccessLevel::User,
        GrantedAccess::Root => AccessLevel::Root,
    }
}

/// Dynamics-relevant identity of a host: everything the engine consults
/// when resolving actions against it. Hosts sharing a class within the
/// same subnet are interchangeable, so sorting the per-host keys merges
/// symmetric states.
type HostClass = usize;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct HostKey {
    class: HostClass,
    discovered: bool,
    access: AccessLevel,
    looted: bool,
}

struct Search {
    instance: Arc<Instance>,
    classes: Vec<HostClass>,
    memo: HashMap<(Vec<HostKey>, usize), f64>,
}

impl Search {
    fn new(instance: Arc<Instance>) -> Self {
        let classes = {
            let mut table: Vec<(usize, &str, Vec<&str>, Vec<&str>, bool, u64)> = Vec::new();
            let mut classes = Vec::with_capacity(instance.hosts.len());
            for h in &instance.hosts {
                let key = (
                    h.address.0,
                    h.os.as_str(),
                    h.services.iter().map(String::as_str).collect::<Vec<_>>(),
                    h.processes.iter().map(String::as_str).collect::<Vec<_>>(),
                    h.sensitive,
                    h.value.to_bits(),
                );
                let class = table.iter().position(|c| *c == key).unwrap_or_else(|| {
                    table.push(key);
                    table.len() - 1
                });
                classes.push(class);
            }
            classes
        };
        Search { instance, classes, memo: HashMap::new() }
    }

    fn canonical(&self, state: &EngineState) -> Vec<HostKey> {
        let mut keys: Vec<HostKey> = state
            .hosts
            .iter()
            .enumerate()
            .map(|(i, h)| HostKey {
                class: self.classes[i],
                discovered: h.discovered,
                access: h.access,
                looted: h.looted,
            })
            .collect();
        keys.sort();
        keys
    }

    /// Actions worth expanding: ones that can change achievable reward.
    /// Information scans never can (the oracle already knows the
    /// instance), repeats of succeeded deterministic actions never can,
    /// and a subnet scan only can when it discovers something.
    fn candidates(&self, state: &EngineState) -> Vec<Action> {
        let spec = &self.instance.spec;
        let mut out = Vec::new();
        for (i, h) in state.hosts.iter().enumerate() {
            if !h.discovered {
                continue;
            }
            let config = &self.instance.hosts[i];
            if h.reached {
                for e in &spec.exploits {
                    if config.services.contains(&e.service)
                        && granted_level(e.access) > h.access
                    {
                        out.push(Action::Exploit { id: e.id.clone(), target: h.config.address });
                    }
                }
            }
            if h.access >= AccessLevel::User {
                for p in &spec.privescs {
                    let process_ok =
                        p.process.as_ref().map_or(true, |pr| config.processes.contains(pr));
                    if p.os == config.os
                        && process_ok
                        && granted_level(p.access) > h.access
                    {
                        out.push(Action::PrivEsc { id: p.id.clone(), target: h.config.address });
                    }
                }
            }
        }
        // one representative scan per compromised subnet that still has
        // something to uncover
        let mut scanned_from = BTreeSet::new();
        for h in &state.hosts {
            let subnet = h.config.address.0;
            if h.access < AccessLevel::User || scanned_from.contains(&subnet) {
                continue;
            }
            scanned_from.insert(subnet);
            let mut scope: BTreeSet<usize> = self
                .instance
                .neighbors(subnet)
                .into_iter()
                .filter(|&s| s != 0)
                .collect();
            scope.insert(subnet);
            let discovers = state
                .hosts
                .iter()
                .any(|other| !other.discovered && scope.contains(&other.config.address.0));
            if discovers {
                out.push(Action::SubnetScan { target: h.config.address });
            }
        }
        out
    }

    fn value(&mut self, state: &EngineState, steps_left: usize) -> f64 {
        if steps_left == 0 {
            return 0.0;
        }
        let key = (self.canonical(state), steps_left);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = 0.0f64;
        for action in self.candidates(state) {
            let mut child = state.clone();
            let step = child.step(&action).expect("oracle candidates address live hosts");
            debug_assert!(step.success, "oracle candidates satisfy preconditions");
            let v = step.reward + self.value(&child, steps_left - 1);
            if v > best {
                best = v;
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Exhaustive optimum over all action sequences of at most `step_cap`
/// non-terminal steps, with terminating early always on the table.
pub fn optimal_plan(instance: &Arc<Instance>, step_cap: usize) -> Result<PlanResult, OracleError> {
    if instance.n_hosts() > MAX_ORACLE_HOSTS {
        return Err(OracleError::TooManyHosts { hosts: instance.n_hosts() });
    }
    if step_cap > MAX_ORACLE_CAP {
        return Err(OracleError::CapTooLarge { cap: step_cap });
    }

    let mut search = Search::new(instance.clone());
    let (root, _) = EngineState::reset(instance.clone());
    let optimal_reward = search.value(&root, step_cap);

    // walk one optimal path; memoized child values are exact, so the
    // recomputed candidate totals match bitwise
    let mut plan = Vec::new();
    let mut state = root;
    let mut left = step_cap;
    while left > 0 {
        let target = search.value(&state, left);
        if target <= 0.0 {
            break;
        }
        let mut advanced = false;
        for action in search.candidates(&state) {
            let mut child = state.clone();
            let step = child.step(&action).expect("oracle candidates address live hosts");
            if step.reward + search.value(&child, left - 1) == target {
                plan.push(action);
                state = child;
                left -= 1;
                advanced = true;
                break;
            }
        }
        assert!(advanced, "a memoized optimum must be reachable by some candidate");
    }

    let (is_solvable, unreachable) = solvable(instance);
    Ok(PlanResult {
        optimal_reward,
        plan,
        states_explored: search.memo.len(),
        solvable: is_solvable,
        unreachable,
    })
}

/// Unlimited-step reachability: can every sensitive host be rooted?
/// Computed as a monotone fixpoint over per-host best access and
/// discovery, mirroring the engine's pivoting and scanning rules.
pub fn solvable(instance: &Instance) -> (bool, Vec<Address>) {
    let n = instance.n_hosts();
    let mut access = vec![AccessLevel::None; n];
    let mut discovered: Vec<bool> = instance
        .hosts
        .iter()
        .map(|h| instance.entry.contains(&h.address.0))
        .collect();

    loop {
        let before = (access.clone(), discovered.clone());

        let mut reach: BTreeSet<usize> = instance.entry.iter().copied().collect();
        for (i, h) in instance.hosts.iter().enumerate() {
            if access[i] >= AccessLevel::User {
                reach.insert(h.address.0);
                for nb in instance.neighbors(h.address.0) {
                    if nb != 0 {
                        reach.insert(nb);
                    }
                }
            }
        }

        for i in 0..n {
            if access[i] < AccessLevel::User {
                continue;
            }
            let subnet = instance.hosts[i].address.0;
            let mut scope: BTreeSet<usize> = instance
                .neighbors(subnet)
                .into_iter()
                .filter(|&s| s != 0)
                .collect();
            scope.insert(subnet);
            for (j, other) in instance.hosts.iter().enumerate() {
                if scope.contains(&other.address.0) {
                    discovered[j] = true;
                }
            }
        }

        for (j, h) in instance.hosts.iter().enumerate() {
            if !discovered[j] || !reach.contains(&h.address.0) {
                continue;
            }
            for e in &instance.spec.exploits {
                if h.services.contains(&e.service) && granted_level(e.access) > access[j] {
                    access[j] = granted_level(e.access);
                }
            }
        }
        for (j, h) in instance.hosts.iter().enumerate() {
            if access[j] < AccessLevel::User {
                continue;
            }
            for p in &instance.spec.privescs {
                let process_ok = p.process.as_ref().map_or(true, |pr| h.processes.contains(pr));
                if p.os == h.os && process_ok && granted_level(p.access) > access[j] {
                    access[j] = granted_level(p.access);
                }
            }
        }

        if (access.clone(), discovered.clone()) == before {
            break;
        }
    }

    let unreachable: Vec<Address> = instance
        .hosts
        .iter()
        .enumerate()
        .filter(|(i, h)| h.sensitive && access[*i] < AccessLevel::Root)
        .map(|(_, h)| h.address)
        .collect();
    (unreachable.is_empty(), unreachable)
}
