//! Per-episode attack state machine: action semantics, firewall and pivot
//! reachability, rewards, termination, and the pluggable backend contract.
//!
//! The engine never ends an episode on its own; only the Terminal action
//! sets `done`. Invalid or unsatisfied actions are failed no-ops that
//! still cost a step, so learning agents can explore them safely.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instancer::{Address, HostConfig, Instance};
use crate::observation::{HostView, LastAction, Observation};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("malformed address ({0}, {1}): no such host in the instance")]
    MalformedAddress(usize, usize),
    #[error("episode is over; reset before stepping")]
    EpisodeOver,
}

/// Attacker privilege on a host. Total order: None < User < Root.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum AccessLevel {
    #[default]
    None,
    User,
    Root,
}

/// Per-host episode state layered over the immutable [`HostConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct HostState {
    pub config: HostConfig,
    pub discovered: bool,
    pub reached: bool,
    pub access: AccessLevel,
    pub services_scanned: bool,
    pub os_scanned: bool,
    pub processes_scanned: bool,
    /// SubnetScan was run from this host.
    pub subnet_scanned: bool,
    /// Set when access first reaches user; sensitivity is visible from
    /// inside the host.
    pub sensitivity_known: bool,
    pub looted: bool,
    /// Assigned when the host is first discovered; unique per episode.
    pub discovery_order: Option<usize>,
    /// Services revealed by successful exploits before any ServiceScan.
    pub learned_services: BTreeSet<String>,
}

impl HostState {
    fn new(config: HostConfig) -> Self {
        HostState {
            config,
            discovered: false,
            reached: false,
            access: AccessLevel::None,
            services_scanned: false,
            os_scanned: false,
            processes_scanned: false,
            subnet_scanned: false,
            sensitivity_known: false,
            looted: false,
            discovery_order: None,
            learned_services: BTreeSet::new(),
        }
    }

    pub fn compromised(&self) -> bool {
        self.access >= AccessLevel::User
    }
}

/// One attacker action. Targets must be previously discovered hosts;
/// Terminal has no target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Exploit { id: String, target: Address },
    PrivEsc { id: String, target: Address },
    ServiceScan { target: Address },
    OsScan { target: Address },
    SubnetScan { target: Address },
    ProcessScan { target: Address },
    Terminal,
}

impl Action {
    pub fn target(&self) -> Option<Address> {
        match self {
            Action::Exploit { target, .. }
            | Action::PrivEsc { target, .. }
            | Action::ServiceScan { target }
            | Action::OsScan { target }
            | Action::SubnetScan { target }
            | Action::ProcessScan { target } => Some(*target),
            Action::Terminal => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Action::Exploit { .. } => "exploit",
            Action::PrivEsc { .. } => "privesc",
            Action::ServiceScan { .. } => "service_scan",
            Action::OsScan { .. } => "os_scan",
            Action::SubnetScan { .. } => "subnet_scan",
            Action::ProcessScan { .. } => "process_scan",
            Action::Terminal => "terminal",
        }
    }

    pub fn id(&self) -> Option<&str> {
        match self {
            Action::Exploit { id, .. } | Action::PrivEsc { id, .. } => Some(id),
            _ => None,
        }
    }
}

/// Outcome of one engine step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub newly_discovered: usize,
    pub action: Action,
}

/// One line of an episode trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub action: TraceAction,
    pub success: bool,
    pub reward: f64,
    pub newly_discovered: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAction {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl TraceRecord {
    pub fn from_step(t: usize, r: &StepResult) -> Self {
        TraceRecord {
            t,
            action: TraceAction {
                kind: r.action.kind_name().to_string(),
                target: r.action.target(),
                id: r.action.id().map(str::to_string),
            },
            success: r.success,
            reward: r.reward,
            newly_discovered: r.newly_discovered,
            done: r.done,
        }
    }
}

/// Full episode state. Knowledge and access are monotone within an
/// episode; only `reset` discards them.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub instance: Arc<Instance>,
    pub hosts: Vec<HostState>,
    /// Subnet adjacency revealed by SubnetScans (no internet edges).
    pub known_edges: BTreeSet<(usize, usize)>,
    pub last_action: Option<LastAction>,
    /// Actions taken, including Terminal.
    pub t: usize,
    /// Non-Terminal actions taken (the step-cost counter).
    pub steps_costed: usize,
    pub episode_reward: f64,
    pub done: bool,
    next_discovery_order: usize,
}

impl EngineState {
    pub fn reset(instance: Arc<Instance>) -> (Self, Observation) {
        let mut hosts: Vec<HostState> =
            instance.hosts.iter().cloned().map(HostState::new).collect();
        let mut order = 0;
        for h in &mut hosts {
            if instance.entry.contains(&h.config.address.0) {
                h.discovered = true;
                h.discovery_order = Some(order);
                order += 1;
            }
        }
        let mut state = EngineState {
            instance,
            hosts,
            known_edges: BTreeSet::new(),
            last_action: None,
            t: 0,
            steps_costed: 0,
            episode_reward: 0.0,
            done: false,
            next_discovery_order: order,
        };
        state.refresh_reached();
        let obs = state.observation();
        (state, obs)
    }

    /// Subnets the attacker can currently route into: entry subnets,
    /// subnets holding a compromised host, and their topology neighbors.
    fn reachable_subnets(&self) -> BTreeSet<usize> {
        let mut ok: BTreeSet<usize> = self.instance.entry.iter().copied().collect();
        for h in &self.hosts {
            if h.compromised() {
                let s = h.config.address.0;
                ok.insert(s);
                for n in self.instance.neighbors(s) {
                    if n != 0 {
                        ok.insert(n);
                    }
                }
            }
        }
        ok
    }

    fn refresh_reached(&mut self) {
        let ok = self.reachable_subnets();
        for h in &mut self.hosts {
            h.reached = ok.contains(&h.config.address.0);
        }
    }

    /// Firewall/pivot predicate for a target address.
    pub fn reachable(&self, address: Address) -> bool {
        self.instance.host_ordinal(address).is_some()
            && self.reachable_subnets().contains(&address.0)
    }

    fn host_idx(&self, address: Address) -> Result<usize, EngineError> {
        self.instance
            .host_ordinal(address)
            .ok_or(EngineError::MalformedAddress(address.0, address.1))
    }

    /// Whether `action` would succeed in the current state. Used by the
    /// fault-injecting backend to decide what counts as a would-be
    /// success, and shared with `step` so the two never diverge.
    pub fn would_succeed(&self, action: &Action) -> Result<bool, EngineError> {
        if self.done {
            return Err(EngineError::EpisodeOver);
        }
        let target = match action.target() {
            None => return Ok(true), // Terminal always takes effect
            Some(t) => t,
        };
        let idx = self.host_idx(target)?;
        let host = &self.hosts[idx];
        if !host.discovered {
            return Ok(false);
        }
        Ok(match action {
            Action::ServiceScan { .. } | Action::OsScan { .. } => host.reached,
            Action::ProcessScan { .. } | Action::SubnetScan { .. } => host.compromised(),
            Action::Exploit { id, .. } => {
                host.reached
                    && self
                        .instance
                        .spec
                        .exploit(id)
                        .is_some_and(|e| host.config.services.contains(&e.service))
            }
            Action::PrivEsc { id, .. } => {
                host.compromised()
                    && self.instance.spec.privesc(id).is_some_and(|p| {
                        p.os == host.config.os
                            && p.process
                                .as_ref()
                                .is_none_or(|proc| host.config.processes.contains(proc))
                    })
            }
            Action::Terminal => true,
        })
    }

    /// Apply one action. Failures are no-ops beyond the step cost.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EngineError> {
        let success = self.would_succeed(action)?;
        if !success {
            return Ok(self.apply_failure(action));
        }

        if let Action::Terminal = action {
            self.done = true;
            self.t += 1;
            self.last_action = Some(LastAction { action: action.clone(), success: true });
            return Ok(self.result(action, 0.0, true, 0, true));
        }

        let target = action.target().expect("non-terminal actions have targets");
        let idx = self.host_idx(target)?;
        let mut newly_discovered = 0;
        let mut value_gained = 0.0;

        match action {
            Action::ServiceScan { .. } => self.hosts[idx].services_scanned = true,
            Action::OsScan { .. } => self.hosts[idx].os_scanned = true,
            Action::ProcessScan { .. } => self.hosts[idx].processes_scanned = true,
            Action::SubnetScan { .. } => {
                let subnet = target.0;
                let mut scope: BTreeSet<usize> = BTreeSet::new();
                scope.insert(subnet);
                for n in self.instance.neighbors(subnet) {
                    if n != 0 {
                        scope.insert(n);
                    }
                }
                for h in &mut self.hosts {
                    if scope.contains(&h.config.address.0) && !h.discovered {
                        h.discovered = true;
                        h.discovery_order = Some(self.next_discovery_order);
                        self.next_discovery_order += 1;
                        newly_discovered += 1;
                    }
                }
                for &(a, b) in &self.instance.topology {
                    if a != 0 && b != 0 && scope.contains(&a) && scope.contains(&b) {
                        self.known_edges.insert((a, b));
                    }
                }
                self.hosts[idx].subnet_scanned = true;
            }
            Action::Exploit { id, .. } => {
                let exploit = self.instance.spec.exploit(id).expect("checked by would_succeed");
                let granted = match exploit.access {
                    crate::scenario::GrantedAccess::User => AccessLevel::User,
                    crate::scenario::GrantedAccess::Root => AccessLevel::Root,
                };
                let host = &mut self.hosts[idx];
                host.access = host.access.max(granted);
                host.sensitivity_known = true;
                host.learned_services.insert(exploit.service.clone());
                value_gained += self.loot_if_rooted(idx);
                self.refresh_reached();
            }
            Action::PrivEsc { .. } => {
                self.hosts[idx].access = AccessLevel::Root;
                value_gained += self.loot_if_rooted(idx);
                self.refresh_reached();
            }
            Action::Terminal => unreachable!("handled above"),
        }

        let reward = value_gained - self.instance.spec.rewards.step_cost;
        self.t += 1;
        self.steps_costed += 1;
        self.episode_reward += reward;
        self.last_action = Some(LastAction { action: action.clone(), success: true });
        Ok(self.result(action, reward, false, newly_discovered, true))
    }

    /// Charge a failed no-op: step cost, counters, and nothing else.
    /// Also used by [`FlakyBackend`] to inject failures into would-be
    /// successes.
    pub fn apply_failure(&mut self, action: &Action) -> StepResult {
        debug_assert!(!self.done);
        let reward = -self.instance.spec.rewards.step_cost;
        self.t += 1;
        self.steps_costed += 1;
        self.episode_reward += reward;
        self.last_action = Some(LastAction { action: action.clone(), success: false });
        self.result(action, reward, false, 0, false)
    }

    fn loot_if_rooted(&mut self, idx: usize) -> f64 {
        let host = &mut self.hosts[idx];
        if host.access == AccessLevel::Root && host.config.sensitive && !host.looted {
            host.looted = true;
            host.config.value
        } else {
            0.0
        }
    }

    fn result(
        &self,
        action: &Action,
        reward: f64,
        done: bool,
        newly_discovered: usize,
        success: bool,
    ) -> StepResult {
        StepResult {
            observation: self.observation(),
            reward,
            done,
            success,
            newly_discovered,
            action: action.clone(),
        }
    }

    /// Cumulative view of everything revealed so far, hosts in discovery
    /// order.
    pub fn observation(&self) -> Observation {
        let mut views: Vec<HostView> = self
            .hosts
            .iter()
            .filter(|h| h.discovered)
            .map(|h| {
                let services = if h.services_scanned {
                    h.config.services.clone()
                } else {
                    h.learned_services.clone()
                };
                HostView {
                    address: h.config.address,
                    reached: h.reached,
                    access: h.access,
                    services_scanned: h.services_scanned,
                    services,
                    os_scanned: h.os_scanned,
                    os: h.os_scanned.then(|| h.config.os.clone()),
                    processes_scanned: h.processes_scanned,
                    processes: if h.processes_scanned {
                        h.config.processes.clone()
                    } else {
                        BTreeSet::new()
                    },
                    subnet_scanned: h.subnet_scanned,
                    sensitivity_known: h.sensitivity_known,
                    sensitive: h.sensitivity_known && h.config.sensitive,
                    value: if h.sensitivity_known {
                        h.config.value / self.instance.spec.rewards.sensitive_value
                    } else {
                        0.0
                    },
                    discovery_order: h.discovery_order.expect("discovered hosts are ordered"),
                }
            })
            .collect();
        views.sort_by_key(|v| v.discovery_order);
        Observation {
            hosts: views,
            known_edges: self.known_edges.iter().copied().collect(),
            last_action: self.last_action.clone(),
        }
    }
}

/// Substitutable episode driver: the simulator itself, or wrappers that
/// alter its behavior. Implementations move between threads but are not
/// shared mutably.
pub trait Backend: Send {
    fn reset(&mut self, instance: Arc<Instance>, seed: u64) -> Observation;
    fn step(&mut self, action: &Action) -> Result<StepResult, EngineError>;
    fn state(&self) -> Option<&EngineState>;
    fn state_mut(&mut self) -> Option<&mut EngineState>;
}

/// The plain simulator backend.
#[derive(Debug, Default)]
pub struct SimBackend {
    state: Option<EngineState>,
}

impl SimBackend {
    pub fn new() -> Self {
        SimBackend { state: None }
    }
}

impl Backend for SimBackend {
    fn reset(&mut self, instance: Arc<Instance>, _seed: u64) -> Observation {
        let (state, obs) = EngineState::reset(instance);
        self.state = Some(state);
        obs
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EngineError> {
        self.state.as_mut().expect("reset before step").step(action)
    }

    fn state(&self) -> Option<&EngineState> {
        self.state.as_ref()
    }

    fn state_mut(&mut self) -> Option<&mut EngineState> {
        self.state.as_mut()
    }
}

/// Fault-injecting wrapper: with probability `p_fail`, a would-be
/// successful action is replaced by a no-op failure that still costs a
/// step. Terminal is exempt; the stop signal cannot be lost.
pub struct FlakyBackend<B: Backend> {
    inner: B,
    p_fail: f64,
    rng: ChaCha8Rng,
    /// Non-Terminal actions that would have succeeded.
    pub attempted_successes: u64,
    /// How many of those were converted to failures.
    pub injected_failures: u64,
}

impl<B: Backend> FlakyBackend<B> {
    /// `p_fail` must lie in [0, 1).
    pub fn new(inner: B, p_fail: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&p_fail), "p_fail must be in [0, 1)");
        FlakyBackend {
            inner,
            p_fail,
            rng: rng_for(seed, 0),
            attempted_successes: 0,
            injected_failures: 0,
        }
    }
}

impl<B: Backend> Backend for FlakyBackend<B> {
    fn reset(&mut self, instance: Arc<Instance>, seed: u64) -> Observation {
        self.rng = rng_for(seed, 0);
        self.inner.reset(instance, seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult, EngineError> {
        let succeeds = self
            .inner
            .state()
            .expect("reset before step")
            .would_succeed(action)?;
        if succeeds && !matches!(action, Action::Terminal) {
            self.attempted_successes += 1;
            if self.rng.gen::<f64>() < self.p_fail {
                self.injected_failures += 1;
                let state = self.inner.state_mut().expect("state exists");
                return Ok(state.apply_failure(action));
            }
        }
        self.inner.step(action)
    }

    fn state(&self) -> Option<&EngineState> {
        self.inner.state()
    }

    fn state_mut(&mut self) -> Option<&mut EngineState> {
        self.inner.state_mut()
    }
}
