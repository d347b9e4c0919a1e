//! Scripted baselines: a uniform-random agent over the policies' flat
//! action space, a deterministic greedy heuristic that hunts the marker
//! service, and a replay agent for recorded traces.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{AccessLevel, Action};
use crate::observation::Observation;
use crate::policy::decode_action;
use crate::scenario::{FeatureSchema, ScenarioSpec};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("replay action {index} targets undiscovered host ({0}, {1})", .target.0, .target.1)]
    UndiscoveredTarget { index: usize, target: (usize, usize) },
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}

/// Picks uniformly over discovered-host x primitive pairs, the same
/// flat space the learned policies act in.
pub struct RandomAgent {
    schema: FeatureSchema,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(schema: FeatureSchema, seed: u64) -> Self {
        RandomAgent { schema, rng: rng_for(seed, 0) }
    }

    pub fn act(&mut self, obs: &Observation) -> Result<Action, AgentError> {
        let n = obs.hosts.len() * self.schema.action_dim();
        debug_assert!(n > 0, "an observation always contains the entry hosts");
        let flat = self.rng.gen_range(0..n);
        Ok(decode_action(flat, obs, &self.schema)?)
    }
}

/// Deterministic heuristic keyed to the marker service convention:
/// sensitive hosts advertise the marker, so the agent exploits marked
/// hosts, escalates on them, and otherwise expands its footprint.
///
/// Rule order, first match acts; host ties break toward the lowest
/// discovery order, id ties toward the lexicographically smallest id:
/// 1. privesc a user-access host known to be sensitive
/// 2. exploit a reachable unexploited host whose known services include
///    the marker, with an exploit matching those services
/// 3. service-scan a reachable host not yet service-scanned
/// 4. subnet-scan from a compromised host that has not subnet-scanned
/// 5. exploit any reachable unexploited host with a matching exploit
/// 6. terminal
pub struct GreedyMarkerAgent {
    spec: Arc<ScenarioSpec>,
}

impl GreedyMarkerAgent {
    pub fn new(spec: Arc<ScenarioSpec>) -> Self {
        GreedyMarkerAgent { spec }
    }

    pub fn act(&self, obs: &Observation) -> Action {
        // rule 1: escalate where loot is known to wait
        for h in &obs.hosts {
            if h.access == AccessLevel::User && h.sensitivity_known && h.sensitive {
                if let Some(id) = self.pick_privesc(h) {
                    return Action::PrivEsc { id, target: h.address };
                }
            }
        }
        // rule 2: exploit hosts that advertise the marker
        let marker = &self.spec.host_config.sensitive_marker_service;
        for h in &obs.hosts {
            if h.access == AccessLevel::None
                && h.reached
                && marker.as_ref().is_some_and(|m| h.services.contains(m))
            {
                if let Some(id) = self.pick_exploit(h) {
                    return Action::Exploit { id, target: h.address };
                }
            }
        }
        // rule 3: learn services before committing exploits
        for h in &obs.hosts {
            if h.reached && !h.services_scanned {
                return Action::ServiceScan { target: h.address };
            }
        }
        // rule 4: widen the horizon from each foothold once
        for h in &obs.hosts {
            if h.access >= AccessLevel::User && !h.subnet_scanned {
                return Action::SubnetScan { target: h.address };
            }
        }
        // rule 5: take any exploit that matches known services
        for h in &obs.hosts {
            if h.access == AccessLevel::None && h.reached {
                if let Some(id) = self.pick_exploit(h) {
                    return Action::Exploit { id, target: h.address };
                }
            }
        }
        Action::Terminal
    }

    fn pick_exploit(&self, h: &crate::observation::HostView) -> Option<String> {
        self.spec
            .exploits
            .iter()
            .filter(|e| h.services.contains(&e.service))
            .map(|e| e.id.clone())
            .min()
    }

    fn pick_privesc(&self, h: &crate::observation::HostView) -> Option<String> {
        // with the OS known, only matching escalations are worth firing;
        // unknown OS means any one is worth a blind attempt
        match &h.os {
            Some(os) => self
                .spec
                .privescs
                .iter()
                .filter(|p| &p.os == os)
                .map(|p| p.id.clone())
                .min(),
            None => self.spec.privescs.iter().map(|p| p.id.clone()).min(),
        }
    }
}

/// Replays a recorded action sequence, then terminates. Actions whose
/// target is not discovered in the live observation are rejected rather
/// than silently burned as failures.
pub struct ReplayAgent {
    actions: VecDeque<Action>,
    consumed: usize,
}

impl ReplayAgent {
    pub fn new(actions: Vec<Action>) -> Self {
        ReplayAgent { actions: actions.into(), consumed: 0 }
    }

    pub fn act(&mut self, obs: &Observation) -> Result<Action, AgentError> {
        let Some(action) = self.actions.pop_front() else {
            return Ok(Action::Terminal);
        };
        let index = self.consumed;
        self.consumed += 1;
        if let Some(target) = action.target() {
            if !obs.hosts.iter().any(|h| h.address == target) {
                return Err(AgentError::UndiscoveredTarget { index, target });
            }
        }
        Ok(action)
    }

    pub fn remaining(&self) -> usize {
        self.actions.len()
    }
}
