//! Sampling concrete network instances from a scenario, and per-episode
//! ID permutation.
//!
//! `instantiate` is a pure function of (spec, seed). Each random purpose
//! draws from its own RNG stream (sizes, sensitivity, one per-host config
//! stream, permutation) so extending one sampler never shifts another.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ScenarioSpec;
use crate::seeding::{rng_for, stream};

/// Host address: (subnet id, host index). Subnet ids are 1-based; host
/// indices are 0-based and dense within a subnet.
pub type Address = (usize, usize);

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("infeasible configuration in scenario '{scenario}': {what}")]
    Infeasible { scenario: String, what: String },
}

/// One concrete host sampled from the scenario's catalogs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostConfig {
    pub address: Address,
    pub os: String,
    pub services: BTreeSet<String>,
    pub processes: BTreeSet<String>,
    pub sensitive: bool,
    pub value: f64,
}

/// A fully concrete network sampled from a scenario.
///
/// Fresh from [`instantiate`], subnet id i+1 corresponds to
/// `spec.subnets[i]`. After [`permute_ids`] the correspondence is broken
/// on purpose; only the structure survives, up to relabeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub spec: Arc<ScenarioSpec>,
    /// Host count per subnet id (index 0 is subnet id 1).
    pub subnet_sizes: Vec<usize>,
    /// Hosts in address order, grouped by subnet.
    pub hosts: Vec<HostConfig>,
    /// Subnet adjacency over ids; 0 is the internet pseudo-node.
    pub topology: Vec<(usize, usize)>,
    /// Entry subnet ids, ascending.
    pub entry: Vec<usize>,
    /// Seed `instantiate` was called with, kept for provenance.
    pub seed: u64,
}

impl Instance {
    pub fn n_subnets(&self) -> usize {
        self.subnet_sizes.len()
    }

    pub fn n_hosts(&self) -> usize {
        self.hosts.len()
    }

    pub fn host(&self, address: Address) -> Option<&HostConfig> {
        self.host_ordinal(address).map(|i| &self.hosts[i])
    }

    /// Position of an address in the `hosts` sequence.
    pub fn host_ordinal(&self, (subnet, host): Address) -> Option<usize> {
        if subnet == 0 || subnet > self.subnet_sizes.len() || host >= self.subnet_sizes[subnet - 1] {
            return None;
        }
        let before: usize = self.subnet_sizes[..subnet - 1].iter().sum();
        Some(before + host)
    }

    /// Subnet ids adjacent to `subnet` in the topology (0 = internet).
    pub fn neighbors(&self, subnet: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .topology
            .iter()
            .filter_map(|&(a, b)| {
                if a == subnet {
                    Some(b)
                } else if b == subnet {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Sample a concrete instance. Deterministic in (spec, seed).
pub fn instantiate(spec: &Arc<ScenarioSpec>, seed: u64) -> Result<Instance, InstanceError> {
    let infeasible = |what: String| InstanceError::Infeasible {
        scenario: spec.name.clone(),
        what,
    };

    // Fail fast on configurations that cannot satisfy the per-host count
    // ranges for some OS the sampler may draw. Counts are drawn uniformly
    // from the declared range, so every count in it must be satisfiable
    // without replacement; clamping would bias the distribution.
    let [_, svc_max] = spec.host_config.services_per_host;
    let [_, proc_max] = spec.host_config.processes_per_host;
    for os in &spec.os_list {
        let n_svc = spec.services.iter().filter(|s| s.os.contains(os)).count();
        if n_svc < svc_max {
            return Err(infeasible(format!(
                "os '{os}' has {n_svc} compatible services but services_per_host allows up to {svc_max}"
            )));
        }
        let n_proc = spec.processes.iter().filter(|p| p.os.contains(os)).count();
        if n_proc < proc_max {
            return Err(infeasible(format!(
                "os '{os}' has {n_proc} compatible processes but processes_per_host allows up to {proc_max}"
            )));
        }
    }

    let mut size_rng = rng_for(seed, stream::SIZES);
    let subnet_sizes: Vec<usize> = spec
        .subnets
        .iter()
        .map(|s| size_rng.gen_range(s.size[0]..=s.size[1]))
        .collect();

    let mut sens_rng = rng_for(seed, stream::SENSITIVITY);
    let mut sensitive_flags = Vec::new();
    for (subnet, size) in subnet_sizes.iter().enumerate() {
        let p = spec.subnets[subnet].sensitivity;
        for _ in 0..*size {
            sensitive_flags.push(sens_rng.gen::<f64>() < p);
        }
    }

    let marker = spec.host_config.sensitive_marker_service.as_deref();
    let mut hosts = Vec::with_capacity(sensitive_flags.len());
    let mut ordinal = 0u64;
    for (subnet, size) in subnet_sizes.iter().enumerate() {
        for host in 0..*size {
            let sensitive = sensitive_flags[ordinal as usize];
            let mut rng = rng_for(seed, stream::CONFIG_BASE + ordinal);
            let os = spec.os_list[rng.gen_range(0..spec.os_list.len())].clone();

            if sensitive {
                if let Some(m) = marker {
                    let compatible = spec.service(m).is_some_and(|s| s.os.contains(&os));
                    if !compatible {
                        return Err(infeasible(format!(
                            "sensitive host ({}, {host}) drew os '{os}' but the marker \
                             service '{m}' does not run on it",
                            subnet + 1
                        )));
                    }
                }
            }

            let compat_services: Vec<&str> = spec
                .services
                .iter()
                .filter(|s| s.os.contains(&os))
                .map(|s| s.id.as_str())
                .collect();
            let [smin, smax] = spec.host_config.services_per_host;
            let n_services = rng.gen_range(smin..=smax);
            let mut services: BTreeSet<String> = compat_services
                .choose_multiple(&mut rng, n_services)
                .map(|s| s.to_string())
                .collect();
            if sensitive {
                if let Some(m) = marker {
                    services.insert(m.to_string());
                }
            }

            let compat_processes: Vec<&str> = spec
                .processes
                .iter()
                .filter(|p| p.os.contains(&os))
                .map(|p| p.id.as_str())
                .collect();
            let [pmin, pmax] = spec.host_config.processes_per_host;
            let n_processes = rng.gen_range(pmin..=pmax);
            let processes: BTreeSet<String> = compat_processes
                .choose_multiple(&mut rng, n_processes)
                .map(|s| s.to_string())
                .collect();

            hosts.push(HostConfig {
                address: (subnet + 1, host),
                os,
                services,
                processes,
                sensitive,
                value: if sensitive { spec.rewards.sensitive_value } else { 0.0 },
            });
            ordinal += 1;
        }
    }

    Ok(Instance {
        spec: Arc::clone(spec),
        subnet_sizes,
        hosts,
        topology: spec.adjacency_ids(),
        entry: spec.entry_ids(),
        seed,
    })
}

/// Bijective relabeling of subnet ids and of host indices within each
/// subnet. The internet pseudo-node (id 0) is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdPermutation {
    /// `subnet_map[old_id] = new_id`; entry 0 maps 0 to 0.
    pub subnet_map: Vec<usize>,
    /// Per old subnet id (index old_id - 1): `host_map[old_idx] = new_idx`.
    pub host_maps: Vec<Vec<usize>>,
}

impl IdPermutation {
    pub fn identity(subnet_sizes: &[usize]) -> Self {
        IdPermutation {
            subnet_map: (0..=subnet_sizes.len()).collect(),
            host_maps: subnet_sizes.iter().map(|&n| (0..n).collect()).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.subnet_map.iter().enumerate().all(|(i, &v)| i == v)
            && self
                .host_maps
                .iter()
                .all(|m| m.iter().enumerate().all(|(i, &v)| i == v))
    }

    pub fn apply_address(&self, (subnet, host): Address) -> Address {
        (self.subnet_map[subnet], self.host_maps[subnet - 1][host])
    }

    pub fn inverse(&self) -> IdPermutation {
        let mut subnet_map = vec![0; self.subnet_map.len()];
        for (old, &new) in self.subnet_map.iter().enumerate() {
            subnet_map[new] = old;
        }
        // The inverse's host map for NEW subnet id n must undo the host
        // relabeling of the OLD subnet that was sent to n.
        let mut host_maps = vec![Vec::new(); self.host_maps.len()];
        for (old_idx, map) in self.host_maps.iter().enumerate() {
            let new_id = self.subnet_map[old_idx + 1];
            let mut inv = vec![0; map.len()];
            for (i, &v) in map.iter().enumerate() {
                inv[v] = i;
            }
            host_maps[new_id - 1] = inv;
        }
        IdPermutation { subnet_map, host_maps }
    }
}

/// Relabel an instance with `perm`. Structure is preserved exactly;
/// only addresses change.
pub fn apply_permutation(instance: &Instance, perm: &IdPermutation) -> Instance {
    assert_eq!(perm.subnet_map.len(), instance.n_subnets() + 1);
    let mut subnet_sizes = vec![0; instance.n_subnets()];
    for (old, &size) in instance.subnet_sizes.iter().enumerate() {
        subnet_sizes[perm.subnet_map[old + 1] - 1] = size;
    }
    let mut hosts = instance.hosts.clone();
    for h in &mut hosts {
        h.address = perm.apply_address(h.address);
    }
    hosts.sort_by_key(|h| h.address);
    let mut topology: Vec<(usize, usize)> = instance
        .topology
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (perm.subnet_map[a], perm.subnet_map[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    topology.sort_unstable();
    let mut entry: Vec<usize> = instance.entry.iter().map(|&e| perm.subnet_map[e]).collect();
    entry.sort_unstable();
    Instance {
        spec: Arc::clone(&instance.spec),
        subnet_sizes,
        hosts,
        topology,
        entry,
        seed: instance.seed,
    }
}

/// Sample a uniform relabeling and return the relabeled instance with
/// the permutation used, for trace and debug alignment.
pub fn permute_ids(instance: &Instance, seed: u64) -> (Instance, IdPermutation) {
    let mut rng = rng_for(seed, stream::PERMUTE);
    let mut subnet_map: Vec<usize> = (1..=instance.n_subnets()).collect();
    subnet_map.shuffle(&mut rng);
    subnet_map.insert(0, 0);
    let host_maps: Vec<Vec<usize>> = instance
        .subnet_sizes
        .iter()
        .map(|&n| {
            let mut m: Vec<usize> = (0..n).collect();
            m.shuffle(&mut rng);
            m
        })
        .collect();
    let perm = IdPermutation { subnet_map, host_maps };
    (apply_permutation(instance, &perm), perm)
}
