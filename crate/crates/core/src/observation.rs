//! Cumulative agent knowledge and its encodings: fixed-schema host
//! vectors, the padded matrix form, the subnet/host graph form, the
//! discovery-order positional embedding, and a DOT rendering.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AccessLevel, Action};
use crate::instancer::Address;
use crate::scenario::FeatureSchema;

#[derive(Debug, Error)]
pub enum ObsError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{hosts} discovered hosts overflow the {max_hosts}-host matrix")]
    Overflow { hosts: usize, max_hosts: usize },
    #[error("positional embedding dimension {0} is odd; need an even dimension >= 2")]
    OddDimension(usize),
}

/// Everything the agent knows about one discovered host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostView {
    pub address: Address,
    pub reached: bool,
    pub access: AccessLevel,
    pub services_scanned: bool,
    /// Full service set if scanned, else services learned from exploits.
    pub services: BTreeSet<String>,
    pub os_scanned: bool,
    pub os: Option<String>,
    pub processes_scanned: bool,
    pub processes: BTreeSet<String>,
    pub subnet_scanned: bool,
    pub sensitivity_known: bool,
    /// Meaningful only when `sensitivity_known`.
    pub sensitive: bool,
    /// Host value normalized by the scenario's sensitive_value; 0 until
    /// sensitivity is known.
    pub value: f64,
    pub discovery_order: usize,
}

/// The action echo attached to observations for rendering and tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastAction {
    pub action: Action,
    pub success: bool,
}

/// Cumulative episode knowledge: exactly the discovered hosts, ordered
/// by discovery, plus revealed subnet adjacency and the last action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub hosts: Vec<HostView>,
    pub known_edges: Vec<(usize, usize)>,
    pub last_action: Option<LastAction>,
}

impl Observation {
    /// Subnet ids of discovered hosts, ascending.
    pub fn discovered_subnets(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.hosts.iter().map(|h| h.address.0).collect();
        set.into_iter().collect()
    }
}

/// Encode one host view as a fixed-layout feature vector:
/// subnet one-hot, host-index one-hot, [reached, compromised, root],
/// services_scanned + service bits, os_scanned + OS one-hot,
/// processes_scanned + process bits, [sensitivity_known, sensitive],
/// normalized value.
pub fn encode_host(view: &HostView, schema: &FeatureSchema) -> Result<Vec<f64>, ObsError> {
    let d = schema.host_vector_dim();
    let mut v = vec![0.0; d];
    let (subnet, host) = view.address;
    if subnet == 0 || subnet >= schema.s_max {
        return Err(ObsError::SchemaMismatch(format!(
            "subnet id {subnet} outside schema range 1..{}",
            schema.s_max
        )));
    }
    if host >= schema.h_max {
        return Err(ObsError::SchemaMismatch(format!(
            "host index {host} outside schema range 0..{}",
            schema.h_max
        )));
    }
    let mut at = 0;
    v[at + subnet] = 1.0;
    at += schema.s_max;
    v[at + host] = 1.0;
    at += schema.h_max;
    v[at] = view.reached as u8 as f64;
    v[at + 1] = (view.access >= AccessLevel::User) as u8 as f64;
    v[at + 2] = (view.access == AccessLevel::Root) as u8 as f64;
    at += 3;
    v[at] = view.services_scanned as u8 as f64;
    at += 1;
    for svc in &view.services {
        let i = schema
            .service_index(svc)
            .ok_or_else(|| ObsError::SchemaMismatch(format!("service '{svc}' not in schema")))?;
        v[at + i] = 1.0;
    }
    at += schema.service_ids.len();
    v[at] = view.os_scanned as u8 as f64;
    at += 1;
    if let Some(os) = &view.os {
        let i = schema
            .os_index(os)
            .ok_or_else(|| ObsError::SchemaMismatch(format!("os '{os}' not in schema")))?;
        v[at + i] = 1.0;
    }
    at += schema.os_ids.len();
    v[at] = view.processes_scanned as u8 as f64;
    at += 1;
    for proc in &view.processes {
        let i = schema
            .process_index(proc)
            .ok_or_else(|| ObsError::SchemaMismatch(format!("process '{proc}' not in schema")))?;
        v[at + i] = 1.0;
    }
    at += schema.process_ids.len();
    v[at] = view.sensitivity_known as u8 as f64;
    v[at + 1] = view.sensitive as u8 as f64;
    at += 2;
    v[at] = view.value;
    debug_assert_eq!(at + 1, d);
    Ok(v)
}

/// Padded fixed-size encoding for the MLP model.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixObs {
    /// Shape (max_hosts, host_vector_dim); rows beyond `n_valid` are zero.
    pub data: Array2<f64>,
    pub mask: Vec<bool>,
    pub n_valid: usize,
}

/// Encode an observation as a zero-padded matrix of `max_hosts` rows.
/// Overflow is an error, never silent truncation.
pub fn encode_matrix(
    obs: &Observation,
    schema: &FeatureSchema,
    max_hosts: usize,
) -> Result<MatrixObs, ObsError> {
    if obs.hosts.len() > max_hosts {
        return Err(ObsError::Overflow { hosts: obs.hosts.len(), max_hosts });
    }
    let d = schema.host_vector_dim();
    let mut data = Array2::zeros((max_hosts, d));
    let mut mask = vec![false; max_hosts];
    for (i, view) in obs.hosts.iter().enumerate() {
        let row = encode_host(view, schema)?;
        data.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        mask[i] = true;
    }
    Ok(MatrixObs { data, mask, n_valid: obs.hosts.len() })
}

/// Graph encoding: subnet nodes first (ascending id), then host nodes in
/// discovery order; membership edges plus known subnet adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphObs {
    pub subnet_ids: Vec<usize>,
    /// One s_max-wide one-hot per subnet node.
    pub subnet_features: Vec<Vec<f64>>,
    pub host_addresses: Vec<Address>,
    pub host_features: Vec<Vec<f64>>,
    /// Node indices into subnets ++ hosts.
    pub edges: Vec<(usize, usize)>,
}

impl GraphObs {
    pub fn n_nodes(&self) -> usize {
        self.subnet_ids.len() + self.host_addresses.len()
    }
}

pub fn encode_graph(obs: &Observation, schema: &FeatureSchema) -> Result<GraphObs, ObsError> {
    let subnet_ids = obs.discovered_subnets();
    let subnet_node = |id: usize| subnet_ids.iter().position(|&s| s == id);
    let mut subnet_features = Vec::with_capacity(subnet_ids.len());
    for &s in &subnet_ids {
        if s == 0 || s >= schema.s_max {
            return Err(ObsError::SchemaMismatch(format!(
                "subnet id {s} outside schema range 1..{}",
                schema.s_max
            )));
        }
        let mut one_hot = vec![0.0; schema.s_max];
        one_hot[s] = 1.0;
        subnet_features.push(one_hot);
    }
    let mut host_addresses = Vec::with_capacity(obs.hosts.len());
    let mut host_features = Vec::with_capacity(obs.hosts.len());
    let mut edges = Vec::new();
    for (i, view) in obs.hosts.iter().enumerate() {
        host_addresses.push(view.address);
        host_features.push(encode_host(view, schema)?);
        let s = subnet_node(view.address.0).expect("host subnet is discovered");
        edges.push((s, subnet_ids.len() + i));
    }
    for &(a, b) in &obs.known_edges {
        if let (Some(x), Some(y)) = (subnet_node(a), subnet_node(b)) {
            edges.push((x, y));
        }
    }
    Ok(GraphObs { subnet_ids, subnet_features, host_addresses, host_features, edges })
}

/// Sine-cosine embedding of a discovery position:
/// out[2i] = sin(pos / 10000^(2i/dim)), out[2i+1] = cos(same).
pub fn positional_embedding(pos: usize, dim: usize) -> Result<Vec<f64>, ObsError> {
    if dim < 2 || dim % 2 != 0 {
        return Err(ObsError::OddDimension(dim));
    }
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Host rows for the size-invariant model: encode_host output with the
/// positional embedding of each host's discovery order appended.
pub fn encode_invariant_input(
    obs: &Observation,
    schema: &FeatureSchema,
    pe_dim: usize,
) -> Result<Array2<f64>, ObsError> {
    let d = schema.host_vector_dim() + pe_dim;
    let mut data = Array2::zeros((obs.hosts.len(), d));
    for (i, view) in obs.hosts.iter().enumerate() {
        let mut row = encode_host(view, schema)?;
        row.extend(positional_embedding(view.discovery_order, pe_dim)?);
        data.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    Ok(data)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn host_node_name(address: Address) -> String {
    format!("host_{}_{}", address.0, address.1)
}

/// Render the observation as a DOT digraph: one node per discovered host
/// grouped into subnet clusters, membership and known-adjacency edges,
/// and a highlight on the last action's target.
pub fn render_dot(obs: &Observation) -> String {
    let mut out = String::from("digraph observation {\n");
    out.push_str("  rankdir=LR;\n  labelloc=\"t\";\n");
    let caption = match &obs.last_action {
        None => "initial state".to_string(),
        Some(la) => {
            let mut s = format!("last action: {}", la.action.kind_name());
            if let Some(id) = la.action.id() {
                s.push_str(&format!(" {id}"));
            }
            if let Some((sn, h)) = la.action.target() {
                s.push_str(&format!(" on ({sn}, {h})"));
            }
            s.push_str(if la.success { " [ok]" } else { " [failed]" });
            s
        }
    };
    out.push_str(&format!("  label=\"{}\";\n", dot_escape(&caption)));
    let highlight = obs
        .last_action
        .as_ref()
        .and_then(|la| la.action.target())
        .map(host_node_name);

    for subnet in obs.discovered_subnets() {
        out.push_str(&format!("  subgraph cluster_subnet_{subnet} {{\n"));
        out.push_str(&format!("    label=\"subnet {subnet}\";\n"));
        out.push_str(&format!(
            "    subnet_{subnet} [shape=box, style=filled, fillcolor=lightgrey, label=\"subnet {subnet}\"];\n"
        ));
        for view in obs.hosts.iter().filter(|h| h.address.0 == subnet) {
            let mut label = format!("({}, {})", view.address.0, view.address.1);
            let access = match view.access {
                AccessLevel::None => "none",
                AccessLevel::User => "user",
                AccessLevel::Root => "root",
            };
            label.push_str(&format!("\\naccess: {access}"));
            if let Some(os) = &view.os {
                label.push_str(&format!("\\nos: {}", dot_escape(os)));
            }
            if !view.services.is_empty() {
                let list: Vec<String> =
                    view.services.iter().map(|s| dot_escape(s)).collect();
                label.push_str(&format!("\\nservices: {}", list.join(", ")));
            }
            if view.sensitivity_known {
                label.push_str(if view.sensitive { "\\nsensitive" } else { "\\nnot sensitive" });
            }
            let name = host_node_name(view.address);
            let extra = if highlight.as_deref() == Some(name.as_str()) {
                ", color=red, penwidth=3"
            } else {
                ""
            };
            out.push_str(&format!("    {name} [shape=ellipse, label=\"{label}\"{extra}];\n"));
        }
        out.push_str("  }\n");
    }
    for view in &obs.hosts {
        out.push_str(&format!(
            "  subnet_{} -> {} [arrowhead=none];\n",
            view.address.0,
            host_node_name(view.address)
        ));
    }
    for &(a, b) in &obs.known_edges {
        out.push_str(&format!("  subnet_{a} -> subnet_{b} [style=dashed, arrowhead=none];\n"));
    }
    out.push_str("}\n");
    out
}
