//! Remote-env wire protocol: line-delimited JSON over any byte streams,
//! so external agents can drive the batched env without linking this
//! crate. One session, one client, requests answered in order.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::observation::{encode_invariant_input, Observation};
use crate::policy::{decode_action, PE_DIM};
use crate::scenario::{FeatureSchema, ScenarioSpec};
use crate::vecenv::{VecEnv, VecStep};

pub const PROTO: &str = "nasimemu-like/1";

/// Host rows as sent on the wire: invariant encoding, one row of
/// host_vector_dim + pe_dim floats per discovered host.
pub type WireObs = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    /// Restart the whole session from its initial seed state.
    Reset,
    /// One flat action index per env, decoded against each env's
    /// current observation.
    Step { actions: Vec<usize> },
    Close,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpisodeInfo {
    pub reward: f64,
    pub steps: usize,
    pub scenario: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnvStep {
    pub obs: WireObs,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    /// Set when the episode ended this step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeInfo>,
    /// Auto-reset convention: the fresh episode's first observation
    /// rides alongside the terminal one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_obs: Option<WireObs>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    Hello {
        proto: String,
        d: usize,
        a: usize,
        s_max: usize,
        h_max: usize,
        pe_dim: usize,
        n_envs: usize,
    },
    Reset {
        proto: String,
        obs: Vec<WireObs>,
    },
    Step {
        proto: String,
        steps: Vec<EnvStep>,
    },
    Error {
        proto: String,
        code: String,
        message: String,
    },
    Close {
        proto: String,
    },
}

fn wire_obs(obs: &Observation, schema: &FeatureSchema) -> WireObs {
    let m = encode_invariant_input(obs, schema, PE_DIM)
        .expect("engine observations fit their own schema");
    m.outer_iter().map(|row| row.to_vec()).collect()
}

pub fn hello_response(schema: &FeatureSchema, n_envs: usize) -> Response {
    Response::Hello {
        proto: PROTO.into(),
        d: schema.host_vector_dim(),
        a: schema.action_dim(),
        s_max: schema.s_max,
        h_max: schema.h_max,
        pe_dim: PE_DIM,
        n_envs,
    }
}

pub fn reset_response(obs: &[Observation], schema: &FeatureSchema) -> Response {
    Response::Reset {
        proto: PROTO.into(),
        obs: obs.iter().map(|o| wire_obs(o, schema)).collect(),
    }
}

pub fn step_response(steps: &[VecStep], schema: &FeatureSchema) -> Response {
    Response::Step {
        proto: PROTO.into(),
        steps: steps
            .iter()
            .map(|s| EnvStep {
                obs: wire_obs(&s.result.observation, schema),
                reward: s.result.reward,
                done: s.result.done,
                truncated: s.truncated,
                episode: s.finished.as_ref().map(|f| EpisodeInfo {
                    reward: f.reward,
                    steps: f.steps,
                    scenario: f.scenario,
                }),
                reset_obs: s.reset_obs.as_ref().map(|o| wire_obs(o, schema)),
            })
            .collect(),
    }
}

fn error_response(code: &str, message: String) -> Response {
    Response::Error { proto: PROTO.into(), code: code.into(), message }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub specs: Vec<Arc<ScenarioSpec>>,
    pub n_envs: usize,
    pub seed: u64,
    pub step_cap: Option<usize>,
}

/// Run one session: emit the hello line, then answer request lines
/// until `close`, EOF, or a transport failure. Malformed lines and
/// invalid actions produce error responses, never session death.
pub fn serve(cfg: &ServeConfig, reader: impl BufRead, mut writer: impl Write) -> std::io::Result<()> {
    let (mut env, mut cur_obs) =
        match VecEnv::sim(cfg.specs.clone(), cfg.n_envs, cfg.seed, cfg.step_cap) {
            Ok(pair) => pair,
            Err(e) => {
                write_line(&mut writer, &error_response("bad_config", e.to_string()))?;
                return Ok(());
            }
        };
    let schema = env.schema().clone();
    write_line(&mut writer, &hello_response(&schema, env.n_envs()))?;

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                write_line(&mut writer, &error_response("bad_request", e.to_string()))?;
                continue;
            }
        };
        match request {
            Request::Reset => {
                let (fresh_env, fresh_obs) =
                    VecEnv::sim(cfg.specs.clone(), cfg.n_envs, cfg.seed, cfg.step_cap)
                        .expect("the session constructed from this config before");
                env = fresh_env;
                cur_obs = fresh_obs;
                write_line(&mut writer, &reset_response(&cur_obs, &schema))?;
            }
            Request::Step { actions } => {
                if actions.len() != env.n_envs() {
                    write_line(
                        &mut writer,
                        &error_response(
                            "bad_actions",
                            format!("expected {} actions, got {}", env.n_envs(), actions.len()),
                        ),
                    )?;
                    continue;
                }
                let mut decoded = Vec::with_capacity(actions.len());
                let mut bad = None;
                for (i, &flat) in actions.iter().enumerate() {
                    match decode_action(flat, &cur_obs[i], &schema) {
                        Ok(a) => decoded.push(a),
                        Err(e) => {
                            bad = Some(format!("env {i}: {e}"));
                            break;
                        }
                    }
                }
                if let Some(message) = bad {
                    write_line(&mut writer, &error_response("bad_actions", message))?;
                    continue;
                }
                let steps = env.step(&decoded).expect("decoded actions are well-formed");
                for (i, s) in steps.iter().enumerate() {
                    cur_obs[i] = match &s.reset_obs {
                        Some(o) => o.clone(),
                        None => s.result.observation.clone(),
                    };
                }
                write_line(&mut writer, &step_response(&steps, &schema))?;
            }
            Request::Close => {
                write_line(&mut writer, &Response::Close { proto: PROTO.into() })?;
                return Ok(());
            }
        }
    }
    Ok(())
}

fn write_line(writer: &mut impl Write, response: &Response) -> std::io::Result<()> {
    let text = serde_json::to_string(response).expect("responses always serialize");
    writer.write_all(text.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()
}

/// Parse a full response transcript (one JSON object per line).
pub fn parse_transcript(text: &str) -> Result<Vec<Response>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
