//! Operator front end: scenario generation, episode runs with scripted
//! or learned agents, training, evaluation, the generalization
//! experiment, DOT rendering, oracle analysis, and the remote-env
//! server. Exit codes: 0 success, 2 validation error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use attacksim::agents::{GreedyMarkerAgent, RandomAgent};
use attacksim::engine::{
    Action, Backend, EngineState, FlakyBackend, SimBackend, TraceAction, TraceRecord,
};
use attacksim::instancer::{instantiate, Instance};
use attacksim::observation::render_dot;
use attacksim::oracle::optimal_plan;
use attacksim::policy::{
    decode_action, greedy_action, load_checkpoint, save_checkpoint, checkpoint_model_name,
    InvariantPolicy, MlpPolicy, PolicyModel, INVARIANT_EMBED, MLP_HIDDEN,
};
use attacksim::protocol::{serve, ServeConfig};
use attacksim::scenario::{
    bundled_scenario, bundled_scenarios, parse_scenario, unify_feature_schema, FeatureSchema,
    ScenarioSpec,
};
use attacksim::trainer::{
    evaluate, run_experiment, train, EvalMode, EvalReport, ExperimentConfig, ExperimentKind,
    MetricRow, TrainConfig, CSV_HEADER,
};

#[derive(Parser)]
#[command(name = "attacksim", version, about = "Network attack simulator and RL harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Bundled scenario name or path to a scenario JSON file (repeatable).
    #[arg(long = "scenario", required = true, num_args = 1..)]
    scenarios: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample concrete instances from a scenario.
    Generate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Output directory for instance JSON files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write a JSONL trace.
    Run {
        /// Bundled scenario name or scenario JSON path.
        #[arg(long)]
        scenario: Option<String>,
        /// Pre-generated instance JSON path (alternative to --scenario).
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Agent: random, greedy, or checkpoint.
        #[arg(long, default_value = "random")]
        agent: String,
        /// Checkpoint path (required when --agent checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        step_cap: usize,
        /// Inject action failures with this probability.
        #[arg(long)]
        p_fail: Option<f64>,
        /// Trace file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on a scenario set.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Model: mlp or invariant.
        #[arg(long, default_value = "invariant")]
        model: String,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        n_envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        step_cap: usize,
        #[arg(long, default_value_t = 30)]
        eval_episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with greedy action selection.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        step_cap: usize,
        /// Sample actions instead of taking the greedy argmax.
        #[arg(long, default_value_t = false)]
        stochastic: bool,
    },
    /// Train both architectures across seeds and emit the metric CSV.
    Experiment {
        /// Direction: sm2md or md2sm.
        kind: String,
        #[arg(long, default_value_t = 6)]
        seeds: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        n_envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        eval_episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate a trace and write one DOT frame per step.
    Render {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the remote-env protocol over stdio.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        n_envs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        step_cap: Option<usize>,
    },
    /// Compute the optimal plan for a small instance.
    Analyze {
        /// Bundled scenario name or scenario JSON path.
        #[arg(long)]
        scenario: Option<String>,
        /// Pre-generated instance JSON path (alternative to --scenario).
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        step_cap: usize,
    },
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<attacksim::trainer::TrainError> for CliError {
    fn from(e: attacksim::trainer::TrainError) -> Self {
        match e {
            attacksim::trainer::TrainError::Config(msg) => CliError::Validation(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Resolve a --scenario value: bundled name first, then file path.
fn load_scenario(s: &str) -> Result<ScenarioSpec, CliError> {
    if let Some(spec) = bundled_scenario(s) {
        return Ok(spec);
    }
    let path = Path::new(s);
    if !path.exists() {
        let names: Vec<String> = bundled_scenarios().into_keys().collect();
        return Err(CliError::validation(format!(
            "scenario '{s}' is neither a bundled name nor a file; bundled: {}",
            names.join(", ")
        )));
    }
    let text = fs::read_to_string(path)?;
    parse_scenario(&text)
        .map_err(|e| CliError::validation(format!("invalid scenario file {s}: {e}")))
}

fn load_scenario_set(names: &[String]) -> Result<Vec<Arc<ScenarioSpec>>, CliError> {
    names.iter().map(|s| load_scenario(s).map(Arc::new)).collect()
}

/// One schema for all learned-model work: the full bundle plus any
/// user-supplied scenario files, so checkpoints from different
/// subcommands stay shape-compatible.
fn unified_schema(extra: &[Arc<ScenarioSpec>]) -> FeatureSchema {
    let mut all: Vec<ScenarioSpec> = bundled_scenarios().into_values().collect();
    for spec in extra {
        if !all.iter().any(|s| s.name == spec.name) {
            all.push((**spec).clone());
        }
    }
    unify_feature_schema(&all)
}

fn load_instance(path: &Path) -> Result<Arc<Instance>, CliError> {
    let text = fs::read_to_string(path)?;
    let instance: Instance = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("invalid instance file: {e}")))?;
    Ok(Arc::new(instance))
}

fn resolve_instance(
    scenario: &Option<String>,
    instance: &Option<PathBuf>,
    seed: u64,
) -> Result<(Arc<Instance>, String), CliError> {
    match (scenario, instance) {
        (Some(_), Some(_)) => {
            Err(CliError::validation("--scenario and --instance are mutually exclusive"))
        }
        (None, None) => Err(CliError::validation("one of --scenario or --instance is required")),
        (Some(s), None) => {
            let spec = Arc::new(load_scenario(s)?);
            let inst = instantiate(&spec, seed)
                .map_err(|e| CliError::Runtime(format!("instantiation failed: {e}")))?;
            Ok((Arc::new(inst), s.clone()))
        }
        (None, Some(p)) => {
            let inst = load_instance(p)?;
            let name = inst.spec.name.clone();
            Ok((inst, name))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    scenario: String,
    agent: String,
    seed: u64,
    step_cap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_fail: Option<f64>,
    instance: Instance,
}

#[derive(Serialize, Deserialize)]
struct TraceSummary {
    total_reward: f64,
    steps: usize,
    done: bool,
}

enum Agent {
    Random(RandomAgent),
    Greedy(GreedyMarkerAgent),
    Mlp(MlpPolicy, FeatureSchema),
    Invariant(InvariantPolicy, FeatureSchema),
}

impl Agent {
    fn act(&mut self, obs: &attacksim::Observation) -> Result<Action, CliError> {
        match self {
            Agent::Random(a) => {
                a.act(obs).map_err(|e| CliError::Runtime(format!("random agent: {e}")))
            }
            Agent::Greedy(a) => Ok(a.act(obs)),
            Agent::Mlp(m, schema) => policy_act(m, schema, obs),
            Agent::Invariant(m, schema) => policy_act(m, schema, obs),
        }
    }
}

fn policy_act<M: PolicyModel>(
    model: &M,
    schema: &FeatureSchema,
    obs: &attacksim::Observation,
) -> Result<Action, CliError> {
    let (out, _) = model
        .forward_obs(obs, schema)
        .map_err(|e| CliError::Runtime(format!("policy forward: {e}")))?;
    let flat = greedy_action(&out).map_err(|e| CliError::Runtime(format!("action choice: {e}")))?;
    decode_action(flat, obs, schema).map_err(|e| CliError::Runtime(format!("action decode: {e}")))
}

fn load_policy_agent(path: &Path, schema: &FeatureSchema) -> Result<Agent, CliError> {
    let text = fs::read_to_string(path)?;
    let name = checkpoint_model_name(&text)
        .map_err(|e| CliError::validation(format!("unreadable checkpoint: {e}")))?;
    let fingerprint: serde_json::Value = serde_json::from_str(&text)
        .expect("checkpoint_model_name already parsed this text");
    let hidden = fingerprint["fingerprint"]["hidden"].as_u64().unwrap_or(0) as usize;
    match name.as_str() {
        "mlp" => {
            let mut model = MlpPolicy::new(schema, hidden.max(1), 0);
            load_checkpoint(&mut model, schema, &text)
                .map_err(|e| CliError::validation(format!("checkpoint rejected: {e}")))?;
            Ok(Agent::Mlp(model, schema.clone()))
        }
        "invariant" => {
            let mut model = InvariantPolicy::new(schema, hidden.max(1), 0);
            load_checkpoint(&mut model, schema, &text)
                .map_err(|e| CliError::validation(format!("checkpoint rejected: {e}")))?;
            Ok(Agent::Invariant(model, schema.clone()))
        }
        other => Err(CliError::validation(format!("unknown model family '{other}'"))),
    }
}

fn trace_action_to_action(ta: &TraceAction) -> Result<Action, CliError> {
    let target = || {
        ta.target.ok_or_else(|| {
            CliError::validation(format!("trace action '{}' lacks a target", ta.kind))
        })
    };
    let id = || {
        ta.id.clone().ok_or_else(|| {
            CliError::validation(format!("trace action '{}' lacks an id", ta.kind))
        })
    };
    Ok(match ta.kind.as_str() {
        "exploit" => Action::Exploit { id: id()?, target: target()? },
        "privesc" => Action::PrivEsc { id: id()?, target: target()? },
        "service_scan" => Action::ServiceScan { target: target()? },
        "os_scan" => Action::OsScan { target: target()? },
        "subnet_scan" => Action::SubnetScan { target: target()? },
        "process_scan" => Action::ProcessScan { target: target()? },
        "terminal" => Action::Terminal,
        other => return Err(CliError::validation(format!("unknown trace action kind '{other}'"))),
    })
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Generate { scenario, seed, count, out } => cmd_generate(scenario, seed, count, out),
        Cmd::Run { scenario, instance, agent, checkpoint, seed, step_cap, p_fail, out } => {
            cmd_run(scenario, instance, agent, checkpoint, seed, step_cap, p_fail, out)
        }
        Cmd::Train { scenario, model, epochs, n_envs, seed, step_cap, eval_episodes, out } => {
            cmd_train(scenario, model, epochs, n_envs, seed, step_cap, eval_episodes, out)
        }
        Cmd::Eval { checkpoint, scenario, episodes, seed, step_cap, stochastic } => {
            cmd_eval(checkpoint, scenario, episodes, seed, step_cap, stochastic)
        }
        Cmd::Experiment { kind, seeds, epochs, n_envs, seed, eval_episodes, out } => {
            cmd_experiment(kind, seeds, epochs, n_envs, seed, eval_episodes, out)
        }
        Cmd::Render { trace, out } => cmd_render(trace, out),
        Cmd::Serve { scenario, n_envs, seed, step_cap } => {
            cmd_serve(scenario, n_envs, seed, step_cap)
        }
        Cmd::Analyze { scenario, instance, seed, step_cap } => {
            cmd_analyze(scenario, instance, seed, step_cap)
        }
    }
}

fn cmd_generate(
    scenario: ScenarioArgs,
    seed: u64,
    count: u64,
    out: PathBuf,
) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::validation("--count must be at least 1"));
    }
    let specs = load_scenario_set(&scenario.scenarios)?;
    fs::create_dir_all(&out)?;
    for spec in &specs {
        for offset in 0..count {
            let s = seed + offset;
            let instance = instantiate(spec, s)
                .map_err(|e| CliError::Runtime(format!("instantiation failed: {e}")))?;
            let path = out.join(format!("{}_seed{s}.json", spec.name));
            fs::write(&path, serde_json::to_string_pretty(&instance).expect("serializable"))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: Option<String>,
    instance: Option<PathBuf>,
    agent_name: String,
    checkpoint: Option<PathBuf>,
    seed: u64,
    step_cap: usize,
    p_fail: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(p) = p_fail {
        if !(0.0..1.0).contains(&p) {
            return Err(CliError::validation(format!("--p-fail {p} outside [0, 1)")));
        }
    }
    let (inst, scenario_name) = resolve_instance(&scenario, &instance, seed)?;
    let schema_specs = vec![inst.spec.clone()];
    let mut agent = match agent_name.as_str() {
        "random" => {
            let plain: Vec<ScenarioSpec> = vec![(*inst.spec).clone()];
            Agent::Random(RandomAgent::new(unify_feature_schema(&plain), seed))
        }
        "greedy" => Agent::Greedy(GreedyMarkerAgent::new(inst.spec.clone())),
        "checkpoint" => {
            let path = checkpoint
                .ok_or_else(|| CliError::validation("--agent checkpoint requires --checkpoint"))?;
            load_policy_agent(&path, &unified_schema(&schema_specs))?
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown agent '{other}' (expected random, greedy, or checkpoint)"
            )))
        }
    };

    let mut backend: Box<dyn Backend> = match p_fail {
        Some(p) if p > 0.0 => Box::new(FlakyBackend::new(SimBackend::new(), p, seed)),
        _ => Box::new(SimBackend::new()),
    };
    let mut obs = backend.reset(inst.clone(), seed);

    let mut lines: Vec<String> = Vec::new();
    let header = TraceHeader {
        scenario: scenario_name,
        agent: agent_name,
        seed,
        step_cap,
        p_fail,
        instance: (*inst).clone(),
    };
    lines.push(serde_json::to_string(&header).expect("serializable"));

    let mut t = 0;
    loop {
        let state = backend.state().expect("backend was reset");
        if state.done || state.steps_costed >= step_cap {
            break;
        }
        let action = agent.act(&obs)?;
        let result = backend
            .step(&action)
            .map_err(|e| CliError::Runtime(format!("engine step: {e}")))?;
        lines.push(serde_json::to_string(&TraceRecord::from_step(t, &result)).expect("serializable"));
        t += 1;
        let done = result.done;
        obs = result.observation;
        if done {
            break;
        }
    }
    let state = backend.state().expect("backend was reset");
    let summary =
        TraceSummary { total_reward: state.episode_reward, steps: state.steps_costed, done: state.done };
    lines.push(serde_json::to_string(&serde_json::json!({ "summary": summary })).expect("serializable"));

    let text = lines.join("\n") + "\n";
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_model(name: &str) -> Result<&'static str, CliError> {
    match name {
        "mlp" => Ok("mlp"),
        "invariant" => Ok("invariant"),
        other => {
            Err(CliError::validation(format!("unknown model '{other}' (expected mlp or invariant)")))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    scenario: ScenarioArgs,
    model_name: String,
    epochs: usize,
    n_envs: usize,
    seed: u64,
    step_cap: usize,
    eval_episodes: usize,
    out: PathBuf,
) -> Result<(), CliError> {
    let model_name = parse_model(&model_name)?;
    let specs = load_scenario_set(&scenario.scenarios)?;
    let schema = unified_schema(&specs);
    let cfg = TrainConfig {
        n_envs,
        epochs,
        seed,
        step_cap: Some(step_cap),
        ..TrainConfig::default()
    };
    fs::create_dir_all(&out)?;

    let mut rows: Vec<MetricRow> = Vec::new();
    let checkpoint = if model_name == "mlp" {
        let mut model = MlpPolicy::new(&schema, MLP_HIDDEN, attacksim::seeding::derive_seed(seed, 11));
        train(&mut model, &cfg, &specs, &schema, |epoch, m| {
            let report = evaluate(
                m,
                &specs,
                &schema,
                eval_episodes,
                attacksim::seeding::derive_seed(seed, 1000 + epoch as u64),
                step_cap,
                EvalMode::Stochastic { sample_terminal: cfg.sample_terminal },
            )
            .expect("evaluation cannot fail on a validated scenario set");
            rows.push(MetricRow {
                epoch,
                seed: 0,
                model: "mlp",
                eval_set: "train",
                avg_reward_per_step: report.avg_reward_per_step,
                ci_half_width: report.ci_half_width,
            });
            eprintln!("epoch {epoch}: train avg/step {:.3}", report.avg_reward_per_step);
        })?;
        save_checkpoint(&model, &schema)
    } else {
        let mut model =
            InvariantPolicy::new(&schema, INVARIANT_EMBED, attacksim::seeding::derive_seed(seed, 12));
        train(&mut model, &cfg, &specs, &schema, |epoch, m| {
            let report = evaluate(
                m,
                &specs,
                &schema,
                eval_episodes,
                attacksim::seeding::derive_seed(seed, 1000 + epoch as u64),
                step_cap,
                EvalMode::Stochastic { sample_terminal: cfg.sample_terminal },
            )
            .expect("evaluation cannot fail on a validated scenario set");
            rows.push(MetricRow {
                epoch,
                seed: 0,
                model: "invariant",
                eval_set: "train",
                avg_reward_per_step: report.avg_reward_per_step,
                ci_half_width: report.ci_half_width,
            });
            eprintln!("epoch {epoch}: train avg/step {:.3}", report.avg_reward_per_step);
        })?;
        save_checkpoint(&model, &schema)
    };

    let ckpt_path = out.join(format!("checkpoint_{model_name}.json"));
    fs::write(&ckpt_path, checkpoint)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.seed, r.model, r.eval_set, r.avg_reward_per_step, r.ci_half_width
        ));
    }
    let csv_path = out.join("metrics.csv");
    fs::write(&csv_path, csv)?;
    println!("{}", ckpt_path.display());
    println!("{}", csv_path.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: PathBuf,
    scenario: ScenarioArgs,
    episodes: usize,
    seed: u64,
    step_cap: usize,
    stochastic: bool,
) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::validation("--episodes must be at least 1"));
    }
    let mode = if stochastic {
        EvalMode::Stochastic { sample_terminal: false }
    } else {
        EvalMode::Greedy
    };
    let specs = load_scenario_set(&scenario.scenarios)?;
    let schema = unified_schema(&specs);
    let agent = load_policy_agent(&checkpoint, &schema)?;
    let report: EvalReport = match &agent {
        Agent::Mlp(m, _) => evaluate(m, &specs, &schema, episodes, seed, step_cap, mode)?,
        Agent::Invariant(m, _) => evaluate(m, &specs, &schema, episodes, seed, step_cap, mode)?,
        _ => unreachable!("load_policy_agent only builds policy agents"),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    kind: String,
    seeds: usize,
    epochs: usize,
    n_envs: usize,
    seed: u64,
    eval_episodes: usize,
    out: PathBuf,
) -> Result<(), CliError> {
    let kind = ExperimentKind::parse(&kind)
        .ok_or_else(|| CliError::validation(format!("unknown experiment '{kind}' (expected sm2md or md2sm)")))?;
    if seeds == 0 {
        return Err(CliError::validation("--seeds must be at least 1"));
    }
    let cfg = ExperimentConfig {
        train: TrainConfig { n_envs, epochs, seed, ..TrainConfig::default() },
        seeds,
        eval_episodes,
    };
    let result = run_experiment(kind, &cfg)?;
    fs::create_dir_all(&out)?;
    let csv_path = out.join(format!("{}_metrics.csv", kind.name()));
    fs::write(&csv_path, &result.csv)?;
    for (label, text) in &result.checkpoints {
        fs::write(out.join(format!("{}_{label}.json", kind.name())), text)?;
    }
    println!("{}", csv_path.display());
    Ok(())
}

fn cmd_render(trace: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let text = fs::read_to_string(&trace)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: TraceHeader = match lines.next() {
        Some(first) => serde_json::from_str(first)
            .map_err(|e| CliError::validation(format!("bad trace header: {e}")))?,
        None => return Err(CliError::validation("trace file is empty")),
    };
    fs::create_dir_all(&out)?;
    let (mut state, _) = EngineState::reset(Arc::new(header.instance));
    let mut frames = 0;
    for line in lines {
        let record: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CliError::validation(format!("bad trace line: {e}")))?;
        if record.get("summary").is_some() {
            break;
        }
        let record: TraceRecord = serde_json::from_str(line)
            .map_err(|e| CliError::validation(format!("bad trace record: {e}")))?;
        let action = trace_action_to_action(&record.action)?;
        let result = state
            .step(&action)
            .map_err(|e| CliError::Runtime(format!("trace replay diverged at t={}: {e}", record.t)))?;
        let path = out.join(format!("frame_{:04}.dot", record.t));
        fs::write(&path, render_dot(&result.observation))?;
        frames += 1;
        if result.done {
            break;
        }
    }
    println!("{frames} frames written to {}", out.display());
    Ok(())
}

fn cmd_serve(
    scenario: ScenarioArgs,
    n_envs: usize,
    seed: u64,
    step_cap: Option<usize>,
) -> Result<(), CliError> {
    let specs = load_scenario_set(&scenario.scenarios)?;
    let cfg = ServeConfig { specs, n_envs, seed, step_cap };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(&cfg, stdin.lock(), stdout.lock())?;
    Ok(())
}

fn cmd_analyze(
    scenario: Option<String>,
    instance: Option<PathBuf>,
    seed: u64,
    step_cap: usize,
) -> Result<(), CliError> {
    let (inst, _) = resolve_instance(&scenario, &instance, seed)?;
    let result = optimal_plan(&inst, step_cap)
        .map_err(|e| CliError::validation(format!("oracle guard: {e}")))?;
    println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
    Ok(())
}
