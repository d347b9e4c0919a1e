//! Batched episode driver: n independent environments, each episode
//! sampling a scenario, instantiating it fresh, permuting its ids, and
//! auto-resetting on episode end. All per-env randomness derives from
//! (master seed, env index, episode counter), so envs are causally
//! independent and a master seed pins every trajectory.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::engine::{Action, Backend, SimBackend, StepResult};
use crate::instancer::{instantiate, permute_ids};
use crate::observation::Observation;
use crate::scenario::{unify_feature_schema, FeatureSchema, ScenarioSpec};
use crate::seeding::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum VecEnvError {
    #[error("vec env needs at least one scenario and one env")]
    Empty,
    #[error("scenario weights must be non-negative, sum positive, and match the spec count")]
    BadWeights,
    #[error("expected {expected} actions, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Instancer(#[from] crate::instancer::InstanceError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// Closed episode bookkeeping, reported on the step that ended it.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedEpisode {
    pub reward: f64,
    /// Non-terminal steps taken (the step-cost counter).
    pub steps: usize,
    /// Index into the spec set this episode was drawn from.
    pub scenario: usize,
}

/// Per-env outcome of one batched step. When the episode ended, `done`
/// is set on the inner result, the result's observation is the terminal
/// one, and the observation of the freshly reset episode rides
/// alongside in `reset_obs`.
#[derive(Debug, Clone)]
pub struct VecStep {
    pub result: StepResult,
    /// Episode was cut by the step cap rather than by Terminal.
    pub truncated: bool,
    pub finished: Option<FinishedEpisode>,
    pub reset_obs: Option<Observation>,
}

struct EnvSlot<B> {
    backend: B,
    env_seed: u64,
    episode: u64,
    scenario: usize,
}

pub struct VecEnv<B: Backend = SimBackend> {
    specs: Vec<Arc<ScenarioSpec>>,
    schema: FeatureSchema,
    weights: Option<Vec<f64>>,
    step_cap: Option<usize>,
    master_seed: u64,
    envs: Vec<EnvSlot<B>>,
    /// Episodes started per spec index, across all envs.
    pub spec_episode_counts: Vec<u64>,
}

impl VecEnv<SimBackend> {
    /// Deterministic simulator backend, schema unified over the specs.
    pub fn sim(
        specs: Vec<Arc<ScenarioSpec>>,
        n_envs: usize,
        seed: u64,
        step_cap: Option<usize>,
    ) -> Result<(Self, Vec<Observation>), VecEnvError> {
        if specs.is_empty() {
            return Err(VecEnvError::Empty);
        }
        let plain: Vec<ScenarioSpec> = specs.iter().map(|s| (**s).clone()).collect();
        let schema = unify_feature_schema(&plain);
        VecEnv::new(specs, schema, n_envs, seed, step_cap, None, |_| SimBackend::default())
    }
}

impl<B: Backend> VecEnv<B> {
    /// Full-control constructor. The schema may be wider than the spec
    /// set requires, e.g. unified over train and eval scenarios so one
    /// parameter shape covers both.
    pub fn new(
        specs: Vec<Arc<ScenarioSpec>>,
        schema: FeatureSchema,
        n_envs: usize,
        seed: u64,
        step_cap: Option<usize>,
        weights: Option<Vec<f64>>,
        mut make_backend: impl FnMut(usize) -> B,
    ) -> Result<(Self, Vec<Observation>), VecEnvError> {
        if specs.is_empty() || n_envs == 0 {
            return Err(VecEnvError::Empty);
        }
        if let Some(w) = &weights {
            if w.len() != specs.len()
                || w.iter().any(|&x| !(x >= 0.0))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(VecEnvError::BadWeights);
            }
        }
        let mut env = VecEnv {
            spec_episode_counts: vec![0; specs.len()],
            specs,
            schema,
            weights,
            step_cap,
            master_seed: seed,
            envs: Vec::with_capacity(n_envs),
        };
        for i in 0..n_envs {
            env.envs.push(EnvSlot {
                backend: make_backend(i),
                env_seed: derive_seed(seed, i as u64),
                episode: 0,
                scenario: 0,
            });
        }
        let mut batch = Vec::with_capacity(n_envs);
        for i in 0..n_envs {
            batch.push(env.start_episode(i)?);
        }
        Ok((env, batch))
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Engine state of env `i`, for inspection in tests and tooling.
    pub fn state(&self, i: usize) -> Option<&crate::engine::EngineState> {
        self.envs[i].backend.state()
    }

    fn start_episode(&mut self, i: usize) -> Result<Observation, VecEnvError> {
        let episode_seed = derive_seed(self.envs[i].env_seed, self.envs[i].episode);
        self.envs[i].episode += 1;

        let mut rng = rng_for(derive_seed(episode_seed, 0), 0);
        let idx = match &self.weights {
            None => rng.gen_range(0..self.specs.len()),
            Some(w) => {
                let total: f64 = w.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = w.len() - 1;
                for (j, &wj) in w.iter().enumerate() {
                    if u < wj {
                        chosen = j;
                        break;
                    }
                    u -= wj;
                }
                chosen
            }
        };
        self.envs[i].scenario = idx;
        self.spec_episode_counts[idx] += 1;

        let instance = instantiate(&self.specs[idx], derive_seed(episode_seed, 1))?;
        let (instance, _) = permute_ids(&instance, derive_seed(episode_seed, 2));
        Ok(self.envs[i]
            .backend
            .reset(Arc::new(instance), derive_seed(episode_seed, 3)))
    }

    /// Step every env once, in env-index order. Ended episodes are
    /// auto-reset; see [`VecStep`] for the handoff convention.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<VecStep>, VecEnvError> {
        if actions.len() != self.envs.len() {
            return Err(VecEnvError::LengthMismatch {
                expected: self.envs.len(),
                got: actions.len(),
            });
        }
        let mut out = Vec::with_capacity(self.envs.len());
        for (i, action) in actions.iter().enumerate() {
            let mut result = self.envs[i].backend.step(action)?;
            let state = self.envs[i]
                .backend
                .state()
                .expect("a live episode was just stepped");
            let steps_costed = state.steps_costed;
            let episode_reward = state.episode_reward;
            let truncated = !result.done
                && self.step_cap.is_some_and(|cap| steps_costed >= cap);
            if truncated {
                result.done = true;
            }
            let (finished, reset_obs) = if result.done {
                let summary = FinishedEpisode {
                    reward: episode_reward,
                    steps: steps_costed,
                    scenario: self.envs[i].scenario,
                };
                (Some(summary), Some(self.start_episode(i)?))
            } else {
                (None, None)
            };
            out.push(VecStep { result, truncated, finished, reset_obs });
        }
        Ok(out)
    }
}
