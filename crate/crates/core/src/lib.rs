//! Network penetration-testing simulator and reinforcement-learning
//! harness.
//!
//! The crate models multi-subnet networks as partially observable attack
//! problems: scenarios describe a family of networks, the instancer
//! samples concrete networks from them, and the engine steps an attacker
//! through scans, exploits, and privilege escalations behind a pluggable
//! backend. On top of the simulator sit vectorized environments, two
//! policy architectures (a fixed-size baseline and a size-invariant
//! model), a PPO trainer, scripted agents, a brute-force planning oracle,
//! and a line-JSON remote protocol.

pub mod agents;
pub mod engine;
pub mod fixtures;
pub mod instancer;
pub mod observation;
pub mod oracle;
pub mod policy;
pub mod protocol;
pub mod scenario;
pub mod seeding;
pub mod trainer;
pub mod vecenv;

pub use engine::{AccessLevel, Action, Backend, EngineState, FlakyBackend, SimBackend, StepResult};
pub use instancer::{instantiate, Instance};
pub use observation::Observation;
pub use vecenv::VecEnv;
pub use scenario::{
    bundled_scenario, bundled_scenarios, parse_scenario, unify_feature_schema, FeatureSchema,
    ScenarioError, ScenarioSpec,
};
