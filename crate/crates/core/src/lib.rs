//! Networked common-pool-resource game, decentralised actor-critic learners
//! and empirical game-theoretic analysis of the policies they learn.
//!
//! Everything numeric is generic over the scalar type; the aliases below fix
//! the common choices.

pub mod agents;
pub mod egta;
pub mod env;
pub mod nn;
pub mod pipeline;
pub mod scalar;

use num_rational::Ratio;

pub type WaterEnv = env::WaterEnv<f64>;
pub type EnvConfig = env::EnvConfig<f64>;
pub type EpisodeTrace = env::EpisodeTrace<f64>;
/// Environment in exact rational arithmetic.
pub type ExactWaterEnv = env::WaterEnv<Ratio<i64>>;
pub type ExactEnvConfig = env::EnvConfig<Ratio<i64>>;
pub type AgentModule = agents::AgentModule<f64>;
pub type TrainConfig = agents::TrainConfig<f64>;
pub type Trainer = agents::Trainer<f64>;
pub type PolicySnapshot = egta::PolicySnapshot<f64>;
pub type MetaGameTable = egta::MetaGameTable<f64>;
/// Meta-game table in exact rational arithmetic.
pub type ExactMetaGameTable = egta::MetaGameTable<Ratio<i64>>;
pub type Tape = nn::Tape<f64>;
pub type ParamStore = nn::ParamStore<f64>;
