use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::agents::{ActMode, AlgorithmKind, ArchConfig, TrainConfig};
use crate::egta::{EvalConfig, PayoffKind, COOPERATE_ABOVE, DEFECT_BELOW};
use crate::env::{EnvConfig, TopologyPreset};
use crate::nn::AdamConfig;

/// Shared environment shape for training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    pub n_agents: usize,
    pub topology: TopologyPreset,
    pub w0: f64,
    pub total_flow: f64,
    pub w_max: Option<f64>,
}

impl Default for EnvSettings {
    fn default() -> Self {
        let d = EnvConfig::<f64>::default();
        EnvSettings {
            n_agents: d.n_agents,
            topology: TopologyPreset::Complete,
            w0: d.w0,
            total_flow: d.total_flow,
            w_max: d.w_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub episodes: usize,
    pub max_steps: usize,
    pub rollout_len: usize,
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    pub message_dim: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::<f64>::default();
        TrainSettings {
            episodes: d.episodes,
            max_steps: d.env.max_steps,
            rollout_len: d.rollout_len,
            gamma: d.gamma,
            value_coef: d.value_coef,
            entropy_coef: d.entropy_coef,
            actor_lr: d.actor_optim.lr,
            critic_lr: d.critic_optim.lr,
            hidden: d.arch.hidden,
            message_dim: d.arch.message_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Regeneration rate of the labelling and meta-game environment.
    pub regen_rate: f64,
    pub max_steps: usize,
    pub mode: ActMode,
    pub payoff: PayoffKind,
    /// Episodes per restraint measurement.
    pub restraint_episodes: usize,
    /// Episodes per cooperator count in the meta-game.
    pub episodes: usize,
    /// Episodes per social-metrics estimate.
    pub metrics_episodes: usize,
    pub defect_below: f64,
    pub cooperate_above: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_level: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            regen_rate: 0.055,
            max_steps: 100,
            mode: ActMode::Greedy,
            payoff: PayoffKind::Weighted,
            restraint_episodes: 8,
            episodes: 32,
            metrics_episodes: 32,
            defect_below: DEFECT_BELOW,
            cooperate_above: COOPERATE_ABOVE,
            bootstrap_resamples: 1000,
            bootstrap_level: 0.95,
        }
    }
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kinds: Vec<AlgorithmKind>,
    pub rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub env: EnvSettings,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    /// Not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kinds: AlgorithmKind::ALL.to_vec(),
            rates: vec![0.1, 0.088, 0.077, 0.065, 0.053, 0.042, 0.03],
            alphas: vec![0.0, 0.1, 1.0],
            seeds: 5,
            master_seed: 0,
            env: EnvSettings::default(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
            output_dir: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.kinds.is_empty() || self.rates.is_empty() || self.alphas.is_empty() {
            return Err(invalid("kinds, rates and alphas must be non-empty"));
        }
        if self.seeds == 0 {
            return Err(invalid("at least one seed per cell is needed"));
        }
        for (name, list) in [("rates", &self.rates), ("alphas", &self.alphas)] {
            if list.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid(format!("{name} must be finite and non-negative")));
            }
            let mut sorted = list.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(invalid(format!("{name} contain duplicates")));
            }
        }
        let mut kinds = self.kinds.clone();
        kinds.sort_by_key(|k| k.name());
        kinds.dedup();
        if kinds.len() != self.kinds.len() {
            return Err(invalid("kinds contain duplicates"));
        }
        if self.eval.restraint_episodes == 0 || self.eval.episodes == 0 || self.eval.metrics_episodes == 0 {
            return Err(invalid("evaluation episode counts must be positive"));
        }
        if self.eval.bootstrap_resamples == 0 {
            return Err(invalid("bootstrap_resamples must be positive"));
        }
        if !(self.eval.defect_below < self.eval.cooperate_above) {
            return Err(invalid("defect_below must be below cooperate_above"));
        }
        self.eval_config(self.eval.regen_rate).env.validate()?;
        for &kind in &self.kinds {
            for &rate in &self.rates {
                for &alpha in &self.alphas {
                    self.train_config(kind, rate, alpha, 0).validate()?;
                }
            }
        }
        Ok(())
    }

    fn env_config(&self, rate: f64, alpha: f64, max_steps: usize) -> EnvConfig<f64> {
        EnvConfig {
            n_agents: self.env.n_agents,
            w0: self.env.w0,
            total_flow: self.env.total_flow,
            regen_rate: rate,
            w_max: self.env.w_max,
            max_steps,
            alpha,
            topology: self.env.topology.build(self.env.n_agents),
        }
    }

    pub fn train_config(&self, kind: AlgorithmKind, rate: f64, alpha: f64, seed: u64) -> TrainConfig<f64> {
        let t = &self.train;
        TrainConfig {
            kind,
            env: self.env_config(rate, alpha, t.max_steps),
            seed,
            episodes: t.episodes,
            rollout_len: t.rollout_len,
            gamma: t.gamma,
            value_coef: t.value_coef,
            entropy_coef: t.entropy_coef,
            actor_optim: AdamConfig::with_lr(t.actor_lr),
            critic_optim: AdamConfig::with_lr(t.critic_lr),
            arch: ArchConfig {
                hidden: t.hidden,
                message_dim: t.message_dim,
            },
        }
    }

    /// Evaluation set-up at `rate`; alpha only changes the weighted payoff.
    pub fn eval_config_with(&self, rate: f64, alpha: f64) -> EvalConfig<f64> {
        EvalConfig {
            env: self.env_config(rate, alpha, self.eval.max_steps),
            mode: self.eval.mode,
            payoff: self.eval.payoff,
        }
    }

    pub fn eval_config(&self, rate: f64) -> EvalConfig<f64> {
        self.eval_config_with(rate, 0.0)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hash_json(&c)
    }

    /// Seed of one independent random stream.
    pub fn sub_seed(&self, kind: &str, rate: f64, alpha: f64, index: usize, phase: &str) -> u64 {
        sub_seed(self.master_seed, kind, rate, alpha, index, phase)
    }
}

/// Hex SHA-256 of a value's JSON serialisation.
pub fn hash_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight bytes of `sha256(master, kind, rate, alpha, index, phase)`,
/// little-endian.
pub fn sub_seed(master: u64, kind: &str, rate: f64, alpha: f64, index: usize, phase: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(rate.to_bits().to_le_bytes());
    h.update(alpha.to_bits().to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.update(phase.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
