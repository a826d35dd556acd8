use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    a2c_losses, act, check_team, consensus_step, critic_forward, init_team, policy_forward,
    ActMode, AgentError, AgentModule, AlgorithmKind, ArchConfig, Rollout, StepRecord,
};
use crate::env::{Action, EnvConfig, EpisodeTrace, Observation, Topology, WaterEnv};
use crate::nn::{AdamConfig, OptimizerState, Tape};
use crate::scalar::FloatScalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub kind: AlgorithmKind,
    pub env: EnvConfig<T>,
    pub seed: u64,
    pub episodes: usize,
    /// Steps between updates (`n` of the n-step return).
    pub rollout_len: usize,
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub actor_optim: AdamConfig,
    pub critic_optim: AdamConfig,
    pub arch: ArchConfig,
}

impl<T: FloatScalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            kind: AlgorithmKind::IA2C,
            env: EnvConfig {
                max_steps: 1000,
                ..EnvConfig::default()
            },
            seed: 0,
            episodes: 2000,
            rollout_len: 20,
            gamma: 0.99,
            value_coef: 0.5,
            entropy_coef: 0.01,
            actor_optim: AdamConfig::with_lr(5e-4),
            critic_optim: AdamConfig::with_lr(2.5e-4),
            arch: ArchConfig::default(),
        }
    }
}

impl<T: FloatScalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), AgentError> {
        self.env.validate()?;
        if self.rollout_len == 0 {
            return Err(AgentError::Config("rollout_len must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(AgentError::Config("loss coefficients must be non-negative".into()));
        }
        if self.arch.hidden == 0 || self.arch.message_dim == 0 {
            return Err(AgentError::Config("network sizes must be positive".into()));
        }
        if self.kind == AlgorithmKind::ConseNet && !self.env.topology.is_regular() {
            return Err(AgentError::Config(
                "ConseNet averages critics and needs a regular topology".into(),
            ));
        }
        Ok(())
    }
}

/// Summary of one training episode, averaged over agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub length: usize,
    pub depleted: bool,
    pub mean_weighted_return: f64,
    pub mean_raw_return: f64,
    pub mean_restraint: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub agents: Vec<AgentModule<T>>,
    pub curves: Vec<EpisodeStats>,
    /// Per-agent actions of the last training episode.
    pub final_actions: Vec<Vec<Action>>,
}

struct AgentOptim<T> {
    actor: OptimizerState<T>,
    critic: OptimizerState<T>,
}

/// Owns a team, its optimisers and one shared environment.
pub struct Trainer<T> {
    config: TrainConfig<T>,
    team: Vec<AgentModule<T>>,
    optim: Vec<AgentOptim<T>>,
    env: WaterEnv<T>,
    rng: ChaCha8Rng,
    episode: usize,
    last_actions: Vec<Vec<Action>>,
}

impl<T: FloatScalar> Trainer<T> {
    pub fn new(config: TrainConfig<T>) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let team = init_team(config.kind, &config.env.topology, config.arch, &mut rng);
        Self::with_team(config, team, rng)
    }

    fn with_team(
        config: TrainConfig<T>,
        team: Vec<AgentModule<T>>,
        rng: ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        check_team(&team, &config.env.topology)?;
        let optim = team
            .iter()
            .map(|a| AgentOptim {
                actor: OptimizerState::new(config.actor_optim, &a.params, a.actor_tensors()),
                critic: OptimizerState::new(config.critic_optim, &a.params, a.critic_tensors()),
            })
            .collect();
        let env = WaterEnv::new(config.env.clone(), config.seed)?;
        Ok(Trainer {
            config,
            team,
            optim,
            env,
            rng,
            episode: 0,
            last_actions: Vec::new(),
        })
    }

    pub fn team(&self) -> &[AgentModule<T>] {
        &self.team
    }

    pub fn config(&self) -> &TrainConfig<T> {
        &self.config
    }

    /// Plays one episode, updating every `rollout_len` steps and at its end.
    pub fn run_episode(&mut self) -> Result<EpisodeStats, AgentError> {
        let n = self.team.len();
        let topology = self.config.env.topology.clone();
        let seed = self.config.seed.wrapping_add(self.episode as u64);
        let mut obs = self.env.reset(seed);
        for a in &mut self.team {
            a.reset_fingerprint();
        }
        let mut actions_taken: Vec<Vec<Action>> = vec![Vec::new(); n];
        let mut weighted = vec![0.0; n];
        let mut raw = vec![0.0; n];
        let (mut length, mut depleted) = (0, false);

        loop {
            let mut tape = Tape::new();
            let mut rollout = Rollout::new(n);
            let mut done = false;
            for _ in 0..self.config.rollout_len {
                let outs = policy_forward(&mut tape, &self.team, &topology, &obs)?;
                let actions: Vec<Action> = outs
                    .iter()
                    .map(|o| act(&o.dist, ActMode::Sample, &mut self.rng).0)
                    .collect();
                let values = critic_values(&mut tape, &self.team, &topology, &outs_inputs(&outs), &actions)?;
                for (a, o) in self.team.iter_mut().zip(&outs) {
                    let p = o.dist.probs();
                    a.fingerprint = [p[0], p[1]];
                }
                let result = self.env.step(&actions)?;
                for i in 0..n {
                    rollout.steps[i].push(StepRecord {
                        actor_input: outs[i].actor_input.clone(),
                        action: actions[i],
                        log_probs: outs[i].log_probs,
                        reward: result.weighted_rewards[i],
                        value: values[i],
                    });
                    actions_taken[i].push(actions[i]);
                    weighted[i] += result.weighted_rewards[i].as_f64();
                    raw[i] += result.raw_rewards[i].as_f64();
                }
                length += 1;
                obs = result.observations;
                if result.done {
                    done = true;
                    depleted = result.depleted;
                    break;
                }
            }
            rollout.terminal = depleted;
            if !depleted {
                // horizon cut-offs are bootstrapped like any other rollout end
                rollout.bootstrap = self.bootstrap_values(&obs)?;
            }
            self.update(&mut tape, &rollout)?;
            if done {
                break;
            }
        }

        let restraint: f64 = actions_taken
            .iter()
            .map(|acts| crate::env::restraint(acts).unwrap_or(0.0))
            .sum::<f64>()
            / n as f64;
        let stats = EpisodeStats {
            episode: self.episode,
            length,
            depleted,
            mean_weighted_return: weighted.iter().sum::<f64>() / n as f64,
            mean_raw_return: raw.iter().sum::<f64>() / n as f64,
            mean_restraint: restraint,
        };
        self.episode += 1;
        self.last_actions = actions_taken;
        Ok(stats)
    }

    fn bootstrap_values(&mut self, obs: &[Observation<T>]) -> Result<Vec<T>, AgentError> {
        let topology = &self.config.env.topology;
        let mut tape = Tape::new();
        let outs = policy_forward(&mut tape, &self.team, topology, obs)?;
        let actions: Vec<Action> = outs
            .iter()
            .map(|o| act(&o.dist, ActMode::Sample, &mut self.rng).0)
            .collect();
        let values = critic_values(&mut tape, &self.team, topology, &outs_inputs(&outs), &actions)?;
        Ok(values.into_iter().map(|v| tape.scalar(v)).collect())
    }

    fn update(&mut self, tape: &mut Tape<T>, rollout: &Rollout<T>) -> Result<(), AgentError> {
        let c = &self.config;
        let losses = a2c_losses(
            tape,
            rollout,
            T::lit(c.gamma),
            T::lit(c.value_coef),
            T::lit(c.entropy_coef),
        )?;
        let totals: Vec<_> = losses.iter().map(|l| l.total).collect();
        let joint = tape.add_n(&totals)?;
        for a in &mut self.team {
            a.params.zero_grad();
        }
        tape.backward(joint, self.team.as_mut_slice())?;
        for (a, o) in self.team.iter_mut().zip(&mut self.optim) {
            o.actor.step(&mut a.params)?;
            o.critic.step(&mut a.params)?;
        }
        if self.config.kind == AlgorithmKind::ConseNet {
            consensus_step(&mut self.team, &self.config.env.topology)?;
        }
        Ok(())
    }

    pub fn into_outcome(self, curves: Vec<EpisodeStats>) -> TrainOutcome<T> {
        TrainOutcome {
            agents: self.team,
            curves,
            final_actions: self.last_actions,
        }
    }
}

fn outs_inputs<T: Clone>(outs: &[super::PolicyOutput<T>]) -> Vec<Vec<T>> {
    outs.iter().map(|o| o.actor_input.clone()).collect()
}

/// Records each agent's critic given everyone's actions this step.
pub(crate) fn critic_values<T: FloatScalar>(
    tape: &mut Tape<T>,
    team: &[AgentModule<T>],
    topology: &Topology,
    actor_inputs: &[Vec<T>],
    actions: &[Action],
) -> Result<Vec<crate::nn::Var>, AgentError> {
    (0..team.len())
        .map(|i| {
            let neighbour_actions: Vec<Action> = if team[i].kind == AlgorithmKind::IA2C {
                Vec::new()
            } else {
                topology.neighbours(i).iter().map(|&j| actions[j]).collect()
            };
            critic_forward(tape, team, i, &actor_inputs[i], &neighbour_actions)
        })
        .collect()
}

/// Trains a fresh team for `config.episodes` episodes.
pub fn train<T: FloatScalar>(config: TrainConfig<T>) -> Result<TrainOutcome<T>, AgentError> {
    let episodes = config.episodes;
    let mut trainer = Trainer::new(config)?;
    let mut curves = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        curves.push(trainer.run_episode()?);
    }
    Ok(trainer.into_outcome(curves))
}

/// Plays one evaluation episode with a fixed team; parameters are untouched.
pub fn run_team_episode<T: FloatScalar, R: Rng + ?Sized>(
    team: &mut [AgentModule<T>],
    env_config: &EnvConfig<T>,
    mode: ActMode,
    seed: u64,
    rng: &mut R,
) -> Result<EpisodeTrace<T>, AgentError> {
    check_team(team, &env_config.topology)?;
    let mut env = WaterEnv::new(env_config.clone(), seed)?;
    let mut obs = env.observations();
    for a in team.iter_mut() {
        a.reset_fingerprint();
    }
    let mut trace = EpisodeTrace::new(team.len());
    loop {
        let mut tape = Tape::new();
        let outs = policy_forward(&mut tape, team, &env_config.topology, &obs)?;
        let actions: Vec<Action> = outs.iter().map(|o| act(&o.dist, mode, rng).0).collect();
        for (a, o) in team.iter_mut().zip(&outs) {
            let p = o.dist.probs();
            a.fingerprint = [p[0], p[1]];
        }
        let result = env.step(&actions)?;
        trace.push(env.state(), &actions, &result);
        obs = result.observations;
        if result.done {
            return Ok(trace);
        }
    }
}
