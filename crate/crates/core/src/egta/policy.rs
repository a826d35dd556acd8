use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{label_policy, EgtaError, Label};
use crate::agents::{run_team_episode, ActMode, AgentModule};
use crate::env::{restraint, Action, EnvConfig, EpisodeTrace, Observation, WaterEnv};
use crate::scalar::{FloatScalar, Real};

/// Hand-written policies used as reference pools and test fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scripted {
    AlwaysOpen,
    AlwaysClosed,
    /// Open on even steps, closed on odd ones.
    Alternate,
    /// Open until the agent's own piped total exceeds `threshold`.
    CloseWhenPipedAbove { threshold: f64 },
}

impl Scripted {
    pub fn act<T: Real>(&self, obs: &Observation<T>, t: usize) -> Action {
        match *self {
            Scripted::AlwaysOpen => Action::Open,
            Scripted::AlwaysClosed => Action::Closed,
            Scripted::Alternate if t.is_multiple_of(2) => Action::Open,
            Scripted::Alternate => Action::Closed,
            Scripted::CloseWhenPipedAbove { threshold } => {
                if obs.own_piped > T::lit(threshold) {
                    Action::Closed
                } else {
                    Action::Open
                }
            }
        }
    }
}

/// A policy that can fill one valve position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Deserialize<'de> + FloatScalar"))]
pub enum Member<T> {
    Learned(AgentModule<T>),
    Scripted(Scripted),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// Algorithm name, or `scripted`.
    pub kind: String,
    pub regen_rate: f64,
    pub alpha: f64,
    pub seed_index: usize,
    pub seed: u64,
    pub episodes: usize,
    pub config_hash: String,
    /// Valve position the policy was trained at.
    pub position: usize,
}

/// One agent's policy plus its provenance and measured behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + FloatScalar"))]
pub struct PolicySnapshot<T> {
    pub meta: SnapshotMeta,
    pub policy: Member<T>,
    /// Percentage restraint in the labelling environment.
    pub restraint: Option<f64>,
    /// Percentage restraint in an environment with the training rate.
    pub training_rate_restraint: Option<f64>,
    pub label: Option<Label>,
}

impl<T: FloatScalar> PolicySnapshot<T> {
    pub fn new(meta: SnapshotMeta, policy: Member<T>) -> Self {
        PolicySnapshot {
            meta,
            policy,
            restraint: None,
            training_rate_restraint: None,
            label: None,
        }
    }

    /// Records a restraint measurement and the label it implies.
    pub fn set_restraint(&mut self, restraint: f64, lo: f64, hi: f64) -> Result<Label, EgtaError> {
        let label = label_policy(restraint, lo, hi)?;
        self.restraint = Some(restraint);
        self.label = Some(label);
        Ok(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    /// Own reward plus alpha times the neighbours' rewards.
    Weighted,
    Raw,
}

/// How evaluation episodes are played and scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Real"))]
pub struct EvalConfig<T> {
    pub env: EnvConfig<T>,
    pub mode: ActMode,
    pub payoff: PayoffKind,
}

impl<T: Real> Default for EvalConfig<T> {
    fn default() -> Self {
        EvalConfig {
            env: EnvConfig {
                regen_rate: T::lit(0.055),
                max_steps: 100,
                ..EnvConfig::default()
            },
            mode: ActMode::Greedy,
            payoff: PayoffKind::Weighted,
        }
    }
}

impl<T: Real> EvalConfig<T> {
    pub fn returns(&self, trace: &EpisodeTrace<T>) -> Vec<T> {
        match self.payoff {
            PayoffKind::Weighted => trace.weighted_returns(),
            PayoffKind::Raw => trace.raw_returns(),
        }
    }
}

/// Plays one episode with `team[i]` at valve `i`.
///
/// A team is either entirely scripted or entirely learned; learned members
/// must share one algorithm and fit the degree of their position.
pub fn play_episode<T: FloatScalar, R: Rng + ?Sized>(
    team: &[&Member<T>],
    env_config: &EnvConfig<T>,
    mode: ActMode,
    seed: u64,
    rng: &mut R,
) -> Result<EpisodeTrace<T>, EgtaError> {
    if team.len() != env_config.n_agents {
        return Err(EgtaError::Invalid(format!(
            "team of {} for {} valves",
            team.len(),
            env_config.n_agents
        )));
    }
    let scripted: Vec<Scripted> = team
        .iter()
        .filter_map(|m| match m {
            Member::Scripted(s) => Some(*s),
            Member::Learned(_) => None,
        })
        .collect();
    if scripted.len() == team.len() {
        return play_scripted(&scripted, env_config, seed);
    }
    if !scripted.is_empty() {
        return Err(EgtaError::Invalid("team mixes scripted and learned members".into()));
    }
    let mut modules: Vec<AgentModule<T>> = team
        .iter()
        .enumerate()
        .map(|(i, m)| match m {
            Member::Learned(a) => {
                let mut a = a.clone();
                a.id = i;
                a
            }
            Member::Scripted(_) => unreachable!(),
        })
        .collect();
    Ok(run_team_episode(&mut modules, env_config, mode, seed, rng)?)
}

fn play_scripted<T: Real>(
    team: &[Scripted],
    env_config: &EnvConfig<T>,
    seed: u64,
) -> Result<EpisodeTrace<T>, EgtaError> {
    let mut env = WaterEnv::new(env_config.clone(), seed)?;
    let mut obs = env.observations();
    let mut trace = EpisodeTrace::new(team.len());
    loop {
        let t = env.state().t;
        let actions: Vec<Action> = team.iter().zip(&obs).map(|(p, o)| p.act(o, t)).collect();
        let result = env.step(&actions)?;
        trace.push(env.state(), &actions, &result);
        obs = result.observations;
        if result.done {
            return Ok(trace);
        }
    }
}

/// Mean percentage restraint of each position over `episodes` episodes.
pub fn measure_restraint<T: FloatScalar, R: Rng + ?Sized>(
    team: &[&Member<T>],
    eval: &EvalConfig<T>,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<f64>, EgtaError> {
    if episodes < 1 {
        return Err(EgtaError::Invalid("at least one evaluation episode is needed".into()));
    }
    let mut totals = vec![0.0; team.len()];
    for _ in 0..episodes {
        let seed = rng.random();
        let trace = play_episode(team, &eval.env, eval.mode, seed, rng)?;
        for (i, total) in totals.iter_mut().enumerate() {
            *total += restraint(&trace.actions_of(i))?;
        }
    }
    Ok(totals.into_iter().map(|t| t / episodes as f64).collect())
}
