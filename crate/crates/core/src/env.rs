//! Networked common-pool water environment.
//!
//! `N` agents each control one shut-off valve on a shared reservoir. An open
//! valve draws `total_flow / N` per step; the reservoir refills at a constant
//! rate `c` and the episode ends as soon as demand can no longer be met.
//! Agents sit on the nodes of an undirected [`Topology`]; an agent's weighted
//! reward adds `alpha` times the raw rewards of its neighbours.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("node {node} is out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} actions, got {got}")]
    ActionArity { expected: usize, got: usize },
    #[error("episode is already done")]
    EpisodeDone,
    #[error("restraint of an empty action trace is undefined")]
    EmptyTrace,
}

/// Named graph families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyPreset {
    Complete,
    Ring,
    Line,
    Disconnected,
}

impl TopologyPreset {
    pub fn build(self, node_count: usize) -> Topology {
        let n = node_count;
        let edges: Vec<(usize, usize)> = match self {
            TopologyPreset::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            TopologyPreset::Ring if n >= 3 => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            TopologyPreset::Ring | TopologyPreset::Line => {
                (1..n).map(|i| (i - 1, i)).collect()
            }
            TopologyPreset::Disconnected => Vec::new(),
        };
        Topology::new(n, edges).expect("preset edges are valid")
    }
}

impl std::str::FromStr for TopologyPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "line" => Ok(Self::Line),
            "disconnected" => Ok(Self::Disconnected),
            other => Err(format!("unknown topology preset '{other}'")),
        }
    }
}

/// Undirected simple graph over agent ids `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = EnvError;

    fn try_from(r: TopologyRepr) -> Result<Self, EnvError> {
        Topology::new(r.node_count, r.edges)
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr {
            node_count: t.node_count,
            edges: t.edges.into_iter().collect(),
        }
    }
}

impl Topology {
    /// Builds a graph; duplicate pairs (in either orientation) collapse.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, EnvError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(EnvError::NodeOutOfRange { node, node_count });
                }
            }
            if a == b {
                return Err(EnvError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Topology {
            node_count,
            edges: set,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Neighbours of `i` in ascending id order; never contains `i`.
    pub fn neighbourhood(&self, i: usize) -> Result<&[usize], EnvError> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(EnvError::NodeOutOfRange {
                node: i,
                node_count: self.node_count,
            })
    }

    /// Panicking variant for ids already known to be valid.
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// True when every node has the same degree.
    pub fn is_regular(&self) -> bool {
        self.adjacency
            .windows(2)
            .all(|w| w[0].len() == w[1].len())
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Valve setting. Index 0 is `Open`, index 1 is `Closed`; policy heads use the
/// same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Open,
    Closed,
}

impl Action {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            Action::Open => 0,
            Action::Closed => 1,
        }
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Open
        } else {
            Action::Closed
        }
    }

    pub fn is_open(self) -> bool {
        self == Action::Open
    }

    pub fn one_hot<T: Real>(self) -> [T; 2] {
        match self {
            Action::Open => [T::one(), T::zero()],
            Action::Closed => [T::zero(), T::one()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig<T> {
    pub n_agents: usize,
    pub w0: T,
    /// Flow through all valves together when every valve is open.
    pub total_flow: T,
    pub regen_rate: T,
    /// Reservoir capacity; `None` means unbounded.
    pub w_max: Option<T>,
    pub max_steps: usize,
    pub alpha: T,
    pub topology: Topology,
}

impl<T: Real> Default for EnvConfig<T> {
    fn default() -> Self {
        EnvConfig {
            n_agents: 4,
            w0: T::lit(0.5),
            total_flow: T::lit(0.1),
            regen_rate: T::lit(0.055),
            w_max: Some(T::one()),
            max_steps: 100,
            alpha: T::lit(0.1),
            topology: TopologyPreset::Complete.build(4),
        }
    }
}

impl<T: Real> EnvConfig<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.n_agents < 1 {
            return bad("n_agents must be at least 1".into());
        }
        if self.w0 <= T::zero() {
            return bad(format!("w0 must be positive, got {:?}", self.w0));
        }
        if self.regen_rate < T::zero() {
            return bad(format!(
                "regen_rate must be non-negative, got {:?}",
                self.regen_rate
            ));
        }
        if self.total_flow <= T::zero() {
            return bad(format!(
                "total_flow must be positive, got {:?}",
                self.total_flow
            ));
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        if self.alpha < T::zero() || self.alpha > T::one() {
            return bad(format!("alpha must lie in [0, 1], got {:?}", self.alpha));
        }
        if let Some(cap) = self.w_max {
            if cap < self.w0 {
                return bad(format!("w_max {cap:?} is below w0 {:?}", self.w0));
            }
        }
        if self.topology.node_count() != self.n_agents {
            return bad(format!(
                "topology has {} nodes but n_agents is {}",
                self.topology.node_count(),
                self.n_agents
            ));
        }
        Ok(())
    }

    /// Water one open valve draws per step.
    pub fn flow_per_valve(&self) -> T {
        self.total_flow / T::from_count(self.n_agents)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState<T> {
    pub water: T,
    pub piped: Vec<T>,
    pub t: usize,
    pub depleted: bool,
    pub done: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub water_level: T,
    pub own_piped: T,
}

impl<T: Real> Observation<T> {
    pub fn to_array(self) -> [T; 2] {
        [self.water_level, self.own_piped]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub observations: Vec<Observation<T>>,
    pub raw_rewards: Vec<T>,
    pub weighted_rewards: Vec<T>,
    pub done: bool,
    pub depleted: bool,
}

fn observe<T: Real>(state: &EnvState<T>, config: &EnvConfig<T>) -> Vec<Observation<T>> {
    let mut level = state.water.max_of(T::zero());
    if let Some(cap) = config.w_max {
        level = level.min_of(cap);
    }
    state
        .piped
        .iter()
        .map(|&p| Observation {
            water_level: level,
            own_piped: p,
        })
        .collect()
}

/// Starts an episode. The dynamics are deterministic; `seed` is recorded on
/// the state so traces can be tied back to the run that produced them.
pub fn reset<T: Real>(
    config: &EnvConfig<T>,
    seed: u64,
) -> Result<(EnvState<T>, Vec<Observation<T>>), EnvError> {
    config.validate()?;
    let state = EnvState {
        water: config.w0,
        piped: vec![T::zero(); config.n_agents],
        t: 0,
        depleted: false,
        done: false,
        seed,
    };
    let obs = observe(&state, config);
    Ok((state, obs))
}

/// Advances one step: extraction first, then regeneration.
///
/// When the open valves demand more than is left, the remainder is split
/// equally between them and the episode ends without regenerating.
pub fn step<T: Real>(
    state: &EnvState<T>,
    joint_action: &[Action],
    config: &EnvConfig<T>,
) -> Result<(EnvState<T>, StepResult<T>), EnvError> {
    if state.done {
        return Err(EnvError::EpisodeDone);
    }
    if joint_action.len() != config.n_agents {
        return Err(EnvError::ActionArity {
            expected: config.n_agents,
            got: joint_action.len(),
        });
    }
    let n_open = joint_action.iter().filter(|a| a.is_open()).count();
    let per_valve = config.flow_per_valve();
    let demand = T::from_count(n_open) * per_valve;

    let mut next = state.clone();
    let delivered = if state.water >= demand {
        next.water = state.water - demand + config.regen_rate;
        if let Some(cap) = config.w_max {
            next.water = next.water.min_of(cap);
        }
        per_valve
    } else {
        // n_open > 0 here since demand > water >= 0.
        let share = state.water / T::from_count(n_open);
        next.water = T::zero();
        next.depleted = true;
        share
    };

    let raw_rewards: Vec<T> = joint_action
        .iter()
        .map(|a| if a.is_open() { delivered } else { T::zero() })
        .collect();
    for (p, &r) in next.piped.iter_mut().zip(&raw_rewards) {
        *p = *p + r;
    }
    next.t += 1;
    next.done = next.depleted || next.t >= config.max_steps;

    let weighted_rewards = weighted_reward(&raw_rewards, &config.topology, config.alpha);
    let result = StepResult {
        observations: observe(&next, config),
        raw_rewards,
        weighted_rewards,
        done: next.done,
        depleted: next.depleted,
    };
    Ok((next, result))
}

/// `out[i] = raw[i] + alpha * sum of raw[j] over neighbours j of i`.
pub fn weighted_reward<T: Real>(raw: &[T], topology: &Topology, alpha: T) -> Vec<T> {
    (0..raw.len())
        .map(|i| {
            let neigh = topology
                .neighbours(i)
                .iter()
                .fold(T::zero(), |acc, &j| acc + raw[j]);
            raw[i] + alpha * neigh
        })
        .collect()
}

/// Percentage of steps with the valve closed.
pub fn restraint(trace: &[Action]) -> Result<f64, EnvError> {
    if trace.is_empty() {
        return Err(EnvError::EmptyTrace);
    }
    let closed = trace.iter().filter(|a| !a.is_open()).count();
    Ok(100.0 * closed as f64 / trace.len() as f64)
}

/// Owns a config and the current state.
#[derive(Debug, Clone)]
pub struct WaterEnv<T> {
    config: EnvConfig<T>,
    state: EnvState<T>,
}

impl<T: Real> WaterEnv<T> {
    pub fn new(config: EnvConfig<T>, seed: u64) -> Result<Self, EnvError> {
        let (state, _) = reset(&config, seed)?;
        Ok(WaterEnv { config, state })
    }

    pub fn reset(&mut self, seed: u64) -> Vec<Observation<T>> {
        let (state, obs) = reset(&self.config, seed).expect("config validated in new");
        self.state = state;
        obs
    }

    pub fn step(&mut self, joint_action: &[Action]) -> Result<StepResult<T>, EnvError> {
        let (next, result) = step(&self.state, joint_action, &self.config)?;
        self.state = next;
        Ok(result)
    }

    pub fn observations(&self) -> Vec<Observation<T>> {
        observe(&self.state, &self.config)
    }

    pub fn state(&self) -> &EnvState<T> {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.config.topology
    }
}

/// One recorded step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    /// Step count after this step (1-based).
    pub t: usize,
    /// Water level after this step.
    pub water: T,
    pub actions: Vec<Action>,
    pub raw_rewards: Vec<T>,
    pub weighted_rewards: Vec<T>,
    pub depleted: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace<T> {
    pub n_agents: usize,
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Real> EpisodeTrace<T> {
    pub fn new(n_agents: usize) -> Self {
        EpisodeTrace {
            n_agents,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, state_after: &EnvState<T>, actions: &[Action], result: &StepResult<T>) {
        self.rows.push(TraceRow {
            t: state_after.t,
            water: state_after.water,
            actions: actions.to_vec(),
            raw_rewards: result.raw_rewards.clone(),
            weighted_rewards: result.weighted_rewards.clone(),
            depleted: result.depleted,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn depleted(&self) -> bool {
        self.rows.last().is_some_and(|r| r.depleted)
    }

    pub fn actions_of(&self, agent: usize) -> Vec<Action> {
        self.rows.iter().map(|r| r.actions[agent]).collect()
    }

    /// Undiscounted per-agent return over the episode.
    pub fn raw_returns(&self) -> Vec<T> {
        self.column_sums(|r| &r.raw_rewards)
    }

    pub fn weighted_returns(&self) -> Vec<T> {
        self.column_sums(|r| &r.weighted_rewards)
    }

    fn column_sums(&self, f: impl Fn(&TraceRow<T>) -> &Vec<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_agents];
        for row in &self.rows {
            for (o, &v) in out.iter_mut().zip(f(row)) {
                *o = *o + v;
            }
        }
        out
    }

    /// CSV with columns `t, water, action_i.., raw_reward_i.., weighted_reward_i.., depleted`.
    pub fn to_csv(&self) -> String {
        let n = self.n_agents;
        let mut out = String::from("t,water");
        for prefix in ["action", "raw_reward", "weighted_reward"] {
            for i in 0..n {
                let _ = write!(out, ",{prefix}_{i}");
            }
        }
        out.push_str(",depleted\n");
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.t, row.water.as_f64());
            for a in &row.actions {
                out.push_str(if a.is_open() { ",open" } else { ",closed" });
            }
            for v in row.raw_rewards.iter().chain(&row.weighted_rewards) {
                let _ = write!(out, ",{}", v.as_f64());
            }
            let _ = writeln!(out, ",{}", row.depleted);
        }
        out
    }
}
