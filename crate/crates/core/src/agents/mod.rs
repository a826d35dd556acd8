//! Networked advantage actor-critic agents.
//!
//! Seven variants share one agent module layout and differ only in what an
//! agent sees, shares and sends:
//!
//! | kind       | actor input                           | messages        |
//! |------------|---------------------------------------|-----------------|
//! | `IA2C`     | own observation                       | none            |
//! | `NA2C`     | own + neighbour observations          | none            |
//! | `FPrint`   | NA2C input + neighbour fingerprints   | none            |
//! | `ConseNet` | NA2C input, critics averaged          | none            |
//! | `DIAL`     | own observation                       | summed, dense   |
//! | `CommNet`  | own observation                       | averaged hidden |
//! | `NeurComm` | own observation                       | concatenated    |
//!
//! Every critic except IA2C's also sees the neighbours' one-hot actions.

mod a2c;
mod comm;
mod consensus;
mod train;

pub use a2c::{a2c_losses, a2c_losses_with_advantages, n_step_returns, A2cLoss, Rollout, StepRecord};
pub use comm::{act, communicate, critic_forward, policy_forward, ActMode, PolicyOutput};
pub use consensus::consensus_step;
pub use train::{
    run_team_episode, train, EpisodeStats, TrainConfig, TrainOutcome, Trainer,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, Observation, Topology};
use crate::nn::{Dense, Head, Mlp, NetworkSpec, NnError, ParamRef, ParamStore, Params, Tensor};
use crate::scalar::FloatScalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    KindMismatch(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AlgorithmKind {
    IA2C,
    NA2C,
    FPrint,
    ConseNet,
    DIAL,
    CommNet,
    NeurComm,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 7] = [
        AlgorithmKind::IA2C,
        AlgorithmKind::NA2C,
        AlgorithmKind::FPrint,
        AlgorithmKind::ConseNet,
        AlgorithmKind::DIAL,
        AlgorithmKind::CommNet,
        AlgorithmKind::NeurComm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::IA2C => "IA2C",
            AlgorithmKind::NA2C => "NA2C",
            AlgorithmKind::FPrint => "FPrint",
            AlgorithmKind::ConseNet => "ConseNet",
            AlgorithmKind::DIAL => "DIAL",
            AlgorithmKind::CommNet => "CommNet",
            AlgorithmKind::NeurComm => "NeurComm",
        }
    }

    pub fn is_communicative(self) -> bool {
        matches!(
            self,
            AlgorithmKind::DIAL | AlgorithmKind::CommNet | AlgorithmKind::NeurComm
        )
    }

    /// Whether neighbour observations are part of the actor input.
    pub fn shares_observations(self) -> bool {
        matches!(
            self,
            AlgorithmKind::NA2C | AlgorithmKind::FPrint | AlgorithmKind::ConseNet
        )
    }

    pub fn shares_fingerprints(self) -> bool {
        self == AlgorithmKind::FPrint
    }

    /// IA2C ignores the graph entirely; everyone else lays out per neighbour.
    pub fn effective_degree(self, topology: &Topology, i: usize) -> usize {
        if self == AlgorithmKind::IA2C {
            0
        } else {
            topology.degree(i)
        }
    }

    pub fn actor_input_dim(self, degree: usize) -> usize {
        match self {
            AlgorithmKind::IA2C
            | AlgorithmKind::DIAL
            | AlgorithmKind::CommNet
            | AlgorithmKind::NeurComm => 2,
            AlgorithmKind::NA2C | AlgorithmKind::ConseNet => 2 * (1 + degree),
            AlgorithmKind::FPrint => 2 * (1 + degree) + 2 * degree,
        }
    }

    /// Actor input layout followed by one-hot neighbour actions.
    pub fn critic_input_dim(self, degree: usize) -> usize {
        let deg = if self == AlgorithmKind::IA2C { 0 } else { degree };
        self.actor_input_dim(deg) + 2 * deg
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<AlgorithmKind> for String {
    fn from(k: AlgorithmKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for AlgorithmKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm '{s}'"))
    }
}

/// Network sizes shared by every agent of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub hidden: usize,
    pub message_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            hidden: 64,
            message_dim: 8,
        }
    }
}

/// Message-passing parameters of a communicative agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// `m = message(h)`; receiver adds `project(sum of incoming)`.
    Dial { message: Dense, project: Dense },
    /// `m = h`; `h' = tanh(self_weight h + comm_weight mean(incoming))`.
    CommNet { self_weight: Dense, comm_weight: Dense },
    /// `m = message([h, fingerprint, obs])`; `h' = relu(combine([h, incoming...]))`.
    NeurComm { message: Dense, combine: Dense },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    /// input -> hidden (relu) -> logits
    Plain(Mlp),
    /// obs -> encoder (relu) -> channel -> head -> logits
    Communicating {
        encoder: Dense,
        channel: Channel,
        head: Dense,
    },
}

/// One agent's actor, critic and (for communicative kinds) channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + FloatScalar"))]
pub struct AgentModule<T> {
    pub id: usize,
    pub kind: AlgorithmKind,
    /// Number of neighbours the input layout was built for.
    pub degree: usize,
    pub arch: ArchConfig,
    pub params: ParamStore<T>,
    pub actor: Actor,
    pub critic: Mlp,
    /// The policy distribution emitted at the previous step.
    pub fingerprint: [T; 2],
}

impl<T: FloatScalar> AgentModule<T> {
    pub fn new<R: Rng + ?Sized>(
        id: usize,
        kind: AlgorithmKind,
        degree: usize,
        arch: ArchConfig,
        rng: &mut R,
    ) -> Self {
        let mut params = ParamStore::new();
        let h = arch.hidden;
        let m = arch.message_dim;
        let actor = if kind.is_communicative() {
            let encoder = Dense::new(&mut params, "actor.encoder", 2, h, true, rng);
            let channel = match kind {
                AlgorithmKind::DIAL => Channel::Dial {
                    message: Dense::new(&mut params, "comm.message", h, m, true, rng),
                    project: Dense::new(&mut params, "comm.project", m, h, true, rng),
                },
                AlgorithmKind::CommNet => Channel::CommNet {
                    self_weight: Dense::new(&mut params, "comm.self", h, h, false, rng),
                    comm_weight: Dense::new(&mut params, "comm.mean", h, h, false, rng),
                },
                _ => Channel::NeurComm {
                    message: Dense::new(&mut params, "comm.message", h + 4, m, true, rng),
                    combine: Dense::new(&mut params, "comm.combine", h + m * degree, h, true, rng),
                },
            };
            let head = Dense::new(&mut params, "actor.head", h, 2, true, rng);
            Actor::Communicating {
                encoder,
                channel,
                head,
            }
        } else {
            let spec = NetworkSpec::new(kind.actor_input_dim(degree), vec![h], Head::Logits(2));
            Actor::Plain(Mlp::new(spec, &mut params, "actor", rng))
        };
        let critic_spec = NetworkSpec::new(kind.critic_input_dim(degree), vec![h], Head::Value);
        let critic = Mlp::new(critic_spec, &mut params, "critic", rng);
        AgentModule {
            id,
            kind,
            degree,
            arch,
            params,
            actor,
            critic,
            fingerprint: uniform_fingerprint(),
        }
    }

    /// Tensors trained at the actor learning rate (actor plus channel).
    pub fn actor_tensors(&self) -> Vec<usize> {
        match &self.actor {
            Actor::Plain(mlp) => mlp.tensor_indices(),
            Actor::Communicating {
                encoder,
                channel,
                head,
            } => {
                let mut v = encoder.tensor_indices();
                v.extend(channel_tensors(channel));
                v.extend(head.tensor_indices());
                v
            }
        }
    }

    pub fn channel_tensors(&self) -> Vec<usize> {
        match &self.actor {
            Actor::Communicating { channel, .. } => channel_tensors(channel),
            Actor::Plain(_) => Vec::new(),
        }
    }

    pub fn critic_tensors(&self) -> Vec<usize> {
        self.critic.tensor_indices()
    }

    pub fn critic_values(&self) -> Vec<&Tensor<T>> {
        self.critic_tensors()
            .into_iter()
            .map(|i| &self.params.tensors[i])
            .collect()
    }

    pub fn reset_fingerprint(&mut self) {
        self.fingerprint = uniform_fingerprint();
    }

    /// Restores grad buffers after deserialisation and checks the layout.
    pub fn validate(&mut self) -> Result<(), AgentError> {
        self.params.validate()?;
        let expected_in = self.kind.critic_input_dim(self.degree);
        if self.critic.spec.input_dim != expected_in {
            return Err(AgentError::Layout(format!(
                "{} critic expects {expected_in} inputs for degree {}, has {}",
                self.kind, self.degree, self.critic.spec.input_dim
            )));
        }
        Ok(())
    }
}

fn channel_tensors(channel: &Channel) -> Vec<usize> {
    let (a, b) = match channel {
        Channel::Dial { message, project } => (message, project),
        Channel::CommNet {
            self_weight,
            comm_weight,
        } => (self_weight, comm_weight),
        Channel::NeurComm { message, combine } => (message, combine),
    };
    let mut v = a.tensor_indices();
    v.extend(b.tensor_indices());
    v
}

fn uniform_fingerprint<T: FloatScalar>() -> [T; 2] {
    let half = T::lit(0.5);
    [half, half]
}

/// A team's agents, addressed by slot = position in the slice.
impl<T> Params<T> for [AgentModule<T>] {
    fn tensor(&self, r: ParamRef) -> &Tensor<T> {
        &self[r.slot].params.tensors[r.index]
    }

    fn tensor_mut(&mut self, r: ParamRef) -> &mut Tensor<T> {
        &mut self[r.slot].params.tensors[r.index]
    }

    fn refs(&self) -> Vec<ParamRef> {
        self.iter()
            .enumerate()
            .flat_map(|(slot, a)| {
                (0..a.params.tensors.len()).map(move |index| ParamRef { slot, index })
            })
            .collect()
    }
}

/// Builds a fresh team laid out for `topology`.
pub fn init_team<T: FloatScalar, R: Rng + ?Sized>(
    kind: AlgorithmKind,
    topology: &Topology,
    arch: ArchConfig,
    rng: &mut R,
) -> Vec<AgentModule<T>> {
    (0..topology.node_count())
        .map(|i| AgentModule::new(i, kind, kind.effective_degree(topology, i), arch, rng))
        .collect()
}

/// Checks a team can be run on `topology`: one kind, matching layouts.
pub fn check_team<T: FloatScalar>(team: &[AgentModule<T>], topology: &Topology) -> Result<(), AgentError> {
    if team.len() != topology.node_count() {
        return Err(AgentError::Layout(format!(
            "team of {} agents on a graph of {} nodes",
            team.len(),
            topology.node_count()
        )));
    }
    let kind = team[0].kind;
    for (i, a) in team.iter().enumerate() {
        if a.kind != kind {
            return Err(AgentError::KindMismatch(format!(
                "mixed team: {} at position {i}, {kind} at position 0",
                a.kind
            )));
        }
        let want = kind.effective_degree(topology, i);
        if a.degree != want {
            return Err(AgentError::Layout(format!(
                "agent laid out for {} neighbours placed at position {i} with {want}",
                a.degree
            )));
        }
    }
    Ok(())
}

/// What agent `i` receives this step. Channels a kind does not use are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationSet<T> {
    pub own_obs: [T; 2],
    pub neighbour_obs: Vec<[T; 2]>,
    pub neighbour_fingerprints: Vec<[T; 2]>,
    /// Incoming messages, filled in by [`communicate`] on the tape.
    pub messages: Vec<Vec<T>>,
}

impl<T: FloatScalar> InformationSet<T> {
    /// Gathers exactly the channels `kind` declares for agent `i`.
    pub fn gather(
        kind: AlgorithmKind,
        topology: &Topology,
        i: usize,
        observations: &[Observation<T>],
        fingerprints: &[[T; 2]],
    ) -> Result<Self, AgentError> {
        let neigh = topology.neighbourhood(i)?;
        let own_obs = observations[i].to_array();
        let neighbour_obs = if kind.shares_observations() {
            neigh.iter().map(|&j| observations[j].to_array()).collect()
        } else {
            Vec::new()
        };
        let neighbour_fingerprints = if kind.shares_fingerprints() {
            neigh.iter().map(|&j| fingerprints[j]).collect()
        } else {
            Vec::new()
        };
        Ok(InformationSet {
            own_obs,
            neighbour_obs,
            neighbour_fingerprints,
            messages: Vec::new(),
        })
    }
}

/// Lays out the actor input vector for agent `i`.
///
/// Neighbour blocks follow ascending neighbour id. Communicative kinds take
/// only the own observation here; their messages enter in [`communicate`].
pub fn build_input<T: FloatScalar>(
    kind: AlgorithmKind,
    info: &InformationSet<T>,
    topology: &Topology,
    i: usize,
) -> Result<Vec<T>, AgentError> {
    let degree = topology.neighbourhood(i)?.len();
    let mismatch = |what: &str| AgentError::Layout(format!("{kind} agent {i} given {what}"));
    let expect = |len: usize, wanted: bool, what: &str| -> Result<(), AgentError> {
        match (wanted, len) {
            (false, 0) => Ok(()),
            (false, _) => Err(mismatch(&format!("an unexpected {what} channel"))),
            (true, n) if n == degree => Ok(()),
            (true, n) => Err(mismatch(&format!("{n} {what} entries for {degree} neighbours"))),
        }
    };
    expect(info.neighbour_obs.len(), kind.shares_observations(), "observation")?;
    expect(
        info.neighbour_fingerprints.len(),
        kind.shares_fingerprints(),
        "fingerprint",
    )?;
    if !info.messages.is_empty() {
        return Err(mismatch("messages outside the communication step"));
    }
    let mut input = Vec::with_capacity(kind.actor_input_dim(degree));
    input.extend(info.own_obs);
    for o in &info.neighbour_obs {
        input.extend(o);
    }
    for f in &info.neighbour_fingerprints {
        input.extend(f);
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TopologyPreset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(n: usize) -> Vec<Observation<f64>> {
        (0..n)
            .map(|i| Observation {
                water_level: 0.5,
                own_piped: i as f64,
            })
            .collect()
    }

    #[test]
    fn input_layouts() {
        let k4 = TopologyPreset::Complete.build(4);
        let fps = vec![[0.5, 0.5]; 4];
        let o = obs(4);
        let ia2c = InformationSet::gather(AlgorithmKind::IA2C, &k4, 0, &o, &fps).unwrap();
        assert_eq!(build_input(AlgorithmKind::IA2C, &ia2c, &k4, 0).unwrap(), vec![0.5, 0.0]);

        let na2c = InformationSet::gather(AlgorithmKind::NA2C, &k4, 2, &o, &fps).unwrap();
        let x = build_input(AlgorithmKind::NA2C, &na2c, &k4, 2).unwrap();
        assert_eq!(x.len(), 8);
        assert_eq!(x, vec![0.5, 2.0, 0.5, 0.0, 0.5, 1.0, 0.5, 3.0]);

        let fp = InformationSet::gather(AlgorithmKind::FPrint, &k4, 0, &o, &fps).unwrap();
        assert_eq!(build_input(AlgorithmKind::FPrint, &fp, &k4, 0).unwrap().len(), 14);
        assert_eq!(AlgorithmKind::FPrint.actor_input_dim(3), 14);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let k4 = TopologyPreset::Complete.build(4);
        let fps = vec![[0.5, 0.5]; 4];
        let na2c = InformationSet::gather(AlgorithmKind::NA2C, &k4, 0, &obs(4), &fps).unwrap();
        assert!(build_input(AlgorithmKind::IA2C, &na2c, &k4, 0).is_err());
        let ia2c = InformationSet::gather(AlgorithmKind::IA2C, &k4, 0, &obs(4), &fps).unwrap();
        assert!(build_input(AlgorithmKind::NA2C, &ia2c, &k4, 0).is_err());
        let mut short = na2c.clone();
        short.neighbour_obs.pop();
        assert!(build_input(AlgorithmKind::NA2C, &short, &k4, 0).is_err());
    }

    #[test]
    fn critic_dims() {
        assert_eq!(AlgorithmKind::IA2C.critic_input_dim(3), 2);
        assert_eq!(AlgorithmKind::NA2C.critic_input_dim(3), 14);
        assert_eq!(AlgorithmKind::FPrint.critic_input_dim(3), 20);
        assert_eq!(AlgorithmKind::CommNet.critic_input_dim(3), 8);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AlgorithmKind::ALL {
            assert_eq!(k.name().parse::<AlgorithmKind>().unwrap(), k);
        }
        assert_eq!("neurcomm".parse::<AlgorithmKind>().unwrap(), AlgorithmKind::NeurComm);
        assert!("ppo".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn team_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k4 = TopologyPreset::Complete.build(4);
        let line = TopologyPreset::Line.build(4);
        let team: Vec<AgentModule<f64>> =
            init_team(AlgorithmKind::NA2C, &k4, ArchConfig::default(), &mut rng);
        assert!(check_team(&team, &k4).is_ok());
        assert!(matches!(check_team(&team, &line), Err(AgentError::Layout(_))));
        let ia2c: Vec<AgentModule<f64>> =
            init_team(AlgorithmKind::IA2C, &k4, ArchConfig::default(), &mut rng);
        assert!(check_team(&ia2c, &line).is_ok());
        let mut mixed = team.clone();
        mixed[1] = ia2c[1].clone();
        assert!(matches!(check_team(&mixed, &k4), Err(AgentError::KindMismatch(_))));
    }

    #[test]
    fn snapshot_serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agent = AgentModule::<f64>::new(0, AlgorithmKind::NeurComm, 3, ArchConfig::default(), &mut rng);
        let json = serde_json::to_string(&agent).unwrap();
        let mut back: AgentModule<f64> = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.params.flat_values(), agent.params.flat_values());
        assert_eq!(back.actor, agent.actor);
    }
}
