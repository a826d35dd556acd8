use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_input, Actor, AgentError, AgentModule, AlgorithmKind, Channel, InformationSet};
use crate::env::{Action, Observation, Topology};
use crate::nn::{Categorical, NnError, Tape, Var};
use crate::scalar::FloatScalar;

/// How actions are drawn from a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    /// Argmax, ties to `Open`.
    Greedy,
}

#[derive(Debug, Clone)]
pub struct PolicyOutput<T> {
    /// Log-softmax node of the policy head.
    pub log_probs: Var,
    pub dist: Categorical<T>,
    /// Actor input layout, reused as the first block of the critic input.
    pub actor_input: Vec<T>,
}

/// Records every agent's policy for one time step on `tape`.
///
/// For communicative kinds this includes one synchronous round of message
/// passing, so the tape links each agent's loss to its neighbours' channel
/// parameters.
pub fn policy_forward<T: FloatScalar>(
    tape: &mut Tape<T>,
    team: &[AgentModule<T>],
    topology: &Topology,
    observations: &[Observation<T>],
) -> Result<Vec<PolicyOutput<T>>, AgentError> {
    let kind = team
        .first()
        .ok_or_else(|| AgentError::Layout("empty team".into()))?
        .kind;
    let n = team.len();
    let mut inputs = Vec::with_capacity(n);
    let mut logits = Vec::with_capacity(n);
    if kind.is_communicative() {
        let mut hidden = Vec::with_capacity(n);
        for (i, agent) in team.iter().enumerate() {
            let Actor::Communicating { encoder, .. } = &agent.actor else {
                return Err(AgentError::Layout(format!("agent {i} has no channel")));
            };
            let own = observations[i].to_array().to_vec();
            let x = tape.input(own.clone());
            let pre = encoder.forward(tape, team, i, x)?;
            hidden.push(tape.relu(pre));
            inputs.push(own);
        }
        let post = communicate(tape, team, topology, &hidden, observations)?;
        for (i, agent) in team.iter().enumerate() {
            let Actor::Communicating { head, .. } = &agent.actor else {
                unreachable!("checked above");
            };
            logits.push(head.forward(tape, team, i, post[i])?);
        }
    } else {
        let fingerprints: Vec<[T; 2]> = team.iter().map(|a| a.fingerprint).collect();
        for (i, agent) in team.iter().enumerate() {
            let Actor::Plain(mlp) = &agent.actor else {
                return Err(AgentError::Layout(format!(
                    "{kind} agent {i} carries a message channel"
                )));
            };
            let info = InformationSet::gather(kind, topology, i, observations, &fingerprints)?;
            let input = build_input(kind, &info, topology, i)?;
            let x = tape.input(input.clone());
            logits.push(mlp.forward(tape, team, i, x)?);
            inputs.push(input);
        }
    }
    logits
        .into_iter()
        .zip(inputs)
        .map(|(l, actor_input)| {
            if tape.value(l).iter().any(|v| !v.is_finite()) {
                return Err(AgentError::Nn(NnError::NonFinite("logits")));
            }
            let log_probs = tape.log_softmax(l);
            let dist = Categorical::from_log_probs(tape.value(log_probs).to_vec());
            Ok(PolicyOutput {
                log_probs,
                dist,
                actor_input,
            })
        })
        .collect()
}

/// One synchronous, differentiable exchange of messages between neighbours.
///
/// `hidden[i]` is agent `i`'s encoding of its own observation; the result is
/// the post-communication hidden state fed to each policy head.
pub fn communicate<T: FloatScalar>(
    tape: &mut Tape<T>,
    team: &[AgentModule<T>],
    topology: &Topology,
    hidden: &[Var],
    observations: &[Observation<T>],
) -> Result<Vec<Var>, AgentError> {
    let kind = team[0].kind;
    if !kind.is_communicative() {
        return Err(AgentError::KindMismatch(format!(
            "{kind} does not communicate"
        )));
    }
    let channels: Vec<&Channel> = team
        .iter()
        .enumerate()
        .map(|(i, a)| match &a.actor {
            Actor::Communicating { channel, .. } => Ok(channel),
            Actor::Plain(_) => Err(AgentError::Layout(format!("agent {i} has no channel"))),
        })
        .collect::<Result<_, _>>()?;

    // Every sender computes its outgoing message first.
    let mut messages = Vec::with_capacity(team.len());
    for (i, channel) in channels.iter().enumerate() {
        let m = match channel {
            Channel::Dial { message, .. } => message.forward(tape, team, i, hidden[i])?,
            Channel::CommNet { .. } => hidden[i],
            Channel::NeurComm { message, .. } => {
                let fp = team[i].fingerprint;
                let o = observations[i].to_array();
                let extra = tape.input(vec![fp[0], fp[1], o[0], o[1]]);
                let x = tape.concat(&[hidden[i], extra]);
                message.forward(tape, team, i, x)?
            }
        };
        messages.push(m);
    }

    let mut out = Vec::with_capacity(team.len());
    for (i, channel) in channels.iter().enumerate() {
        let incoming: Vec<Var> = topology.neighbours(i).iter().map(|&j| messages[j]).collect();
        let h = match channel {
            Channel::Dial { project, .. } => {
                if incoming.is_empty() {
                    hidden[i]
                } else {
                    let sum = tape.add_n(&incoming)?;
                    let p = project.forward(tape, team, i, sum)?;
                    tape.add(hidden[i], p)?
                }
            }
            Channel::CommNet {
                self_weight,
                comm_weight,
            } => {
                let own = self_weight.forward(tape, team, i, hidden[i])?;
                let pre = if incoming.is_empty() {
                    own
                } else {
                    let sum = tape.add_n(&incoming)?;
                    let mean = tape.scale(sum, T::one() / T::from_count(incoming.len()));
                    let c = comm_weight.forward(tape, team, i, mean)?;
                    tape.add(own, c)?
                };
                tape.tanh(pre)
            }
            Channel::NeurComm { combine, .. } => {
                let mut parts = vec![hidden[i]];
                parts.extend(incoming);
                let x = tape.concat(&parts);
                let pre = combine.forward(tape, team, i, x)?;
                tape.relu(pre)
            }
        };
        out.push(h);
    }
    Ok(out)
}

/// Critic estimate for agent `slot` given its actor input and the actions
/// its neighbours took this step (ascending id).
pub fn critic_forward<T: FloatScalar>(
    tape: &mut Tape<T>,
    team: &[AgentModule<T>],
    slot: usize,
    actor_input: &[T],
    neighbour_actions: &[Action],
) -> Result<Var, AgentError> {
    let agent = &team[slot];
    let expected = if agent.kind == AlgorithmKind::IA2C {
        0
    } else {
        agent.degree
    };
    if neighbour_actions.len() != expected {
        return Err(AgentError::Layout(format!(
            "{} critic of agent {slot} expects {expected} neighbour actions, got {}",
            agent.kind,
            neighbour_actions.len()
        )));
    }
    let mut input = Vec::with_capacity(actor_input.len() + 2 * expected);
    input.extend_from_slice(actor_input);
    for a in neighbour_actions {
        input.extend(a.one_hot::<T>());
    }
    let x = tape.input(input);
    Ok(agent.critic.forward(tape, team, slot, x)?)
}

/// Draws an action and its log-probability.
pub fn act<T: FloatScalar, R: Rng + ?Sized>(
    dist: &Categorical<T>,
    mode: ActMode,
    rng: &mut R,
) -> (Action, T) {
    let idx = match mode {
        ActMode::Sample => dist.sample(rng),
        ActMode::Greedy => dist.argmax(),
    };
    (Action::from_index(idx), dist.log_prob(idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{init_team, ArchConfig};
    use crate::env::TopologyPreset;
    use crate::nn::Params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(n: usize) -> Vec<Observation<f64>> {
        (0..n)
            .map(|i| Observation {
                water_level: 0.3 + 0.1 * i as f64,
                own_piped: 0.05 * i as f64,
            })
            .collect()
    }

    fn small() -> ArchConfig {
        ArchConfig {
            hidden: 6,
            message_dim: 3,
        }
    }

    #[test]
    fn commnet_symmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k4 = TopologyPreset::Complete.build(4);
        let team: Vec<AgentModule<f64>> = init_team(AlgorithmKind::CommNet, &k4, small(), &mut rng);
        let mut tape = Tape::new();
        let h: Vec<Var> = (0..4)
            .map(|_| tape.input(vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4]))
            .collect();
        let out = communicate(&mut tape, &team, &k4, &h, &obs(4)).unwrap();

        let Actor::Communicating { channel: Channel::CommNet { self_weight, comm_weight }, .. } =
            &team[0].actor
        else {
            panic!()
        };
        let mut t2 = Tape::new();
        let x = t2.input(vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4]);
        let a = self_weight.forward(&mut t2, team.as_slice(), 0, x).unwrap();
        let b = comm_weight.forward(&mut t2, team.as_slice(), 0, x).unwrap();
        let s = t2.add(a, b).unwrap();
        let expect = t2.tanh(s);
        for (u, v) in tape.value(out[0]).iter().zip(t2.value(expect)) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn dial_without_neighbours_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let empty = TopologyPreset::Disconnected.build(4);
        let team: Vec<AgentModule<f64>> = init_team(AlgorithmKind::DIAL, &empty, small(), &mut rng);
        let mut tape = Tape::new();
        let h: Vec<Var> = (0..4).map(|i| tape.input(vec![i as f64; 6])).collect();
        let out = communicate(&mut tape, &team, &empty, &h, &obs(4)).unwrap();
        for i in 0..4 {
            assert_eq!(tape.value(out[i]), tape.value(h[i]));
        }
    }

    #[test]
    fn non_communicative_kind_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k4 = TopologyPreset::Complete.build(4);
        let team: Vec<AgentModule<f64>> = init_team(AlgorithmKind::NA2C, &k4, small(), &mut rng);
        let mut tape = Tape::new();
        let h: Vec<Var> = (0..4).map(|_| tape.input(vec![0.0; 6])).collect();
        assert!(matches!(
            communicate(&mut tape, &team, &k4, &h, &obs(4)),
            Err(AgentError::KindMismatch(_))
        ));
    }

    #[test]
    fn neurcomm_gradient_crosses_agents() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k4 = TopologyPreset::Complete.build(4);
        let mut team: Vec<AgentModule<f64>> =
            init_team(AlgorithmKind::NeurComm, &k4, small(), &mut rng);
        let channel_of_1 = team[1].channel_tensors();
        let message_weight = channel_of_1[0];
        let loss_of_agent0 = |tape: &mut Tape<f64>, team: &[AgentModule<f64>]| {
            let out = policy_forward(tape, team, &k4, &obs(4)).unwrap();
            let lp = tape.pick(out[0].log_probs, 0).unwrap();
            tape.scale(lp, -1.0)
        };
        let mut tape = Tape::new();
        let loss = loss_of_agent0(&mut tape, &team);
        for a in team.iter_mut() {
            a.params.zero_grad();
        }
        tape.backward(loss, team.as_mut_slice()).unwrap();
        let analytic = team[1].params.tensors[message_weight].grad.clone();
        assert!(analytic.iter().any(|&g| g.abs() > 1e-8));

        // finite differences on agent 1's most influential message weight
        let k = (0..analytic.len())
            .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
            .unwrap();
        let r = crate::nn::ParamRef { slot: 1, index: message_weight };
        let eps = 1e-5;
        let orig = team.as_slice().tensor(r).values[k];
        let eval = |team: &[AgentModule<f64>]| {
            let mut t = Tape::new();
            let l = loss_of_agent0(&mut t, team);
            t.scalar(l)
        };
        team.as_mut_slice().tensor_mut(r).values[k] = orig + eps;
        let plus = eval(&team);
        team.as_mut_slice().tensor_mut(r).values[k] = orig - eps;
        let minus = eval(&team);
        let numeric = (plus - minus) / (2.0 * eps);
        assert!(numeric.abs() > 1e-8);
        assert!((numeric - analytic[k]).abs() <= 1e-6 * analytic[k].abs().max(1e-3));
    }

    #[test]
    fn ia2c_ignores_other_agents() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k4 = TopologyPreset::Complete.build(4);
        let team: Vec<AgentModule<f64>> = init_team(AlgorithmKind::IA2C, &k4, small(), &mut rng);
        let mut other = team.clone();
        for a in other.iter_mut().skip(1) {
            for t in a.params.tensors.iter_mut() {
                t.values.iter_mut().for_each(|v| *v += 1.0);
            }
        }
        let mut o2 = obs(4);
        o2[3].water_level = 0.9;
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = policy_forward(&mut t1, &team, &k4, &obs(4)).unwrap();
        let b = policy_forward(&mut t2, &other, &k4, &o2).unwrap();
        assert_eq!(a[0].dist, b[0].dist);
    }

    #[test]
    fn critic_arity_and_zero_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k4 = TopologyPreset::Complete.build(4);
        let mut team: Vec<AgentModule<f64>> = init_team(AlgorithmKind::NA2C, &k4, small(), &mut rng);
        let mut tape = Tape::new();
        let x = vec![0.1; 8];
        assert!(critic_forward(&mut tape, &team, 0, &x, &[Action::Open; 2]).is_err());
        for i in team[0].critic_tensors() {
            team[0].params.tensors[i].values.iter_mut().for_each(|v| *v = 0.0);
        }
        let v = critic_forward(&mut tape, &team, 0, &x, &[Action::Open; 3]).unwrap();
        assert_eq!(tape.scalar(v), 0.0);
    }

    #[test]
    fn act_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Categorical::from_logits(&[2.0f64, 1.0]).unwrap();
        assert_eq!(act(&d, ActMode::Greedy, &mut rng).0, Action::Open);
        let u = Categorical::from_logits(&[0.0f64, 0.0]).unwrap();
        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..32).map(|_| act(&u, ActMode::Sample, &mut r).0).collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
        let (_, lp) = act(&u, ActMode::Sample, &mut rng);
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }
}
