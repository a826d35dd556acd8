use super::{AgentError, AgentModule, AlgorithmKind};
use crate::env::Topology;
use crate::scalar::FloatScalar;

/// Replaces every critic by the uniform average of the critics in its closed
/// neighbourhood. All averages are taken over the values before the call.
pub fn consensus_step<T: FloatScalar>(
    team: &mut [AgentModule<T>],
    topology: &Topology,
) -> Result<(), AgentError> {
    if let Some(a) = team.iter().find(|a| a.kind != AlgorithmKind::ConseNet) {
        return Err(AgentError::KindMismatch(format!(
            "consensus update is only defined for ConseNet, got {}",
            a.kind
        )));
    }
    if team.len() != topology.node_count() {
        return Err(AgentError::Layout(format!(
            "team of {} agents on a graph of {} nodes",
            team.len(),
            topology.node_count()
        )));
    }
    let before: Vec<Vec<Vec<T>>> = team
        .iter()
        .map(|a| a.critic_values().into_iter().map(|t| t.values.clone()).collect())
        .collect();
    for i in 0..team.len() {
        let closed: Vec<usize> = std::iter::once(i)
            .chain(topology.neighbours(i).iter().copied())
            .collect();
        for &j in &closed {
            let same = before[j].len() == before[i].len()
                && before[j].iter().zip(&before[i]).all(|(a, b)| a.len() == b.len());
            if !same {
                return Err(AgentError::Layout(format!(
                    "critics of agents {i} and {j} differ in shape; consensus needs a regular graph"
                )));
            }
        }
        let weight = T::one() / T::from_count(closed.len());
        let indices = team[i].critic_tensors();
        for (k, &ti) in indices.iter().enumerate() {
            let target = &mut team[i].params.tensors[ti].values;
            for (e, v) in target.iter_mut().enumerate() {
                let s = closed.iter().fold(T::zero(), |acc, &j| acc + before[j][k][e]);
                *v = s * weight;
            }
        }
    }
    Ok(())
}
