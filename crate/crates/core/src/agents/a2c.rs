use super::AgentError;
use crate::env::Action;
use crate::nn::{Tape, Var};
use crate::scalar::FloatScalar;

/// One agent's record of one step, with handles into the rollout's tape.
#[derive(Debug, Clone)]
pub struct StepRecord<T> {
    pub actor_input: Vec<T>,
    pub action: Action,
    /// Log-softmax node of the policy at this step.
    pub log_probs: Var,
    /// Connectivity-weighted reward received after acting.
    pub reward: T,
    /// Critic node at this step.
    pub value: Var,
}

/// Steps collected since the last update, indexed `[agent][t]`.
#[derive(Debug, Clone, Default)]
pub struct Rollout<T> {
    pub steps: Vec<Vec<StepRecord<T>>>,
    /// Critic estimate after the last step, per agent.
    pub bootstrap: Vec<T>,
    /// True when the resource ran out; bootstrap values are then ignored.
    pub terminal: bool,
}

impl<T: FloatScalar> Rollout<T> {
    pub fn new(n_agents: usize) -> Self {
        Rollout {
            steps: vec![Vec::new(); n_agents],
            bootstrap: vec![T::zero(); n_agents],
            terminal: false,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `R_t = r_t + gamma r_{t+1} + ... + gamma^{n-t} bootstrap`.
pub fn n_step_returns<T: FloatScalar>(rewards: &[T], bootstrap: T, gamma: T) -> Vec<T> {
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = bootstrap;
    for (o, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

#[derive(Debug, Clone)]
pub struct A2cLoss<T> {
    pub policy: T,
    pub value: T,
    pub entropy: T,
    pub returns: Vec<T>,
    pub advantages: Vec<T>,
    /// `policy + value_coef * value - entropy_coef * entropy`, on the tape.
    pub total: Var,
}

/// Per-agent advantage actor-critic losses over a rollout.
///
/// Advantages are treated as constants in the policy term, so the critic only
/// learns through the squared-error term.
pub fn a2c_losses<T: FloatScalar>(
    tape: &mut Tape<T>,
    rollout: &Rollout<T>,
    gamma: T,
    value_coef: T,
    entropy_coef: T,
) -> Result<Vec<A2cLoss<T>>, AgentError> {
    losses(tape, rollout, gamma, value_coef, entropy_coef, None)
}

/// As [`a2c_losses`], with advantages `[agent][t]` supplied by the caller.
///
/// Holding advantages fixed makes the total a plain function of the
/// parameters whose gradient is the actor-critic update, which is what
/// finite-difference checks need.
pub fn a2c_losses_with_advantages<T: FloatScalar>(
    tape: &mut Tape<T>,
    rollout: &Rollout<T>,
    gamma: T,
    value_coef: T,
    entropy_coef: T,
    advantages: &[Vec<T>],
) -> Result<Vec<A2cLoss<T>>, AgentError> {
    if advantages.len() != rollout.steps.len()
        || advantages.iter().any(|a| a.len() != rollout.len())
    {
        return Err(AgentError::Layout("advantages do not match the rollout".into()));
    }
    losses(tape, rollout, gamma, value_coef, entropy_coef, Some(advantages))
}

fn losses<T: FloatScalar>(
    tape: &mut Tape<T>,
    rollout: &Rollout<T>,
    gamma: T,
    value_coef: T,
    entropy_coef: T,
    fixed: Option<&[Vec<T>]>,
) -> Result<Vec<A2cLoss<T>>, AgentError> {
    if rollout.is_empty() {
        return Err(AgentError::Config("empty rollout".into()));
    }
    let n = rollout.len();
    if rollout.steps.iter().any(|s| s.len() != n) {
        return Err(AgentError::Layout("agents' rollouts differ in length".into()));
    }
    let mut out = Vec::with_capacity(rollout.steps.len());
    for (agent, steps) in rollout.steps.iter().enumerate() {
        let rewards: Vec<T> = steps.iter().map(|s| s.reward).collect();
        let bootstrap = if rollout.terminal {
            T::zero()
        } else {
            rollout.bootstrap[agent]
        };
        let returns = n_step_returns(&rewards, bootstrap, gamma);
        let mut terms = Vec::with_capacity(3 * n);
        let mut advantages = Vec::with_capacity(n);
        let (mut policy, mut value, mut entropy) = (T::zero(), T::zero(), T::zero());
        for (t, (s, &ret)) in steps.iter().zip(&returns).enumerate() {
            let adv = match fixed {
                Some(a) => a[agent][t],
                None => ret - tape.scalar(s.value),
            };
            advantages.push(adv);

            let lp = tape.pick(s.log_probs, s.action.index())?;
            let pg = tape.scale(lp, -adv);
            policy = policy - tape.scalar(lp) * adv;

            let target = tape.constant(ret);
            let diff = tape.sub(target, s.value)?;
            let sq = tape.square(diff);
            value = value + tape.scalar(sq);
            let vterm = tape.scale(sq, value_coef);

            let p = tape.exp(s.log_probs);
            let plogp = tape.mul(p, s.log_probs)?;
            // -entropy_coef * H = entropy_coef * sum(p log p)
            let sum_plogp = tape.sum(plogp);
            entropy = entropy - tape.scalar(sum_plogp);
            let eterm = tape.scale(sum_plogp, entropy_coef);

            terms.extend([pg, vterm, eterm]);
        }
        let total = tape.add_n(&terms)?;
        out.push(A2cLoss {
            policy,
            value,
            entropy,
            returns,
            advantages,
            total,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    #[test]
    fn three_step_returns_by_hand() {
        let r = n_step_returns(&[1.0, 0.0, 2.0], 10.0, 0.5);
        // R2 = 2 + 0.5*10 = 7; R1 = 0 + 0.5*7 = 3.5; R0 = 1 + 0.5*3.5 = 2.75
        assert_eq!(r, vec![2.75, 3.5, 7.0]);
        let r = n_step_returns(&[1.0f64, 1.0, 1.0], 0.0, 0.99);
        assert!((r[0] - (1.0 + 0.99 + 0.9801)).abs() < 1e-15);
    }

    /// A rollout whose value and logits are free parameters of a store.
    fn one_param_rollout(
        store: &ParamStore<f64>,
        tape: &mut Tape<f64>,
        rewards: &[f64],
    ) -> Rollout<f64> {
        let r_logit = crate::nn::ParamRef { slot: 0, index: 0 };
        let r_value = crate::nn::ParamRef { slot: 0, index: 1 };
        let mut rollout = Rollout::new(1);
        for &reward in rewards {
            let one = tape.input(vec![1.0]);
            let logits = tape.linear(store, r_logit, None, one).unwrap();
            let log_probs = tape.log_softmax(logits);
            let value = tape.linear(store, r_value, None, one).unwrap();
            rollout.steps[0].push(StepRecord {
                actor_input: vec![],
                action: Action::Open,
                log_probs,
                reward,
                value,
            });
        }
        rollout
    }

    fn store(logits: [f64; 2], value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add_zeros("logits", vec![2, 1]);
        s.add_zeros("value", vec![1, 1]);
        s.tensors[0].values = logits.to_vec();
        s.tensors[1].values = vec![value];
        s
    }

    #[test]
    fn single_terminal_step() {
        let mut s = store([0.0, 0.0], 0.0);
        let mut tape = Tape::new();
        let mut rollout = one_param_rollout(&s, &mut tape, &[1.0]);
        rollout.terminal = true;
        rollout.bootstrap = vec![123.0];
        let l = a2c_losses(&mut tape, &rollout, 0.99, 0.5, 0.0).unwrap();
        assert_eq!(l[0].returns, vec![1.0]);
        assert_eq!(l[0].value, 1.0);
        tape.backward(l[0].total, &mut s).unwrap();
        // d/dv 0.5 (1 - v)^2 = -(1 - v) = -1
        assert!((s.tensors[1].grad[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_gives_zero_policy_gradient() {
        // value equals the return exactly: R = 0.5 with no bootstrap.
        let mut s = store([0.3, -0.1], 0.5);
        let mut tape = Tape::new();
        let mut rollout = one_param_rollout(&s, &mut tape, &[0.5]);
        rollout.terminal = true;
        let l = a2c_losses(&mut tape, &rollout, 0.99, 0.5, 0.0).unwrap();
        assert_eq!(l[0].advantages, vec![0.0]);
        tape.backward(l[0].total, &mut s).unwrap();
        assert!(s.tensors[0].grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn entropy_term_and_bootstrap() {
        let s = store([0.0, 0.0], 0.0);
        let mut tape = Tape::new();
        let mut rollout = one_param_rollout(&s, &mut tape, &[0.0, 0.0]);
        rollout.bootstrap = vec![4.0];
        let l = a2c_losses(&mut tape, &rollout, 0.5, 0.5, 0.01).unwrap();
        assert_eq!(l[0].returns, vec![1.0, 2.0]);
        assert!((l[0].entropy - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let expected_total = -(0.5f64.ln() * 1.0 + 0.5f64.ln() * 2.0) + 0.5 * (1.0 + 4.0)
            - 0.01 * 2.0 * std::f64::consts::LN_2;
        assert!((tape.scalar(l[0].total) - expected_total).abs() < 1e-14);
    }

    #[test]
    fn supplied_advantages_replace_computed_ones() {
        let s = store([0.0, 0.0], 0.0);
        let mut tape = Tape::new();
        let mut rollout = one_param_rollout(&s, &mut tape, &[1.0]);
        rollout.terminal = true;
        let l = a2c_losses_with_advantages(&mut tape, &rollout, 0.9, 0.5, 0.0, &[vec![2.0]]).unwrap();
        assert_eq!(l[0].advantages, vec![2.0]);
        assert!((l[0].policy - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(a2c_losses_with_advantages(&mut tape, &rollout, 0.9, 0.5, 0.0, &[vec![]]).is_err());
    }

    #[test]
    fn empty_rollout_is_an_error() {
        let mut tape = Tape::<f64>::new();
        assert!(a2c_losses(&mut tape, &Rollout::new(2), 0.99, 0.5, 0.01).is_err());
    }
}
