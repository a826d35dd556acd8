//! Empirical game-theoretic analysis of trained policies.
//!
//! Policies are labelled by how often they keep their valve closed, pooled by
//! label, and played against each other to estimate a symmetric meta-game
//! over the number of cooperators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::env::EnvError;

mod bootstrap;
mod meta;
mod metrics;
mod policy;

pub use bootstrap::{bootstrap_estimate, BootstrapSummary};
pub use meta::{
    build_meta_table, evaluate_configuration, find_equilibria, reparameterise, sample_team,
    ssd_indicator, unreparameterise, ConfigSamples, DeviationMargins, EquilibriumSet, MetaGameTable, Parameterisation,
    SsdReport,
};
pub use metrics::{
    equality, heatmap, social_metrics, sustainability, utilitarian, Heatmap, HeatmapCell,
    HeatmapEntry, SocialMetrics,
};
pub use policy::{
    measure_restraint, play_episode, EvalConfig, Member, PayoffKind, PolicySnapshot, Scripted,
    SnapshotMeta,
};

#[derive(Debug, Error)]
pub enum EgtaError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("no {role} samples for x = {x}")]
    MissingCell { x: usize, role: Role },
    #[error("{0} pool is empty")]
    EmptyPool(Role),
    #[error("table is in the {0:?} parameterisation")]
    WrongParameterisation(Parameterisation),
}

/// Role a policy plays in the meta-game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cooperate,
    Defect,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Cooperate => "cooperate",
            Role::Defect => "defect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Cooperate,
    Defect,
    Unlabeled,
}

impl Label {
    pub fn role(self) -> Option<Role> {
        match self {
            Label::Cooperate => Some(Role::Cooperate),
            Label::Defect => Some(Role::Defect),
            Label::Unlabeled => None,
        }
    }
}

pub const DEFECT_BELOW: f64 = 25.0;
pub const COOPERATE_ABOVE: f64 = 35.0;

/// Labels a restraint percentage; values in `[lo, hi]` stay unlabelled.
pub fn label_policy(restraint: f64, lo: f64, hi: f64) -> Result<Label, EgtaError> {
    if !(lo < hi) {
        return Err(EgtaError::Invalid(format!("thresholds {lo} >= {hi}")));
    }
    if !(0.0..=100.0).contains(&restraint) {
        return Err(EgtaError::Invalid(format!("restraint {restraint} outside [0, 100]")));
    }
    Ok(if restraint < lo {
        Label::Defect
    } else if restraint > hi {
        Label::Cooperate
    } else {
        Label::Unlabeled
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let l = |r| label_policy(r, DEFECT_BELOW, COOPERATE_ABOVE).unwrap();
        assert_eq!(l(24.99), Label::Defect);
        assert_eq!(l(35.01), Label::Cooperate);
        assert_eq!(l(30.0), Label::Unlabeled);
        assert_eq!(l(25.0), Label::Unlabeled);
        assert_eq!(l(35.0), Label::Unlabeled);
        assert_eq!(l(0.0), Label::Defect);
        assert_eq!(l(100.0), Label::Cooperate);
    }

    #[test]
    fn bad_arguments() {
        assert!(label_policy(30.0, 35.0, 25.0).is_err());
        assert!(label_policy(30.0, 30.0, 30.0).is_err());
        assert!(label_policy(-1.0, 25.0, 35.0).is_err());
        assert!(label_policy(f64::NAN, 25.0, 35.0).is_err());
    }
}
