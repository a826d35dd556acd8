use serde::{Deserialize, Serialize};

use super::EgtaError;
use crate::env::EpisodeTrace;
use crate::scalar::{mean, sum, Real};

/// Group outcome measures, each averaged over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialMetrics<T> {
    /// Group return per step of the horizon.
    pub utilitarian: T,
    /// One minus the Gini coefficient of agents' returns.
    pub equality: T,
    /// Mean step at which agents collected reward.
    pub sustainability: T,
    pub episodes: usize,
}

/// `sum(returns) / horizon`.
pub fn utilitarian<T: Real>(returns: &[T], horizon: usize) -> T {
    sum(returns) / T::from_count(horizon)
}

/// `1 - sum_ij |R_i - R_j| / (2 N sum_i R_i)`; 1 when nobody earned anything.
pub fn equality<T: Real>(returns: &[T]) -> T {
    let total = sum(returns);
    if total == T::zero() {
        return T::one();
    }
    let mut diffs = T::zero();
    for &a in returns {
        for &b in returns {
            diffs = diffs + (a - b).abs_val();
        }
    }
    let n = T::from_count(returns.len());
    T::one() - diffs / (T::lit(2.0) * n * total)
}

/// Mean over agents of the average 1-based step with positive reward.
///
/// `rewards[t][i]` is agent `i`'s reward at step `t + 1`. Agents never
/// rewarded are left out; the result is 0 if that leaves nobody.
pub fn sustainability<T: Real>(rewards: &[Vec<T>]) -> T {
    let n = rewards.first().map_or(0, Vec::len);
    let per_agent: Vec<T> = (0..n)
        .filter_map(|i| {
            let steps: Vec<T> = rewards
                .iter()
                .enumerate()
                .filter(|(_, r)| r[i] > T::zero())
                .map(|(t, _)| T::from_count(t + 1))
                .collect();
            mean(&steps)
        })
        .collect();
    mean(&per_agent).unwrap_or_else(T::zero)
}

/// Social metrics from raw rewards, averaged over episodes.
pub fn social_metrics<T: Real>(
    traces: &[EpisodeTrace<T>],
    horizon: usize,
) -> Result<SocialMetrics<T>, EgtaError> {
    if traces.is_empty() || horizon == 0 {
        return Err(EgtaError::Invalid("social metrics need episodes and a horizon".into()));
    }
    let (mut u, mut e, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for trace in traces {
        let returns = trace.raw_returns();
        u.push(utilitarian(&returns, horizon));
        e.push(equality(&returns));
        let rewards: Vec<Vec<T>> = trace.rows.iter().map(|r| r.raw_rewards.clone()).collect();
        s.push(sustainability(&rewards));
    }
    Ok(SocialMetrics {
        utilitarian: mean(&u).unwrap_or_else(T::zero),
        equality: mean(&e).unwrap_or_else(T::zero),
        sustainability: mean(&s).unwrap_or_else(T::zero),
        episodes: traces.len(),
    })
}

/// One measured agent feeding a heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub algorithm: String,
    pub rate: f64,
    pub alpha: f64,
    pub seed_index: usize,
    pub restraint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub algorithm: String,
    pub rate: f64,
    pub alpha: f64,
    /// `None` when no entry was found for the cell.
    pub mean_restraint: Option<f64>,
    pub n_seeds: usize,
}

/// Mean restraint per algorithm and regeneration rate, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub alpha: f64,
    pub algorithms: Vec<String>,
    pub rates: Vec<f64>,
    pub cells: Vec<HeatmapCell>,
}

impl Heatmap {
    pub fn cell(&self, algorithm: usize, rate: usize) -> &HeatmapCell {
        &self.cells[algorithm * self.rates.len() + rate]
    }

    pub fn missing(&self) -> Vec<&HeatmapCell> {
        self.cells.iter().filter(|c| c.mean_restraint.is_none()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,rate,alpha,mean_restraint,n_seeds\n");
        for c in &self.cells {
            let m = c.mean_restraint.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{m},{}\n", c.algorithm, c.rate, c.alpha, c.n_seeds));
        }
        out
    }
}

/// Averages restraint over seeds and agents for each (algorithm, rate).
pub fn heatmap(entries: &[HeatmapEntry], algorithms: &[String], rates: &[f64], alpha: f64) -> Heatmap {
    let mut cells = Vec::with_capacity(algorithms.len() * rates.len());
    for algorithm in algorithms {
        for &rate in rates {
            let matching: Vec<&HeatmapEntry> = entries
                .iter()
                .filter(|e| &e.algorithm == algorithm && e.rate == rate && e.alpha == alpha)
                .collect();
            let restraints: Vec<f64> = matching.iter().map(|e| e.restraint).collect();
            let mut seeds: Vec<usize> = matching.iter().map(|e| e.seed_index).collect();
            seeds.sort_unstable();
            seeds.dedup();
            cells.push(HeatmapCell {
                algorithm: algorithm.clone(),
                rate,
                alpha,
                mean_restraint: mean(&restraints),
                n_seeds: seeds.len(),
            });
        }
    }
    Heatmap {
        alpha,
        algorithms: algorithms.to_vec(),
        rates: rates.to_vec(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egta::{play_episode, Member, Scripted};
    use crate::agents::ActMode;
    use crate::env::EnvConfig;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i64>;

    #[test]
    fn equality_examples() {
        let r = |v: &[i64]| v.iter().map(|&x| Q::from_integer(x)).collect::<Vec<_>>();
        assert_eq!(equality(&r(&[1, 0, 0, 0])), Q::new(1, 4));
        assert_eq!(equality(&r(&[3, 3, 3, 3])), Q::from_integer(1));
        assert_eq!(equality(&r(&[0, 0, 0])), Q::from_integer(1));
        // Gini of (1, 3) = 2 * 2 / (2 * 2 * 4) = 1/4
        assert_eq!(equality(&r(&[1, 3])), Q::new(3, 4));
    }

    #[test]
    fn sustainability_examples() {
        let every_step: Vec<Vec<Q>> = (0..100).map(|_| vec![Q::from_integer(1); 4]).collect();
        assert_eq!(sustainability(&every_step), Q::new(101, 2));
        // agent 0 rewarded at t = 2 and 4, agent 1 never, agent 2 at t = 1
        let z = Q::from_integer(0);
        let o = Q::from_integer(1);
        let rows = vec![vec![z, z, o], vec![o, z, z], vec![z, z, z], vec![o, z, z]];
        assert_eq!(sustainability(&rows), Q::from_integer(2));
        assert_eq!(sustainability(&[vec![z, z]]), z);
        assert_eq!(sustainability::<Q>(&[]), z);
    }

    #[test]
    fn all_open_sustainable_play() {
        // at c = 0.1 four open valves extract exactly what flows back in
        let cfg = EnvConfig::<Q> {
            regen_rate: Q::new(1, 10),
            max_steps: 100,
            ..EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let members = vec![Member::<f64>::Scripted(Scripted::AlwaysOpen); 4];
        let team: Vec<&Member<f64>> = members.iter().collect();
        let cfg64 = EnvConfig::<f64> { regen_rate: 0.1, max_steps: 100, ..EnvConfig::default() };
        let trace = play_episode(&team, &cfg64, ActMode::Greedy, 0, &mut rng).unwrap();
        let m = social_metrics(&[trace], 100).unwrap();
        assert!((m.utilitarian - 0.1).abs() < 1e-12);
        assert!((m.equality - 1.0).abs() < 1e-12);
        assert!((m.sustainability - 50.5).abs() < 1e-12);

        // the same episode in exact arithmetic
        let mut env = crate::env::WaterEnv::new(cfg, 0).unwrap();
        let mut trace = EpisodeTrace::new(4);
        loop {
            let actions = vec![crate::env::Action::Open; 4];
            let r = env.step(&actions).unwrap();
            trace.push(env.state(), &actions, &r);
            if r.done {
                break;
            }
        }
        let m = social_metrics(&[trace], 100).unwrap();
        assert_eq!(m.utilitarian, Q::new(1, 10));
        assert_eq!(m.sustainability, Q::new(101, 2));
    }

    #[test]
    fn metrics_need_episodes() {
        assert!(social_metrics::<f64>(&[], 100).is_err());
        assert!(social_metrics(&[EpisodeTrace::<f64>::new(2)], 0).is_err());
    }

    fn entry(algorithm: &str, rate: f64, seed_index: usize, restraint: f64) -> HeatmapEntry {
        HeatmapEntry { algorithm: algorithm.into(), rate, alpha: 0.0, seed_index, restraint }
    }

    #[test]
    fn heatmap_cells() {
        let entries = vec![
            entry("IA2C", 0.1, 0, 20.0),
            entry("IA2C", 0.1, 1, 40.0),
            entry("IA2C", 0.03, 0, 100.0),
            entry("NA2C", 0.1, 0, 0.0),
        ];
        let algs = vec!["IA2C".to_string(), "NA2C".to_string()];
        let h = heatmap(&entries, &algs, &[0.1, 0.03], 0.0);
        assert_eq!(h.cell(0, 0).mean_restraint, Some(30.0));
        assert_eq!(h.cell(0, 0).n_seeds, 2);
        assert_eq!(h.cell(0, 1).mean_restraint, Some(100.0));
        assert_eq!(h.cell(1, 1).mean_restraint, None);
        assert_eq!(h.missing().len(), 1);
        let csv = h.to_csv();
        assert!(csv.starts_with("algorithm,rate,alpha,mean_restraint,n_seeds\nIA2C,0.1,0,30,2\n"));
        assert!(csv.contains("NA2C,0.03,0,,0\n"));
        // entries at other alphas are ignored
        assert!(heatmap(&entries, &algs, &[0.1], 1.0).cells.iter().all(|c| c.n_seeds == 0));
    }

    proptest! {
        #[test]
        fn equality_is_one_only_for_constant_returns(v in prop::collection::vec(0i64..50, 2..8)) {
            let r: Vec<Q> = v.iter().map(|&x| Q::from_integer(x)).collect();
            let e = equality(&r);
            prop_assert!(e >= Q::from_integer(0) && e <= Q::from_integer(1));
            let constant = v.iter().all(|&x| x == v[0]);
            prop_assert_eq!(e == Q::from_integer(1), constant || v.iter().all(|&x| x == 0));
        }

        #[test]
        fn sustainability_within_horizon(rows in prop::collection::vec(prop::collection::vec(0u8..2, 3), 1..60)) {
            let r: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|&b| b as f64).collect()).collect();
            let s = sustainability(&r);
            prop_assert!(s >= 0.0 && s <= r.len() as f64);
        }
    }
}
