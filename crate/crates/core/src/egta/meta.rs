use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{play_episode, EvalConfig, Member};
use super::{EgtaError, Role};
use crate::scalar::{mean, FloatScalar, Real};

/// What the table's index counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterisation {
    /// Cooperators in the whole group, `0..=N`.
    Total,
    /// Cooperators among the other `N - 1` agents, `0..N`.
    Other,
}

/// Payoff samples of one evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSamples<T> {
    pub x: usize,
    pub cooperate: Vec<T>,
    pub defect: Vec<T>,
}

/// Symmetric meta-game over the number of cooperators.
///
/// Only raw samples are stored; every mean is recomputed on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaGameTable<T> {
    pub n_agents: usize,
    pub parameterisation: Parameterisation,
    pub cooperate: Vec<Vec<T>>,
    pub defect: Vec<Vec<T>>,
}

impl<T: Real> MetaGameTable<T> {
    /// Empty table in the total-cooperator parameterisation.
    pub fn new(n_agents: usize) -> Self {
        MetaGameTable {
            n_agents,
            parameterisation: Parameterisation::Total,
            cooperate: vec![Vec::new(); n_agents + 1],
            defect: vec![Vec::new(); n_agents + 1],
        }
    }

    /// Largest index of the table.
    pub fn max_index(&self) -> usize {
        match self.parameterisation {
            Parameterisation::Total => self.n_agents,
            Parameterisation::Other => self.n_agents - 1,
        }
    }

    /// Whether a role can exist at index `x`.
    pub fn is_feasible(&self, x: usize, role: Role) -> bool {
        match (self.parameterisation, role) {
            (Parameterisation::Total, Role::Cooperate) => (1..=self.n_agents).contains(&x),
            (Parameterisation::Total, Role::Defect) => x < self.n_agents,
            (Parameterisation::Other, _) => x < self.n_agents,
        }
    }

    pub fn samples(&self, x: usize, role: Role) -> &[T] {
        let cells = match role {
            Role::Cooperate => &self.cooperate,
            Role::Defect => &self.defect,
        };
        cells.get(x).map_or(&[], Vec::as_slice)
    }

    pub fn r_c(&self, x: usize) -> Option<T> {
        mean(self.samples(x, Role::Cooperate))
    }

    pub fn r_d(&self, x: usize) -> Option<T> {
        mean(self.samples(x, Role::Defect))
    }

    /// Group-average payoff `(x R_c(x) + (N - x) R_d(x)) / N`.
    pub fn r_avg(&self, x: usize) -> Option<T> {
        if self.parameterisation != Parameterisation::Total || x > self.n_agents {
            return None;
        }
        let n = self.n_agents;
        let c = if x == 0 { T::zero() } else { self.r_c(x)? * T::from_count(x) };
        let d = if x == n { T::zero() } else { self.r_d(x)? * T::from_count(n - x) };
        Some((c + d) / T::from_count(n))
    }

    /// Feasible cells that hold no samples.
    pub fn missing_cells(&self) -> Vec<(usize, Role)> {
        let mut out = Vec::new();
        for x in 0..=self.max_index() {
            for role in [Role::Cooperate, Role::Defect] {
                if self.is_feasible(x, role) && self.samples(x, role).is_empty() {
                    out.push((x, role));
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.missing_cells().is_empty()
    }

    fn need(&self, x: usize, role: Role) -> Result<T, EgtaError> {
        mean(self.samples(x, role)).ok_or(EgtaError::MissingCell { x, role })
    }

    fn require_total(&self) -> Result<(), EgtaError> {
        match self.parameterisation {
            Parameterisation::Total => Ok(()),
            p => Err(EgtaError::WrongParameterisation(p)),
        }
    }

    /// Applies `f` to every sample.
    pub fn map_samples<U: Real>(&self, f: impl Fn(T) -> U) -> MetaGameTable<U> {
        let map = |cells: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            cells.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect()
        };
        MetaGameTable {
            n_agents: self.n_agents,
            parameterisation: self.parameterisation,
            cooperate: map(&self.cooperate),
            defect: map(&self.defect),
        }
    }

    /// One row per index: means, group average and sample counts.
    pub fn to_csv(&self) -> String {
        let index = match self.parameterisation {
            Parameterisation::Total => "cooperators",
            Parameterisation::Other => "other_cooperators",
        };
        let mut out = format!("{index},r_c,r_d,r_avg,n_cooperate,n_defect\n");
        let cell = |v: Option<T>| v.map(|v| v.as_f64().to_string()).unwrap_or_default();
        for x in 0..=self.max_index() {
            out.push_str(&format!(
                "{x},{},{},{},{},{}\n",
                cell(self.r_c(x)),
                cell(self.r_d(x)),
                cell(self.r_avg(x)),
                self.samples(x, Role::Cooperate).len(),
                self.samples(x, Role::Defect).len(),
            ));
        }
        out
    }
}

/// Collects configuration samples into a total-cooperator table.
///
/// Cells nobody evaluated stay empty and show up in
/// [`MetaGameTable::missing_cells`].
pub fn build_meta_table<T: Real>(
    n_agents: usize,
    samples: &[ConfigSamples<T>],
) -> Result<MetaGameTable<T>, EgtaError> {
    if n_agents == 0 {
        return Err(EgtaError::Invalid("meta-game needs at least one agent".into()));
    }
    let mut table = MetaGameTable::new(n_agents);
    for s in samples {
        for (role, values) in [(Role::Cooperate, &s.cooperate), (Role::Defect, &s.defect)] {
            if values.is_empty() {
                continue;
            }
            if !table.is_feasible(s.x, role) {
                return Err(EgtaError::Invalid(format!(
                    "{role} samples at x = {} with {n_agents} agents",
                    s.x
                )));
            }
            let cell = match role {
                Role::Cooperate => &mut table.cooperate[s.x],
                Role::Defect => &mut table.defect[s.x],
            };
            cell.extend_from_slice(values);
        }
    }
    Ok(table)
}

/// Draws `x` cooperators and `n - x` defectors with replacement and shuffles
/// them over the valves.
pub fn sample_team<'a, T, R: Rng + ?Sized>(
    coop_pool: &[&'a Member<T>],
    defect_pool: &[&'a Member<T>],
    x: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Role, &'a Member<T>)>, EgtaError> {
    if x > n {
        return Err(EgtaError::Invalid(format!("{x} cooperators among {n} agents")));
    }
    if x > 0 && coop_pool.is_empty() {
        return Err(EgtaError::EmptyPool(Role::Cooperate));
    }
    if x < n && defect_pool.is_empty() {
        return Err(EgtaError::EmptyPool(Role::Defect));
    }
    let mut slots: Vec<(Role, &Member<T>)> = (0..n)
        .map(|i| {
            if i < x {
                (Role::Cooperate, coop_pool[rng.random_range(0..coop_pool.len())])
            } else {
                (Role::Defect, defect_pool[rng.random_range(0..defect_pool.len())])
            }
        })
        .collect();
    slots.shuffle(rng);
    Ok(slots)
}

/// Estimates payoffs with `x` cooperators by repeated random match-ups.
///
/// Each episode draws `x` members from the cooperator pool and `N - x` from
/// the defector pool with replacement, shuffles them over the valves, and
/// records every agent's undiscounted return under its role.
pub fn evaluate_configuration<T: FloatScalar, R: Rng + ?Sized>(
    coop_pool: &[&Member<T>],
    defect_pool: &[&Member<T>],
    x: usize,
    eval: &EvalConfig<T>,
    episodes: usize,
    rng: &mut R,
) -> Result<ConfigSamples<T>, EgtaError> {
    let n = eval.env.n_agents;
    if x > n {
        return Err(EgtaError::Invalid(format!("{x} cooperators among {n} agents")));
    }
    let mut out = ConfigSamples {
        x,
        cooperate: Vec::with_capacity(x * episodes),
        defect: Vec::with_capacity(n.saturating_sub(x) * episodes),
    };
    for _ in 0..episodes {
        let slots = sample_team(coop_pool, defect_pool, x, n, rng)?;
        let team: Vec<&Member<T>> = slots.iter().map(|s| s.1).collect();
        let seed = rng.random();
        let trace = play_episode(&team, &eval.env, eval.mode, seed, rng)?;
        for ((role, _), ret) in slots.iter().zip(eval.returns(&trace)) {
            match role {
                Role::Cooperate => out.cooperate.push(ret),
                Role::Defect => out.defect.push(ret),
            }
        }
    }
    Ok(out)
}

/// The three sequential-social-dilemma conditions of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdReport<T> {
    /// `R_c(N) - R_d(0)`: full cooperation beats full defection.
    pub c1: T,
    /// `R_c(N) - R_c(1)`: full cooperation beats being the lone cooperator.
    pub c2: T,
    /// `max_n R_d(n - 1) - R_c(n)`: some incentive to defect.
    pub c3: T,
    /// `R_d(n - 1) - R_c(n)` for each `n` in `c3_range`.
    pub c3_terms: Vec<T>,
    pub c3_range: (usize, usize),
    pub is_ssd: bool,
}

pub fn ssd_indicator<T: Real>(table: &MetaGameTable<T>) -> Result<SsdReport<T>, EgtaError> {
    table.require_total()?;
    let n = table.n_agents;
    let rc_n = table.need(n, Role::Cooperate)?;
    let c1 = rc_n - table.need(0, Role::Defect)?;
    let c2 = rc_n - table.need(1, Role::Cooperate)?;
    let c3_terms = (1..=n)
        .map(|k| Ok(table.need(k - 1, Role::Defect)? - table.need(k, Role::Cooperate)?))
        .collect::<Result<Vec<T>, EgtaError>>()?;
    let c3 = c3_terms[1..].iter().fold(c3_terms[0], |m, &v| m.max_of(v));
    let zero = T::zero();
    Ok(SsdReport {
        c1,
        c2,
        c3,
        c3_terms,
        c3_range: (1, n),
        is_ssd: c1 > zero && c2 > zero && c3 > zero,
    })
}

/// How much each role gains by keeping its strategy at `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMargins<T> {
    pub x: usize,
    /// `R_c(x) - R_d(x - 1)`; absent at `x = 0`.
    pub cooperator: Option<T>,
    /// `R_d(x) - R_c(x + 1)`; absent at `x = N`.
    pub defector: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet<T> {
    pub equilibria: Vec<usize>,
    pub margins: Vec<DeviationMargins<T>>,
}

/// Pure meta-game equilibria: counts where no single agent gains strictly by
/// switching role.
pub fn find_equilibria<T: Real>(table: &MetaGameTable<T>) -> Result<EquilibriumSet<T>, EgtaError> {
    table.require_total()?;
    if let Some(&(x, role)) = table.missing_cells().first() {
        return Err(EgtaError::MissingCell { x, role });
    }
    let n = table.n_agents;
    let mut set = EquilibriumSet {
        equilibria: Vec::new(),
        margins: Vec::with_capacity(n + 1),
    };
    for x in 0..=n {
        let cooperator = if x == 0 {
            None
        } else {
            Some(table.need(x, Role::Cooperate)? - table.need(x - 1, Role::Defect)?)
        };
        let defector = if x == n {
            None
        } else {
            Some(table.need(x, Role::Defect)? - table.need(x + 1, Role::Cooperate)?)
        };
        let stays = |m: Option<T>| m.is_none_or(|m| m >= T::zero());
        if stays(cooperator) && stays(defector) {
            set.equilibria.push(x);
        }
        set.margins.push(DeviationMargins { x, cooperator, defector });
    }
    Ok(set)
}

/// Re-indexes a total-cooperator table by the number of other cooperators.
pub fn reparameterise<T: Real>(table: &MetaGameTable<T>) -> Result<MetaGameTable<T>, EgtaError> {
    table.require_total()?;
    let n = table.n_agents;
    Ok(MetaGameTable {
        n_agents: n,
        parameterisation: Parameterisation::Other,
        cooperate: table.cooperate[1..=n].to_vec(),
        defect: table.defect[..n].to_vec(),
    })
}

/// Inverse of [`reparameterise`].
pub fn unreparameterise<T: Real>(table: &MetaGameTable<T>) -> Result<MetaGameTable<T>, EgtaError> {
    if table.parameterisation != Parameterisation::Other {
        return Err(EgtaError::WrongParameterisation(table.parameterisation));
    }
    let mut cooperate = vec![Vec::new()];
    cooperate.extend(table.cooperate.iter().cloned());
    let mut defect = table.defect.clone();
    defect.push(Vec::new());
    Ok(MetaGameTable {
        n_agents: table.n_agents,
        parameterisation: Parameterisation::Total,
        cooperate,
        defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egta::Scripted;
    use crate::env::{TopologyPreset, EnvConfig};
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i64>;

    fn q(v: f64) -> Q {
        Q::lit(v)
    }

    /// One sample per cell from explicit mean vectors (`None` = undefined).
    fn table_from(rc: &[Option<f64>], rd: &[Option<f64>]) -> MetaGameTable<Q> {
        let n = rc.len() - 1;
        let mut t = MetaGameTable::new(n);
        for x in 0..=n {
            t.cooperate[x] = rc[x].map(q).into_iter().collect();
            t.defect[x] = rd[x].map(q).into_iter().collect();
        }
        t
    }

    fn prisoners_table() -> MetaGameTable<Q> {
        table_from(
            &[None, Some(0.5), Some(1.0), Some(1.5), Some(2.0)],
            &[Some(1.0), Some(1.5), Some(2.0), Some(2.5), None],
        )
    }

    #[test]
    fn worked_dilemma() {
        let t = prisoners_table();
        let r = ssd_indicator(&t).unwrap();
        assert_eq!((r.c1, r.c2, r.c3), (q(1.0), q(1.5), q(0.5)));
        assert_eq!(r.c3_terms, vec![q(0.5); 4]);
        assert!(r.is_ssd);
        assert_eq!(find_equilibria(&t).unwrap().equilibria, vec![0]);
    }

    #[test]
    fn symmetric_table_is_not_a_dilemma() {
        let k = Some(0.7);
        let t = table_from(&[None, k, k, k, k], &[k, k, k, k, None]);
        let r = ssd_indicator(&t).unwrap();
        assert_eq!(r.c1, q(0.0));
        assert!(!r.is_ssd);
        // indifference everywhere: every count is an equilibrium
        assert_eq!(find_equilibria(&t).unwrap().equilibria, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dominant_cooperation() {
        let rc: Vec<Option<f64>> = (0..=4).map(|x| (x > 0).then_some(x as f64)).collect();
        let rd: Vec<Option<f64>> = (0..=4).map(|x| (x < 4).then_some(x as f64 - 1.0)).collect();
        let t = table_from(&rc, &rd);
        assert_eq!(find_equilibria(&t).unwrap().equilibria, vec![4]);
        let r = ssd_indicator(&t).unwrap();
        assert!(r.c3 < q(0.0));
        assert!(!r.is_ssd);
    }

    #[test]
    fn group_average() {
        let mut t = MetaGameTable::<Q>::new(4);
        t.cooperate[2] = vec![q(1.0)];
        t.defect[2] = vec![q(3.0)];
        assert_eq!(t.r_avg(2), Some(q(2.0)));
        assert_eq!(t.r_avg(1), None);
        t.cooperate[4] = vec![q(0.25), q(0.75)];
        assert_eq!(t.r_avg(4), Some(q(0.5)));
        assert_eq!(t.samples(4, Role::Cooperate).len(), 2);
    }

    #[test]
    fn build_from_samples() {
        let samples = vec![
            ConfigSamples { x: 0, cooperate: vec![], defect: vec![q(2.0), q(2.0)] },
            ConfigSamples { x: 1, cooperate: vec![q(1.0)], defect: vec![q(3.0)] },
            ConfigSamples { x: 1, cooperate: vec![q(2.0)], defect: vec![] },
        ];
        let t = build_meta_table(2, &samples).unwrap();
        assert_eq!(t.r_c(1), Some(q(1.5)));
        assert_eq!(t.r_d(0), Some(q(2.0)));
        assert_eq!(t.missing_cells(), vec![(2, Role::Cooperate)]);
        assert!(matches!(
            find_equilibria(&t),
            Err(EgtaError::MissingCell { x: 2, role: Role::Cooperate })
        ));
        assert!(ssd_indicator(&t).is_err());

        let bad = vec![ConfigSamples { x: 0, cooperate: vec![q(1.0)], defect: vec![] }];
        assert!(build_meta_table(2, &bad).is_err());
        let bad = vec![ConfigSamples { x: 2, cooperate: vec![], defect: vec![q(1.0)] }];
        assert!(build_meta_table(2, &bad).is_err());
    }

    #[test]
    fn reparameterisation_examples() {
        let t = prisoners_table();
        let o = reparameterise(&t).unwrap();
        assert_eq!(o.r_c(0), Some(q(0.5)));
        assert_eq!(o.r_d(0), Some(q(1.0)));
        assert_eq!(o.max_index(), 3);
        assert_eq!(unreparameterise(&o).unwrap(), t);
        assert!(reparameterise(&o).is_err());
        assert!(ssd_indicator(&o).is_err());
        assert!(unreparameterise(&t).is_err());
    }

    #[test]
    fn csv_rows() {
        let csv = prisoners_table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cooperators,r_c,r_d,r_avg,n_cooperate,n_defect");
        assert_eq!(lines[1], "0,,1,1,0,1");
        assert_eq!(lines[3], "2,1,2,1.5,1,1");
        assert_eq!(lines[5], "4,2,,2,1,0");
    }

    /// Two always-open and two alternating valves on K4, simulated directly.
    fn scripted_oracle(c: f64, alpha: f64) -> (f64, f64) {
        let (mut water, mut raw_alt, mut raw_open) = (0.5f64, 0.0, 0.0);
        for t in 0..100 {
            let alt_open = t % 2 == 0;
            let open = 2 + if alt_open { 2 } else { 0 };
            let demand = 0.025 * open as f64;
            if water < demand {
                let share = water / open as f64;
                raw_open += share;
                if alt_open {
                    raw_alt += share;
                }
                break;
            }
            water -= demand;
            raw_open += 0.025;
            if alt_open {
                raw_alt += 0.025;
            }
            water = (water + c).min(1.0);
        }
        // each agent's neighbours are the three others
        let coop = raw_alt + alpha * (raw_alt + 2.0 * raw_open);
        let defect = raw_open + alpha * (raw_open + 2.0 * raw_alt);
        (coop, defect)
    }

    #[test]
    fn scripted_pools_match_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alt = Member::<f64>::Scripted(Scripted::Alternate);
        let open = Member::<f64>::Scripted(Scripted::AlwaysOpen);
        for c in [0.055, 0.1] {
            let mut eval = EvalConfig::default();
            eval.env.regen_rate = c;
            let s = evaluate_configuration(&[&alt], &[&open], 2, &eval, 5, &mut rng).unwrap();
            let (coop, defect) = scripted_oracle(c, 0.1);
            assert_eq!((s.cooperate.len(), s.defect.len()), (10, 10));
            assert!(s.cooperate.iter().all(|v| (v - coop).abs() < 1e-12), "{c}");
            assert!(s.defect.iter().all(|v| (v - defect).abs() < 1e-12), "{c}");
        }
    }

    #[test]
    fn extreme_counts_use_one_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alt = Member::<f64>::Scripted(Scripted::Alternate);
        let open = Member::<f64>::Scripted(Scripted::AlwaysOpen);
        let eval = EvalConfig::default();
        let s = evaluate_configuration(&[], &[&open], 0, &eval, 3, &mut rng).unwrap();
        assert!(s.cooperate.is_empty() && s.defect.len() == 12);
        let s = evaluate_configuration(&[&alt], &[], 4, &eval, 3, &mut rng).unwrap();
        assert!(s.defect.is_empty() && s.cooperate.len() == 12);
        assert!(matches!(
            evaluate_configuration(&[], &[&open], 1, &eval, 3, &mut rng),
            Err(EgtaError::EmptyPool(Role::Cooperate))
        ));
        assert!(evaluate_configuration(&[&alt], &[&open], 5, &eval, 3, &mut rng).is_err());
    }

    #[test]
    fn positions_are_shuffled_on_a_line() {
        // on a line the end valves have one neighbour, so weighted returns
        // differ by position and shuffling shows up as spread
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alt = Member::<f64>::Scripted(Scripted::Alternate);
        let open = Member::<f64>::Scripted(Scripted::AlwaysOpen);
        let eval = EvalConfig {
            env: EnvConfig {
                topology: TopologyPreset::Line.build(4),
                regen_rate: 0.055,
                max_steps: 100,
                ..EnvConfig::default()
            },
            ..EvalConfig::default()
        };
        let s = evaluate_configuration(&[&alt], &[&open], 1, &eval, 40, &mut rng).unwrap();
        let mut distinct: Vec<f64> = s.cooperate.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert!(distinct.len() >= 2);
    }

    /// Enumerates every explicit strategy profile and every unilateral flip.
    fn brute_force_equilibria(t: &MetaGameTable<Q>) -> Vec<usize> {
        let n = t.n_agents;
        let payoff = |coop: bool, x: usize| {
            if coop { t.r_c(x).unwrap() } else { t.r_d(x).unwrap() }
        };
        let mut found = std::collections::BTreeSet::new();
        for profile in 0u32..(1 << n) {
            let x = profile.count_ones() as usize;
            let stable = (0..n).all(|i| {
                let coop = profile & (1 << i) != 0;
                let now = payoff(coop, x);
                let flipped = if coop { payoff(false, x - 1) } else { payoff(true, x + 1) };
                flipped <= now
            });
            if stable {
                found.insert(x);
            }
        }
        found.into_iter().collect()
    }

    fn arb_table() -> impl Strategy<Value = MetaGameTable<Q>> {
        (2usize..=6).prop_flat_map(|n| {
            let cell = prop::collection::vec(-6i64..=6, 1..4);
            (
                prop::collection::vec(cell.clone(), n),
                prop::collection::vec(cell, n),
            )
                .prop_map(move |(c, d)| {
                    let mut t = MetaGameTable::new(n);
                    for (x, vals) in c.into_iter().enumerate() {
                        t.cooperate[x + 1] = vals.into_iter().map(|v| Q::new(v, 2)).collect();
                    }
                    for (x, vals) in d.into_iter().enumerate() {
                        t.defect[x] = vals.into_iter().map(|v| Q::new(v, 2)).collect();
                    }
                    t
                })
        })
    }

    proptest! {
        #[test]
        fn equilibria_match_enumeration(t in arb_table()) {
            prop_assert_eq!(find_equilibria(&t).unwrap().equilibria, brute_force_equilibria(&t));
        }

        #[test]
        fn ssd_matches_direct_conditions(t in arb_table()) {
            let n = t.n_agents;
            let r = ssd_indicator(&t).unwrap();
            let c1 = t.r_c(n).unwrap() - t.r_d(0).unwrap();
            let c2 = t.r_c(n).unwrap() - t.r_c(1).unwrap();
            let c3 = (1..=n).map(|k| t.r_d(k - 1).unwrap() - t.r_c(k).unwrap()).max().unwrap();
            prop_assert_eq!((r.c1, r.c2, r.c3), (c1, c2, c3));
            let zero = Q::from_integer(0);
            prop_assert_eq!(r.is_ssd, c1 > zero && c2 > zero && c3 > zero);
        }

        #[test]
        fn scale_covariance(t in arb_table(), num in 1i64..20, den in 1i64..20) {
            let lambda = Q::new(num, den);
            let s = t.map_samples(|v| v * lambda);
            let (a, b) = (ssd_indicator(&t).unwrap(), ssd_indicator(&s).unwrap());
            prop_assert_eq!(b.c1, a.c1 * lambda);
            prop_assert_eq!(b.c2, a.c2 * lambda);
            prop_assert_eq!(b.c3, a.c3 * lambda);
            prop_assert_eq!(a.is_ssd, b.is_ssd);
            prop_assert_eq!(find_equilibria(&t).unwrap().equilibria, find_equilibria(&s).unwrap().equilibria);
            for x in 0..=t.n_agents {
                prop_assert_eq!(s.r_avg(x), t.r_avg(x).map(|v| v * lambda));
            }
        }

        #[test]
        fn group_average_lies_between_roles(t in arb_table()) {
            for x in 1..t.n_agents {
                let (c, d, avg) = (t.r_c(x).unwrap(), t.r_d(x).unwrap(), t.r_avg(x).unwrap());
                prop_assert!(c.min(d) <= avg && avg <= c.max(d));
            }
        }

        #[test]
        fn reparameterisation_round_trips(t in arb_table()) {
            let o = reparameterise(&t).unwrap();
            for k in 0..t.n_agents {
                prop_assert_eq!(o.r_c(k), t.r_c(k + 1));
                prop_assert_eq!(o.r_d(k), t.r_d(k));
            }
            prop_assert_eq!(unreparameterise(&o).unwrap(), t);
        }
    }
}
