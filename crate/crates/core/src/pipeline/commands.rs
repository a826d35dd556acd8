use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::hash_json;
use super::{read_json, svg, write_atomic, write_json, ExperimentConfig, Layout, PipelineError, TeamFile};
use crate::agents::{train, AlgorithmKind};
use crate::egta::{
    bootstrap_estimate, build_meta_table, evaluate_configuration, find_equilibria, heatmap,
    measure_restraint, play_episode, reparameterise, sample_team, social_metrics, ssd_indicator,
    BootstrapSummary, EgtaError, EquilibriumSet, Heatmap, HeatmapEntry, Label, Member,
    MetaGameTable, PolicySnapshot, Role, SnapshotMeta, SocialMetrics, SsdReport,
};

const KEEP_FINAL_EPISODES: usize = 20;

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    kind: AlgorithmKind,
    rate: f64,
    alpha: f64,
    seed_index: usize,
}

/// Training cells in kind, rate, alpha, seed order.
fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &kind in &config.kinds {
        for &rate in &config.rates {
            for &alpha in &config.alphas {
                for seed_index in 0..config.seeds {
                    out.push(Cell { kind, rate, alpha, seed_index });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub trained: usize,
    pub skipped: usize,
}

fn train_cell(config: &ExperimentConfig, cell: Cell) -> Result<TeamFile, PipelineError> {
    let name = cell.kind.name();
    let seed = config.sub_seed(name, cell.rate, cell.alpha, cell.seed_index, "train");
    let tc = config.train_config(cell.kind, cell.rate, cell.alpha, seed);
    let config_hash = hash_json(&tc);
    let outcome = train(tc.clone())?;
    let tail = outcome.curves.len().saturating_sub(KEEP_FINAL_EPISODES);
    let snapshots = outcome
        .agents
        .into_iter()
        .enumerate()
        .map(|(position, agent)| {
            let meta = SnapshotMeta {
                kind: name.to_string(),
                regen_rate: cell.rate,
                alpha: cell.alpha,
                seed_index: cell.seed_index,
                seed,
                episodes: tc.episodes,
                config_hash: config_hash.clone(),
                position,
            };
            PolicySnapshot::new(meta, Member::Learned(agent))
        })
        .collect();
    Ok(TeamFile {
        config_hash,
        kind: cell.kind,
        rate: cell.rate,
        alpha: cell.alpha,
        seed_index: cell.seed_index,
        train: tc,
        final_episodes: outcome.curves[tail..].to_vec(),
        snapshots,
    })
}

/// Trains one team per grid cell; cells whose file already holds a team
/// trained with the same settings are skipped.
pub fn cmd_train(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<TrainSummary, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    write_json(&layout.config(), config)?;
    let results: Vec<Result<bool, PipelineError>> = pool(jobs)?.install(|| {
        cells(config)
            .into_par_iter()
            .map(|cell| {
                let path = layout.team(cell.kind, cell.rate, cell.alpha, cell.seed_index);
                let seed = config.sub_seed(cell.kind.name(), cell.rate, cell.alpha, cell.seed_index, "train");
                let expected = hash_json(&config.train_config(cell.kind, cell.rate, cell.alpha, seed));
                if path.exists() {
                    let existing: TeamFile = read_json(&path)?;
                    if existing.config_hash != expected {
                        return Err(PipelineError::HashMismatch {
                            path,
                            expected,
                            found: existing.config_hash,
                        });
                    }
                    return Ok(false);
                }
                write_json(&path, &train_cell(config, cell)?)?;
                Ok(true)
            })
            .collect()
    });
    let mut summary = TrainSummary { trained: 0, skipped: 0 };
    for r in results {
        if r? {
            summary.trained += 1;
        } else {
            summary.skipped += 1;
        }
    }
    Ok(summary)
}

/// Label counts for one (kind, alpha) pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCoverage {
    pub algorithm: String,
    pub alpha: f64,
    pub cooperate: usize,
    pub defect: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub evaluated: usize,
    pub missing: Vec<String>,
    pub coverage: Vec<CellCoverage>,
}

fn evaluate_team(config: &ExperimentConfig, mut team: TeamFile) -> Result<TeamFile, PipelineError> {
    let name = team.kind.name();
    let members: Vec<&Member<f64>> = team.snapshots.iter().map(|s| &s.policy).collect();
    let index = team.seed_index;
    let label_seed = config.sub_seed(name, team.rate, team.alpha, index, "label");
    let label_env = config.eval_config(config.eval.regen_rate);
    let labelled = measure_restraint(
        &members,
        &label_env,
        config.eval.restraint_episodes,
        &mut ChaCha8Rng::seed_from_u64(label_seed),
    )?;
    let rate_seed = config.sub_seed(name, team.rate, team.alpha, index, "heatmap");
    let at_rate = measure_restraint(
        &members,
        &config.eval_config(team.rate),
        config.eval.restraint_episodes,
        &mut ChaCha8Rng::seed_from_u64(rate_seed),
    )?;
    for ((s, r), rr) in team.snapshots.iter_mut().zip(labelled).zip(at_rate) {
        s.set_restraint(r, config.eval.defect_below, config.eval.cooperate_above)?;
        s.training_rate_restraint = Some(rr);
    }
    Ok(team)
}

fn load_zoo(config: &ExperimentConfig, layout: &Layout) -> Result<(Vec<TeamFile>, Vec<String>), PipelineError> {
    let mut teams = Vec::new();
    let mut missing = Vec::new();
    for cell in cells(config) {
        let path = layout.team(cell.kind, cell.rate, cell.alpha, cell.seed_index);
        if path.exists() {
            teams.push(read_json(&path)?);
        } else {
            missing.push(path.display().to_string());
        }
    }
    Ok((teams, missing))
}

fn heatmaps(config: &ExperimentConfig, teams: &[TeamFile]) -> Vec<Heatmap> {
    let entries: Vec<HeatmapEntry> = teams
        .iter()
        .flat_map(|t| {
            t.snapshots.iter().filter_map(move |s| {
                s.training_rate_restraint.map(|restraint| HeatmapEntry {
                    algorithm: t.kind.name().to_string(),
                    rate: t.rate,
                    alpha: t.alpha,
                    seed_index: t.seed_index,
                    restraint,
                })
            })
        })
        .collect();
    let algorithms: Vec<String> = config.kinds.iter().map(|k| k.name().to_string()).collect();
    config
        .alphas
        .iter()
        .map(|&a| heatmap(&entries, &algorithms, &config.rates, a))
        .collect()
}

fn coverage(config: &ExperimentConfig, teams: &[TeamFile]) -> Vec<CellCoverage> {
    let mut out = Vec::new();
    for &kind in &config.kinds {
        for &alpha in &config.alphas {
            let mut c = CellCoverage {
                algorithm: kind.name().to_string(),
                alpha,
                cooperate: 0,
                defect: 0,
                unlabeled: 0,
            };
            for s in teams
                .iter()
                .filter(|t| t.kind == kind && t.alpha == alpha)
                .flat_map(|t| &t.snapshots)
            {
                match s.label {
                    Some(Label::Cooperate) => c.cooperate += 1,
                    Some(Label::Defect) => c.defect += 1,
                    _ => c.unlabeled += 1,
                }
            }
            out.push(c);
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Measures and labels every trained policy, then writes the restraint
/// heatmaps. Missing teams are listed and skipped.
pub fn cmd_evaluate(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<EvaluateSummary, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let (teams, missing) = load_zoo(config, &layout)?;
    let teams: Vec<TeamFile> = pool(jobs)?.install(|| {
        teams
            .into_par_iter()
            .map(|t| evaluate_team(config, t))
            .collect::<Result<_, _>>()
    })?;
    for t in &teams {
        write_json(&layout.team(t.kind, t.rate, t.alpha, t.seed_index), t)?;
    }

    let dir = layout.evaluate();
    let mut labels = String::from("algorithm,rate,alpha,seed,position,restraint,training_rate_restraint,label\n");
    for t in &teams {
        for s in &t.snapshots {
            let label = match s.label {
                Some(Label::Cooperate) => "cooperate",
                Some(Label::Defect) => "defect",
                _ => "unlabeled",
            };
            labels.push_str(&format!(
                "{},{},{},{},{},{},{},{label}\n",
                t.kind.name(),
                t.rate,
                t.alpha,
                t.seed_index,
                s.meta.position,
                opt(s.restraint),
                opt(s.training_rate_restraint),
            ));
        }
    }
    write_atomic(&dir.join("labels.csv"), labels.as_bytes())?;

    let maps = heatmaps(config, &teams);
    let mut csv = String::new();
    for (i, m) in maps.iter().enumerate() {
        let body = m.to_csv();
        csv.push_str(if i == 0 { &body } else { body.split_once('\n').map_or("", |b| b.1) });
        let title = format!("mean restraint (%), alpha = {}", m.alpha);
        write_atomic(
            &dir.join(format!("heatmap_alpha-{}.svg", m.alpha)),
            svg::heatmap_svg(m, &title).as_bytes(),
        )?;
    }
    write_atomic(&dir.join("heatmap.csv"), csv.as_bytes())?;

    let summary = EvaluateSummary {
        evaluated: teams.len(),
        missing,
        coverage: coverage(config, &teams),
    };
    write_json(&dir.join("coverage.json"), &summary)?;
    Ok(summary)
}

/// Labelled pools of one kind and alpha, across rates and seeds.
fn pools(teams: &[TeamFile], kind: AlgorithmKind, alpha: f64) -> (Vec<&Member<f64>>, Vec<&Member<f64>>) {
    let mut coop = Vec::new();
    let mut defect = Vec::new();
    for s in teams
        .iter()
        .filter(|t| t.kind == kind && t.alpha == alpha)
        .flat_map(|t| &t.snapshots)
    {
        match s.label {
            Some(Label::Cooperate) => coop.push(&s.policy),
            Some(Label::Defect) => defect.push(&s.policy),
            _ => {}
        }
    }
    (coop, defect)
}

fn require_labels(teams: &[TeamFile]) -> Result<(), PipelineError> {
    if teams.iter().flat_map(|t| &t.snapshots).any(|s| s.label.is_none()) {
        return Err(PipelineError::Missing("policy labels; run evaluate first".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchellingSummary {
    pub algorithm: String,
    pub alpha: f64,
    pub coop_pool: usize,
    pub defect_pool: usize,
    /// Cooperator counts that could not be evaluated, with the reason.
    pub gaps: Vec<String>,
    pub is_complete: bool,
    pub is_ssd: Option<bool>,
    pub equilibria: Option<Vec<usize>>,
}

/// Estimates the meta-game of every (kind, alpha) and writes tables, dilemma
/// indicators, equilibria and diagrams in both parameterisations.
pub fn cmd_schelling(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<SchellingSummary>, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let (teams, _) = load_zoo(config, &layout)?;
    require_labels(&teams)?;
    let n = config.env.n_agents;
    let rate = config.eval.regen_rate;
    let workers = pool(jobs)?;
    let mut summaries = Vec::new();
    for &kind in &config.kinds {
        for &alpha in &config.alphas {
            let (coop, defect) = pools(&teams, kind, alpha);
            let eval = config.eval_config_with(rate, alpha);
            let results: Vec<Result<_, EgtaError>> = workers.install(|| {
                (0..=n)
                    .into_par_iter()
                    .map(|x| {
                        let seed = config.sub_seed(kind.name(), rate, alpha, x, "schelling");
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        evaluate_configuration(&coop, &defect, x, &eval, config.eval.episodes, &mut rng)
                    })
                    .collect()
            });
            let mut samples = Vec::new();
            let mut gaps = Vec::new();
            for (x, r) in results.into_iter().enumerate() {
                match r {
                    Ok(s) => samples.push(s),
                    Err(EgtaError::EmptyPool(role)) => gaps.push(format!("x = {x}: {role} pool empty")),
                    Err(e) => return Err(e.into()),
                }
            }
            let table = build_meta_table(n, &samples)?;
            summaries.push(write_schelling(&layout, kind, alpha, &table, coop.len(), defect.len(), gaps)?);
        }
    }
    Ok(summaries)
}

fn write_schelling(
    layout: &Layout,
    kind: AlgorithmKind,
    alpha: f64,
    table: &MetaGameTable<f64>,
    coop_pool: usize,
    defect_pool: usize,
    gaps: Vec<String>,
) -> Result<SchellingSummary, PipelineError> {
    let dir = layout.schelling(kind, alpha);
    let other = reparameterise(table)?;
    write_json(&dir.join("table_total.json"), table)?;
    write_json(&dir.join("table_other.json"), &other)?;
    write_atomic(&dir.join("table_total.csv"), table.to_csv().as_bytes())?;
    write_atomic(&dir.join("table_other.csv"), other.to_csv().as_bytes())?;
    let ssd = ssd_indicator(table).ok();
    let eq = find_equilibria(table).ok();
    write_json(&dir.join("ssd.json"), &ssd)?;
    write_json(&dir.join("equilibria.json"), &eq)?;
    let title = format!("{} alpha = {alpha}", kind.name());
    write_atomic(
        &dir.join("schelling_total.svg"),
        svg::schelling_svg(table, ssd.as_ref(), eq.as_ref(), &title).as_bytes(),
    )?;
    write_atomic(
        &dir.join("schelling_other.svg"),
        svg::schelling_svg(&other, ssd.as_ref(), eq.as_ref(), &title).as_bytes(),
    )?;
    let summary = SchellingSummary {
        algorithm: kind.name().to_string(),
        alpha,
        coop_pool,
        defect_pool,
        gaps,
        is_complete: table.is_complete(),
        is_ssd: ssd.as_ref().map(|r| r.is_ssd),
        equilibria: eq.map(|e| e.equilibria),
    };
    write_json(&dir.join("coverage.json"), &summary)?;
    Ok(summary)
}

/// The equilibrium the metrics are reported for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumChoice {
    pub x: usize,
    pub r_avg: f64,
    /// Other equilibria with the same group payoff.
    pub tied_with: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBootstrap {
    pub x: usize,
    pub role: Role,
    pub summary: BootstrapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub algorithm: String,
    pub alpha: f64,
    pub table: MetaGameTable<f64>,
    pub ssd: Option<SsdReport<f64>>,
    pub equilibria: Option<EquilibriumSet<f64>>,
    pub selected_equilibrium: Option<EquilibriumChoice>,
    pub all_cooperate: Option<SocialMetrics<f64>>,
    pub at_equilibrium: Option<SocialMetrics<f64>>,
    pub bootstrap: Vec<CellBootstrap>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config_hash: String,
    pub master_seed: u64,
    pub heatmaps: Vec<Heatmap>,
    pub reports: Vec<KindReport>,
}

/// Highest group payoff; ties go to the fewest cooperators.
fn select_equilibrium(table: &MetaGameTable<f64>, eq: &EquilibriumSet<f64>) -> Option<EquilibriumChoice> {
    let scored: Vec<(usize, f64)> = eq
        .equilibria
        .iter()
        .filter_map(|&x| table.r_avg(x).map(|v| (x, v)))
        .collect();
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut tied = scored.iter().filter(|s| s.1 == best).map(|s| s.0);
    let x = tied.next()?;
    Some(EquilibriumChoice {
        x,
        r_avg: best,
        tied_with: tied.collect(),
    })
}

fn metrics_at(
    config: &ExperimentConfig,
    coop: &[&Member<f64>],
    defect: &[&Member<f64>],
    x: usize,
    alpha: f64,
    seed: u64,
) -> Result<SocialMetrics<f64>, PipelineError> {
    let eval = config.eval_config_with(config.eval.regen_rate, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = Vec::with_capacity(config.eval.metrics_episodes);
    for _ in 0..config.eval.metrics_episodes {
        let slots = sample_team(coop, defect, x, config.env.n_agents, &mut rng)?;
        let team: Vec<&Member<f64>> = slots.iter().map(|s| s.1).collect();
        let episode_seed = rand::Rng::random(&mut rng);
        traces.push(play_episode(&team, &eval.env, eval.mode, episode_seed, &mut rng)?);
    }
    Ok(social_metrics(&traces, config.eval.max_steps)?)
}

fn report_kind(
    config: &ExperimentConfig,
    layout: &Layout,
    teams: &[TeamFile],
    kind: AlgorithmKind,
    alpha: f64,
) -> Result<KindReport, PipelineError> {
    let path = layout.schelling(kind, alpha).join("table_total.json");
    if !path.exists() {
        return Err(PipelineError::Missing(format!("{}; run schelling first", path.display())));
    }
    let table: MetaGameTable<f64> = read_json(&path)?;
    let name = kind.name();
    let rate = config.eval.regen_rate;
    let n = config.env.n_agents;
    let (coop, defect) = pools(teams, kind, alpha);
    let mut notes = Vec::new();

    let all_cooperate = if coop.is_empty() {
        notes.push("no cooperating policies: all-cooperate metrics unavailable".to_string());
        None
    } else {
        let seed = config.sub_seed(name, rate, alpha, n, "metrics-all-cooperate");
        Some(metrics_at(config, &coop, &defect, n, alpha, seed)?)
    };

    let ssd = ssd_indicator(&table).ok();
    let equilibria = find_equilibria(&table).ok();
    if equilibria.is_none() {
        notes.push(format!("incomplete table, missing cells {:?}", table.missing_cells()));
    }
    let selected = equilibria.as_ref().and_then(|e| select_equilibrium(&table, e));
    if let Some(s) = selected.as_ref().filter(|s| !s.tied_with.is_empty()) {
        notes.push(format!("equilibrium x = {} tied with {:?}; lowest x kept", s.x, s.tied_with));
    }
    let at_equilibrium = match &selected {
        Some(s) => {
            let seed = config.sub_seed(name, rate, alpha, s.x, "metrics-equilibrium");
            Some(metrics_at(config, &coop, &defect, s.x, alpha, seed)?)
        }
        None => None,
    };

    let mut bootstrap = Vec::new();
    for x in 0..=table.max_index() {
        for (r, role) in [Role::Cooperate, Role::Defect].into_iter().enumerate() {
            let samples = table.samples(x, role);
            if samples.is_empty() {
                continue;
            }
            let seed = config.sub_seed(name, rate, alpha, 2 * x + r, "bootstrap");
            let summary = bootstrap_estimate(
                samples,
                config.eval.bootstrap_resamples,
                config.eval.bootstrap_level,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            bootstrap.push(CellBootstrap { x, role, summary });
        }
    }

    Ok(KindReport {
        algorithm: name.to_string(),
        alpha,
        table,
        ssd,
        equilibria,
        selected_equilibrium: selected,
        all_cooperate,
        at_equilibrium,
        bootstrap,
        notes,
    })
}

/// Assembles heatmaps, meta-games, social metrics and bootstrap bounds into
/// one bundle.
pub fn cmd_report(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ReportBundle, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let (teams, _) = load_zoo(config, &layout)?;
    require_labels(&teams)?;
    let pairs: Vec<(AlgorithmKind, f64)> = config
        .kinds
        .iter()
        .flat_map(|&k| config.alphas.iter().map(move |&a| (k, a)))
        .collect();
    let reports: Vec<KindReport> = pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|&(k, a)| report_kind(config, &layout, &teams, k, a))
            .collect::<Result<_, _>>()
    })?;
    let bundle = ReportBundle {
        config_hash: config.hash(),
        master_seed: config.master_seed,
        heatmaps: heatmaps(config, &teams),
        reports,
    };

    let dir = layout.report();
    write_json(&dir.join("bundle.json"), &bundle)?;
    let mut metrics = String::from("algorithm,alpha,configuration,cooperators,utilitarian,equality,sustainability,episodes\n");
    let mut boot = String::from("algorithm,alpha,cooperators,role,n,mean,ci_low,ci_high,effective_size\n");
    for r in &bundle.reports {
        let rows = [
            ("all_cooperate", Some(config.env.n_agents), &r.all_cooperate),
            ("equilibrium", r.selected_equilibrium.as_ref().map(|s| s.x), &r.at_equilibrium),
        ];
        for (label, x, m) in rows {
            if let (Some(x), Some(m)) = (x, m) {
                metrics.push_str(&format!(
                    "{},{},{label},{x},{},{},{},{}\n",
                    r.algorithm, r.alpha, m.utilitarian, m.equality, m.sustainability, m.episodes
                ));
            }
        }
        for b in &r.bootstrap {
            let s = &b.summary;
            boot.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.algorithm, r.alpha, b.x, b.role, s.n, s.mean, s.ci_low, s.ci_high, s.effective_size
            ));
        }
    }
    write_atomic(&dir.join("metrics.csv"), metrics.as_bytes())?;
    write_atomic(&dir.join("bootstrap.csv"), boot.as_bytes())?;
    Ok(bundle)
}

/// Train, evaluate, schelling and report in sequence.
pub fn cmd_all(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ReportBundle, PipelineError> {
    cmd_train(config, out, jobs)?;
    cmd_evaluate(config, out, jobs)?;
    cmd_schelling(config, out, jobs)?;
    cmd_report(config, out, jobs)
}
