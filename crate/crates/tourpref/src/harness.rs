//! Monte-Carlo experiments over simulated users.
//!
//! Every (cell, trial) job draws its seeds from its own ChaCha stream of the
//! master seed, so results do not depend on how rayon schedules jobs. Within
//! a job, all strategies and baselines share the user, the scenario and the
//! loop and responder seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tourpref_core::querygen::QueryContext;
use tourpref_core::rewards::{sample_user, user_grid};
use tourpref_core::scenario::generate_random_scenario;
use tourpref_core::session::{
    baseline_tours, run_learning_loop, BaselineLevel, RatioOracle, SimulatedResponder, TraceRecord,
};
use tourpref_core::{
    DecaySet, Environment, GreedyPlanner, GroundTruthUser, LoopConfig, ScenarioConfig, Strategy,
    UserModel,
};

use crate::scenario_file::load_scenario;
use crate::trace::write_trace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    File { path: PathBuf },
    Generate { config: ScenarioConfig },
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource::Generate {
            config: ScenarioConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserCell {
    pub sigma: f64,
    pub decay_prior: Vec<f64>,
}

pub fn default_cells() -> Vec<UserCell> {
    user_grid()
        .into_iter()
        .map(|(sigma, decay_prior)| UserCell { sigma, decay_prior })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserKind {
    Deterministic,
    #[default]
    Boltzmann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSource,
    /// Use the generator config as given instead of drawing a fresh
    /// scenario per trial.
    pub fixed_scenario: bool,
    pub cells: Vec<UserCell>,
    pub beta: f64,
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub baselines: Vec<BaselineLevel>,
    /// Its `seed` is replaced per trial.
    pub loop_config: LoopConfig,
    pub decays: DecaySet,
    pub user: UserKind,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            scenario: ScenarioSource::default(),
            fixed_scenario: false,
            cells: default_cells(),
            beta: 20.0,
            trials: 25,
            strategies: Strategy::ALL.to_vec(),
            baselines: BaselineLevel::ALL.to_vec(),
            loop_config: LoopConfig::default(),
            decays: DecaySet::default(),
            user: UserKind::Boltzmann,
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.cells.is_empty() {
            bail!("user grid is empty");
        }
        if self.strategies.is_empty() && self.baselines.is_empty() {
            bail!("nothing to run: no strategies and no baselines");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bail!("beta must be positive and finite");
        }
        self.loop_config.validate()?;
        if let ScenarioSource::Generate { config } = &self.scenario {
            config.validate()?;
        }
        Ok(())
    }

    /// Reads a plan; a relative scenario path is taken relative to the plan.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut plan: ExperimentPlan =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let ScenarioSource::File { path: p } = &mut plan.scenario {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(plan)
    }
}

/// Per-iteration reward ratios of one strategy or baseline in one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub cell: usize,
    pub trial: usize,
    pub user: GroundTruthUser,
    pub series: Vec<Series>,
    pub traces: Vec<(Strategy, Vec<TraceRecord>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub sigma: f64,
    pub p: Vec<f64>,
    pub iteration: usize,
    pub mean_ratio: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

pub struct ExperimentOutput {
    pub table: ResultsTable,
    pub trials: Vec<TrialResult>,
}

struct TrialSeeds {
    scenario: u64,
    user: u64,
    session: u64,
    responder: u64,
}

fn trial_seeds(master: u64, job: u64) -> TrialSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(job);
    TrialSeeds {
        scenario: rng.next_u64(),
        user: rng.next_u64(),
        session: rng.next_u64(),
        responder: rng.next_u64(),
    }
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let shared_env = match &plan.scenario {
        ScenarioSource::File { path } => Some(load_scenario(path)?.1),
        ScenarioSource::Generate { config } if plan.fixed_scenario => {
            Some(generate_random_scenario(config)?)
        }
        ScenarioSource::Generate { .. } => None,
    };

    let jobs: Vec<(usize, usize)> = (0..plan.cells.len())
        .flat_map(|c| (0..plan.trials).map(move |t| (c, t)))
        .collect();
    let trials: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(cell, trial)| {
            let seeds = trial_seeds(plan.seed, (cell * plan.trials + trial) as u64);
            let env = match (&shared_env, &plan.scenario) {
                (Some(env), _) => env.clone(),
                (None, ScenarioSource::Generate { config }) => {
                    generate_random_scenario(&ScenarioConfig {
                        seed: seeds.scenario,
                        ..config.clone()
                    })?
                }
                (None, ScenarioSource::File { .. }) => unreachable!("file scenarios are loaded up front"),
            };
            run_trial(plan, &env, cell, trial, &seeds)
        })
        .collect::<Result<_>>()?;

    let table = aggregate(plan, &trials);
    Ok(ExperimentOutput { table, trials })
}

fn run_trial(
    plan: &ExperimentPlan,
    env: &Environment,
    cell: usize,
    trial: usize,
    seeds: &TrialSeeds,
) -> Result<TrialResult> {
    let c = &plan.cells[cell];
    let decays = &plan.decays;
    let planner = GreedyPlanner::new(decays.clone());
    let ctx = QueryContext { env, planner: &planner, decays };
    let user = sample_user(env, decays, c.sigma, &c.decay_prior, plan.beta, seeds.user)?;
    let oracle = RatioOracle::new(&ctx, &user)?;
    let model = match plan.user {
        UserKind::Deterministic => UserModel::deterministic(user.clone()),
        UserKind::Boltzmann => UserModel::boltzmann(user.clone()),
    };
    let k = plan.loop_config.max_iterations;

    let mut series = Vec::new();
    let mut traces = Vec::new();
    for &strategy in &plan.strategies {
        let config = LoopConfig {
            strategy,
            seed: seeds.session,
            ..plan.loop_config.clone()
        };
        let mut responder = SimulatedResponder::new(model.clone(), seeds.responder);
        let initial = ctx.plan(&tourpref_core::WeightVector::ones(ctx.dimension()))?.1;
        let (_, trace) = run_learning_loop(&ctx, &config, &mut responder, Some(&oracle))?;
        let mut ratios = vec![oracle.ratio(&initial)];
        ratios.extend(trace.iter().map(|r| r.reward_ratio.expect("oracle given")));
        let last = *ratios.last().expect("non-empty");
        ratios.resize(k + 1, last);
        series.push(Series { name: strategy.name().to_string(), ratios });
        traces.push((strategy, trace));
    }
    for &level in &plan.baselines {
        let tours = baseline_tours(env, &planner, &user, level);
        let r = oracle.ratio(&ctx.features(&tours)?);
        series.push(Series { name: level.name().to_string(), ratios: vec![r; k + 1] });
    }
    log::debug!("cell {cell} trial {trial} done");
    Ok(TrialResult { cell, trial, user, series, traces })
}

/// One simulated session, as driven by the `run` command.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleRun {
    pub config: LoopConfig,
    pub sigma: f64,
    pub decay_prior: Vec<f64>,
    pub beta: f64,
    pub user: UserKind,
    pub decays: DecaySet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleOutcome {
    pub user: GroundTruthUser,
    pub tours: tourpref_core::TourSet,
    pub trace: Vec<TraceRecord>,
    pub initial_ratio: f64,
    pub final_ratio: f64,
}

/// Samples a user from `config.seed` and runs the loop against it.
pub fn run_single(env: &Environment, run: &SingleRun) -> Result<SingleOutcome> {
    run.config.validate()?;
    let seeds = trial_seeds(run.config.seed, 0);
    let decays = &run.decays;
    let planner = GreedyPlanner::new(decays.clone());
    let ctx = QueryContext { env, planner: &planner, decays };
    let user = sample_user(env, decays, run.sigma, &run.decay_prior, run.beta, seeds.user)?;
    let oracle = RatioOracle::new(&ctx, &user)?;
    let model = match run.user {
        UserKind::Deterministic => UserModel::deterministic(user.clone()),
        UserKind::Boltzmann => UserModel::boltzmann(user.clone()),
    };
    let config = LoopConfig { seed: seeds.session, ..run.config.clone() };
    let initial = ctx.plan(&tourpref_core::WeightVector::ones(ctx.dimension()))?.1;
    let mut responder = SimulatedResponder::new(model, seeds.responder);
    let (tours, trace) = run_learning_loop(&ctx, &config, &mut responder, Some(&oracle))?;
    let final_ratio = oracle.ratio(&ctx.features(&tours)?);
    Ok(SingleOutcome {
        user,
        tours,
        trace,
        initial_ratio: oracle.ratio(&initial),
        final_ratio,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(plan: &ExperimentPlan, trials: &[TrialResult]) -> ResultsTable {
    let names: Vec<String> = plan
        .strategies
        .iter()
        .map(|s| s.name().to_string())
        .chain(plan.baselines.iter().map(|b| b.name().to_string()))
        .collect();
    let k = plan.loop_config.max_iterations;
    let mut rows = Vec::new();
    for (si, name) in names.iter().enumerate() {
        for (ci, cell) in plan.cells.iter().enumerate() {
            let in_cell: Vec<&TrialResult> = trials.iter().filter(|t| t.cell == ci).collect();
            for it in 0..=k {
                let xs: Vec<f64> = in_cell.iter().map(|t| t.series[si].ratios[it]).collect();
                let (mean_ratio, std) = mean_std(&xs);
                rows.push(ResultRow {
                    strategy: name.clone(),
                    sigma: cell.sigma,
                    p: cell.decay_prior.clone(),
                    iteration: it,
                    mean_ratio,
                    std,
                    trials: xs.len(),
                });
            }
        }
    }
    ResultsTable { rows }
}

impl ResultsTable {
    /// Trial-weighted mean over all cells at one iteration.
    pub fn overall_mean(&self, strategy: &str, iteration: usize) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for r in self.rows.iter().filter(|r| r.strategy == strategy && r.iteration == iteration) {
            sum += r.mean_ratio * r.trials as f64;
            n += r.trials;
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn final_iteration(&self) -> usize {
        self.rows.iter().map(|r| r.iteration).max().unwrap_or(0)
    }

    /// Series names in first-appearance order.
    pub fn series_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.strategy) {
                out.push(r.strategy.clone());
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    strategy: String,
    sigma: f64,
    p: String,
    iteration: usize,
    mean_ratio: f64,
    std: f64,
    trials: usize,
}

fn format_prior(p: &[f64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("/")
}

fn parse_prior(s: &str) -> Result<Vec<f64>> {
    s.split('/')
        .map(|x| x.parse::<f64>().with_context(|| format!("bad prior entry {x:?}")))
        .collect()
}

pub fn results_to_csv(table: &ResultsTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if table.rows.is_empty() {
        w.write_record(["strategy", "sigma", "p", "iteration", "mean_ratio", "std", "trials"])?;
    }
    for r in &table.rows {
        w.serialize(CsvRow {
            strategy: r.strategy.clone(),
            sigma: r.sigma,
            p: format_prior(&r.p),
            iteration: r.iteration,
            mean_ratio: r.mean_ratio,
            std: r.std,
            trials: r.trials,
        })?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn parse_results_csv(text: &str) -> Result<ResultsTable> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: CsvRow = rec?;
        rows.push(ResultRow {
            strategy: r.strategy,
            sigma: r.sigma,
            p: parse_prior(&r.p)?,
            iteration: r.iteration,
            mean_ratio: r.mean_ratio,
            std: r.std,
            trials: r.trials,
        });
    }
    Ok(ResultsTable { rows })
}

/// Final-iteration mean per series, best first.
pub fn summary(table: &ResultsTable) -> String {
    let k = table.final_iteration();
    let mut means: Vec<(String, f64)> = table
        .series_names()
        .into_iter()
        .filter_map(|n| table.overall_mean(&n, k).map(|m| (n, m)))
        .collect();
    means.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut out = format!("mean reward ratio at iteration {k}\n");
    for (name, m) in means {
        let _ = writeln!(out, "{name:<18} {m:.4}");
    }
    out
}

/// Writes `results.csv`, `summary.txt` and one trace file per trial and
/// strategy under `traces/`.
pub fn write_outputs(out_dir: &Path, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join("results.csv"), results_to_csv(&output.table)?)?;
    fs::write(out_dir.join("summary.txt"), summary(&output.table))?;
    let dir = out_dir.join("traces");
    for t in &output.trials {
        for (strategy, trace) in &t.traces {
            let name = format!("cell{:02}_trial{:03}_{}.jsonl", t.cell, t.trial, strategy.name());
            write_trace(&dir.join(name), trace)?;
        }
    }
    Ok(())
}
