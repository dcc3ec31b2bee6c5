use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tourpref::harness::{run_experiment, run_single, summary, write_outputs, ExperimentPlan, SingleRun, UserKind};
use tourpref::scenario_file::{load_scenario, write_scenario, ScenarioFile};
use tourpref::service::{serve, AppState};
use tourpref::trace::write_trace;
use tourpref_core::scenario::generate_random_scenario;
use tourpref_core::{DecaySet, LoopConfig, ScenarioConfig, Strategy};

/// Learn multi-robot monitoring tours from pairwise choices.
#[derive(Parser)]
#[command(name = "tourpref", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario file.
    Gen {
        #[arg(long, default_value_t = 20)]
        regions: usize,
        #[arg(long, default_value_t = 4)]
        robots: usize,
        #[arg(long, default_value_t = 2.0)]
        budget_factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one session against a simulated user.
    Run {
        /// Scenario file; a random 20-region scenario from `--seed` if absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "max_regret")]
        strategy: String,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.8)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// `uniform` or three comma-separated probabilities.
        #[arg(long, default_value = "uniform")]
        decay_prior: String,
        #[arg(long, default_value_t = 20.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise-free user and termination check.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run an experiment plan and write CSV, summary and traces.
    Experiment {
        /// Plan file; the default synthetic plan if absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the plan's trials per cell.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Serve live sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Extra scenario files (`*.json`).
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Write finished traces here.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
}

fn parse_prior(s: &str, decays: &DecaySet) -> Result<Vec<f64>> {
    if s == "uniform" {
        return Ok(vec![1.0 / decays.len() as f64; decays.len()]);
    }
    let p = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad prior entry {x:?}")))
        .collect::<Result<Vec<_>>>()?;
    if p.len() != decays.len() {
        bail!("decay prior needs {} entries", decays.len());
    }
    Ok(p)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOURPREF_LOG", "info")).init();
    match Cli::parse().command {
        Command::Gen { regions, robots, budget_factor, seed, out } => {
            let config = ScenarioConfig {
                num_regions: regions,
                num_robots: robots,
                budget_factor,
                seed,
                ..ScenarioConfig::default()
            };
            let env = generate_random_scenario(&config)?;
            let file = ScenarioFile::from_environment(&env, Some(format!("random-{seed}")));
            match out {
                Some(path) => write_scenario(&path, &file)?,
                None => println!("{}", serde_json::to_string_pretty(&file)?),
            }
        }
        Command::Run {
            scenario,
            strategy,
            k,
            n,
            q,
            sigma,
            decay_prior,
            beta,
            seed,
            deterministic,
            trace_out,
        } => {
            let env = match scenario {
                Some(path) => load_scenario(&path)?.1,
                None => generate_random_scenario(&ScenarioConfig { seed, ..ScenarioConfig::default() })?,
            };
            let strategy = Strategy::from_name(&strategy).with_context(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
                format!("unknown strategy {strategy:?}; expected one of {}", names.join(", "))
            })?;
            let decays = DecaySet::default();
            let run = SingleRun {
                config: LoopConfig {
                    max_iterations: k,
                    n_regions_sampled: n,
                    static_cut_prob: q,
                    strategy,
                    deterministic_mode: deterministic,
                    seed,
                    ..LoopConfig::default()
                },
                sigma,
                decay_prior: parse_prior(&decay_prior, &decays)?,
                beta,
                user: if deterministic { UserKind::Deterministic } else { UserKind::Boltzmann },
                decays,
            };
            let outcome = run_single(&env, &run)?;
            if let Some(path) = trace_out {
                write_trace(&path, &outcome.trace)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "strategy": strategy.name(),
                    "queries": outcome.trace.len(),
                    "initial_ratio": outcome.initial_ratio,
                    "final_ratio": outcome.final_ratio,
                    "tours": outcome.tours,
                })
            );
        }
        Command::Experiment { plan, out_dir, trials } => {
            let mut plan = match plan {
                Some(path) => ExperimentPlan::load(&path)?,
                None => ExperimentPlan::default(),
            };
            if let Some(t) = trials {
                plan.trials = t;
            }
            let output = run_experiment(&plan)?;
            write_outputs(&out_dir, &output)?;
            print!("{}", summary(&output.table));
        }
        Command::Serve { port, scenarios, trace_dir } => {
            let state = AppState::new(scenarios, trace_dir)?;
            tokio::runtime::Runtime::new()?.block_on(serve(port, state))?;
        }
    }
    Ok(())
}
