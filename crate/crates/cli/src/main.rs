//! `coexplore`: batch experiments and single missions from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use coexplore_core::experiment::{
    aggregate, format_report, prepare_worlds, run_batch_on, save_summary, save_worlds, BatchOptions, ExperimentPlan,
    ResultTable,
};
use coexplore_core::field::io::{load_field, load_interest_map};
use coexplore_core::field::{generate_voronoi_topic_field_seeded, sample_interest_map, sample_interest_profile, VoronoiParams};
use coexplore_core::mission::{compute_metrics, run_mission, MissionConfig, SimulatedOperator};
use coexplore_core::rng::seeded;
use coexplore_core::SelectorKind;

#[derive(Parser)]
#[command(name = "coexplore", version, about = "Co-robotic exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a plan file with every field at its default.
    Plan,
    /// Build the plan's topic fields and interest maps and write them out.
    GenerateMaps {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the plan's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every rollout of a plan and write results, summary and metadata.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the plan's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run rollouts one after another on the calling thread.
        #[arg(long)]
        serial: bool,
        /// Also write one JSONL trace per adaptive rollout under OUT/traces.
        #[arg(long)]
        traces: bool,
    },
    /// Group a results table by method and period.
    Aggregate {
        #[arg(long)]
        results: PathBuf,
        /// Summary path; `.jsonl` selects JSON lines, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the grouped means of a results table.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Run one mission and print its metrics as JSON.
    Mission {
        /// Topic field file; without it a Voronoi field is generated.
        #[arg(long, requires = "map")]
        field: Option<PathBuf>,
        #[arg(long, requires = "field")]
        map: Option<PathBuf>,
        /// Seed for the generated field, profile and interest map.
        #[arg(long, default_value_t = 0)]
        world_seed: u64,
        #[arg(long, default_value = "regret")]
        selector: SelectorKind,
        #[arg(long, default_value_t = 10)]
        period: usize,
        #[arg(long, default_value_t = 300)]
        t_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the mission trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

/// Written next to the results so a table can be traced back to its plan.
#[derive(Serialize)]
struct RunMetadata<'a> {
    tool_version: &'a str,
    plan_name: &'a str,
    master_seed: u64,
    periods: &'a [usize],
    selectors: &'a [SelectorKind],
    include_lawnmower: bool,
    trials: usize,
    rows: usize,
    seed_derivation: &'a str,
    mission: &'a MissionConfig,
}

const SEED_DERIVATION: &str =
    "first 8 bytes (little-endian) of SHA-256 over tagged (master_seed, map index, interest-map index, method, period, trial)";

fn load_plan(path: &Path, seed: Option<u64>) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(path).with_context(|| format!("loading plan {}", path.display()))?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    Ok(plan)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan => print!("{}", ExperimentPlan::default().to_toml_string()?),
        Command::GenerateMaps { plan, out, seed } => {
            let plan = load_plan(&plan, seed)?;
            let worlds = prepare_worlds(&plan)?;
            let written = save_worlds(&worlds, &out)?;
            eprintln!("wrote {} files to {}", written.len(), out.display());
        }
        Command::Run { plan, out, jobs, seed, serial, traces } => {
            if jobs == Some(0) {
                bail!("--jobs must be positive");
            }
            let plan = load_plan(&plan, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let worlds = prepare_worlds(&plan)?;
            eprintln!("running {} rollouts", plan.row_count());
            let options = BatchOptions { jobs, serial, trace_dir: traces.then(|| out.join("traces")) };
            let table = run_batch_on(&plan, &worlds, &options)?;
            table.save(out.join("results.csv"))?;
            let summary = aggregate(&table)?;
            save_summary(&summary, out.join("summary.csv"))?;
            write(&out.join("plan.toml"), &plan.to_toml_string()?)?;
            let meta = RunMetadata {
                tool_version: env!("CARGO_PKG_VERSION"),
                plan_name: &plan.name,
                master_seed: plan.seed,
                periods: &plan.periods,
                selectors: &plan.selectors,
                include_lawnmower: plan.include_lawnmower,
                trials: plan.trials,
                rows: table.rows.len(),
                seed_derivation: SEED_DERIVATION,
                mission: &plan.mission,
            };
            write(&out.join("metadata.json"), &serde_json::to_string_pretty(&meta)?)?;
            print!("{}", format_report(&summary));
        }
        Command::Aggregate { results, out } => {
            let table = ResultTable::load(&results)?;
            save_summary(&aggregate(&table)?, &out)?;
        }
        Command::Report { results } => {
            let table = ResultTable::load(&results)?;
            print!("{}", format_report(&aggregate(&table)?));
        }
        Command::Mission { field, map, world_seed, selector, period, t_max, seed, trace } => {
            let (field, map) = match (field, map) {
                (Some(f), Some(m)) => (load_field(&f)?, load_interest_map(&m)?),
                _ => {
                    let field = generate_voronoi_topic_field_seeded(&VoronoiParams::default(), world_seed)?;
                    let mut rng = seeded(world_seed.wrapping_add(1));
                    let profile = sample_interest_profile(field.topics(), &mut rng)?;
                    let map = sample_interest_map(&field, &profile, &mut rng)?;
                    (field, map)
                }
            };
            let config = MissionConfig { selector, labeling_period: period, t_max, seed, ..Default::default() };
            let result = run_mission(&config, &field, &map, &mut SimulatedOperator::new(&map))?;
            if let Some(path) = trace {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                result.write_jsonl(std::io::BufWriter::new(file))?;
            }
            println!("{}", serde_json::to_string(&compute_metrics(&result, &field, &map)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
