use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use irs_mec_flow::channel::draw_realization;
use irs_mec_flow::harness::{run_campaign, ExperimentPlan, Scheme, SweepVar};
use irs_mec_flow::optimizer::{Baseline, Freedom, Problem};
use irs_mec_flow::scenario::{build_geometry, load_config, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "irs-mec-flow",
    version,
    about = "Throughput optimization for IRS-assisted multi-hop MEC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign and export the result table.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Hops,
    Bandwidth,
    Iterations,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Jppbo,
    Baseline1,
    Baseline2,
    Baseline3,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a scenario key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed (defaults to the scenario's `rng_seed`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    sweep: Option<SweepArg>,
    /// Sweep values: hop counts, bandwidths in Hz, or iteration checkpoints.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Comma-separated scheme names.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Run a single scheme; shorthand for `--schemes`.
    #[arg(long, value_enum, conflicts_with = "schemes")]
    algorithm: Option<Algorithm>,
    /// Monte-Carlo runs per sweep point.
    #[arg(long)]
    runs: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Full-size surfaces and 1000 runs.
    #[arg(long)]
    paper_scale: bool,
    /// Outer iterations per run.
    #[arg(long)]
    iters: Option<usize>,
    /// Cap shrink factor after a rejected step.
    #[arg(long)]
    tau: Option<f64>,
    /// Initial step caps as `theta,mu,eta`.
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<f64>>,
    /// Write the channel draw of the first run as CSV.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
    /// Write the optimized task graph of the first run as an edge list.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Record per-run wall time (makes the output non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    // exit code 2 is reserved for campaigns with failed runs
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::FAILURE
            }
        },
    }
}

fn scenario(args: &RunArgs) -> Result<ScenarioConfig, String> {
    let mut overrides = BTreeMap::new();
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("`--set {kv}`: expected KEY=VALUE"))?;
        overrides.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut cfg = load_config(args.config.as_deref(), &overrides).map_err(|e| e.to_string())?;
    if args.paper_scale {
        cfg = cfg.full_scale();
    }
    if let Some(n) = args.iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(t) = args.tau {
        cfg.optimizer.shrink = t;
    }
    if let Some(c) = &args.caps {
        if c.len() != 3 {
            return Err(format!(
                "`--caps` takes 3 values (theta,mu,eta), got {}",
                c.len()
            ));
        }
        cfg.optimizer.theta_cap = c[0];
        cfg.optimizer.mu_cap = c[1];
        cfg.optimizer.eta_cap = c[2];
    }
    if let Some(s) = args.seed {
        cfg.rng_seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn schemes(args: &RunArgs) -> Result<Vec<Scheme>, String> {
    if let Some(a) = args.algorithm {
        return Ok(vec![match a {
            Algorithm::Jppbo => Scheme::ProposedSingle,
            Algorithm::Baseline1 => Scheme::Baseline1,
            Algorithm::Baseline2 => Scheme::Baseline2,
            Algorithm::Baseline3 => Scheme::Baseline3,
        }]);
    }
    if args.schemes.is_empty() {
        return Ok(Scheme::ALL.to_vec());
    }
    args.schemes.iter().map(|s| s.parse()).collect()
}

fn dump(args: &RunArgs, cfg: &ScenarioConfig, plan: &ExperimentPlan) -> Result<(), String> {
    if args.dump_channels.is_none() && args.dump_graph.is_none() {
        return Ok(());
    }
    let seed = plan.seed(0, 0);
    let real = draw_realization(
        &build_geometry(cfg),
        cfg,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    if let Some(path) = &args.dump_channels {
        let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        real.write_csv(BufWriter::new(f))
            .map_err(|e| e.to_string())?;
    }
    if let Some(path) = &args.dump_graph {
        let scheme = plan.schemes[0];
        let traj = scheme.run(cfg, seed).map_err(|e| e.to_string())?;
        let freedom = match scheme {
            Scheme::Baseline1 => Baseline::NoIrs.freedom(),
            Scheme::Baseline2 => Baseline::RelayWithIrs.freedom(),
            Scheme::Baseline3 => Baseline::PlainRelay.freedom(),
            _ => Freedom::ALL,
        };
        let real = match scheme {
            Scheme::ProposedMulti => {
                let multi = cfg.with_panels(cfg.multi_panel_layout());
                draw_realization(
                    &build_geometry(&multi),
                    &multi,
                    &mut ChaCha8Rng::seed_from_u64(seed),
                )
            }
            Scheme::Baseline1 | Scheme::Baseline3 => real.without_reflections(),
            _ => real,
        };
        let graph = Problem::new(&real, cfg, freedom)
            .graph(&traj.final_decision)
            .map_err(|e| e.to_string())?;
        let f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        graph
            .write_edges_csv(BufWriter::new(f))
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<bool, String> {
    let cfg = scenario(&args)?;
    let mut plan = ExperimentPlan::new(
        schemes(&args)?,
        args.runs.unwrap_or(cfg.monte_carlo_runs),
        cfg.rng_seed,
    );
    plan.timing = args.timing;
    if let Some(s) = args.sweep {
        let var = match s {
            SweepArg::Hops => SweepVar::Hops,
            SweepArg::Bandwidth => SweepVar::Bandwidth,
            SweepArg::Iterations => SweepVar::Iterations,
        };
        plan = plan.with_sweep(var, args.values.clone());
    } else if !args.values.is_empty() {
        return Err("`--values` needs `--sweep`".into());
    }
    dump(&args, &cfg, &plan)?;
    let table = run_campaign(&plan, &cfg).map_err(|e| e.to_string())?;
    for e in &table.errors {
        eprintln!("run failed: {} seed {}: {}", e.scheme, e.seed, e.message);
    }
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match args.format {
        Format::Csv => table.write_csv(&mut sink),
        Format::Json => table.write_json(&mut sink, &cfg, &plan),
    }
    .map_err(|e| e.to_string())?;
    sink.flush().map_err(|e| e.to_string())?;
    Ok(!table.has_errors())
}
