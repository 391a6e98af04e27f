use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fcopt::experiments::registry;
use fcopt::families::family_registry;
use fcopt::problems::problem_registry;
use fcopt::{effective_threads, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "fcopt", version, about = "Multiplier extraction and estimate-constant experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML file of settings, applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// JSON report path; CSV tables are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the penalty pipeline on a named problem or a problem file.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep estimate constants over an operator family.
    Diagnose {
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the worked examples.
    Example {
        name: String,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        mesh: Option<usize>,
        #[arg(long = "T", value_name = "T")]
        horizon: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// List experiments, problems, and families.
    List,
}

fn base_config(common: &Common) -> Result<ExperimentConfig, RunError> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn finish(mut cfg: ExperimentConfig, common: Common) -> Result<ExperimentConfig, RunError> {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if common.out.is_some() {
        cfg.out = common.out;
    }
    for pair in &common.overrides {
        cfg.set_pair(pair)?;
    }
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let env = std::env::var("FCOPT_THREADS").ok();
    cfg.threads = Some(effective_threads(cfg.threads, env.as_deref(), available));
    Ok(cfg)
}

fn build_config(command: Command) -> Result<ExperimentConfig, RunError> {
    match command {
        Command::Solve {
            problem,
            eps0,
            steps,
            dim,
            parallel,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            cfg.experiment = "solve".into();
            cfg.problem = Some(problem);
            cfg.eps0 = eps0.unwrap_or(cfg.eps0);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.parallel |= parallel;
            finish(cfg, common)
        }
        Command::Diagnose { family, levels, common } => {
            let mut cfg = base_config(&common)?;
            cfg.experiment = "diagnose".into();
            cfg.family = Some(family);
            if levels.is_some() {
                cfg.levels = levels;
            }
            finish(cfg, common)
        }
        Command::Example {
            name,
            depth,
            modes,
            mesh,
            horizon,
            levels,
            eps0,
            steps,
            dim,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            cfg.experiment = name;
            cfg.depth = depth.or(cfg.depth);
            cfg.modes = modes.or(cfg.modes);
            cfg.mesh = mesh.or(cfg.mesh);
            cfg.horizon = horizon.or(cfg.horizon);
            cfg.levels = levels.or(cfg.levels);
            cfg.eps0 = eps0.unwrap_or(cfg.eps0);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.dim = dim.unwrap_or(cfg.dim);
            finish(cfg, common)
        }
        Command::List => unreachable!("handled before configuration"),
    }
}

fn print_list() {
    println!("experiments:");
    for e in registry() {
        println!("  {:<16} {}", e.name(), e.summary());
    }
    println!("problems (solve --problem):");
    for p in problem_registry() {
        println!("  {:<16} {}", p.name(), p.summary());
    }
    println!("families (diagnose --family):");
    for f in family_registry() {
        println!("  {:<16} {}", f.name(), f.summary());
    }
}

fn execute(command: Command) -> anyhow::Result<bool> {
    let cfg = build_config(command)?;
    let report = fcopt::run(&cfg).with_context(|| format!("experiment '{}' failed", cfg.experiment))?;
    for c in &report.criteria {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(out) = &cfg.out {
        println!("report written to {}", out.display());
    } else if report.criteria.is_empty() {
        println!("{}", report.to_json()?);
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::List = cli.command {
        print_list();
        return ExitCode::SUCCESS;
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<RunError>()).map_or(3, RunError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
