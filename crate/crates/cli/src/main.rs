use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trust_cli::commands;
use trust_cli::gradcheck;
use trust_cli::{load_config, CliError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "trust", version, about = "Topological trajectory planning among moving obstacles")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One planning cycle from the configured ego state; prints the branch table.
    Plan,
    /// One closed-loop episode; writes its artifacts.
    Sim {
        /// Also write per-cycle wall-clock timings.
        #[arg(long)]
        timing: bool,
    },
    /// Monte-Carlo campaign over every configured variant.
    Mc {
        #[arg(long)]
        runs: Option<usize>,
        /// Also write wall-clock phase percentiles.
        #[arg(long)]
        timing: bool,
    },
    /// Re-emit artifacts from a stored episode log.
    Export {
        #[arg(long)]
        log: PathBuf,
    },
    /// Finite-difference check of the objective gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Print the effective configuration with every default filled in.
    Config,
}

fn config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Invalid("config: --config PATH is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn print_manifest(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Invalid("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("threads: {e}")))?;
    }
    match &cli.command {
        Command::Plan => {
            let out = commands::plan(&config(cli)?)?;
            print!("{}", commands::branch_table(&out));
        }
        Command::Sim { timing } => {
            let cfg = config(cli)?;
            let (log, manifest) = commands::sim(&cfg, &cfg.output_dir, *timing)?;
            print_manifest(&manifest);
            let m = log.metrics();
            println!(
                "outcome {} arrival {} ticks {}",
                m.outcome.name(),
                m.arrival_time.map_or("-".into(), |t| format!("{t:.1}")),
                m.ticks
            );
        }
        Command::Mc { runs, timing } => {
            let cfg = config(cli)?;
            let runs = runs.unwrap_or(cfg.mc.runs);
            let (stats, manifest) = commands::mc(&cfg, runs, cfg.seed, &cfg.output_dir, *timing)?;
            print_manifest(&manifest);
            for v in &stats.variants {
                println!("{:<26} success {:.3} ({} runs)", v.variant.name(), v.success_rate, v.n_runs);
            }
        }
        Command::Export { log } => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => config(cli)?.output_dir,
                (None, None) => PathBuf::from("out"),
            };
            print_manifest(&commands::export(log, &out)?);
        }
        Command::Gradcheck { instances } => {
            let reports = gradcheck::suite(*instances, cli.seed.unwrap_or(0));
            for r in &reports {
                println!(
                    "seed {:>3} n {} dim {:>3} max_rel_err {:.3e} {}",
                    r.seed,
                    r.segments,
                    r.dim,
                    r.max_rel_err,
                    if r.passed() { "ok" } else { "FAIL" }
                );
            }
            commands::gradcheck_verdict(&reports)?;
        }
        Command::Config => print!("{}", config(cli)?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
