use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use condensim::harness::commands::{self, ReplayKind};
use condensim::harness::ExperimentConfig;
use condensim::Result;

#[derive(Parser)]
#[command(name = "condensim", version, about = "Mean-field condensing particle systems")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; overrides `[run] seed`. For `replay-seed`, the path seed.
    #[arg(long, global = true)]
    seed: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ips,
    Tagged,
    Couple,
    Limit,
}

#[derive(Subcommand)]
enum Command {
    /// Untagged ensemble: fk.csv, moments.csv.
    SimulateIps,
    /// Tagged ensemble: w_hist.csv, w_moments.csv.
    SimulateTagged,
    /// Mean-field equations: f.csv, p.csv, rates.csv, moments.csv.
    SolveMeanfield,
    /// Limit chain: what_hist.csv, what_moments.csv.
    SimulateLimit {
        /// Directory holding a previous solve-meanfield output.
        #[arg(long)]
        meanfield: Option<PathBuf>,
    },
    /// Coupled tagged and dominating processes: domination.csv, coupled_moments.csv.
    Couple,
    /// Exact laws on the [oracle] lattice: exact_fk.csv, exact_w.csv.
    Oracle {
        /// Observation times, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// Errors against the mean-field limit over the configured sizes.
    Convergence,
    /// Limit chain mean against m2 / rho.
    Coarsening,
    /// Re-runs one path from the seed printed by a failed ensemble.
    ReplaySeed {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Lattice size; defaults to the first configured size.
        #[arg(long)]
        sites: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let path = cli
        .config
        .ok_or_else(|| condensim::Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_file(&path)?;
    let replay = matches!(cli.command, Command::ReplaySeed { .. });
    let seed = cli.seed.as_deref().map(commands::parse_seed).transpose()?;
    if let (Some(s), false) = (seed, replay) {
        cfg = cfg.with_seed(s);
    }
    let out = cli
        .out
        .or_else(|| cfg.output.dir.as_ref().map(|d| cfg.resolve(d)))
        .unwrap_or_else(|| Path::new("out").to_path_buf());
    let summary = match cli.command {
        Command::SimulateIps => commands::simulate_ips(&cfg, &out)?,
        Command::SimulateTagged => commands::simulate_tagged(&cfg, &out)?,
        Command::SolveMeanfield => commands::solve(&cfg, &out)?,
        Command::SimulateLimit { meanfield } => commands::simulate_limit(&cfg, meanfield.as_deref(), &out)?,
        Command::Couple => commands::couple(&cfg, &out)?,
        Command::Oracle { t } => commands::exact(&cfg, &t, &out)?,
        Command::Convergence => commands::convergence(&cfg, &out)?,
        Command::Coarsening => commands::coarsening(&cfg, &out)?,
        Command::ReplaySeed { kind, sites } => {
            let s = seed.ok_or_else(|| condensim::Error::Config("replay-seed needs --seed".into()))?;
            let kind = match kind {
                Kind::Ips => ReplayKind::Ips,
                Kind::Tagged => ReplayKind::Tagged,
                Kind::Couple => ReplayKind::Couple,
                Kind::Limit => ReplayKind::Limit,
            };
            commands::replay(&cfg, kind, s, sites, &out)?
        }
    };
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let condensim::Error::Path { seed, .. } = &e {
                eprintln!("replay with: condensim replay-seed --seed {seed:#x} --kind <ips|tagged|couple|limit>");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
