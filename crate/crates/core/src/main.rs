use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use resonances::cli::{self, CliError, Mode, RunConfig};
use resonances::sim::SimConfig;

#[derive(Parser)]
#[command(name = "resonances", version, about = "Scattering resonances of -Δ+V in 2D")]
struct Opts {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh level (overrides the config).
    #[arg(long)]
    level: Option<u32>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Probe-vector seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Permit level 5 meshes.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Search the rectangle for resonances at one mesh level.
    Solve(Common),
    /// Track resonances over levels 1..=level and report convergence orders.
    Converge(Common),
    /// Exact roots or |d_n| maps for a constant-potential disk.
    Oracle {
        #[command(subcommand)]
        what: OracleCmd,
    },
    /// Evaluate the spectral indicator of one disk.
    Indicator {
        #[command(flatten)]
        common: Common,
        /// Real part of the centre.
        #[arg(long, allow_hyphen_values = true)]
        re: f64,
        /// Imaginary part of the centre.
        #[arg(long, allow_hyphen_values = true)]
        im: f64,
        #[arg(long)]
        radius: f64,
        /// Use the built-in scalar problem F(z) = z - λ instead of a config.
        #[arg(long)]
        self_test: bool,
    },
    /// Assemble the operator and print sanity checks.
    AssembleCheck(Common),
}

#[derive(Subcommand)]
enum OracleCmd {
    Roots(Common),
    Map(Common),
}

fn load(common: &Common, mode: Mode) -> Result<RunConfig, CliError> {
    if let Some(w) = common.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global().ok();
    }
    let path = common.config.as_ref().ok_or_else(|| CliError::Config { line: None, msg: "--config is required".into() })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(l) = common.level {
        cfg.level = l;
    }
    if let Some(s) = common.seed {
        cfg.sim.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.mode = mode;
    cfg.validate()?;
    if cfg.level >= cli::MAX_LEVEL && !common.allow_large && matches!(mode, Mode::Solve | Mode::Converge | Mode::IndicatorProbe | Mode::AssembleCheck) {
        return Err(CliError::Config { line: None, msg: format!("level {} needs --allow-large", cfg.level) });
    }
    Ok(cfg)
}

fn run(opts: Opts) -> Result<(), CliError> {
    match opts.command {
        Command::Solve(c) => {
            let cfg = load(&c, Mode::Solve)?;
            let run = cli::run_solve(&cfg, cfg.level)?;
            for r in &run.outcome.results {
                println!("{:>12.6} {:>12.6}  residual {:.3e}", r.k.re, r.k.im, r.residual);
            }
            let manifest = cli::write_solve_artifacts(&cfg, &run, &cfg.out_dir)?;
            eprintln!("{} resonances, manifest {}", run.outcome.results.len(), manifest.display());
        }
        Command::Converge(c) => {
            let cfg = load(&c, Mode::Converge)?;
            let report = cli::run_converge(&cfg, &|level, msg| eprintln!("level {level}: {msg}"))?;
            print!("{}", report.to_csv());
            let manifest = cli::write_converge_artifacts(&cfg, &report, &cfg.out_dir)?;
            eprintln!("manifest {}", manifest.display());
        }
        Command::Oracle { what: OracleCmd::Roots(c) } => {
            let cfg = load(&c, Mode::OracleRoots)?;
            let (n, manifest) = cli::run_oracle_roots(&cfg, &cfg.out_dir)?;
            eprintln!("{n} roots, manifest {}", manifest.display());
        }
        Command::Oracle { what: OracleCmd::Map(c) } => {
            let cfg = load(&c, Mode::OracleMap)?;
            let manifest = cli::run_oracle_map(&cfg, &cfg.out_dir)?;
            eprintln!("manifest {}", manifest.display());
        }
        Command::Indicator { common, re, im, radius, self_test } => {
            let center = Complex64::new(re, im);
            if !(radius > 0.0) {
                return Err(CliError::Config { line: None, msg: "radius must be positive".into() });
            }
            let report = if self_test {
                cli::indicator_self_test(center, radius, &SimConfig::default())
                    .map_err(|source| CliError::Numerical { level: 0, source })?
            } else {
                let cfg = load(&common, Mode::IndicatorProbe)?;
                cli::run_indicator_probe(&cfg, cfg.level, center, radius)?
            };
            print!("{}", report.to_text());
        }
        Command::AssembleCheck(c) => {
            let cfg = load(&c, Mode::AssembleCheck)?;
            let mut ok = true;
            for (name, value, pass) in cli::run_assemble_check(&cfg, cfg.level)? {
                println!("{:<5} {name}: {value:.3e}", if pass { "ok" } else { "FAIL" });
                ok &= pass;
            }
            if !ok {
                return Err(CliError::Numerical {
                    level: cfg.level,
                    source: resonances::sim::SimError::Config("assembly checks failed".into()),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Opts::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
