use clap::{Parser, Subcommand};
use ks_gompertz::analysis::{estimate_gn, SearchBudget};
use ks_gompertz::config::SimConfig;
use ks_gompertz::harness::{exit_code, run_command, sweep, SweepConfig};
use ks_gompertz::mesh::Grid;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ks-gompertz", version, about = "2D chemotaxis simulator with Gompertz growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and persist its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exit with code 3 when the run is classified blow-up suspect.
        #[arg(long)]
        fail_on_blowup: bool,
    },
    /// Run a parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate the boundedness-theorem hypotheses for a configuration.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Override the estimated Gagliardo-Nirenberg constant.
        #[arg(long)]
        gn_constant: Option<f64>,
    },
    /// Estimate the Gagliardo-Nirenberg constant on a rectangle.
    EstimateGn {
        #[arg(long)]
        lx: f64,
        #[arg(long)]
        ly: f64,
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        /// Number of multistarts.
        #[arg(long, default_value_t = 12)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf) -> Result<SimConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (cfg, warnings) = SimConfig::parse(&text).map_err(|e| e.to_string())?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, fail_on_blowup } => match load_config(&config) {
            Ok(cfg) => run_command(&cfg, &out, fail_on_blowup),
            Err(e) => {
                eprintln!("{e}");
                exit_code::CONFIG_ERROR
            }
        },
        Command::Sweep { config, out, jobs } => {
            let run = || -> Result<i32, String> {
                let text = std::fs::read_to_string(&config)
                    .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
                let sc = SweepConfig::parse(&text).map_err(|e| e.to_string())?;
                sweep(&sc, &out, jobs).map_err(|e| e.to_string())
            };
            match run() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    exit_code::CONFIG_ERROR
                }
            }
        }
        Command::Check { config, gn_constant } => match load_config(&config) {
            Ok(cfg) => {
                let run = || -> ks_gompertz::Result<String> {
                    let spec = cfg.build_run_spec()?;
                    let mass0 = spec.u0.integrate();
                    let (c_gn, heuristic) = match gn_constant {
                        Some(c) => (c, false),
                        None => (
                            estimate_gn(spec.grid, SearchBudget::default(), cfg.seed)?.c_gn_lower,
                            true,
                        ),
                    };
                    let report = ks_gompertz::analysis::check_conditions(
                        &cfg.model_params(),
                        mass0,
                        spec.grid.area,
                        c_gn,
                    )?;
                    Ok(format!(
                        "m = {}\nc_gn_used = {}\nc_gn_source = \"{}\"\ncond_k = {}\nmargin_k = {}\n\
                         cond_chi_m = {}\nmargin_chi_m = {}\noverall = {}",
                        report.m,
                        report.c_gn_used,
                        if heuristic { "estimated-heuristic-lower-bound" } else { "user-supplied" },
                        report.cond_k,
                        report.margin_k,
                        report.cond_chi_m,
                        report.margin_chi_m,
                        report.overall
                    ))
                };
                match run() {
                    Ok(text) => {
                        println!("{text}");
                        exit_code::OK
                    }
                    Err(e) => {
                        eprintln!("{e}");
                        exit_code::CONFIG_ERROR
                    }
                }
            }
            Err(e) => {
                eprintln!("{e}");
                exit_code::CONFIG_ERROR
            }
        },
        Command::EstimateGn { lx, ly, nx, ny, budget, seed } => {
            let run = || -> ks_gompertz::Result<String> {
                let grid = Grid::new(lx, ly, nx, ny)?;
                let est = estimate_gn(
                    grid,
                    SearchBudget { multistarts: budget, ascent_iters: 300 },
                    seed,
                )?;
                Ok(format!(
                    "c_gn_lower = {}\nmultistarts = {}\nascent_iters = {}\nnote = \"lower bound; the theorem condition needs an upper-bound-valid constant\"",
                    est.c_gn_lower, est.budget.multistarts, est.budget.ascent_iters
                ))
            };
            match run() {
                Ok(text) => {
                    println!("{text}");
                    exit_code::OK
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_code::CONFIG_ERROR
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
