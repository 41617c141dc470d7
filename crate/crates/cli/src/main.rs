//! Command-line front end for the `risim` simulator.
//!
//! Exit codes: 0 success, 1 fixture mismatch, 2 usage error, 3 invalid
//! configuration, 4 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risim::fixtures::{bless_fixtures, verify_fixtures, FixtureError};
use risim::scenario::{run_to_dir, Command, ModeName, ScenarioConfig, ScenarioError};

const EXIT_MISMATCH: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "risim", version, about = "Ray-based RIS coverage simulator")]
struct Cli {
    /// Study configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Carrier frequency override (Hz).
    #[arg(long, global = true)]
    freq: Option<f64>,
    /// Transmit power override (dBm).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pt: Option<f64>,
    /// RIS mode override: none, fixed, ms_specific.
    #[arg(long, global = true)]
    mode: Option<ModeName>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Received power over the target area, its CDF and summary statistics.
    Coverage,
    /// Power delay profile at one MS position.
    Pdp {
        /// MS position `x,y,z` in meters.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        ms: [f64; 3],
    },
    /// Angular sweep of the panel's scattering pattern and its lobes.
    Chamber,
    /// Far-field distance check of every RIS link.
    Ffcheck,
    /// Rerun the golden fixtures and compare output digests.
    VerifyFixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
        /// Regenerate goldens and digests instead of checking them.
        #[arg(long)]
        bless: bool,
    },
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|v| format!("expected x,y,z, got {} values", v.len()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Sub::VerifyFixtures { ref dir, bless } => fixtures(dir, bless),
        Sub::Coverage => scenario(&cli, Command::Coverage),
        Sub::Pdp { ms } => scenario(&cli, Command::Pdp { ms }),
        Sub::Chamber => scenario(&cli, Command::Chamber),
        Sub::Ffcheck => scenario(&cli, Command::FfCheck),
    }
}

fn scenario(cli: &Cli, command: Command) -> ExitCode {
    let Some(path) = &cli.config else {
        eprintln!("error: --config is required for `{}`", command.name());
        return ExitCode::from(EXIT_CONFIG);
    };
    match run_scenario(cli, path, &command) {
        Ok(out_dir) => {
            println!(
                "{} outputs written to {}",
                command.name(),
                out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

fn run_scenario(cli: &Cli, path: &Path, command: &Command) -> Result<PathBuf, ScenarioError> {
    let mut cfg = match ScenarioConfig::load(path) {
        Err(ScenarioError::Io { path, source }) => {
            return Err(ScenarioError::Config {
                field: "--config".into(),
                reason: format!("{}: {source}", path.display()),
            })
        }
        other => other?,
    };
    if let Some(f) = cli.freq {
        cfg.frequency_hz = f;
    }
    if let Some(p) = cli.pt {
        cfg.pt_dbm = p;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    let out_dir = match &cli.out {
        Some(dir) => dir.clone(),
        None => path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&cfg.output_dir),
    };
    if let Some(d) = &cli.out {
        cfg.output_dir = d.display().to_string();
    }
    run_to_dir(&cfg, command, cli.workers, &out_dir)?;
    Ok(out_dir)
}

fn fixtures(dir: &Path, bless: bool) -> ExitCode {
    if bless {
        return match bless_fixtures(dir) {
            Ok(n) => {
                println!("blessed {n} fixture(s)");
                ExitCode::SUCCESS
            }
            Err(e) => fixture_error(e),
        };
    }
    match verify_fixtures(dir) {
        Ok(reports) => {
            let mut ok = true;
            for r in &reports {
                if r.passed() {
                    println!("PASS {}", r.name);
                } else {
                    ok = false;
                    println!("FAIL {}", r.name);
                    for p in &r.problems {
                        println!("  {p}");
                    }
                }
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_MISMATCH)
            }
        }
        Err(e) => fixture_error(e),
    }
}

fn fixture_error(e: FixtureError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        FixtureError::Run { source, .. } if source.is_config() => ExitCode::from(EXIT_CONFIG),
        FixtureError::NoFixtures(_) | FixtureError::Invalid { .. } => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_RUNTIME),
    }
}
