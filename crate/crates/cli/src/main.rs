mod config;
mod expr;
mod run;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, Experiment};
use crate::run::RunError;

/// Neumann-sieve homogenization experiments from a TOML config.
#[derive(Parser)]
#[command(name = "sievelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `run.out` and `SIEVELAB_OUT`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the solve grid (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment and writes its artifacts.
    Run { config: PathBuf },
    /// Checks the config without solving and prints the resolved defaults.
    Validate { config: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(vec![format!("cannot read {}: {e}", path.display())]))?;
    config::resolve(config::parse(&text)?)
}

fn output_dir(cli: &Cli, x: &Experiment, config: &Path) -> PathBuf {
    if let Some(dir) = &cli.out {
        return dir.clone();
    }
    let root = std::env::var_os("SIEVELAB_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    match &x.out {
        Some(dir) => root.join(dir),
        None => root.join(config.file_stem().unwrap_or_default()).with_extension("out"),
    }
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn report_config(e: &ConfigError) -> ExitCode {
    for line in &e.0 {
        eprintln!("config error: {line}");
    }
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("config error: --jobs must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("the global pool is configured once");
    }
    match &cli.command {
        Command::Validate { config } => match load(config) {
            Ok(x) => {
                println!("ok");
                println!("mode = {}", x.mode.name());
                for (key, value) in &x.defaults {
                    println!("default {key} = {value}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => report_config(&e),
        },
        Command::Run { config } => {
            let x = match load(config) {
                Ok(x) => x,
                Err(e) => return report_config(&e),
            };
            let dir = output_dir(&cli, &x, config);
            if !cli.quiet {
                eprintln!("running {} into {}", x.mode.name(), dir.display());
            }
            let artifacts = match run::run(&x) {
                Ok(a) => a,
                Err(RunError::Config(m)) => {
                    eprintln!("config error: {m}");
                    return ExitCode::from(EXIT_CONFIG);
                }
                Err(RunError::Solver(m)) => {
                    eprintln!("solver failure: {m}");
                    return ExitCode::from(EXIT_SOLVER);
                }
            };
            let mut files = artifacts.files.clone();
            files.push(("manifest.json".into(), artifacts.manifest(&x)));
            if let Err(e) = write_all(&dir, &files) {
                eprintln!("config error: cannot write to {}: {e}", dir.display());
                return ExitCode::from(EXIT_CONFIG);
            }
            if !cli.quiet {
                for (name, _) in &files {
                    println!("{}", dir.join(name).display());
                }
            }
            match artifacts.solver_failure {
                Some(m) => {
                    eprintln!("solver failure: {m}");
                    ExitCode::from(EXIT_SOLVER)
                }
                None => ExitCode::SUCCESS,
            }
        }
    }
}
