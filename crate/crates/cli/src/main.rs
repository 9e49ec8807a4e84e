use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use equifold_cli::config::{load, ConfigError, Suite};
use equifold_cli::report::{write_jsonl, write_summary_csv};
use equifold_cli::towers::Tower;
use equifold_cli::{describe, exit_code, run, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "equifold", version, about = "Checks folding maps on finite Galois graph covers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run check suites and emit a JSON-lines report.
    Run {
        /// Path to a JSON config, or builtin:NAME.
        #[arg(long)]
        config: String,
        /// Restrict to these suites (repeatable); defaults to the config's list.
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; a summary CSV is written next to it. Stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock times (makes reports non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Print group orders, cover sizes and spectral data of a tower.
    Describe {
        #[arg(long)]
        config: String,
    },
}

fn setup_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("EQUIFOLD_THREADS") {
        let n: usize = v.parse().with_context(|| format!("EQUIFOLD_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn tower_from(source: &str) -> Result<Tower, ConfigError> {
    Tower::from_config(&load(source)?)
}

fn csv_path(out: &std::path::Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".csv");
    PathBuf::from(s)
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Describe { config } => {
            let tower = match tower_from(&config) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            print!("{}", describe(&tower));
            Ok(0)
        }
        Command::Run { config, suites, seed, out, timings } => {
            let tower = match tower_from(&config) {
                Ok(t) => t,
                Err(e) => return config_failure(e),
            };
            let selected = if suites.is_empty() {
                tower.config.suites.clone()
            } else {
                match suites.iter().map(|s| Suite::parse(s)).collect::<Result<Vec<_>, _>>() {
                    Ok(s) => s,
                    Err(e) => return config_failure(e),
                }
            };
            let seed = seed.unwrap_or(tower.config.seed);
            let records = run(&tower, &selected, seed, timings);
            match &out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
                    write_jsonl(&mut w, &tower.config, &selected, seed, &records)?;
                    w.flush()?;
                    let csv = csv_path(path);
                    let mut c = BufWriter::new(File::create(&csv).with_context(|| format!("creating {}", csv.display()))?);
                    write_summary_csv(&mut c, &records)?;
                    c.flush()?;
                }
                None => {
                    let mut w = io::stdout().lock();
                    write_jsonl(&mut w, &tower.config, &selected, seed, &records)?;
                    w.flush()?;
                }
            }
            let failed = records.iter().filter(|r| !r.pass).count();
            eprintln!("{} checks, {} failed", records.len(), failed);
            Ok(exit_code(&records))
        }
    }
}

fn config_failure(e: ConfigError) -> anyhow::Result<i32> {
    eprintln!("config error: {e}");
    Ok(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = setup_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
