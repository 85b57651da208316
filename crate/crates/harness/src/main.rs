use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vifbf_core::due::{fixture, write_network, NetworkFiles, FIXTURES};
use vifbf_harness::config::DEFAULT_GAP_EDGES;
use vifbf_harness::{exit_code, gap_report, parse_config, run, HarnessError, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(
    name = "vifbf",
    version,
    about = "Run variational inequality solver experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver of a config and write traces and a summary.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Bundled networks.
    Fixtures {
        #[command(subcommand)]
        command: FixtureCommand,
    },
    /// Print o/d gap histograms of the `*.gaps.csv` files in a directory.
    Gaps {
        dir: PathBuf,
        /// Comma-separated bin edges in hours.
        #[arg(long, value_delimiter = ',')]
        edges: Option<Vec<f64>>,
    },
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// List fixture names.
    List,
    /// Write a fixture as nodes.csv, links.csv, od.csv and paths.csv.
    Export { name: String, dir: PathBuf },
}

fn read_config(path: &Path) -> Result<vifbf_harness::ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn execute(command: Command) -> Result<i32, HarnessError> {
    match command {
        Command::Run { config: path } => {
            let config = read_config(&path)?;
            let base = config_dir(&path);
            let root =
                std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| base.clone(), PathBuf::from);
            let report = run(&config, &base, &root)?;
            for s in &report.solvers {
                println!(
                    "{}\t{}\t{} iterations\teps {:e}",
                    s.label,
                    s.status.as_str(),
                    s.iterations,
                    s.final_eps
                );
            }
            println!("summary: {}", report.summary_path.display());
            Ok(report.exit_code())
        }
        Command::Validate { config: path } => {
            let config = read_config(&path)?;
            println!("{}: ok ({} solvers)", path.display(), config.solvers.len());
            Ok(exit_code::SUCCESS)
        }
        Command::Fixtures {
            command: FixtureCommand::List,
        } => {
            for name in FIXTURES {
                println!("{name}");
            }
            Ok(exit_code::SUCCESS)
        }
        Command::Fixtures {
            command: FixtureCommand::Export { name, dir },
        } => {
            let (net, paths) = fixture(&name).map_err(HarnessError::Problem)?;
            std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
                path: dir.clone(),
                source,
            })?;
            let files = NetworkFiles {
                nodes: dir.join("nodes.csv"),
                links: dir.join("links.csv"),
                od: dir.join("od.csv"),
                paths: dir.join("paths.csv"),
            };
            write_network(&net, &paths, &files, &format!("fixture {name}"))
                .map_err(HarnessError::Problem)?;
            println!("wrote {} to {}", name, dir.display());
            Ok(exit_code::SUCCESS)
        }
        Command::Gaps { dir, edges } => {
            let edges = edges.unwrap_or_else(|| DEFAULT_GAP_EDGES.to_vec());
            if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
                eprintln!("error: edges must be at least two strictly increasing values");
                return Ok(exit_code::CONFIG);
            }
            println!("file,lower,upper,count");
            for (file, counts) in gap_report(&dir, &edges)? {
                for (i, c) in counts.iter().enumerate() {
                    println!("{file},{},{},{c}", edges[i], edges[i + 1]);
                }
            }
            Ok(exit_code::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
