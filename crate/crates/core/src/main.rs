use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proto_rmdp::harness::{
    parse_config, run_sweep, summarize, summarize_dir, write_csv, HarnessError, Overrides,
};

#[derive(Parser)]
#[command(name = "proto-rmdp", version, about = "Robust MDP learning with transition prototypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write its CSV files.
    Run {
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Algorithm tag; repeat for several.
        #[arg(long = "algo")]
        algos: Vec<String>,
        #[arg(long)]
        episodes: Option<String>,
        #[arg(long)]
        sims: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        prototypes: Option<String>,
        /// fixed-gap or random.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        gap: Option<String>,
        /// true or false.
        #[arg(long = "early-stop")]
        early_stop: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Print the summary of a finished sweep.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            config,
            algos,
            episodes,
            sims,
            seed,
            delta,
            prototypes,
            mode,
            gap,
            early_stop,
            out,
        } => {
            let text = match &config {
                Some(path) => std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })?,
                None => String::new(),
            };
            let mut overrides = Overrides::default();
            if !algos.is_empty() {
                overrides.set("algorithms", algos.join(","));
            }
            let flags = [
                ("episodes", episodes),
                ("sims", sims),
                ("seed", seed),
                ("delta", delta),
                ("prototypes", prototypes),
                ("mode", mode),
                ("gap", gap),
                ("early_stop", early_stop),
                ("out", out),
            ];
            for (key, value) in flags {
                if let Some(v) = value {
                    overrides.set(key, v);
                }
            }
            let config = parse_config(&text, &overrides)?;
            let result = run_sweep(&config)?;
            write_csv(&result, &config.out)?;
            print!("{}", summarize(&result));
        }
        Command::Summarize { input } => print!("{}", summarize_dir(&input)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help and --version are not
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
