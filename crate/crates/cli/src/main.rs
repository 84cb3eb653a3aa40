use clap::{Parser, Subcommand};
use polymer_cli::{run, summarize_dir, verdict_exit_code, Overrides, EXIT_CONFIG};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "polymer-lab", version, about = "Charged-polymer Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long, env = "POLYMER_LAB_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "POLYMER_LAB_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Judge the records in a result directory against a criterion.
    Summarize {
        dir: PathBuf,
        #[arg(long, default_value = "all")]
        criterion: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, seed, workers, out } => run(&config, &Overrides { seed, workers, out }),
        Command::Summarize { dir, criterion } => match summarize_dir(&dir, &criterion) {
            Ok(verdicts) => {
                for v in &verdicts {
                    println!("{}", serde_json::to_string(v).expect("serialisable"));
                }
                verdict_exit_code(&verdicts)
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_CONFIG
            }
        },
    };
    std::process::exit(code);
}
