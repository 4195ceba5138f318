//! Command-line entry point for the continual KGE toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ckge_core::runner::{self, PolicySelection};
use ckge_core::snapgen::{GrowthKind, GrowthScenario};

#[derive(Parser)]
#[command(
    name = "ckge",
    version,
    about = "Continual knowledge-graph-embedding toolkit"
)]
struct Cli {
    /// Rayon worker threads for evaluation (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override which candidate policies are exported
        /// (legacy|corrected|both).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Generate a growing snapshot sequence from a base triple TSV.
    Generate {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 5)]
        snapshots: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.05)]
        valid_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute and print the report tables for a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Check every analytic gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 20260808)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CKGE_LOG", "error"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("thread pool: {e}");
        }
    }

    match run(cli.command) {
        Ok(output) => {
            if !output.is_empty() {
                println!("{output}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> ckge_core::Result<String> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            policy,
        } => {
            // Overrides rewrite the parsed config; the runner consumes a
            // file so the manifest hashes exactly what was executed.
            let mut parsed = runner::ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                parsed.seeds = vec![seed];
            }
            if let Some(out) = out.clone() {
                parsed.output = out;
            }
            if let Some(policy) = &policy {
                parsed.policies = policy.parse::<PolicySelection>()?;
            }
            let effective_path = if seed.is_some() || out.is_some() || policy.is_some() {
                let tmp =
                    std::env::temp_dir().join(format!("ckge_config_{}.json", std::process::id()));
                std::fs::write(&tmp, serde_json::to_vec_pretty(&parsed)?)
                    .map_err(|e| ckge_core::Error::io(&tmp, e))?;
                tmp
            } else {
                config
            };
            let summary = runner::cmd_run(&effective_path)?;
            let mut text = String::new();
            for s in &summary.seeds {
                text.push_str(&format!(
                    "seed {}: MRR legacy {:.4} corrected {:.4} | BWT {} | CF {}\n",
                    s.seed,
                    s.final_mrr_legacy.unwrap_or(f64::NAN),
                    s.final_mrr_corrected.unwrap_or(f64::NAN),
                    s.bwt.map_or("n/a".into(), |v| format!("{v:.4}")),
                    s.cf.map_or("n/a".into(), |v| format!("{v:.4}")),
                ));
            }
            text.push_str(&format!("artifacts in {}", summary.out_dir.display()));
            Ok(text)
        }
        Command::Generate {
            base,
            kind,
            snapshots,
            seed,
            test_fraction,
            valid_fraction,
            out,
        } => {
            let scenario = GrowthScenario {
                kind: kind.parse::<GrowthKind>()?,
                n_snapshots: snapshots,
                seed,
                test_fraction,
                valid_fraction,
            };
            runner::cmd_generate(&base, &scenario, &out)?;
            Ok(format!("wrote {snapshots} snapshots to {}", out.display()))
        }
        Command::Report { run } => runner::cmd_report(&run),
        Command::Gradcheck { instances, seed } => runner::cmd_gradcheck(instances, seed),
    }
}
