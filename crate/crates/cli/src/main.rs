use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use giant_cavity_cli::{run, ExperimentConfig, Overrides};

/// Simulate, filter and write outputs for one experiment config.
#[derive(Debug, Parser)]
#[command(name = "cavity-filter", version)]
struct Args {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replaces `output.dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Replaces `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces `sim.trajectories`.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        cfg.apply(&Overrides {
            output_dir: args.output_dir.clone(),
            seed: args.seed,
            trajectories: args.trajectories,
        });
        run(&cfg).map(|out| (cfg, out))
    });
    match result {
        Ok((cfg, out)) => {
            if !args.quiet {
                for w in &out.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "wrote {} files to {} in {:.2} s",
                    out.files.len(),
                    cfg.output.dir.display(),
                    out.metadata["wall_time_s"].as_f64().unwrap_or(f64::NAN)
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
