use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use uavterra::error::Error;
use uavterra::harness::{parse_config, run, RunOptions, Scenario};

/// Run one simulation scenario and write its CSV outputs and manifest.
#[derive(Debug, Parser)]
#[command(name = "uavterra", version)]
struct Cli {
    /// fig2_track, fig4_losfit, fig6_coverage, fig7_relay, fig8_sweep or reconstruct_demo
    scenario: String,
    /// TOML experiment file; UAVTERRA_SECTION__KEY variables override it
    #[arg(long)]
    config: PathBuf,
    /// Master seed, replaces `master_seed` from the file
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Monte Carlo count for the scenario's main loop
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Resource { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = cli
        .scenario
        .parse::<Scenario>()
        .and_then(|scenario| {
            let mut config = parse_config(&cli.config)?;
            config.master_seed = cli.seed;
            Ok(RunOptions { scenario, config, out_dir: cli.out.clone(), trials: cli.trials, workers: cli.workers })
        })
        .and_then(|opts| run(&opts));
    match result {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}  {}", o.sha256, o.file);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("uavterra: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
