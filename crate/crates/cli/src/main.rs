//! Command-line front end: run campaigns, replay logged cases, re-render
//! reports from event logs.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use thermofuzz::campaign::{replay, rerender_report, run_campaign, CampaignConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "thermofuzz",
    about = "Thermal-aware differential fuzzing for compute-graph runtimes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign from a JSON config file.
    ///
    /// The output directory can be overridden with the THERMOFUZZ_OUT
    /// environment variable.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reproduce one logged case (e.g. s3-i42) from a campaign directory
    /// and print the reproduced verdict and degraded-side log.
    Replay {
        #[arg(long)]
        case: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render report.json from the event log of a campaign directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let config = CampaignConfig::from_json(&text)?;
            let out_dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| config.out_dir.clone());
            let report = run_campaign(&config)?;
            println!("campaign finished; artifacts in {}", out_dir.display());
            println!(
                "totals: {} unique crashes, {} unique NaNs, {} heavy inconsistencies",
                report.totals.crashes_unique,
                report.totals.nans_unique,
                report.totals.heavy_inconsistencies
            );
            for s in &report.scenarios {
                println!(
                    "  scenario {} ({}): {} faults / {} iterations",
                    s.id, s.name, s.fault_verdicts, s.iterations
                );
            }
            println!(
                "coverage: {:.1}% operators, {:.1}% temperature-sensitive",
                100.0 * report.coverage.operator,
                100.0 * report.coverage.temperature_sensitive
            );
            Ok(())
        }
        Command::Replay { case, out } => {
            let result = replay(&case, &out)?;
            println!("case {case} reproduced");
            println!("  reference: {:?}", result.reference.status);
            println!(
                "  degraded:  {:?} ({} fault events, {:.3}s sim)",
                result.degraded.status,
                result.degraded.fault_events(),
                result.degraded.sim_wall_time
            );
            println!("  verdict:   {}", result.verdict.tag());
            if let Some(mae) = result.verdict.mae() {
                println!("  mae:       {mae}");
            }
            for line in &result.degraded.log {
                println!("  {}", serde_json::to_string(line)?);
            }
            Ok(())
        }
        Command::Report { out } => {
            let report = rerender_report(&out)?;
            let path = out.join("report.json");
            std::fs::write(&path, report.to_json())
                .with_context(|| format!("writing {}", path.display()))?;
            println!("{}", report.to_json());
            Ok(())
        }
    }
}
