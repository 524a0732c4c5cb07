use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stormflow::scenario::{self, DemoKind};

#[derive(Parser)]
#[command(
    name = "stormflow",
    version,
    about = "Watershed runoff simulation with receding-horizon detention-pond control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: watershed, every strategy, indicators.
    Run { config: PathBuf },
    /// Simulate the watershed only and write the outlet hydrograph.
    Watershed { config: PathBuf },
    /// Run a single reservoir strategy against the shared hydrograph.
    Control {
        config: PathBuf,
        /// `mpc` or `static:<percent>`.
        #[arg(long)]
        strategy: String,
    },
    /// Recompute indicators from the traces in an output directory.
    Report { dir: PathBuf },
    /// Validate a scenario config, listing every problem found.
    Validate { config: PathBuf },
    /// Write a runnable synthetic scenario into a directory.
    InitDemo {
        dir: PathBuf,
        /// `two-storms` or `gauges:<days>`.
        #[arg(long, default_value = "two-storms")]
        kind: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> stormflow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let sc = scenario::load_scenario(&config)?;
            let outcome = scenario::run_scenario(&sc)?;
            println!(
                "watershed: rain {:.1} m3, outflow {:.1} m3, ledger closure {:.2e}",
                outcome.watershed.rain_m3,
                outcome.watershed.outflow_m3,
                outcome.watershed.relative_closure()
            );
            println!(
                "peak inflow to the pond: {:.3} m3/s",
                outcome.peak_inflow_m3s
            );
            for r in &outcome.reports {
                let detention = r
                    .avg_detention_time_s
                    .map(|s| format!("{:.1} h", s / 3600.0))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<12} peak out {:>8.3} m3/s  reduction {:>5.1}%  treated {:>10.1} m3  detention {}",
                    r.strategy, r.peak_outflow_m3s, r.peak_reduction_pct, r.treated_volume_m3, detention
                );
            }
            println!("outputs written to {}", outcome.out_dir.display());
            Ok(())
        }
        Command::Watershed { config } => {
            let sc = scenario::load_scenario(&config)?;
            let run = scenario::run_watershed(&sc)?;
            let peak = run
                .hydrograph
                .values()
                .iter()
                .fold(0.0f64, |a, &b| a.max(b));
            println!(
                "steps {}, peak {:.3} m3/s, rain {:.1} m3, outflow {:.1} m3, ET {:.1} m3, \
                 recharge {:.1} m3, ledger closure {:.2e}",
                run.n_steps,
                peak,
                run.totals.rain_m3,
                run.totals.outflow_m3,
                run.totals.et_m3,
                run.totals.recharge_m3,
                run.totals.relative_closure()
            );
            println!(
                "hydrograph written to {}",
                sc.out_dir.join("hydrograph.csv").display()
            );
            Ok(())
        }
        Command::Control { config, strategy } => {
            let sc = scenario::load_scenario(&config)?;
            let strategy =
                scenario::parse_strategy(&strategy).map_err(stormflow::Error::InvalidInput)?;
            // Reuse an existing hydrograph when the watershed has already run.
            let hydrograph_path = sc.out_dir.join("hydrograph.csv");
            let hydrograph = if hydrograph_path.exists() {
                scenario::read_hydrograph(&hydrograph_path, sc.start, sc.duration_s)?
            } else {
                scenario::run_watershed(&sc)?.hydrograph
            };
            let inflow = hydrograph.resample_uniform(0.0, sc.reservoir_dt, sc.duration_s)?;
            let mut provider = scenario::build_provider(&sc)?;
            let (rain, evap) = scenario::pond_forcing(&sc, &mut provider)?;
            let run = scenario::run_strategy(&sc, strategy, &inflow, &rain, &evap)?;
            let peak_out = run
                .reservoir_rows
                .iter()
                .map(|r| r.q_out)
                .fold(0.0f64, f64::max);
            println!(
                "{}: peak outflow {:.3} m3/s, released {:.1} m3, treated {:.1} m3",
                strategy.label(),
                peak_out,
                run.ledger.outflow_m3,
                run.treated_volume_m3
            );
            Ok(())
        }
        Command::Report { dir } => {
            let reports = scenario::report_from_dir(&dir)?;
            for r in &reports {
                println!(
                    "{:<12} peak in {:>8.3}  peak out {:>8.3}  reduction {:>5.1}%  treated {:>10.1} m3",
                    r.strategy,
                    r.peak_inflow_m3s,
                    r.peak_outflow_m3s,
                    r.peak_reduction_pct,
                    r.treated_volume_m3
                );
            }
            println!("report.csv rewritten in {}", dir.display());
            Ok(())
        }
        Command::Validate { config } => {
            scenario::load_scenario(&config)?;
            println!("configuration is valid");
            Ok(())
        }
        Command::InitDemo { dir, kind, seed } => {
            let kind = parse_demo_kind(&kind)?;
            let config = scenario::write_demo_scenario(&dir, kind, seed)?;
            println!(
                "demo scenario written; run it with `stormflow run {}`",
                config.display()
            );
            Ok(())
        }
    }
}

fn parse_demo_kind(raw: &str) -> stormflow::Result<DemoKind> {
    let lower = raw.to_ascii_lowercase();
    if lower == "two-storms" {
        return Ok(DemoKind::TwoStorms);
    }
    if let Some(days) = lower.strip_prefix("gauges:") {
        let days: u32 = days
            .parse()
            .map_err(|_| stormflow::Error::InvalidInput(format!("bad day count in `{raw}`")))?;
        return Ok(DemoKind::GaugeDays(days));
    }
    Err(stormflow::Error::InvalidInput(format!(
        "unknown demo kind `{raw}` (expected `two-storms` or `gauges:<days>`)"
    )))
}
