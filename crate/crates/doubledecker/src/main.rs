//! Command-line front end for the simulator harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use doubledecker::harness::{
    audit_transcript, emit_csv, emit_tradeoff_csv, run_scenario, run_tradeoff_report,
    write_transcript,
};
use doubledecker::scenario::Scenario;

#[derive(Parser)]
#[command(name = "doubledecker", about = "Backscatter link simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario sweep and write per-distance metrics as CSV.
    Run {
        /// Scenario config file (key = value format).
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario protocol (WIFI_B, WIFI_G, ZIGBEE, BLE).
        #[arg(long)]
        protocol: Option<String>,
        /// Override the scenario mode (MODE1, MODE2, MODE3).
        #[arg(long)]
        mode: Option<String>,
        /// Count tag bits of every delivered packet instead of gating on
        /// a correct productive decode.
        #[arg(long)]
        count_raw: bool,
        /// Also write a per-packet transcript for later auditing.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run the protocol under all three modes and report rate tradeoffs.
    Tradeoff {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recount a transcript's packets and BER and verify its summaries.
    Audit {
        #[arg(long)]
        transcript: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> doubledecker::Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            protocol,
            mode,
            count_raw,
            transcript,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(protocol) = protocol {
                s.protocol = protocol.parse()?;
            }
            if let Some(mode) = mode {
                s.mode = mode.parse()?;
            }
            s.validate()?;
            let output = run_scenario(&s, count_raw)?;
            emit_csv(&output.metrics, &out)?;
            if let Some(path) = transcript {
                write_transcript(&output, &path)?;
            }
            println!("wrote {} rows to {}", output.metrics.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Tradeoff { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let rows = run_tradeoff_report(&s)?;
            emit_tradeoff_csv(&rows, &out)?;
            for r in &rows {
                println!(
                    "{}: tag {:.3} kbps, productive {:.3} kbps (vs MODE1: {:.3}x / {:.3}x)",
                    r.mode,
                    r.tag_throughput_kbps,
                    r.productive_throughput_kbps,
                    r.tag_ratio_vs_mode1,
                    r.productive_ratio_vs_mode1
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { transcript } => {
            let text =
                std::fs::read_to_string(&transcript).map_err(|source| doubledecker::Error::Io {
                    path: transcript.display().to_string(),
                    source,
                })?;
            let audits = audit_transcript(&text)?;
            let mut all_ok = true;
            for a in &audits {
                if a.ok {
                    println!(
                        "distance {} m: OK ({} packets, tag BER {})",
                        a.distance_m, a.recounted_received, a.recounted_tag_ber
                    );
                } else {
                    all_ok = false;
                    println!(
                        "distance {} m: MISMATCH (stated {} packets / BER {}, recounted {} / {})",
                        a.distance_m,
                        a.stated_received,
                        a.stated_tag_ber,
                        a.recounted_received,
                        a.recounted_tag_ber
                    );
                }
            }
            if audits.is_empty() {
                eprintln!("transcript contains no points");
                return Ok(ExitCode::FAILURE);
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
