//! Command-line front end: run experiment grids, replay transcripts,
//! classify structures, and format outcome reports.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pmsim::knowledge::{make_structure, StructureFile, StructureId};
use pmsim::runner;
use pmsim::separability::{self, SeparabilityVerdict};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "pmsim", version, about = "Prediction-market simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a grid file and run every market in it.
    Run {
        /// TOML grid file describing treatments and teams.
        #[arg(long)]
        grid: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        /// Output directory for trades.csv, markets.csv and transcripts/.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override the grid's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-check a transcript against the market maker and the
    /// constant-sum identity.
    Replay {
        /// Transcript files (line-delimited records).
        transcripts: Vec<PathBuf>,
    },
    /// Classify a security as separable or not under its structure.
    Separability {
        /// Preset name (easy|medium|hard|very_hard) or a structure TOML file.
        structure: String,
    },
    /// Format the per-structure, per-duration outcome table.
    Report {
        /// markets.csv produced by `run`.
        summary: PathBuf,
        /// Tab-separated instead of aligned text.
        #[arg(long)]
        tsv: bool,
        /// Recompute the crash flag at a different log-error threshold.
        #[arg(long)]
        crash_threshold: Option<f64>,
    },
    /// Write a preset structure to a catalog file.
    Catalog {
        /// Preset name (easy|medium|hard|very_hard).
        preset: String,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            grid,
            parallelism,
            out_dir,
            seed,
        } => {
            let text = fs::read_to_string(&grid)
                .with_context(|| format!("reading grid {}", grid.display()))?;
            let mut grid = runner::ExperimentGrid::from_toml(&text)?;
            if let Some(seed) = seed {
                grid.base_seed = seed;
            }
            println!("grid cardinality: {} markets", grid.cardinality());
            let plans = runner::expand_grid(&grid)?;
            let (scores, stats) = runner::run_experiment(&plans, parallelism, &out_dir)?;
            println!(
                "executed {} markets ({} skipped as already done, {} failed)",
                stats.executed,
                stats.skipped,
                stats.failed.len()
            );
            for (id, err) in &stats.failed {
                eprintln!("  failed {id}: {err}");
            }
            if !scores.is_empty() {
                print!("{}", runner::report(&scores, false));
            }
            if stats.failed.is_empty() {
                Ok(())
            } else {
                bail!("{} markets failed", stats.failed.len());
            }
        }
        Command::Replay { transcripts } => {
            if transcripts.is_empty() {
                bail!("no transcripts given");
            }
            let mut bad = 0;
            for path in &transcripts {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                match pmsim::engine::verify_transcript(&text) {
                    Ok(()) => println!("OK    {}", path.display()),
                    Err(e) => {
                        bad += 1;
                        println!("BAD   {}: {e}", path.display());
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} transcripts failed verification");
            }
            Ok(())
        }
        Command::Separability { structure } => {
            let s = runner::load_structure(&structure)?;
            match separability::classify(&s) {
                SeparabilityVerdict::Separable(certs) => {
                    println!("separable");
                    for (v, cert) in certs {
                        println!("  certificate at v = {v}:");
                        for (i, row) in cert.lambda.iter().enumerate() {
                            let cells: Vec<String> = s
                                .partition(i)
                                .cells()
                                .iter()
                                .zip(row)
                                .map(|(cell, l)| {
                                    let names: Vec<String> =
                                        cell.iter().map(|st| s.space.state_name(st)).collect();
                                    format!("{{{}}} -> {l:.4}", names.join(","))
                                })
                                .collect();
                            println!("    trader {}: {}", i + 1, cells.join(", "));
                        }
                    }
                }
                SeparabilityVerdict::NonSeparable(w) => {
                    println!("non-separable");
                    println!("  witness at v = {}:", w.v);
                    for (state, mass) in w.mu.iter().enumerate() {
                        if *mass > 1e-9 {
                            println!("    mu({}) = {mass:.6}", s.space.state_name(state));
                        }
                    }
                }
            }
            Ok(())
        }
        Command::Report {
            summary,
            tsv,
            crash_threshold,
        } => {
            let mut scores = runner::read_markets_csv(&summary)?;
            if let Some(threshold) = crash_threshold {
                for s in &mut scores {
                    s.crashed = s.log_error > threshold;
                }
            }
            print!("{}", runner::report(&scores, tsv));
            Ok(())
        }
        Command::Catalog { preset, out } => {
            let Some(id) = StructureId::from_label(&preset) else {
                bail!("unknown preset {preset:?} (expected easy|medium|hard|very_hard)");
            };
            let text = StructureFile::from_structure(&make_structure(id)).to_toml();
            match out {
                Some(path) => fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
