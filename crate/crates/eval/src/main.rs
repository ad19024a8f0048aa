use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feedwarden_core::eval::{derive_metrics, table_header, table_row, Ablation, ConfusionCounts, ScoredCounts};
use feedwarden_core::ExecMode;
use feedwarden_eval::{fixture, run, write_report, write_tables, TableOptions};

#[derive(Parser)]
#[command(name = "eval", version, about = "Offline evaluation and telemetry tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjudicate a labelled dataset under one ablation and score it.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// full, remove_image, remove_ma, keyword_baseline or text_only_baseline.
        #[arg(long, default_value = "full")]
        ablation: Ablation,
        /// JSON report path; a rendered .txt table is written next to it.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Disable the thread pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Rebuild the layer, long-tail and governance tables from an event log.
    Tables {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        top: usize,
        #[arg(long, default_value_t = feedwarden_core::telemetry::DEFAULT_TAIL_THRESHOLD)]
        tail_threshold: u64,
        #[arg(long, default_value_t = 7)]
        days: u32,
    },
    /// Precision, recall and F1 from raw counts.
    Metrics {
        /// tp,fp,tn,fn
        #[arg(long)]
        counts: ConfusionCounts,
    },
    /// Regenerate the benchmark fixture and its golden reports.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), String> = match cli.command {
        Command::Run {
            dataset,
            config,
            ablation,
            report,
            sequential,
        } => {
            let mode = if sequential { ExecMode::Sequential } else { ExecMode::Parallel };
            run(&dataset, &config, ablation, mode)
                .and_then(|r| {
                    print!("{}", r.render());
                    match report {
                        Some(path) => write_report(&r, &path).map(|_| ()),
                        None => Ok(()),
                    }
                })
                .map_err(|e| e.to_string())
        }
        Command::Tables {
            log,
            out,
            top,
            tail_threshold,
            days,
        } => {
            let opts = TableOptions {
                top,
                tail_threshold,
                days,
            };
            write_tables(&log, &out, &opts)
                .map(|paths| {
                    for p in paths {
                        println!("{}", p.display());
                    }
                })
                .map_err(|e| e.to_string())
        }
        Command::Metrics { counts } => {
            let row = ScoredCounts {
                counts,
                metrics: derive_metrics(&counts),
            };
            print!("{}{}", table_header("counts"), table_row("input", &row));
            Ok(())
        }
        Command::Fixture { out } => fixture::write(&out).map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eval: {e}");
            ExitCode::FAILURE
        }
    }
}
