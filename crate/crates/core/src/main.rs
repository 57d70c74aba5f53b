use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use itemqc::commands::{self, QueueFilter, ReportOptions};
use itemqc::data::CleaningRules;
use itemqc::learners::ParamGrid;
use itemqc::pipeline::{Variant, VariantConfig};
use itemqc::psychometrics::PsychometricsConfig;
use itemqc::scorer::TrainOptions;
use itemqc::store::{Store, STORE_ENV};
use itemqc::{Error, Result};

#[derive(Parser)]
#[command(name = "itemqc", version, about = "Triage exam-item comments with item statistics and tree ensembles")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = STORE_ENV)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load items.csv, responses.csv, candidates.csv and comments.jsonl from a directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Exclude candidates whose total response time is below this many seconds.
        #[arg(long, default_value_t = 0.0)]
        min_total_time: f64,
        /// Exclude candidates with fewer answered items.
        #[arg(long, default_value_t = 0)]
        min_items: u32,
        #[arg(long = "exclude")]
        exclude: Vec<String>,
    },
    /// Generate the synthetic fixture.
    Synth {
        /// Operational items.
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Item statistics, calibration, fit, drift and flags.
    Stats {
        /// JSON file with a psychometrics configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the reference comment scorer on the current labels.
    TrainScorer {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20, 40])]
        epoch_grid: Vec<usize>,
    },
    /// Score every comment, or import probabilities from a CSV with comment_id,probability.
    Score {
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Run one model variant.
    Run {
        #[arg(long)]
        variant: Variant,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// JSON file with a parameter grid replacing the default one.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Write report tables for the latest run of each variant.
    Eval {
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Record a review decision.
    Label {
        #[arg(long)]
        comment: String,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        label: u8,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
    /// Print the review queue of a variant.
    Queue {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        item: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Print a hash over every file in the store.
    Hash,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable output"));
}

fn read_json_file<T: for<'de> serde::Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<()> {
    let root = cli
        .store
        .ok_or_else(|| Error::InvalidArgument(format!("no store given; pass --store or set {STORE_ENV}")))?;
    let store = Store::open(root)?;
    match cli.command {
        Command::Ingest {
            input,
            min_total_time,
            min_items,
            exclude,
        } => {
            let rules = CleaningRules {
                min_total_time_sec: min_total_time,
                min_items_answered: min_items,
                excluded_candidate_ids: exclude.into_iter().collect(),
            };
            print_json(&commands::ingest(&store, &input, &rules)?);
        }
        Command::Synth { items, persons, seed } => {
            let spec = commands::synth_spec(items, persons);
            print_json(&commands::synth(&store, &spec, seed)?);
        }
        Command::Stats { config } => {
            let config: PsychometricsConfig = match config {
                Some(path) => read_json_file(&path)?,
                None => PsychometricsConfig::default(),
            };
            let report = commands::stats(&store, &config)?;
            print_json(&serde_json::json!({
                "items": report.items.len(),
                "flagged_items": report.flags.values().filter(|f| !f.is_empty()).count(),
                "rasch_converged": report.calibration.converged,
                "warnings": report.warnings,
            }));
        }
        Command::TrainScorer { seed, epoch_grid } => {
            let options = TrainOptions {
                epoch_grid,
                ..TrainOptions::default()
            };
            let model = commands::train_scorer(&store, seed, &options)?;
            print_json(&model.metadata);
        }
        Command::Score { import } => {
            let n = commands::score(&store, import.as_deref())?;
            print_json(&serde_json::json!({ "scored": n }));
        }
        Command::Run {
            variant,
            seed,
            grid,
            folds,
        } => {
            let grid: Option<ParamGrid> = grid.as_ref().map(read_json_file).transpose()?;
            let config = VariantConfig {
                variant,
                seed,
                grid,
                folds,
            };
            let manifest = commands::run(&store, &config, &ReportOptions::default())?;
            print_json(&serde_json::json!({
                "run_id": manifest.run_id,
                "flagged": manifest.n_flagged,
                "full": manifest.full,
                "test": manifest.test,
            }));
        }
        Command::Eval { bins, min_count } => {
            let bundle = commands::eval(&store, &ReportOptions { bins, min_count })?;
            print!("{}", bundle.table3.render());
            print!("{}", bundle.table4.render());
            print!("{}", bundle.table5.render());
        }
        Command::Label {
            comment,
            label,
            reviewer,
        } => {
            let (event, appended) = commands::label(&store, &comment, label, &reviewer)?;
            print_json(&serde_json::json!({ "event": event, "appended": appended }));
        }
        Command::Queue { variant, item, limit } => {
            let entries = commands::queue(
                &store,
                &QueueFilter {
                    variant,
                    item_id: item,
                    limit,
                },
            )?;
            for e in entries {
                print_json(&e);
            }
        }
        Command::Hash => println!("{}", store.content_hash()?),
        Command::Serve { port, host } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime.block_on(itemqc::service::serve(store, SocketAddr::new(host, port), |addr| {
                use std::io::Write;
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
            }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
