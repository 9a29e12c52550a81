use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use pwdrec::harness::checkpoint::{load_checkpoint, save_checkpoint};
use pwdrec::harness::io::read_file;
use pwdrec::harness::report::write_experiment_artifacts;
use pwdrec::harness::{
    evaluate_model, generate_synthetic, grid_by_name, load_manifests, load_record, preprocess_record, read_dataset,
    run_ablation, run_experiment, write_dataset, Checkpoint, ExperimentConfig, GridSpec, HarnessError,
    SyntheticSpec, GRID_NAMES,
};

#[derive(Parser)]
#[command(name = "pwdrec", version, about = "Doppler envelope reconstruction from fetal ECG")]
struct Cli {
    /// Overrides the seed of every config file read by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic aligned AECG and Doppler records.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate, filter and align every record of a manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one configuration and write the checkpoint with its artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split of a preprocessed dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a named table grid (table1..table6) or a grid file.
    Ablate {
        #[arg(long)]
        grid: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Base experiment settings for a named grid.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    serde_json::from_slice(&read_file(path)?)
        .map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))
}

fn print<T: Serialize>(value: &T) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synth { spec, out } => {
            let mut spec: SyntheticSpec = read_json(&spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let manifests = generate_synthetic(&spec, &out)?;
            print(&json!({ "records": manifests.len(), "manifest": out.join("manifest.json") }))
        }
        Command::Preprocess { manifest, out } => {
            let seed = cli.seed.unwrap_or(0);
            let base = manifest.parent().unwrap_or(Path::new("."));
            let records = load_manifests(&manifest)?
                .iter()
                .map(|m| {
                    let (rec, img) = load_record(m, base)?;
                    preprocess_record(&rec, &img, m, seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            write_dataset(&out, &records)?;
            let summary: Vec<_> = records
                .iter()
                .map(|r| json!({ "record_id": r.record_id, "polarity": r.polarity, "samples": r.fecg.len() }))
                .collect();
            print(&json!({ "records": summary, "dataset": out }))
        }
        Command::Train { config, data, out } => {
            let mut config: ExperimentConfig = read_json(&config)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let outcome = run_experiment(&config, &read_dataset(&data)?)?;
            write_experiment_artifacts(&outcome, &out)?;
            let ckpt = Checkpoint {
                config: outcome.config.clone(),
                model: outcome.model.clone(),
            };
            save_checkpoint(&out.join("model.ckpt"), &ckpt)?;
            print(&json!({ "metrics": outcome.report, "notes": outcome.notes, "checkpoint": out.join("model.ckpt") }))
        }
        Command::Evaluate { model, data } => {
            let mut ckpt = load_checkpoint(&model)?;
            if let Some(s) = cli.seed {
                ckpt.config.seed = s;
            }
            let report = evaluate_model(&ckpt.config, &ckpt.model, &read_dataset(&data)?)?;
            print(&json!({ "metrics": report }))
        }
        Command::Ablate { grid, data, out, config } => {
            let mut spec = if GRID_NAMES.contains(&grid.as_str()) {
                let base = match config {
                    Some(p) => read_json(&p)?,
                    None => ExperimentConfig::default(),
                };
                grid_by_name(&grid, &base)?
            } else {
                read_json::<GridSpec>(Path::new(&grid))?
            };
            if let Some(s) = cli.seed {
                spec.base.seed = s;
            }
            let result = run_ablation(&spec, &read_dataset(&data)?)?;
            result.write(&out)?;
            print!("{}", result.table_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "Usage", "message": e.to_string().trim_end() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.record() }));
            ExitCode::FAILURE
        }
    }
}
