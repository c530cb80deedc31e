use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scratchdet::data::{generate_dataset, SceneConfig};
use scratchdet::landscape::merge_traces;
use scratchdet::run::{
    evaluate_model, run_ablation, train, write_eval, Checkpoint, DataProvider, DataSource,
    GridConfig, RunConfig,
};
use scratchdet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "scratchdet",
    version,
    about = "Train single-shot detectors from scratch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a detector from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the eval split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory or manifest; defaults to the data source stored in the checkpoint.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every cell of a grid config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge trace CSVs into one long-format CSV. Traces are `name=path` or a path
    /// (named after its directory).
    Landscape {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        traces: Vec<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integrity(_) | Error::Corrupt { .. } => 3,
        Error::Config(_) | Error::Json { .. } | Error::Ladder { .. } | Error::Io { .. } => 2,
        _ => 1,
    }
}

fn load_scene(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let mut scene = load_scene(&config)?;
            if let Some(s) = seed {
                scene.seed = s;
            }
            let m = generate_dataset(&scene, &out)?;
            println!("{} images, digest {}", m.images.len(), m.digest);
        }
        Command::Train {
            config,
            out,
            resume,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.validate()?;
            }
            let ck = resume.as_deref().map(Checkpoint::load).transpose()?;
            let data = DataProvider::from_source(&cfg.data)?;
            let outcome = train(&cfg, &data, &out, ck.as_ref())?;
            println!(
                "{}",
                serde_json::to_string(&outcome.report).expect("report serializes")
            );
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let source = match manifest {
                Some(m) => DataSource::Manifest { manifest: m },
                None => ck.header.config.data.clone(),
            };
            let data = DataProvider::from_source(&source)?;
            let mut model = ck.model()?;
            let (dets, report) = evaluate_model(&mut model, &data, &ck.header.config.eval)?;
            write_eval(&out, &dets, &report)?;
            println!(
                "{}",
                serde_json::to_string(&report).expect("report serializes")
            );
        }
        Command::Ablate { config, out } => {
            let grid = GridConfig::load(&config)?;
            let rows = run_ablation(&grid, &out)?;
            print!("{}", scratchdet::run::rows_to_csv(&rows));
        }
        Command::Landscape { out, traces } => {
            let runs: Vec<(String, PathBuf)> = traces
                .iter()
                .map(|t| match t.split_once('=') {
                    Some((name, path)) => (name.to_string(), PathBuf::from(path)),
                    None => {
                        let p = PathBuf::from(t);
                        let name = p
                            .parent()
                            .and_then(|d| d.file_name())
                            .map_or_else(|| t.clone(), |n| n.to_string_lossy().into_owned());
                        (name, p)
                    }
                })
                .collect();
            let refs: Vec<(String, &Path)> =
                runs.iter().map(|(n, p)| (n.clone(), p.as_path())).collect();
            let merged = merge_traces(&refs)?;
            std::fs::write(&out, merged).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
