use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctnorm_cli::pipeline::{self, Pipeline};
use ctnorm_cli::{ExperimentManifest, ModelKind, PipelineError, Result};
use log::info;

#[derive(Parser)]
#[command(
    name = "ctnorm",
    version,
    about = "Dose and slice-thickness normalization of CT volumes"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Single-threaded execution for bit-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default desk-scale manifest.
    Init {
        /// Where to write the manifest.
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate phantoms and nodule ROI lists.
    Phantom,
    /// Simulate the reference and scenario acquisitions.
    Scan,
    /// Train the GAN, or the L1-only CNN baseline, for one scenario.
    Train {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        baseline_cnn: bool,
        /// Continue from the last checkpoint if one exists.
        #[arg(long)]
        resume: bool,
    },
    /// Normalize one file, or every test case when no --checkpoint is given.
    Normalize {
        /// Generator checkpoint (.ctw).
        #[arg(long, requires_all = ["input", "output"])]
        checkpoint: Option<PathBuf>,
        /// Thick-slice input volume (.ctv).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Normalized output volume (.ctv); a JSON sidecar is written next to it.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Input tile as D,H,W.
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 64])]
        tile: Vec<usize>,
        /// Tile overlap along z, in input slices.
        #[arg(long, default_value_t = 4)]
        z_overlap: usize,
    },
    /// Compute metrics, radiomics and statistics over the test split.
    Evaluate,
    /// Print the metric table and summary of a finished evaluation.
    Report,
    /// Run every stage end to end.
    Run,
}

fn load_pipeline(g: &GlobalOpts) -> Result<Pipeline> {
    let path = g
        .manifest
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--manifest is required for this command".into()))?;
    let mut m = ExperimentManifest::load(path)?;
    if let Some(seed) = g.seed {
        m.seed = seed;
    }
    Pipeline::new(m, g.force)
}

fn print_report(p: &Pipeline) -> Result<()> {
    let dir = p.layout.reports();
    for name in ["table1.txt", "summary.json"] {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                PipelineError::Missing(path.clone())
            } else {
                PipelineError::Io {
                    path: path.clone(),
                    source,
                }
            }
        })?;
        println!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let threads = if g.deterministic { Some(1) } else { g.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(PipelineError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Init { output } => {
            if output.exists() && !g.force {
                return Err(PipelineError::Exists(output));
            }
            let mut m = ExperimentManifest::default();
            if let Some(seed) = g.seed {
                m.seed = seed;
            }
            std::fs::write(&output, m.to_json() + "\n").map_err(|source| PipelineError::Io {
                path: output.clone(),
                source,
            })?;
            info!("wrote {}", output.display());
        }
        Command::Phantom => pipeline::phantoms(&load_pipeline(g)?)?,
        Command::Scan => pipeline::scans(&load_pipeline(g)?)?,
        Command::Train {
            scenario,
            baseline_cnn,
            resume,
        } => {
            let kind = if baseline_cnn {
                ModelKind::Cnn
            } else {
                ModelKind::Gan
            };
            let s = pipeline::train_model(&load_pipeline(g)?, &scenario, kind, resume)?;
            println!(
                "trained {} for {scenario}: {} iterations, last checkpoint {}",
                kind.name(),
                s.iterations,
                s.last_checkpoint.display()
            );
        }
        Command::Normalize {
            checkpoint: Some(ckpt),
            input,
            output,
            tile,
            z_overlap,
        } => {
            let tile: [usize; 3] = tile
                .try_into()
                .map_err(|_| PipelineError::Config("--tile takes three values D,H,W".into()))?;
            let meta = pipeline::normalize_file(
                &ckpt,
                &input.expect("clap enforces --input"),
                &output.expect("clap enforces --output"),
                tile,
                z_overlap,
                g.force,
            )?;
            println!(
                "{:?} -> {:?} in {:.2}s",
                meta.input_dims, meta.output_dims, meta.wall_time_s
            );
        }
        Command::Normalize {
            checkpoint: None, ..
        } => pipeline::normalize_all(&load_pipeline(g)?)?,
        Command::Evaluate => {
            let p = load_pipeline(g)?;
            pipeline::evaluate(&p)?;
            print_report(&p)?;
        }
        Command::Report => print_report(&load_pipeline(g)?)?,
        Command::Run => {
            let p = load_pipeline(g)?;
            pipeline::run_all(&p)?;
            print_report(&p)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // usage errors count as invalid configuration; 2 is reserved for refused overwrites
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(3);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
