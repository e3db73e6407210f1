use std::path::PathBuf;
use std::process::ExitCode;

use bold3d::baselines::BaselineKind;
use bold3d::pipeline::{
    cmd_baseline, cmd_eval, cmd_interpret, cmd_prepare, cmd_synth, cmd_train, run_dir, RunConfig, MANIFEST_FILE,
    MODEL_FILE,
};
use bold3d::Result;
use clap::{Args, Parser, Subcommand};

/// Volumetric CNN age-group classification of BOLD series.
#[derive(Parser)]
#[command(name = "bold3d", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for model initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (for `synth`, where the cohort is written).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data directory holding cohort.csv.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Window length in frames.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Window step in frames.
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Sensitivity threshold percentile.
    #[arg(long, global = true)]
    percentile: Option<f64>,
    /// Number of repeated runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    /// Trained model; defaults to run 0 under the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Split manifest; defaults to run 0 under the output directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom cohort with ground-truth masks.
    Synth,
    /// Write split manifests and per-split sample counts.
    Prepare,
    /// Train and test the CNN over all runs.
    Train,
    /// Score a manifest's test split with a trained model.
    Eval(ModelArgs),
    /// Group sensitivity maps, masks and slice images.
    Interpret(ModelArgs),
    /// Train and test a comparison classifier over all runs.
    Baseline {
        /// fisherz-lr or pca-lr.
        #[arg(long)]
        kind: BaselineKind,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.cnn.seed = v;
    }
    if let Some(v) = &c.data {
        cfg.data_dir = v.clone();
    }
    if let Some(v) = c.window {
        cfg.window = v;
    }
    if let Some(v) = c.stride {
        cfg.stride = v;
    }
    if let Some(v) = c.percentile {
        cfg.percentile = v;
    }
    if let Some(v) = c.runs {
        cfg.n_runs = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_paths(cfg: &RunConfig, a: &ModelArgs) -> (PathBuf, PathBuf) {
    let run0 = run_dir(&cfg.out_dir, 0);
    (
        a.checkpoint.clone().unwrap_or_else(|| run0.join(MODEL_FILE)),
        a.manifest.clone().unwrap_or_else(|| run0.join(MANIFEST_FILE)),
    )
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    if let Command::Synth = cli.command {
        let dir = cli.common.out.clone().unwrap_or_else(|| cfg.data_dir.clone());
        let s = cmd_synth(&cfg, &dir)?;
        println!(
            "wrote {} series and {} ground-truth masks to {}",
            s.n_subjects,
            s.truth_files.len(),
            dir.display()
        );
        return Ok(());
    }
    if let Some(out) = &cli.common.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::Synth => unreachable!(),
        Command::Prepare => print!("{}", cmd_prepare(&cfg)?.table),
        Command::Train => {
            let t = cmd_train(&cfg)?;
            for r in &t.runs {
                println!("run {}: f1 {:.4} auc {:.4}", r.run, r.report.f1, r.report.auc);
            }
            print!("{}", t.table);
        }
        Command::Eval(a) => {
            let (ck, man) = model_paths(&cfg, &a);
            print!("{}", cmd_eval(&cfg, &ck, &man)?.report.to_kv_text());
        }
        Command::Interpret(a) => {
            let (ck, man) = model_paths(&cfg, &a);
            let out = cmd_interpret(&cfg, &ck, &man, cfg.percentile)?;
            for (i, g) in out.groups.iter().enumerate() {
                let (peak, v) = g.peak();
                print!(
                    "group {}: {} samples, threshold {:.4e}, {} mask voxels, peak {v:.4e} at {peak:?}",
                    g.group,
                    g.n_samples,
                    g.threshold_value,
                    g.mask_voxels()
                );
                match &out.dice {
                    Some(d) => println!(", dice {:.4}", d[i]),
                    None => println!(),
                }
            }
        }
        Command::Baseline { kind } => {
            let b = cmd_baseline(&cfg, kind)?;
            for (r, run) in b.runs.iter().enumerate() {
                println!("run {r}: l2 {} f1 {:.4} auc {:.4}", run.l2, run.report.f1, run.report.auc);
            }
            print!("{}", b.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
