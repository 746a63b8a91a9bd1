use crate::util::resolve_out_dir;
use clap::Args;
use std::path::PathBuf;
use vitmae::checkpoint::Checkpoint;
use vitmae::config::RunConfig;
use vitmae::trainer::Pretrainer;
use vitmae::{Error, Result};

#[derive(Args)]
pub struct PretrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Resume bit-exactly from a checkpoint of this run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Warm-start weights from another checkpoint (e.g. an inflated one).
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Stop after this many steps of this invocation (for interrupt tests).
    #[arg(long)]
    max_steps: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: PretrainArgs) -> Result<i32> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.out_dir = resolve_out_dir(&config.out_dir);

    if args.resume.is_some() && args.init_from.is_some() {
        return Err(Error::Config(
            "--resume and --init-from are mutually exclusive".into(),
        ));
    }

    let mut trainer = if let Some(path) = &args.resume {
        let ckpt = Checkpoint::load(path)?;
        Pretrainer::<f32>::resume(config, &ckpt)?
    } else if let Some(path) = &args.init_from {
        let ckpt = Checkpoint::load(path)?;
        let (trainer, loaded) = Pretrainer::<f32>::warm_start(config, &ckpt)?;
        println!("warm start: loaded {loaded} tensors from {}", path.display());
        trainer
    } else {
        Pretrainer::<f32>::new(config)?
    };

    let report = trainer.run(args.max_steps)?;
    let first = report.losses.first().copied().unwrap_or(f64::NAN);
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "pretrain: {} steps, loss {first:.6} -> {last:.6}, checkpoint {}",
        report.steps_run,
        report.final_checkpoint.display()
    );
    Ok(0)
}
