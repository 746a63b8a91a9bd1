//! Command-line surface for the vitmae stack: calculators, data
//! generation, manifest sampling, pretraining, probing, segmentation
//! finetuning, checkpoint surgery, distributed equivalence checks and
//! feature evaluation.
//!
//! Failures print one machine-parsable line to stderr:
//! `error(<category>): <message>` and exit non-zero.

mod commands;
mod util;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "vitmae",
    version,
    about = "Desk-scale ViT/MAE pretraining and evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pure calculators: parameter counts, LR scaling, training budgets.
    Calc(commands::calc::CalcArgs),
    /// Generate synthetic tiles, labels, masks or catalogs.
    Datagen(commands::datagen::DatagenArgs),
    /// Diversity-stratified manifest sampling from a catalog.
    SampleManifest(commands::sample::SampleArgs),
    /// MAE pretraining (fresh, resumed, or warm-started).
    Pretrain(commands::pretrain::PretrainArgs),
    /// Linear probing on a frozen backbone.
    Probe(commands::probe::ProbeArgs),
    /// Segmentation finetuning with the simplified pyramid decoder.
    FinetuneSeg(commands::seg::SegArgs),
    /// Inflate a checkpoint's patch embedding to more input bands.
    Inflate(commands::surgery::InflateArgs),
    /// Interpolate patch filters (and positional tables) to a new patch size.
    ReshapePatch(commands::surgery::ReshapeArgs),
    /// Distributed equivalence suites (replicated/sequential/sharded).
    DdpCheck(commands::ddp::DdpArgs),
    /// Pooled-feature extraction and metric evaluation.
    Eval(commands::evalcmd::EvalArgs),
}

fn main() {
    if let Ok(threads) = std::env::var("VITMAE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Calc(args) => commands::calc::run(args),
        Command::Datagen(args) => commands::datagen::run(args),
        Command::SampleManifest(args) => commands::sample::run(args),
        Command::Pretrain(args) => commands::pretrain::run(args),
        Command::Probe(args) => commands::probe::run(args),
        Command::FinetuneSeg(args) => commands::seg::run(args),
        Command::Inflate(args) => commands::surgery::run_inflate(args),
        Command::ReshapePatch(args) => commands::surgery::run_reshape(args),
        Command::DdpCheck(args) => commands::ddp::run(args),
        Command::Eval(args) => commands::evalcmd::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error({}): {err}", err.category());
            std::process::exit(1);
        }
    }
}
