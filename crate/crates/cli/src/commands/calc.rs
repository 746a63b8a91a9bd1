use clap::{Args, Subcommand};
use vitmae::tasks::{calc_budget, format_millions};
use vitmae::vit::{count_params, CountConvention, ViTRecipe};
use vitmae::{Error, Result};

#[derive(Args)]
pub struct CalcArgs {
    #[command(subcommand)]
    what: CalcWhat,
    /// Emit machine-readable JSON instead of a summary line.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum CalcWhat {
    /// Analytic parameter count of a shape recipe.
    Params {
        /// Recipe name: vit-b, vit-h, vit-g, vit-e, vit-tiny.
        #[arg(long)]
        recipe: String,
        /// Override the input band count.
        #[arg(long)]
        bands: Option<usize>,
        /// Override the input image side.
        #[arg(long)]
        image: Option<usize>,
        /// Count the MAE decoder as well.
        #[arg(long)]
        with_decoder: bool,
    },
    /// Effective-batch learning-rate scaling: base * batch / 256.
    Lr {
        #[arg(long)]
        base: f64,
        #[arg(long)]
        batch: usize,
    },
    /// Training budget: iterations at batch size 1 and optimizer steps.
    Budget {
        /// Dataset size.
        #[arg(long)]
        n: u64,
        #[arg(long)]
        epochs: u64,
        #[arg(long, default_value_t = 256)]
        batch: u64,
    },
}

pub fn run(args: CalcArgs) -> Result<i32> {
    match args.what {
        CalcWhat::Params {
            recipe,
            bands,
            image,
            with_decoder,
        } => {
            let mut r = ViTRecipe::by_name(&recipe)
                .ok_or_else(|| Error::Config(format!("unknown recipe '{recipe}'")))?;
            if let Some(b) = bands {
                r.bands = b;
            }
            if let Some(s) = image {
                r.image = s;
            }
            r.validate()?;
            let convention = if with_decoder {
                let mae = vitmae::mae::MaeConfig::scaled_for(&r);
                CountConvention::EncoderPlusDecoder {
                    decoder_width: mae.decoder_width,
                    decoder_depth: mae.decoder_depth,
                }
            } else {
                CountConvention::EncoderOnly
            };
            let count = count_params(&r, convention);
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "recipe": r.name,
                        "convention": if with_decoder { "encoder_plus_decoder" } else { "encoder_only" },
                        "params": count,
                        "display": format_millions(count),
                    })
                );
            } else {
                println!(
                    "{}: {} parameters ({}, {})",
                    r.name,
                    count,
                    format_millions(count),
                    if with_decoder { "encoder+decoder" } else { "encoder only" }
                );
            }
        }
        CalcWhat::Lr { base, batch } => {
            let lr = vitmae::optim::scale_lr(base, batch);
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({"base_lr": base, "batch": batch, "lr": lr})
                );
            } else {
                println!("{lr}");
            }
        }
        CalcWhat::Budget { n, epochs, batch } => {
            let report = calc_budget(n, epochs, batch)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "dataset_size": report.dataset_size,
                        "epochs": report.epochs,
                        "effective_batch": report.effective_batch,
                        "iterations_at_bs1": report.iterations_at_bs1,
                        "optimizer_steps": report.optimizer_steps,
                        "display": report.iterations_display(),
                    })
                );
            } else {
                println!(
                    "{} iterations at batch size 1 ({}), {} optimizer steps",
                    report.iterations_at_bs1,
                    report.iterations_display(),
                    report.optimizer_steps
                );
            }
        }
    }
    Ok(0)
}
