use crate::util::{labeled_tiles, resolve_out_dir};
use clap::Args;
use std::path::PathBuf;
use vitmae::checkpoint::{Checkpoint, CheckpointMeta};
use vitmae::data::{compute_band_stats, tiles_to_tensor};
use vitmae::optim::OptimSpec;
use vitmae::tasks::{linear_probe, subset_split};
use vitmae::tensor::Tensor;
use vitmae::trainer::MetricsWriter;
use vitmae::vit::{ViTModel, ViTRecipe};
use vitmae::{Error, Result};

#[derive(Args)]
pub struct ProbeArgs {
    /// Backbone checkpoint. Omit together with --random-init for a
    /// random-weight baseline.
    #[arg(long)]
    backbone: Option<PathBuf>,
    /// Probe a randomly initialized backbone of the given recipe instead.
    #[arg(long)]
    random_init: Option<String>,
    /// Labeled tile directory (tiles/ + labels.jsonl).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// LARS base learning rate (used as-is; probing does not rescale).
    #[arg(long, default_value_t = 10.0)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Fraction of tiles held out for accuracy.
    #[arg(long, default_value_t = 0.2)]
    eval_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ProbeArgs) -> Result<i32> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;

    let backbone: ViTModel<f32> = match (&args.backbone, &args.random_init) {
        (Some(path), None) => {
            let ckpt = Checkpoint::load(path)?;
            vitmae::checkpoint::load_vit(&ckpt)?
        }
        (None, Some(recipe_name)) => {
            let recipe = ViTRecipe::by_name(recipe_name)
                .ok_or_else(|| Error::Config(format!("unknown recipe '{recipe_name}'")))?;
            ViTModel::init(&recipe, args.seed)?
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --backbone or --random-init".into(),
            ))
        }
    };

    let (tiles, labels) = labeled_tiles(&args.data)?;
    if tiles[0].bands as usize != backbone.recipe.bands {
        return Err(Error::Checkpoint(format!(
            "tiles have {} band(s) but the backbone expects {}; run `vitmae inflate` on \
             the checkpoint or regenerate the data",
            tiles[0].bands, backbone.recipe.bands
        )));
    }
    let stats = compute_band_stats(&tiles)?;
    let images = tiles_to_tensor(&tiles, &stats)?;

    // seeded split
    let n = tiles.len();
    let eval_idx = subset_split(n, args.eval_fraction.clamp(0.01, 0.99), args.seed)?;
    let eval_set: std::collections::BTreeSet<usize> = eval_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..n).filter(|i| !eval_set.contains(i)).collect();
    let pick = |idx: &[usize]| -> Result<(Tensor<f32>, Vec<usize>)> {
        let imgs = images.gather(0, idx)?.detach();
        let ys = idx.iter().map(|&i| labels[i]).collect();
        Ok((imgs, ys))
    };
    let (train_x, train_y) = pick(&train_idx)?;
    let (eval_x, eval_y) = pick(&eval_idx)?;

    let outcome = linear_probe(
        &backbone,
        &train_x,
        &train_y,
        &eval_x,
        &eval_y,
        &OptimSpec::lars(args.lr),
        args.epochs,
        args.batch,
        args.seed,
    )?;

    let mut metrics = MetricsWriter::append(out.join("metrics.jsonl"), "probe")?;
    for (step, loss) in outcome.train_losses.iter().enumerate() {
        metrics.emit("probe", "ce_loss", *loss, step as u64)?;
    }
    metrics.emit(
        "probe",
        "top1",
        outcome.accuracy,
        outcome.train_losses.len() as u64,
    )?;

    // persist the trained head with its feature normalization
    let mut head_ckpt = Checkpoint::new(CheckpointMeta {
        recipe: Some(backbone.recipe.clone()),
        root_seed: args.seed,
        ..Default::default()
    });
    head_ckpt.add_tensor("head.weight", &outcome.head.w)?;
    head_ckpt.add_tensor("head.bias", &outcome.head.b)?;
    head_ckpt.add_tensor(
        "head.norm_mean",
        &Tensor::from_vec(outcome.norm.mean.clone(), &[outcome.norm.mean.len()])?,
    )?;
    head_ckpt.add_tensor(
        "head.norm_std",
        &Tensor::from_vec(outcome.norm.std.clone(), &[outcome.norm.std.len()])?,
    )?;
    head_ckpt.save(out.join("probe-head.orkt"))?;

    println!("probe top-1 accuracy: {:.4}", outcome.accuracy);
    Ok(0)
}
