use crate::util::{load_masks, load_tile_dir, resolve_out_dir};
use clap::Args;
use std::path::PathBuf;
use vitmae::checkpoint::Checkpoint;
use vitmae::data::{compute_band_stats, tiles_to_tensor};
use vitmae::optim::{LayerDecaySpec, OptimSpec, ScheduleSpec};
use vitmae::tasks::{finetune_seg, FinetuneMode, SegLiteDecoder};
use vitmae::trainer::MetricsWriter;
use vitmae::vit::{default_taps, ViTModel, ViTRecipe};
use vitmae::{Error, Result};

#[derive(Args)]
pub struct SegArgs {
    #[arg(long)]
    backbone: Option<PathBuf>,
    /// Random-init backbone recipe (baseline runs).
    #[arg(long)]
    random_init: Option<String>,
    /// Data directory with tiles/ and masks/.
    #[arg(long)]
    data: PathBuf,
    /// frozen or full.
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value_t = 100)]
    iterations: u64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    layer_decay: f64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Comma-separated block taps; defaults depend on depth (12 or 32).
    #[arg(long)]
    taps: Option<String>,
    /// Train on this fraction of the tiles (iterations stay fixed).
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: SegArgs) -> Result<i32> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;

    let backbone: ViTModel<f32> = match (&args.backbone, &args.random_init) {
        (Some(path), None) => vitmae::checkpoint::load_vit(&Checkpoint::load(path)?)?,
        (None, Some(name)) => {
            let recipe = ViTRecipe::by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown recipe '{name}'")))?;
            ViTModel::init(&recipe, args.seed)?
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --backbone or --random-init".into(),
            ))
        }
    };

    let mode = match args.mode.as_str() {
        "frozen" => FinetuneMode::Frozen,
        "full" => FinetuneMode::Full,
        other => return Err(Error::Config(format!("unknown mode '{other}'"))),
    };
    let taps = match &args.taps {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("bad tap '{s}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => default_taps(backbone.recipe.depth).ok_or_else(|| {
            Error::Config(format!(
                "no default taps for depth {}; pass --taps",
                backbone.recipe.depth
            ))
        })?,
    };

    let tiles = load_tile_dir(&args.data)?;
    let ids: Vec<String> = tiles.iter().map(|t| t.id.clone()).collect();
    let masks = load_masks(&args.data, &ids)?;
    let subset = vitmae::tasks::subset_split(tiles.len(), args.fraction, args.seed)?;
    let tiles: Vec<_> = subset.iter().map(|&i| tiles[i].clone()).collect();
    let masks: Vec<_> = subset.iter().map(|&i| masks[i].clone()).collect();

    let stats = compute_band_stats(&tiles)?;
    let images = tiles_to_tensor(&tiles, &stats)?;

    let decoder = SegLiteDecoder::<f32>::init(
        backbone.recipe.width,
        backbone.recipe.width.min(64),
        args.classes,
        args.seed,
    );
    let optim = OptimSpec {
        base_lr: args.lr,
        ..Default::default()
    };
    let sched = ScheduleSpec::cosine(1.0, (args.iterations as f64 / 4.0).max(2.0), args.lr, 0.0);
    let outcome = finetune_seg(
        &backbone,
        &decoder,
        &images,
        &masks,
        mode,
        &optim,
        &sched,
        &LayerDecaySpec {
            rate: args.layer_decay,
        },
        args.iterations,
        args.batch,
        &taps,
        args.seed,
    )?;

    let mut metrics = MetricsWriter::append(out.join("metrics.jsonl"), "finetune-seg")?;
    for (step, loss) in outcome.train_losses.iter().enumerate() {
        metrics.emit("finetune-seg", "ce_loss", *loss, step as u64)?;
    }
    metrics.emit("finetune-seg", "miou", outcome.miou, outcome.steps_run)?;

    println!(
        "finetune-seg: {} steps ({} mode), mIoU {:.4}",
        outcome.steps_run, args.mode, outcome.miou
    );
    Ok(0)
}
