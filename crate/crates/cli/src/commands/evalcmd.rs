use crate::util::{load_labels, load_tile_dir, resolve_out_dir};
use clap::Args;
use std::io::Write;
use std::path::PathBuf;
use vitmae::checkpoint::Checkpoint;
use vitmae::data::{compute_band_stats, tiles_to_tensor, BandStats};
use vitmae::tasks::{argmax_rows, extract_pooled_features, metric_top1, FeatureNorm, ProbeHead};
use vitmae::trainer::{metrics_to_csv, MetricsWriter};
use vitmae::Result;

#[derive(Args)]
pub struct EvalArgs {
    /// Backbone checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Tile directory (tiles/ plus optional labels.jsonl).
    #[arg(long)]
    data: PathBuf,
    /// Probe-head checkpoint for logits/accuracy.
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also export metrics as CSV next to the JSONL.
    #[arg(long)]
    csv: bool,
}

pub fn run(args: EvalArgs) -> Result<i32> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;

    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let backbone = vitmae::checkpoint::load_vit::<f32>(&ckpt)?;
    let tiles = load_tile_dir(&args.data)?;

    let stats: BandStats = match ckpt.meta.norm_stats.clone() {
        Some(s) => s,
        None => {
            eprintln!("warning: no normalization stats in checkpoint, fitting on eval tiles");
            compute_band_stats(&tiles)?
        }
    };
    let images = tiles_to_tensor(&tiles, &stats)?;
    backbone.set_trainable(false);
    let features = extract_pooled_features(&backbone, &images, args.batch)?;

    let head = match &args.head {
        Some(path) => {
            let hc = Checkpoint::load(path)?;
            let norm = FeatureNorm::<f32> {
                mean: hc.get_vec("head.norm_mean")?,
                std: hc.get_vec("head.norm_std")?,
            };
            Some((
                ProbeHead {
                    w: hc.get_tensor("head.weight")?,
                    b: hc.get_tensor("head.bias")?,
                },
                norm,
            ))
        }
        None => None,
    };

    let features_path = out.join("features.jsonl");
    let mut f = std::fs::File::create(&features_path)?;
    let d = backbone.recipe.width;
    let feat_data = features.to_vec();
    let mut logits_rows: Option<Vec<usize>> = None;
    if let Some((head, norm)) = &head {
        let normalized = norm.apply(&features)?;
        let logits = head.logits(&normalized)?;
        let preds = argmax_rows(&logits);
        let logit_data = logits.to_vec();
        let k = logits.shape()[1];
        for (i, tile) in tiles.iter().enumerate() {
            let row = serde_json::json!({
                "id": tile.id,
                "features": &feat_data[i * d..(i + 1) * d],
                "logits": &logit_data[i * k..(i + 1) * k],
                "pred": preds[i],
            });
            writeln!(f, "{row}")?;
        }
        logits_rows = Some(preds);
    } else {
        for (i, tile) in tiles.iter().enumerate() {
            let row = serde_json::json!({
                "id": tile.id,
                "features": &feat_data[i * d..(i + 1) * d],
            });
            writeln!(f, "{row}")?;
        }
    }
    println!("wrote features for {} tiles to {}", tiles.len(), features_path.display());

    if let (Some(preds), Ok(labels)) = (&logits_rows, load_labels(&args.data)) {
        let truth: Vec<usize> = tiles
            .iter()
            .filter_map(|t| labels.get(&t.id).copied())
            .collect();
        if truth.len() == preds.len() {
            let acc = metric_top1(preds, &truth)?;
            let mut metrics = MetricsWriter::append(out.join("metrics.jsonl"), "eval")?;
            metrics.emit("eval", "top1", acc, 0)?;
            println!("top-1 accuracy: {acc:.4}");
            if args.csv {
                metrics_to_csv(out.join("metrics.jsonl"), out.join("metrics.csv"))?;
            }
        }
    }
    Ok(0)
}
