//! Checkpoint weight surgery: band inflation and patch-size reshaping.
//! Inflation rewrites the patch embedding and, when an MAE decoder is
//! present, extends its pixel head with zero columns for the new bands.
//! Patch reshaping drops the pixel-head tensors (their pixel count
//! changes); a later warm start re-initializes them.

use clap::Args;
use std::path::PathBuf;
use vitmae::checkpoint::Checkpoint;
use vitmae::transfer::{
    inflate_bands, inflate_pixel_head, interp_patch_filters, interp_pos_embed, InflationSpec,
    InitMode, InterpMethod,
};
use vitmae::vit::validate_input_size;
use vitmae::{Error, Result};

#[derive(Args)]
pub struct InflateArgs {
    #[arg(long, value_name = "CKPT")]
    input: PathBuf,
    #[arg(long, value_name = "CKPT")]
    output: PathBuf,
    /// Target band count (> source bands).
    #[arg(long)]
    bands: usize,
    /// zero, random or mean.
    #[arg(long, default_value = "random")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Std for random mode; defaults to the empirical std of the source.
    #[arg(long)]
    std: Option<f64>,
}

#[derive(Args)]
pub struct ReshapeArgs {
    #[arg(long, value_name = "CKPT")]
    input: PathBuf,
    #[arg(long, value_name = "CKPT")]
    output: PathBuf,
    /// New patch side in pixels.
    #[arg(long)]
    patch: usize,
    /// New image side; defaults to the checkpoint's. Must be divisible by
    /// the new patch size.
    #[arg(long)]
    image: Option<usize>,
    /// bilinear or bicubic.
    #[arg(long, default_value = "bilinear")]
    method: String,
}

/// Pixel-head tensors, whose shapes depend on patch geometry.
const PIXEL_HEAD: [&str; 2] = ["decoder.head.weight", "decoder.head.bias"];

fn copy_except(src: &Checkpoint, dst: &mut Checkpoint, skip: &[&str]) -> Result<()> {
    for name in src.tensor_names() {
        if skip.contains(&name.as_str()) {
            continue;
        }
        let (rec, bytes) = src.raw(&name).expect("name from listing");
        dst.add_raw(&name, rec.dtype, rec.shape.clone(), bytes)?;
    }
    Ok(())
}

pub fn run_inflate(args: InflateArgs) -> Result<i32> {
    let src = Checkpoint::load(&args.input)?;
    let mut meta = src.meta.clone();
    let recipe = meta
        .recipe
        .as_mut()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no recipe metadata".into()))?;

    let init = match args.mode.as_str() {
        "zero" => InitMode::Zero,
        "random" => InitMode::Random {
            seed: args.seed,
            std: args.std,
        },
        "mean" => InitMode::MeanOfExisting,
        other => return Err(Error::Config(format!("unknown inflation mode '{other}'"))),
    };
    let spec = InflationSpec {
        new_band_count: args.bands,
        init,
    };
    let w = src.get_tensor::<f32>("patch_embed.weight")?;
    let old_bands = w.shape()[1];
    let inflated = inflate_bands(&w, &spec)?;

    recipe.bands = args.bands;
    if let Some(stats) = &mut meta.norm_stats {
        while stats.mean.len() < args.bands {
            stats.mean.push(0.0);
            stats.std.push(1.0);
        }
    }

    let mut out = Checkpoint::new(meta);
    out.add_tensor("patch_embed.weight", &inflated)?;
    let mut skip = vec!["patch_embed.weight"];
    if src.has_tensor(PIXEL_HEAD[0]) {
        let hw = src.get_tensor::<f32>(PIXEL_HEAD[0])?;
        let hb = src.get_tensor::<f32>(PIXEL_HEAD[1])?;
        let (hw2, hb2) = inflate_pixel_head(&hw, &hb, old_bands, args.bands)?;
        out.add_tensor(PIXEL_HEAD[0], &hw2)?;
        out.add_tensor(PIXEL_HEAD[1], &hb2)?;
        skip.extend(PIXEL_HEAD);
    }
    copy_except(&src, &mut out, &skip)?;
    out.save(&args.output)?;
    println!(
        "inflated {} -> {} bands ({}) into {}",
        w.shape()[1],
        args.bands,
        args.mode,
        args.output.display()
    );
    Ok(0)
}

pub fn run_reshape(args: ReshapeArgs) -> Result<i32> {
    let src = Checkpoint::load(&args.input)?;
    let mut meta = src.meta.clone();
    let recipe = meta
        .recipe
        .as_mut()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no recipe metadata".into()))?;
    let method = match args.method.as_str() {
        "bilinear" => InterpMethod::Bilinear,
        "bicubic" => InterpMethod::Bicubic,
        other => return Err(Error::Config(format!("unknown method '{other}'"))),
    };
    let image = args.image.unwrap_or(recipe.image);
    validate_input_size(image, args.patch)?;
    let new_grid = image / args.patch;

    let w = src.get_tensor::<f32>("patch_embed.weight")?;
    let reshaped = interp_patch_filters(&w, args.patch, method)?;

    let mut out_meta = meta.clone();
    let out_recipe = out_meta.recipe.as_mut().unwrap();
    out_recipe.patch = args.patch;
    out_recipe.image = image;

    let mut out = Checkpoint::new(out_meta);
    out.add_tensor("patch_embed.weight", &reshaped)?;
    let mut replaced = vec!["patch_embed.weight".to_string()];
    for pos_name in ["pos_embed", "decoder.pos_embed"] {
        if src.has_tensor(pos_name) {
            let pe = src.get_tensor::<f32>(pos_name)?;
            let resized = interp_pos_embed(&pe, new_grid, method)?;
            out.add_tensor(pos_name, &resized)?;
            replaced.push(pos_name.to_string());
        }
    }
    let mut skip_refs: Vec<&str> = replaced.iter().map(String::as_str).collect();
    // pixel count per patch changes: the head cannot be carried over
    skip_refs.extend(PIXEL_HEAD);
    copy_except(&src, &mut out, &skip_refs)?;
    out.save(&args.output)?;
    println!(
        "reshaped patch {} -> {} (grid {new_grid}x{new_grid}, {}) into {}",
        w.shape()[2],
        args.patch,
        args.method,
        args.output.display()
    );
    Ok(0)
}
