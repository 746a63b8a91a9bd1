use crate::util::resolve_out_dir;
use clap::Args;
use std::io::Write;
use std::path::PathBuf;
use vitmae::data::manifest::write_manifest;
use vitmae::data::synthetic::{gen_synthetic, synthetic_catalog, SyntheticKind};
use vitmae::data::{TileData, TileSample};
use vitmae::{Error, Result};

#[derive(Args)]
pub struct DatagenArgs {
    /// What to generate: classification, segmentation, texture, catalog.
    #[arg(long)]
    kind: String,
    /// Number of tiles (or catalog entries).
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Tile side in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    bands: usize,
    /// Class count for classification/segmentation kinds.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: DatagenArgs) -> Result<i32> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;

    if args.kind == "catalog" {
        let catalog = synthetic_catalog(args.n, args.seed);
        let path = out.join("catalog.jsonl");
        write_manifest(&path, &catalog)?;
        println!("wrote {} catalog entries to {}", catalog.len(), path.display());
        return Ok(0);
    }

    let kind = match args.kind.as_str() {
        "classification" => SyntheticKind::Classification {
            classes: args.classes,
        },
        "segmentation" => SyntheticKind::Segmentation {
            classes: args.classes,
        },
        "texture" => SyntheticKind::Texture,
        other => {
            return Err(Error::Config(format!(
                "unknown kind '{other}' (expected classification|segmentation|texture|catalog)"
            )))
        }
    };
    let set = gen_synthetic(kind, args.n, args.size, args.bands, args.seed)?;

    let tiles_dir = out.join("tiles");
    std::fs::create_dir_all(&tiles_dir)?;
    for tile in &set.tiles {
        tile.write_to(tiles_dir.join(format!("{}.mtil", tile.id)))?;
    }
    if !set.labels.is_empty() {
        let mut f = std::fs::File::create(out.join("labels.jsonl"))?;
        for (tile, label) in set.tiles.iter().zip(&set.labels) {
            writeln!(
                f,
                "{}",
                serde_json::json!({"id": tile.id, "label": label})
            )?;
        }
    }
    if !set.masks.is_empty() {
        let masks_dir = out.join("masks");
        std::fs::create_dir_all(&masks_dir)?;
        for (tile, mask) in set.tiles.iter().zip(&set.masks) {
            let m = TileSample::new(
                tile.id.clone(),
                tile.width,
                tile.height,
                1,
                "L",
                TileData::U8(mask.clone()),
            )?;
            m.write_to(masks_dir.join(format!("{}.mtil", tile.id)))?;
        }
    }
    println!(
        "wrote {} {} tiles to {}",
        set.tiles.len(),
        args.kind,
        out.display()
    );
    Ok(0)
}
