//! Shared CLI helpers: labeled tile directories and JSONL plumbing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vitmae::data::TileSample;
use vitmae::{Error, Result};

/// Sorted `.mtil` paths under a directory.
pub fn tile_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "mtil").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no .mtil tiles under {}",
            dir.display()
        )));
    }
    Ok(paths)
}

/// Load every tile under `dir/tiles`.
pub fn load_tile_dir(dir: &Path) -> Result<Vec<TileSample>> {
    let tiles_dir = dir.join("tiles");
    let root = if tiles_dir.is_dir() { tiles_dir } else { dir.to_path_buf() };
    tile_paths(&root)?
        .iter()
        .map(TileSample::read_from)
        .collect()
}

/// Load `labels.jsonl` (`{"id": ..., "label": ...}` per line) keyed by id.
pub fn load_labels(dir: &Path) -> Result<BTreeMap<String, usize>> {
    let path = dir.join("labels.jsonl");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let id = v["id"]
            .as_str()
            .ok_or_else(|| Error::Config("label line missing 'id'".into()))?
            .to_string();
        let label = v["label"]
            .as_u64()
            .ok_or_else(|| Error::Config("label line missing 'label'".into()))?
            as usize;
        out.insert(id, label);
    }
    Ok(out)
}

/// Pair tiles with their labels by id, in tile order.
pub fn labeled_tiles(dir: &Path) -> Result<(Vec<TileSample>, Vec<usize>)> {
    let tiles = load_tile_dir(dir)?;
    let labels = load_labels(dir)?;
    let mut ys = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let y = labels
            .get(&t.id)
            .ok_or_else(|| Error::Config(format!("no label for tile '{}'", t.id)))?;
        ys.push(*y);
    }
    Ok((tiles, ys))
}

/// Load segmentation masks stored as single-band u8 tiles under `dir/masks`,
/// one per tile id.
pub fn load_masks(dir: &Path, ids: &[String]) -> Result<Vec<Vec<u8>>> {
    let masks_dir = dir.join("masks");
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let tile = TileSample::read_from(masks_dir.join(format!("{id}.mtil")))?;
        match tile.data {
            vitmae::data::TileData::U8(v) => out.push(v),
            _ => {
                return Err(Error::Config(format!(
                    "mask '{id}' must be a u8 tile"
                )))
            }
        }
    }
    Ok(out)
}

/// Honor the output-directory override environment variable.
pub fn resolve_out_dir(requested: &Path) -> PathBuf {
    match std::env::var("VITMAE_OUT") {
        Ok(root) if !root.is_empty() => Path::new(&root).join(requested),
        _ => requested.to_path_buf(),
    }
}
