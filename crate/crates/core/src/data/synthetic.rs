//! Synthetic data generators: desk-scale stand-ins for real tile archives.
//!
//! Classification tiles encode the class purely in the *position* of a
//! bright shape (class c occupies quadrant c), with the shape color shared
//! across classes. The per-patch band means therefore separate classes
//! linearly (patch index x band is a perfect linear feature map), while the
//! tile-wide average is class-invariant: a probe cannot ride the residual
//! stream's linear path and must rely on features that bind position to
//! content, which is exactly what masked reconstruction trains.
//!
//! Texture tiles put most variance into the first three bands so extra
//! bands stay low-information ("RGB-dominant"). All texture has structure
//! at the patch scale, so per-patch-normalized reconstruction targets are
//! learnable rather than noise. Everything is deterministic per seed.

use super::manifest::{derive_season, ManifestEntry, Sensor};
use super::{TileData, TileSample};
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};
use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// What to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Classification { classes: usize },
    Segmentation { classes: usize },
    Texture,
}

/// Generated tiles with task labels.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub tiles: Vec<TileSample>,
    /// Per-tile class for the classification kind.
    pub labels: Vec<usize>,
    /// Per-pixel labels (`height * width`) for the segmentation kind.
    pub masks: Vec<Vec<u8>>,
}

/// Segmentation shape colors; row = shape class, column = band (cycled).
const PALETTE: [[f32; 4]; 8] = [
    [0.85, 0.20, 0.20, 0.55],
    [0.20, 0.85, 0.20, 0.30],
    [0.20, 0.20, 0.85, 0.70],
    [0.80, 0.80, 0.15, 0.20],
    [0.15, 0.80, 0.80, 0.85],
    [0.80, 0.15, 0.80, 0.45],
    [0.60, 0.45, 0.10, 0.10],
    [0.35, 0.65, 0.90, 0.60],
];

/// Shared shape color for classification tiles: identical for every class,
/// so only the shape's *position* carries the label.
const CLS_SHAPE_COLOR: [f32; 4] = [0.92, 0.88, 0.84, 0.60];

const BG_NOISE: f32 = 0.03;

fn smooth_field(rng: &mut ChaCha12Rng, size: usize, amplitude: f32) -> Vec<f32> {
    // frequencies high enough that texture varies within a patch, so
    // per-patch-normalized reconstruction targets carry structure
    let f1 = rng.gen_range(2.0..6.0);
    let f2 = rng.gen_range(2.0..6.0);
    let p1 = rng.gen_range(0.0..std::f32::consts::TAU);
    let p2 = rng.gen_range(0.0..std::f32::consts::TAU);
    let scale = std::f32::consts::TAU / size as f32;
    let mut out = vec![0.0f32; size * size];
    for y in 0..size {
        for x in 0..size {
            let v = (f1 * x as f32 * scale + p1).sin() + (f2 * y as f32 * scale + p2).sin();
            out[y * size + x] = 0.45 + amplitude * 0.5 * v;
        }
    }
    out
}

/// Rectangles to paint: (y0, x0, h, w, band colors).
type Rects = Vec<(usize, usize, usize, usize, [f32; 4])>;

/// Render one band. Every band owns its own derived RNG stream (keyed on
/// tile seed and band index), so a tile generated with more bands keeps
/// its existing band content bit-identical: the property that makes
/// zero-mode inflation testable end to end.
fn render_band(
    tile_seed: u64,
    band: usize,
    size: usize,
    rgb_dominant: bool,
    rects: &Rects,
) -> Vec<f32> {
    let mut rng = seeds::rng(tile_seed, Purpose::Synthetic, 1 + band as u64);
    let amp = if rgb_dominant && band >= 3 { 0.05 } else { 0.35 };
    let mut field = smooth_field(&mut rng, size, amp);
    for v in &mut field {
        *v = (*v + rng.gen_range(-BG_NOISE..BG_NOISE)).clamp(0.0, 1.0);
    }
    for &(y0, x0, h, w, color) in rects {
        let c = color[band % 4];
        for y in y0..(y0 + h).min(size) {
            for x in x0..(x0 + w).min(size) {
                field[y * size + x] = (c + rng.gen_range(-BG_NOISE..BG_NOISE)).clamp(0.0, 1.0);
            }
        }
    }
    field
}

fn render_tile(
    tile_seed: u64,
    size: usize,
    bands: usize,
    rgb_dominant: bool,
    rects: &Rects,
) -> Vec<f32> {
    let mut data = Vec::with_capacity(bands * size * size);
    for b in 0..bands {
        data.extend(render_band(tile_seed, b, size, rgb_dominant, rects));
    }
    data
}

/// Quadrant-anchored rectangle for a class: classes rotate through the four
/// quadrants, so position and color both carry the label.
fn class_rect(class: usize, size: usize) -> (usize, usize, usize, usize) {
    let half = size / 2;
    let inset = size / 8;
    let q = class % 4;
    let y0 = (q / 2) * half + inset;
    let x0 = (q % 2) * half + inset;
    (y0, x0, half - 2 * inset, half - 2 * inset)
}

/// Generate `n` square tiles of side `size` with `bands` channels.
pub fn gen_synthetic(
    kind: SyntheticKind,
    n: usize,
    size: usize,
    bands: usize,
    seed: u64,
) -> Result<SyntheticSet> {
    if n == 0 {
        return Err(Error::Config("need n >= 1 tiles".into()));
    }
    if size < 8 || bands == 0 {
        return Err(Error::Config(format!(
            "degenerate tile geometry: size {size}, bands {bands}"
        )));
    }
    if let SyntheticKind::Classification { classes } | SyntheticKind::Segmentation { classes } = kind
    {
        if classes < 2 || classes > PALETTE.len() {
            return Err(Error::Config(format!(
                "classes must be in 2..={}, got {classes}",
                PALETTE.len()
            )));
        }
    }

    let mut tiles = Vec::with_capacity(n);
    let mut labels = Vec::new();
    let mut masks = Vec::new();
    let band_order: String = ["B", "G", "R", "N", "X", "Y", "Z", "W"][..bands.min(8)].concat();

    for i in 0..n {
        let tile_seed = seeds::derive(seed, Purpose::Synthetic, i as u64);
        // geometry draws are band-independent by construction
        let mut geo = seeds::rng(tile_seed, Purpose::Synthetic, 0);
        match kind {
            SyntheticKind::Texture => {
                let data = render_tile(tile_seed, size, bands, true, &Vec::new());
                tiles.push(TileSample::new(
                    format!("texture-{i:05}"),
                    size as u32,
                    size as u32,
                    bands as u16,
                    band_order.clone(),
                    TileData::F32(data),
                )?);
            }
            SyntheticKind::Classification { classes } => {
                let class = i % classes;
                let (y0, x0, h, w) = class_rect(class, size);
                // jitter the shape inside its quadrant so no fixed pixel
                // acts as a trivial class indicator
                let jy = geo.gen_range(0..=size / 16);
                let jx = geo.gen_range(0..=size / 16);
                let rects = vec![(y0 + jy, x0 + jx, h, w, CLS_SHAPE_COLOR)];
                let data = render_tile(tile_seed, size, bands, false, &rects);
                tiles.push(TileSample::new(
                    format!("class{class}-{i:05}"),
                    size as u32,
                    size as u32,
                    bands as u16,
                    band_order.clone(),
                    TileData::F32(data),
                )?);
                labels.push(class);
            }
            SyntheticKind::Segmentation { classes } => {
                let mut mask = vec![0u8; size * size];
                let shapes = geo.gen_range(2..=3);
                let mut rects = Vec::with_capacity(shapes);
                for _ in 0..shapes {
                    let class = geo.gen_range(1..classes);
                    let h = geo.gen_range(size / 4..size / 2);
                    let w = geo.gen_range(size / 4..size / 2);
                    let y0 = geo.gen_range(0..size - h);
                    let x0 = geo.gen_range(0..size - w);
                    rects.push((y0, x0, h, w, PALETTE[class]));
                    for y in y0..y0 + h {
                        for x in x0..x0 + w {
                            mask[y * size + x] = class as u8;
                        }
                    }
                }
                let data = render_tile(tile_seed, size, bands, false, &rects);
                tiles.push(TileSample::new(
                    format!("seg-{i:05}"),
                    size as u32,
                    size as u32,
                    bands as u16,
                    band_order.clone(),
                    TileData::F32(data),
                )?);
                masks.push(mask);
            }
        }
    }
    Ok(SyntheticSet {
        tiles,
        labels,
        masks,
    })
}

const LAND_COVERS: [&str; 3] = ["urban", "cropland", "forest"];
const CLIMATES: [&str; 3] = ["temperate", "arid", "tropical"];
const BIOMES: [&str; 4] = ["broadleaf", "grassland", "desert", "montane"];
const SENSORS: [Sensor; 4] = [
    Sensor::GeoEye1,
    Sensor::WorldView2,
    Sensor::WorldView3,
    Sensor::Other,
];

/// Synthetic catalog with controlled diversity for exercising the sampler:
/// all strata populated, roughly half the locations with non-zero
/// population, one to five views per location (same-season duplicates
/// included), seasons consistent with dates and hemisphere.
pub fn synthetic_catalog(entries: usize, seed: u64) -> Vec<ManifestEntry> {
    let mut rng = seeds::rng(seed, Purpose::Synthetic, 0xCA7A);
    let mut out = Vec::with_capacity(entries);
    let mut loc = 0usize;
    while out.len() < entries {
        let lat: f64 = rng.gen_range(-45.0..50.0);
        let lon: f64 = rng.gen_range(-120.0..120.0);
        let land_cover = LAND_COVERS[loc % LAND_COVERS.len()];
        let climate = CLIMATES[(loc / LAND_COVERS.len()) % CLIMATES.len()];
        let biome = BIOMES[loc % BIOMES.len()];
        let nonzero = loc % 2 == 0;
        let population = if nonzero {
            rng.gen_range(1.0..100_000.0f64).round()
        } else {
            0.0
        };
        let views = rng.gen_range(1..=5usize).min(entries - out.len());
        for v in 0..views {
            let year = rng.gen_range(2015..=2023);
            let month = rng.gen_range(1..=12u32);
            let day = rng.gen_range(1..=28u32);
            let date = NaiveDate::from_ymd_opt(year, month, day).unwrap();
            out.push(ManifestEntry {
                location_id: format!("loc-{loc:04}"),
                lat,
                lon,
                sensor: SENSORS[rng.gen_range(0..SENSORS.len())],
                gsd: rng.gen_range(0.3..=0.8),
                date,
                season: derive_season(date, lat),
                year,
                population,
                land_cover: land_cover.to_string(),
                climate_zone: climate.to_string(),
                biome: biome.to_string(),
                path: format!("tiles/loc-{loc:04}-v{v}.mtil"),
            });
        }
        loc += 1;
    }
    out
}
