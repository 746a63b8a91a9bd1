//! Tile augmentations: random resized crop and horizontal flip. Both are
//! deterministic per seed.

use super::{TileData, TileSample};
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};
use rand::Rng;

const CROP_RETRIES: usize = 10;

/// Random resized crop: sample an area fraction uniformly in
/// `area_ratio_range` and an aspect ratio log-uniformly in `aspect_range`,
/// crop, then bilinear-resize to `out_size` (square). Falls back to a
/// center crop after bounded retries.
pub fn random_resized_crop(
    x: &TileSample,
    out_size: u32,
    area_ratio_range: (f64, f64),
    aspect_range: (f64, f64),
    seed: u64,
) -> Result<TileSample> {
    if out_size == 0 {
        return Err(Error::Config("crop output size must be > 0".into()));
    }
    let (alo, ahi) = area_ratio_range;
    let (rlo, rhi) = aspect_range;
    if !(0.0 < alo && alo <= ahi && ahi <= 1.0) || !(0.0 < rlo && rlo <= rhi) {
        return Err(Error::Config(format!(
            "bad crop ranges: area {area_ratio_range:?}, aspect {aspect_range:?}"
        )));
    }
    let (w, h) = (x.width as i64, x.height as i64);
    let full_area = (w * h) as f64;
    let mut rng = seeds::rng(seed, Purpose::Augment, 0);

    let mut chosen: Option<(i64, i64, i64, i64)> = None; // left, top, cw, ch
    for _ in 0..CROP_RETRIES {
        let target_area = full_area * rng.gen_range(alo..=ahi);
        let aspect = (rng.gen_range(rlo.ln()..=rhi.ln())).exp();
        let cw = (target_area * aspect).sqrt().round() as i64;
        let ch = (target_area / aspect).sqrt().round() as i64;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let left = rng.gen_range(0..=(w - cw));
            let top = rng.gen_range(0..=(h - ch));
            chosen = Some((left, top, cw, ch));
            break;
        }
    }
    let (left, top, cw, ch) = chosen.unwrap_or_else(|| {
        let side = w.min(h);
        ((w - side) / 2, (h - side) / 2, side, side)
    });

    resize_crop(x, left as u32, top as u32, cw as u32, ch as u32, out_size)
}

/// Crop a region and bilinear-resize it to `out x out` (corner-aligned).
fn resize_crop(
    x: &TileSample,
    left: u32,
    top: u32,
    cw: u32,
    ch: u32,
    out: u32,
) -> Result<TileSample> {
    let (w, bands) = (x.width as usize, x.bands as usize);
    let n_in = x.pixels_per_band();
    let n_out = (out * out) as usize;
    let src_f32 = x.to_f32();

    let coord = |i: u32, n_out: u32, n_in: u32| -> f64 {
        if n_out <= 1 || n_in <= 1 {
            0.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };

    let mut resized = vec![0.0f32; bands * n_out];
    for b in 0..bands {
        let band = &src_f32[b * n_in..(b + 1) * n_in];
        for oy in 0..out {
            let sy = top as f64 + coord(oy, out, ch);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min((top + ch - 1) as usize);
            let ty = (sy - y0 as f64) as f32;
            for ox in 0..out {
                let sx = left as f64 + coord(ox, out, cw);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min((left + cw - 1) as usize);
                let tx = (sx - x0 as f64) as f32;
                let v00 = band[y0 * w + x0];
                let v01 = band[y0 * w + x1];
                let v10 = band[y1 * w + x0];
                let v11 = band[y1 * w + x1];
                let t0 = v00 + tx * (v01 - v00);
                let t1 = v10 + tx * (v11 - v10);
                resized[b * n_out + oy as usize * out as usize + ox as usize] =
                    t0 + ty * (t1 - t0);
            }
        }
    }

    let data = match &x.data {
        TileData::U8(_) => TileData::U8(
            resized
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        ),
        TileData::F32(_) => TileData::F32(resized),
    };
    TileSample::new(x.id.clone(), out, out, x.bands, x.band_order.clone(), data)
}

/// Mirror the width axis with probability `p`. Flipping twice restores the
/// original bit-exactly.
pub fn hflip(x: &TileSample, p: f64, seed: u64) -> TileSample {
    let mut rng = seeds::rng(seed, Purpose::Augment, 1);
    if rng.gen::<f64>() >= p {
        return x.clone();
    }
    hflip_always(x)
}

/// Unconditional width-axis mirror.
pub fn hflip_always(x: &TileSample) -> TileSample {
    let (w, h, bands) = (x.width as usize, x.height as usize, x.bands as usize);
    let data = match &x.data {
        TileData::U8(v) => {
            let mut out = v.clone();
            for b in 0..bands {
                for row in 0..h {
                    let start = b * w * h + row * w;
                    out[start..start + w].reverse();
                }
            }
            TileData::U8(out)
        }
        TileData::F32(v) => {
            let mut out = v.clone();
            for b in 0..bands {
                for row in 0..h {
                    let start = b * w * h + row * w;
                    out[start..start + w].reverse();
                }
            }
            TileData::F32(out)
        }
    };
    TileSample {
        data,
        ..x.clone()
    }
}
