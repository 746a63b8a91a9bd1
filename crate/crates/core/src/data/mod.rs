//! Multispectral tile container, tile file I/O, augmentations, synthetic
//! generators and the diversity-stratified manifest sampler.
//!
//! Tile file format (`.mtil`), little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "MTIL"
//! version u16      currently 1
//! width   u32
//! height  u32
//! bands   u16
//! dtype   u8       0 = u8, 1 = f32
//! tag_len u8       band-order tag length
//! tag     tag_len ASCII bytes (e.g. "RGB", "BGRN")
//! data    planar band-major samples, row-major within a band
//! ```

pub mod augment;
pub mod manifest;
pub mod sampler;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

pub const TILE_MAGIC: &[u8; 4] = b"MTIL";
pub const TILE_VERSION: u16 = 1;

/// Pixel storage of a tile.
#[derive(Debug, Clone, PartialEq)]
pub enum TileData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl TileData {
    pub fn len(&self) -> usize {
        match self {
            TileData::U8(v) => v.len(),
            TileData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype_code(&self) -> u8 {
        match self {
            TileData::U8(_) => 0,
            TileData::F32(_) => 1,
        }
    }
}

/// One multispectral image tile with planar (band-major) pixel data.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSample {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub bands: u16,
    /// Declared band order, e.g. "RGB" or "BGRN".
    pub band_order: String,
    pub data: TileData,
}

impl TileSample {
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        bands: u16,
        band_order: impl Into<String>,
        data: TileData,
    ) -> Result<Self> {
        let expected = width as usize * height as usize * bands as usize;
        if data.len() != expected {
            return Err(Error::InvalidDim(format!(
                "tile data length {} != width*height*bands = {expected}",
                data.len()
            )));
        }
        Ok(TileSample {
            id: id.into(),
            width,
            height,
            bands,
            band_order: band_order.into(),
            data,
        })
    }

    pub fn pixels_per_band(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Values of one band as f32 (u8 scaled to [0,1]).
    pub fn band_f32(&self, band: usize) -> Vec<f32> {
        let n = self.pixels_per_band();
        match &self.data {
            TileData::U8(v) => v[band * n..(band + 1) * n]
                .iter()
                .map(|&b| b as f32 / 255.0)
                .collect(),
            TileData::F32(v) => v[band * n..(band + 1) * n].to_vec(),
        }
    }

    /// Whole tile as f32 planar values (u8 scaled to [0,1]).
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TileData::U8(v) => v.iter().map(|&b| b as f32 / 255.0).collect(),
            TileData::F32(v) => v.clone(),
        }
    }

    /// Serialize to the MTIL byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.band_order.len() > u8::MAX as usize || !self.band_order.is_ascii() {
            return Err(Error::Config(format!(
                "band order tag must be short ASCII, got {:?}",
                self.band_order
            )));
        }
        let mut out = Vec::new();
        out.extend_from_slice(TILE_MAGIC);
        out.extend_from_slice(&TILE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.bands.to_le_bytes());
        out.push(self.data.dtype_code());
        out.push(self.band_order.len() as u8);
        out.extend_from_slice(self.band_order.as_bytes());
        match &self.data {
            TileData::U8(v) => out.extend_from_slice(v),
            TileData::F32(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], id: impl Into<String>) -> Result<Self> {
        let fail = |msg: &str| Error::Checkpoint(format!("bad tile file: {msg}"));
        if bytes.len() < 18 {
            return Err(fail("truncated header"));
        }
        if &bytes[0..4] != TILE_MAGIC {
            return Err(fail("wrong magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != TILE_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let bands = u16::from_le_bytes([bytes[14], bytes[15]]);
        let dtype = bytes[16];
        let tag_len = bytes[17] as usize;
        if bytes.len() < 18 + tag_len {
            return Err(fail("truncated band-order tag"));
        }
        let band_order = std::str::from_utf8(&bytes[18..18 + tag_len])
            .map_err(|_| fail("non-UTF8 band tag"))?
            .to_string();
        let payload = &bytes[18 + tag_len..];
        let count = width as usize * height as usize * bands as usize;
        let data = match dtype {
            0 => {
                if payload.len() != count {
                    return Err(fail("payload length mismatch"));
                }
                TileData::U8(payload.to_vec())
            }
            1 => {
                if payload.len() != count * 4 {
                    return Err(fail("payload length mismatch"));
                }
                TileData::F32(
                    payload
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            other => return Err(fail(&format!("unknown dtype code {other}"))),
        };
        TileSample::new(id, width, height, bands, band_order, data)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        Self::from_bytes(&bytes, id)
    }

    /// Import a 3-band tile from a PNG file (RGB, u8).
    pub fn from_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Config(format!("png import failed: {e}")))?
            .to_rgb8();
        let (w, h) = (img.width(), img.height());
        let interleaved = img.into_raw();
        let n = (w * h) as usize;
        let mut planar = vec![0u8; n * 3];
        for i in 0..n {
            planar[i] = interleaved[3 * i];
            planar[n + i] = interleaved[3 * i + 1];
            planar[2 * n + i] = interleaved[3 * i + 2];
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        TileSample::new(id, w, h, 3, "RGB", TileData::U8(planar))
    }
}

/// Per-band mean/std over a training split, f32-space (u8 scaled to [0,1]).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

pub fn compute_band_stats(tiles: &[TileSample]) -> Result<BandStats> {
    let bands = tiles
        .first()
        .ok_or_else(|| Error::Config("cannot compute stats over zero tiles".into()))?
        .bands as usize;
    let mut sums = vec![0.0f64; bands];
    let mut sq = vec![0.0f64; bands];
    let mut count = 0usize;
    for t in tiles {
        if t.bands as usize != bands {
            return Err(Error::Config("mixed band counts in training split".into()));
        }
        count += t.pixels_per_band();
        for b in 0..bands {
            for v in t.band_f32(b) {
                sums[b] += v as f64;
                sq[b] += (v as f64) * (v as f64);
            }
        }
    }
    let n = count as f64;
    let mean: Vec<f32> = sums.iter().map(|s| (s / n) as f32).collect();
    let std: Vec<f32> = sq
        .iter()
        .zip(&mean)
        .map(|(s, &m)| (((s / n) - (m as f64) * (m as f64)).max(1e-12).sqrt()) as f32)
        .collect();
    Ok(BandStats { mean, std })
}

/// Stack normalized tiles into a `[B, c, h, w]` tensor.
pub fn tiles_to_tensor(tiles: &[TileSample], stats: &BandStats) -> Result<Tensor<f32>> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Config("empty tile batch".into()))?;
    let (w, h, c) = (first.width as usize, first.height as usize, first.bands as usize);
    if stats.mean.len() != c {
        return Err(Error::Config(format!(
            "normalization stats have {} bands, tiles have {c}",
            stats.mean.len()
        )));
    }
    let mut out = Vec::with_capacity(tiles.len() * c * h * w);
    for t in tiles {
        if (t.width as usize, t.height as usize, t.bands as usize) != (w, h, c) {
            return Err(Error::Config("mixed tile geometry in batch".into()));
        }
        for b in 0..c {
            let band = t.band_f32(b);
            let (m, s) = (stats.mean[b], stats.std[b]);
            out.extend(band.iter().map(|&v| (v - m) / s));
        }
    }
    Tensor::from_vec(out, &[tiles.len(), c, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tile(seed: u64, dtype_f32: bool) -> TileSample {
        let mut rng = crate::seeds::rng(seed, crate::seeds::Purpose::Synthetic, 0);
        let (w, h, b) = (5u32, 4u32, 3u16);
        let n = (w * h) as usize * b as usize;
        let data = if dtype_f32 {
            TileData::F32((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        } else {
            TileData::U8((0..n).map(|_| rng.gen_range(0..=255)).collect())
        };
        TileSample::new(format!("t{seed}"), w, h, b, "RGB", data).unwrap()
    }

    #[test]
    fn tile_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for (i, f32ness) in [(0u64, false), (1, true), (2, false), (3, true)] {
            let tile = random_tile(i, f32ness);
            let path = dir.path().join(format!("{}.mtil", tile.id));
            tile.write_to(&path).unwrap();
            let back = TileSample::read_from(&path).unwrap();
            assert_eq!(tile, back);
        }
    }

    #[test]
    fn tile_rejects_wrong_length() {
        assert!(TileSample::new("x", 4, 4, 2, "RG", TileData::U8(vec![0; 10])).is_err());
    }

    #[test]
    fn tile_rejects_bad_magic() {
        let tile = random_tile(5, false);
        let mut bytes = tile.to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(TileSample::from_bytes(&bytes, "x").is_err());
    }

    #[test]
    fn u8_band_scales_to_unit_interval() {
        let tile = TileSample::new(
            "x",
            2,
            1,
            1,
            "L",
            TileData::U8(vec![0, 255]),
        )
        .unwrap();
        assert_eq!(tile.band_f32(0), vec![0.0, 1.0]);
    }

    #[test]
    fn band_stats_and_normalization() {
        let tile = TileSample::new(
            "x",
            2,
            1,
            2,
            "AB",
            TileData::F32(vec![1.0, 3.0, -1.0, -3.0]),
        )
        .unwrap();
        let stats = compute_band_stats(&[tile.clone()]).unwrap();
        assert_eq!(stats.mean, vec![2.0, -2.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
        let t = tiles_to_tensor(&[tile], &stats).unwrap();
        assert_eq!(t.shape(), vec![1, 2, 1, 2]);
        assert_eq!(t.to_vec(), vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn png_import_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tile.png");
        let mut img = image::RgbImage::new(3, 2);
        for (i, p) in img.pixels_mut().enumerate() {
            *p = image::Rgb([i as u8, (i * 2) as u8, (i * 3) as u8]);
        }
        img.save(&path).unwrap();
        let tile = TileSample::from_png(&path).unwrap();
        assert_eq!(tile.bands, 3);
        assert_eq!(tile.band_order, "RGB");
        assert_eq!(tile.width, 3);
        // planar band 0 = red channel
        match &tile.data {
            TileData::U8(v) => assert_eq!(&v[..6], &[0, 1, 2, 3, 4, 5]),
            _ => panic!("png import should be u8"),
        }
    }
}
