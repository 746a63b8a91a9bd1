//! Weight-surgery procedures for transferring pretrained checkpoints across
//! input geometries: band inflation (e.g. 3 -> 4 channels), patch-filter
//! resolution interpolation (e.g. 14 -> 16), and positional-embedding grid
//! interpolation. All pure functions over plain tensors.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// How new band slices are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitMode {
    /// New channels contribute exactly nothing: provable output equality
    /// on inputs whose extra bands are arbitrary.
    Zero,
    /// Seeded normal noise. `std = None` uses the empirical std of the
    /// existing channel weights.
    Random { seed: u64, std: Option<f64> },
    /// Mean of the existing channel slices.
    MeanOfExisting,
}

/// Band-inflation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InflationSpec {
    pub new_band_count: usize,
    pub init: InitMode,
}

impl InflationSpec {
    pub fn random(new_band_count: usize, seed: u64) -> Self {
        InflationSpec {
            new_band_count,
            init: InitMode::Random { seed, std: None },
        }
    }
}

/// Resampling method for filter/grid interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Bilinear,
    Bicubic,
}

/// Extend a `[D, c, p, p]` patch embedding to `c' > c` bands. The first `c`
/// channel slices are bit-identical to the source; new slices follow the
/// init mode. The bias is untouched by design (it is per-output-channel).
pub fn inflate_bands<T: Element>(
    patch_embed: &Tensor<T>,
    spec: &InflationSpec,
) -> Result<Tensor<T>> {
    let shape = patch_embed.shape();
    if shape.len() != 4 {
        return Err(Error::InvalidDim(format!(
            "inflate_bands expects [D, c, p, p], got {shape:?}"
        )));
    }
    let (d, c, p) = (shape[0], shape[1], shape[2]);
    let c_new = spec.new_band_count;
    if c_new <= c {
        return Err(Error::Config(format!(
            "new band count {c_new} must exceed source band count {c}"
        )));
    }
    let pp = p * p;
    let src = patch_embed.to_vec();

    let mut fresh: Vec<T> = match spec.init {
        InitMode::Zero => vec![T::zero(); d * (c_new - c) * pp],
        InitMode::Random { seed, std } => {
            let std = std.unwrap_or_else(|| empirical_std(&src));
            let mut rng = crate::seeds::rng(seed, crate::seeds::Purpose::Init, 0xba9d);
            let normal = Normal::new(0.0f64, std.max(f64::MIN_POSITIVE))
                .map_err(|e| Error::Config(format!("bad std for inflation: {e}")))?;
            (0..d * (c_new - c) * pp)
                .map(|_| T::from_f64(normal.sample(&mut rng)))
                .collect()
        }
        InitMode::MeanOfExisting => {
            let ct = T::from_f64(c as f64);
            let mut mean_slice = vec![T::zero(); d * pp];
            for di in 0..d {
                for ch in 0..c {
                    for i in 0..pp {
                        let v = src[(di * c + ch) * pp + i];
                        mean_slice[di * pp + i] = mean_slice[di * pp + i] + v;
                    }
                }
            }
            for v in &mut mean_slice {
                *v = *v / ct;
            }
            let mut out = Vec::with_capacity(d * (c_new - c) * pp);
            for di in 0..d {
                for _ in c..c_new {
                    out.extend_from_slice(&mean_slice[di * pp..(di + 1) * pp]);
                }
            }
            out
        }
    };

    let mut out = Vec::with_capacity(d * c_new * pp);
    let mut fresh_iter = {
        let f = std::mem::take(&mut fresh);
        f.into_iter()
    };
    for di in 0..d {
        out.extend_from_slice(&src[di * c * pp..(di + 1) * c * pp]);
        for _ in 0..(c_new - c) * pp {
            out.push(fresh_iter.next().expect("fresh slice sized above"));
        }
    }
    Tensor::from_vec(out, &[d, c_new, p, p])
}

/// Extend a pixel-prediction head `w: [D_d, p^2*c]`, `b: [p^2*c]` to
/// `c' > c` bands. Existing pixel columns are copied bit-exactly; columns
/// for new-band pixels are zero (predicting the per-patch-normalized
/// mean). Patch vectors are channel-major, so each band's pixels form one
/// contiguous column block.
pub fn inflate_pixel_head<T: Element>(
    w: &Tensor<T>,
    b: &Tensor<T>,
    bands: usize,
    new_bands: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let wshape = w.shape();
    let bshape = b.shape();
    if wshape.len() != 2 || bshape.len() != 1 || wshape[1] != bshape[0] {
        return Err(Error::InvalidDim(format!(
            "inflate_pixel_head expects w=[D_d, p^2*c], b=[p^2*c], got {wshape:?} / {bshape:?}"
        )));
    }
    if new_bands <= bands || wshape[1] % bands != 0 {
        return Err(Error::Config(format!(
            "cannot inflate pixel head of width {} from {bands} to {new_bands} bands",
            wshape[1]
        )));
    }
    let dd = wshape[0];
    let pp = wshape[1] / bands; // pixels per band
    let new_cols = pp * new_bands;
    let wsrc = w.to_vec();
    let bsrc = b.to_vec();
    let mut wout = vec![T::zero(); dd * new_cols];
    for row in 0..dd {
        wout[row * new_cols..row * new_cols + pp * bands]
            .copy_from_slice(&wsrc[row * pp * bands..(row + 1) * pp * bands]);
    }
    let mut bout = vec![T::zero(); new_cols];
    bout[..pp * bands].copy_from_slice(&bsrc);
    Ok((
        Tensor::from_vec(wout, &[dd, new_cols])?,
        Tensor::from_vec(bout, &[new_cols])?,
    ))
}

fn empirical_std<T: Element>(values: &[T]) -> f64 {
    let n = values.len() as f64;
    let mean: f64 = values.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var: f64 = values
        .iter()
        .map(|v| {
            let c = v.as_f64() - mean;
            c * c
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Corner-aligned source coordinate for output index `i` of `n_out` samples
/// over `n_in` source samples.
fn src_coord(i: usize, n_out: usize, n_in: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear sample of a `rows x cols` grid at corner-aligned coordinates.
/// Uses the incremental form `v0 + t*(v1 - v0)` so constant inputs stay
/// exactly constant and integer coordinates copy values bit-exactly.
fn bilinear_at<T: Element>(grid: &[T], rows: usize, cols: usize, y: f64, x: f64) -> T {
    let y0 = (y.floor() as usize).min(rows - 1);
    let x0 = (x.floor() as usize).min(cols - 1);
    let y1 = (y0 + 1).min(rows - 1);
    let x1 = (x0 + 1).min(cols - 1);
    let ty = T::from_f64(y - y0 as f64);
    let tx = T::from_f64(x - x0 as f64);
    let v00 = grid[y0 * cols + x0];
    let v01 = grid[y0 * cols + x1];
    let v10 = grid[y1 * cols + x0];
    let v11 = grid[y1 * cols + x1];
    let top = v00 + tx * (v01 - v00);
    let bot = v10 + tx * (v11 - v10);
    top + ty * (bot - top)
}

fn cubic_kernel(t: f64) -> f64 {
    // Catmull-Rom (a = -0.5)
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

fn bicubic_at<T: Element>(grid: &[T], rows: usize, cols: usize, y: f64, x: f64) -> T {
    let y0 = y.floor() as isize;
    let x0 = x.floor() as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut acc = 0.0f64;
    for dy in -1..=2isize {
        let wy = cubic_kernel(y - (y0 + dy) as f64);
        if wy == 0.0 {
            continue;
        }
        let ry = clamp(y0 + dy, rows);
        for dx in -1..=2isize {
            let wx = cubic_kernel(x - (x0 + dx) as f64);
            if wx == 0.0 {
                continue;
            }
            let rx = clamp(x0 + dx, cols);
            acc += wy * wx * grid[ry * cols + rx].as_f64();
        }
    }
    T::from_f64(acc)
}

fn resample_grid<T: Element>(
    grid: &[T],
    n_in: usize,
    n_out: usize,
    method: InterpMethod,
) -> Vec<T> {
    let mut out = vec![T::zero(); n_out * n_out];
    for oy in 0..n_out {
        let sy = src_coord(oy, n_out, n_in);
        for ox in 0..n_out {
            let sx = src_coord(ox, n_out, n_in);
            out[oy * n_out + ox] = match method {
                InterpMethod::Bilinear => bilinear_at(grid, n_in, n_in, sy, sx),
                InterpMethod::Bicubic => bicubic_at(grid, n_in, n_in, sy, sx),
            };
        }
    }
    out
}

/// Resample each `(d, channel)` filter of a `[D, c, p, p]` patch embedding
/// to `p' x p'` on a corner-aligned grid.
pub fn interp_patch_filters<T: Element>(
    w: &Tensor<T>,
    new_patch: usize,
    method: InterpMethod,
) -> Result<Tensor<T>> {
    let shape = w.shape();
    if shape.len() != 4 || shape[2] != shape[3] {
        return Err(Error::InvalidDim(format!(
            "interp_patch_filters expects [D, c, p, p], got {shape:?}"
        )));
    }
    if new_patch < 2 {
        return Err(Error::InvalidDim(format!(
            "target patch side {new_patch} must be >= 2"
        )));
    }
    let (d, c, p) = (shape[0], shape[1], shape[2]);
    let src = w.to_vec();
    let mut out = Vec::with_capacity(d * c * new_patch * new_patch);
    for dc in 0..d * c {
        let filt = &src[dc * p * p..(dc + 1) * p * p];
        out.extend(resample_grid(filt, p, new_patch, method));
    }
    Tensor::from_vec(out, &[d, c, new_patch, new_patch])
}

/// Resample the grid portion of a positional table `[g^2(+1), D]` to a
/// `g' x g'` grid, lane by lane. A leading cls row, when present, passes
/// through untouched; `g' == g` is the exact identity.
pub fn interp_pos_embed<T: Element>(
    pos: &Tensor<T>,
    new_grid: usize,
    method: InterpMethod,
) -> Result<Tensor<T>> {
    let shape = pos.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidDim(format!(
            "interp_pos_embed expects [tokens, D], got {shape:?}"
        )));
    }
    if new_grid < 1 {
        return Err(Error::InvalidDim("target grid must be >= 1".into()));
    }
    let (tokens, d) = (shape[0], shape[1]);
    let exact = (tokens as f64).sqrt() as usize;
    let (g, cls) = if exact * exact == tokens {
        (exact, false)
    } else {
        let e = ((tokens - 1) as f64).sqrt() as usize;
        if tokens >= 2 && e * e == tokens - 1 {
            (e, true)
        } else {
            return Err(Error::InvalidDim(format!(
                "token count {tokens} is neither g^2 nor g^2+1"
            )));
        }
    };
    let src = pos.to_vec();
    let skip = usize::from(cls);
    let new_tokens = new_grid * new_grid + skip;
    let mut out = vec![T::zero(); new_tokens * d];
    if cls {
        out[..d].copy_from_slice(&src[..d]);
    }
    let mut lane_in = vec![T::zero(); g * g];
    for lane in 0..d {
        for i in 0..g * g {
            lane_in[i] = src[(skip + i) * d + lane];
        }
        let lane_out = resample_grid(&lane_in, g, new_grid, method);
        for (i, v) in lane_out.into_iter().enumerate() {
            out[(skip + i) * d + lane] = v;
        }
    }
    Tensor::from_vec(out, &[new_tokens, d])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filt(data: Vec<f64>, d: usize, c: usize, p: usize) -> Tensor<f64> {
        Tensor::from_vec(data, &[d, c, p, p]).unwrap()
    }

    #[test]
    fn zero_inflation_copies_source_exactly() {
        let w = filt((0..2 * 3 * 4).map(|i| i as f64 * 0.1).collect(), 2, 3, 2);
        let spec = InflationSpec {
            new_band_count: 4,
            init: InitMode::Zero,
        };
        let out = inflate_bands(&w, &spec).unwrap();
        assert_eq!(out.shape(), vec![2, 4, 2, 2]);
        let src = w.to_vec();
        let dst = out.to_vec();
        for d in 0..2 {
            for ch in 0..3 {
                for i in 0..4 {
                    assert_eq!(dst[(d * 4 + ch) * 4 + i], src[(d * 3 + ch) * 4 + i]);
                }
            }
            for i in 0..4 {
                assert_eq!(dst[(d * 4 + 3) * 4 + i], 0.0);
            }
        }
    }

    #[test]
    fn random_inflation_is_deterministic_per_seed() {
        let w = filt((0..3 * 3 * 9).map(|i| (i as f64).sin()).collect(), 3, 3, 3);
        let spec = InflationSpec::random(4, 77);
        let a = inflate_bands(&w, &spec).unwrap().to_vec();
        let b = inflate_bands(&w, &spec).unwrap().to_vec();
        assert_eq!(a, b);
        let other = inflate_bands(&w, &InflationSpec::random(4, 78)).unwrap().to_vec();
        assert_ne!(a, other);
    }

    #[test]
    fn mean_inflation_of_identical_channels_reproduces_them() {
        // three identical channel slices with exactly representable values
        let slice: Vec<f64> = vec![1.5, -2.0, 0.25, 4.0];
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&slice);
        }
        let w = filt(data, 1, 3, 2);
        let out = inflate_bands(
            &w,
            &InflationSpec {
                new_band_count: 4,
                init: InitMode::MeanOfExisting,
            },
        )
        .unwrap();
        let dst = out.to_vec();
        assert_eq!(&dst[3 * 4..4 * 4], slice.as_slice());
    }

    #[test]
    fn inflation_rejects_non_growing_band_count() {
        let w = filt(vec![0.0; 3 * 4], 1, 3, 2);
        assert!(inflate_bands(&w, &InflationSpec::random(3, 0)).is_err());
        assert!(inflate_bands(&w, &InflationSpec::random(2, 0)).is_err());
    }

    #[test]
    fn inflated_then_sliced_back_is_bit_exact() {
        let w = filt((0..2 * 2 * 4).map(|i| (i as f64).cos()).collect(), 2, 2, 2);
        let out = inflate_bands(&w, &InflationSpec::random(5, 3)).unwrap();
        let src = w.to_vec();
        let dst = out.to_vec();
        for d in 0..2 {
            for ch in 0..2 {
                for i in 0..4 {
                    assert_eq!(
                        dst[(d * 5 + ch) * 4 + i].to_bits(),
                        src[(d * 2 + ch) * 4 + i].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn bilinear_2x2_to_3x3_hand_case() {
        let w = filt(vec![0.0, 1.0, 2.0, 3.0], 1, 1, 2);
        let out = interp_patch_filters(&w, 3, InterpMethod::Bilinear).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
        let got = out.to_vec();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn constant_filter_stays_exactly_constant() {
        let w = filt(vec![0.37; 14 * 14], 1, 1, 14);
        let out = interp_patch_filters(&w, 16, InterpMethod::Bilinear).unwrap();
        assert_eq!(out.shape(), vec![1, 1, 16, 16]);
        for v in out.to_vec() {
            assert_eq!(v.to_bits(), 0.37f64.to_bits());
        }
    }

    #[test]
    fn filter_identity_when_sizes_match() {
        let w = filt((0..5 * 5).map(|i| (i as f64 * 0.7).sin()).collect(), 1, 1, 5);
        let out = interp_patch_filters(&w, 5, InterpMethod::Bilinear).unwrap();
        assert_eq!(out.to_vec(), w.to_vec());
    }

    #[test]
    fn vith_shape_case_14_to_16() {
        // shape contract of the published surgery: [1280,c,14,14] -> [1280,c,16,16]
        // (scaled down here: same arithmetic, fewer lanes)
        let d = 8;
        let w = filt((0..d * 3 * 196).map(|i| (i as f64 * 0.01).sin()).collect(), d, 3, 14);
        let out = interp_patch_filters(&w, 16, InterpMethod::Bilinear).unwrap();
        assert_eq!(out.shape(), vec![d, 3, 16, 16]);
        let out_cubic = interp_patch_filters(&w, 16, InterpMethod::Bicubic).unwrap();
        assert_eq!(out_cubic.shape(), vec![d, 3, 16, 16]);
    }

    #[test]
    fn filters_reject_tiny_target() {
        let w = filt(vec![0.0; 4], 1, 1, 2);
        assert!(interp_patch_filters(&w, 1, InterpMethod::Bilinear).is_err());
    }

    #[test]
    fn pos_embed_identity_resize_is_bit_exact() {
        let pe = crate::vit::build_pos_embed::<f64>(4, 8, true).unwrap();
        let out = interp_pos_embed(&pe, 4, InterpMethod::Bilinear).unwrap();
        assert_eq!(out.to_vec(), pe.to_vec());
    }

    #[test]
    fn pos_embed_cls_row_passes_through() {
        let pe = crate::vit::build_pos_embed::<f64>(3, 8, true).unwrap();
        let mut data = pe.to_vec();
        for v in &mut data[..8] {
            *v = 0.123456;
        }
        let pe = Tensor::from_vec(data, &[10, 8]).unwrap();
        let out = interp_pos_embed(&pe, 5, InterpMethod::Bilinear).unwrap();
        assert_eq!(out.shape(), vec![26, 8]);
        for v in &out.to_vec()[..8] {
            assert_eq!(*v, 0.123456);
        }
    }

    #[test]
    fn pos_embed_constant_lane_stays_constant() {
        // lane 0 constant across the grid
        let g = 3;
        let d = 4;
        let mut data = vec![0.0f64; g * g * d];
        for i in 0..g * g {
            data[i * d] = 2.5;
            data[i * d + 1] = i as f64;
        }
        let pe = Tensor::from_vec(data, &[g * g, d]).unwrap();
        let out = interp_pos_embed(&pe, 7, InterpMethod::Bilinear).unwrap();
        for i in 0..49 {
            assert_eq!(out.to_vec()[i * d], 2.5);
        }
    }

    #[test]
    fn pos_embed_rejects_malformed_token_count() {
        let pe = Tensor::from_vec(vec![0.0f64; 7 * 4], &[7, 4]).unwrap();
        assert!(interp_pos_embed(&pe, 3, InterpMethod::Bilinear).is_err());
    }
}
