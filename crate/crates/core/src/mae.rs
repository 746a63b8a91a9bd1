//! Masked-autoencoder objective: random patch masking, encoding of visible
//! patches only, a lightweight decoder with mask tokens, and reconstruction
//! loss restricted to masked patches.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::optim::ParamGroup;
use crate::seeds::{self, Purpose};
use crate::tensor::Tensor;
use crate::vit::{build_pos_embed, init_weight, Block, ViTModel, ViTRecipe, LN_EPS};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// MAE objective configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaeConfig {
    /// Fraction of patches to mask, in (0,1). The cited MAE default.
    pub mask_ratio: f64,
    pub decoder_width: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    /// Normalize each masked patch's target pixels to mean 0 / variance 1.
    pub norm_pix: bool,
}

impl Default for MaeConfig {
    fn default() -> Self {
        MaeConfig {
            mask_ratio: 0.75,
            decoder_width: 512,
            decoder_depth: 8,
            decoder_heads: 16,
            norm_pix: true,
        }
    }
}

impl MaeConfig {
    /// Decoder scaled down proportionally for desk-scale encoder widths.
    pub fn scaled_for(recipe: &ViTRecipe) -> Self {
        if recipe.width <= 256 {
            MaeConfig {
                decoder_width: (recipe.width / 2).max(16),
                decoder_depth: (recipe.depth / 2).max(1),
                decoder_heads: (recipe.heads / 2).max(1),
                ..Default::default()
            }
        } else {
            MaeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.mask_ratio && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!(
                "mask_ratio must be in (0,1), got {}",
                self.mask_ratio
            )));
        }
        if self.decoder_width % self.decoder_heads != 0 {
            return Err(Error::Config(format!(
                "decoder width {} must be divisible by heads {}",
                self.decoder_width, self.decoder_heads
            )));
        }
        Ok(())
    }
}

/// Shuffle plan over N patches: which patch indices stay visible, which are
/// masked, and the inverse permutation restoring canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub num_patches: usize,
    /// Shuffled patch indices; the first `keep` entries stay visible.
    pub shuffle: Vec<usize>,
    pub ids_keep: Vec<usize>,
    pub ids_mask: Vec<usize>,
    /// `ids_restore[original_index] = position in shuffle`.
    pub ids_restore: Vec<usize>,
}

impl MaskPlan {
    pub fn keep_count(&self) -> usize {
        self.ids_keep.len()
    }

    pub fn mask_count(&self) -> usize {
        self.ids_mask.len()
    }
}

/// Number of patches masked at ratio `r`: round-half-up of `r*N` (N*r is
/// not always integral).
pub fn masked_count(num_patches: usize, ratio: f64) -> usize {
    (ratio * num_patches as f64).round() as usize
}

/// Uniformly random mask plan, deterministic for a given `(N, r, seed)`.
pub fn make_mask(num_patches: usize, ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::Config(format!("mask ratio {ratio} out of (0,1)")));
    }
    if num_patches < 2 {
        return Err(Error::Config(format!(
            "need at least 2 patches to mask, got {num_patches}"
        )));
    }
    let masked = masked_count(num_patches, ratio);
    if masked < 1 || masked >= num_patches {
        return Err(Error::Config(format!(
            "mask ratio {ratio} on {num_patches} patches leaves a degenerate split \
             ({masked} masked)"
        )));
    }
    let mut rng = seeds::rng(seed, Purpose::Mask, 0);
    let mut shuffle: Vec<usize> = (0..num_patches).collect();
    // Fisher-Yates
    for i in (1..num_patches).rev() {
        let j = rng.gen_range(0..=i);
        shuffle.swap(i, j);
    }
    let keep = num_patches - masked;
    let ids_keep = shuffle[..keep].to_vec();
    let ids_mask = shuffle[keep..].to_vec();
    let mut ids_restore = vec![0usize; num_patches];
    for (pos, &orig) in shuffle.iter().enumerate() {
        ids_restore[orig] = pos;
    }
    Ok(MaskPlan {
        num_patches,
        shuffle,
        ids_keep,
        ids_mask,
        ids_restore,
    })
}

/// Split `[B, c, s, s]` images into flattened patches `[B, N, p^2*c]`.
/// Within a patch, values are channel-major (`[c][p][p]`), matching the
/// patch-embedding weight layout.
pub fn patchify<T: Element>(x: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() != 4 || shape[2] != shape[3] {
        return Err(Error::InvalidDim(format!(
            "patchify expects [B, c, s, s], got {shape:?}"
        )));
    }
    let (b, c, s) = (shape[0], shape[1], shape[2]);
    crate::vit::validate_input_size(s, patch)?;
    let g = s / patch;
    let n = g * g;
    let pd = c * patch * patch;
    let out = x.with_data(|data| {
        let mut out = vec![T::zero(); b * n * pd];
        for bi in 0..b {
            for gy in 0..g {
                for gx in 0..g {
                    let pidx = gy * g + gx;
                    for ch in 0..c {
                        for py in 0..patch {
                            for px in 0..patch {
                                let src = ((bi * c + ch) * s + gy * patch + py) * s
                                    + gx * patch
                                    + px;
                                let dst = (bi * n + pidx) * pd
                                    + (ch * patch + py) * patch
                                    + px;
                                out[dst] = data[src];
                            }
                        }
                    }
                }
            }
        }
        out
    });
    Tensor::from_vec(out, &[b, n, pd])
}

/// Inverse of `patchify`; bit-exact round trip.
pub fn unpatchify<T: Element>(patches: &Tensor<T>, patch: usize, bands: usize) -> Result<Tensor<T>> {
    let shape = patches.shape();
    if shape.len() != 3 || shape[2] != bands * patch * patch {
        return Err(Error::InvalidDim(format!(
            "unpatchify expects [B, N, p^2*c], got {shape:?}"
        )));
    }
    let (b, n, pd) = (shape[0], shape[1], shape[2]);
    let g = (n as f64).sqrt() as usize;
    if g * g != n {
        return Err(Error::InvalidDim(format!("patch count {n} is not square")));
    }
    let s = g * patch;
    let out = patches.with_data(|data| {
        let mut out = vec![T::zero(); b * bands * s * s];
        for bi in 0..b {
            for gy in 0..g {
                for gx in 0..g {
                    let pidx = gy * g + gx;
                    for ch in 0..bands {
                        for py in 0..patch {
                            for px in 0..patch {
                                let dst = ((bi * bands + ch) * s + gy * patch + py) * s
                                    + gx * patch
                                    + px;
                                let src = (bi * n + pidx) * pd
                                    + (ch * patch + py) * patch
                                    + px;
                                out[dst] = data[src];
                            }
                        }
                    }
                }
            }
        }
        out
    });
    Tensor::from_vec(out, &[b, bands, s, s])
}

/// Lightweight MAE decoder (mask tokens plus a short pre-norm stack).
pub struct MaeDecoder<T: Element> {
    pub embed_w: Tensor<T>,
    pub embed_b: Tensor<T>,
    pub mask_token: Tensor<T>,
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    pub norm_w: Tensor<T>,
    pub norm_b: Tensor<T>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
    width: usize,
    cls: bool,
}

impl<T: Element> MaeDecoder<T> {
    pub fn init(recipe: &ViTRecipe, config: &MaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = recipe.width;
        let dd = config.decoder_width;
        let pd = recipe.patch_dim();
        let mut rng = seeds::rng(seed, Purpose::Init, 1000);
        let blocks = (0..config.decoder_depth)
            .map(|i| {
                let mut brng = seeds::rng(seed, Purpose::Init, 1001 + i as u64);
                Block::init(dd, 4 * dd, config.decoder_heads, &mut brng)
            })
            .collect();
        Ok(MaeDecoder {
            embed_w: init_weight(&mut rng, &[d, dd], 0.02),
            embed_b: Tensor::param(vec![T::zero(); dd], &[dd]).unwrap(),
            mask_token: init_weight(&mut rng, &[dd], 0.02),
            pos_embed: build_pos_embed::<T>(recipe.grid(), dd, recipe.cls_token)?,
            blocks,
            norm_w: Tensor::param(vec![T::one(); dd], &[dd]).unwrap(),
            norm_b: Tensor::param(vec![T::zero(); dd], &[dd]).unwrap(),
            head_w: init_weight(&mut rng, &[dd, pd], 0.02),
            head_b: Tensor::param(vec![T::zero(); pd], &[pd]).unwrap(),
            width: dd,
            cls: recipe.cls_token,
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = vec![
            ("decoder.embed.weight".to_string(), self.embed_w.clone()),
            ("decoder.embed.bias".to_string(), self.embed_b.clone()),
            ("decoder.mask_token".to_string(), self.mask_token.clone()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let mut bp = Vec::new();
            block_params_into(b, &format!("decoder.blocks.{i}"), &mut bp);
            out.extend(bp);
        }
        out.push(("decoder.norm.weight".into(), self.norm_w.clone()));
        out.push(("decoder.norm.bias".into(), self.norm_b.clone()));
        out.push(("decoder.head.weight".into(), self.head_w.clone()));
        out.push(("decoder.head.bias".into(), self.head_b.clone()));
        out
    }

    pub fn state_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.named_params();
        out.push(("decoder.pos_embed".into(), self.pos_embed.clone()));
        out
    }
}

fn block_params_into<T: Element>(
    block: &Block<T>,
    prefix: &str,
    out: &mut Vec<(String, Tensor<T>)>,
) {
    // reuse the encoder block naming through a temporary model-less path
    let mut tmp: Vec<(String, Tensor<T>)> = Vec::new();
    block.collect_params(prefix, &mut tmp);
    out.extend(tmp);
}

/// Encoder + decoder pair trained with the MAE objective.
pub struct MaeModel<T: Element> {
    pub encoder: ViTModel<T>,
    pub decoder: MaeDecoder<T>,
    pub config: MaeConfig,
}

impl<T: Element> MaeModel<T> {
    pub fn init(recipe: &ViTRecipe, config: MaeConfig, seed: u64) -> Result<Self> {
        let encoder = ViTModel::init(recipe, seed)?;
        let decoder = MaeDecoder::init(recipe, &config, seed)?;
        Ok(MaeModel {
            encoder,
            decoder,
            config,
        })
    }

    /// Encode only the visible patches (plus cls): `[B, keep(+1), D]`.
    pub fn encode_visible(&self, patches: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
        let embedded = self.encoder.embed_patches(patches)?;
        let visible = embedded.gather(1, &plan.ids_keep)?;
        let mut x = self.encoder.prepend_cls(&visible)?;
        for block in &self.encoder.blocks {
            x = block.forward(&x)?;
        }
        x.layernorm(
            &self.encoder.norm_w,
            &self.encoder.norm_b,
            T::from_f64(LN_EPS),
        )
    }

    /// Decode the full unshuffled sequence with mask tokens; returns
    /// per-patch pixel predictions `[B, N, p^2*c]`.
    pub fn decode(&self, encoded: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
        let eshape = encoded.shape();
        let (b, dd) = (eshape[0], self.decoder.width);
        let n = plan.num_patches;
        let skip = usize::from(self.decoder.cls);

        let tokens = encoded.linear(&self.decoder.embed_w, &self.decoder.embed_b)?;
        let patch_part = {
            let rows: Vec<usize> = (skip..eshape[1]).collect();
            tokens.gather(1, &rows)?
        };
        let masked = Tensor::zeros(&[b, plan.mask_count(), dd]).add(&self.decoder.mask_token)?;
        let shuffled_full = Tensor::concat(&patch_part, &masked, 1)?;
        // ids_restore maps canonical position -> shuffled slot
        let restored = shuffled_full.gather(1, &plan.ids_restore)?;

        let mut x = if skip == 1 {
            let cls_rows = tokens.gather(1, &[0])?;
            Tensor::concat(&cls_rows, &restored, 1)?
        } else {
            restored
        };
        // decoder positional table covers cls + grid
        let pos = self.decoder.pos_embed.to_vec();
        let mut tiled = Vec::with_capacity(b * (n + skip) * dd);
        for _ in 0..b {
            tiled.extend_from_slice(&pos);
        }
        let pos_t = Tensor::from_vec(tiled, &[b, n + skip, dd])?;
        x = x.add(&pos_t)?;

        for block in &self.decoder.blocks {
            x = block.forward(&x)?;
        }
        let x = x.layernorm(
            &self.decoder.norm_w,
            &self.decoder.norm_b,
            T::from_f64(LN_EPS),
        )?;
        let pred = x.linear(&self.decoder.head_w, &self.decoder.head_b)?;
        let patch_rows: Vec<usize> = (skip..skip + n).collect();
        pred.gather(1, &patch_rows)
    }

    /// Reconstruction targets for the masked patches, optionally per-patch
    /// normalized (mean 0 / variance 1, eps-stabilized).
    pub fn masked_targets(&self, patches: &Tensor<T>, plan: &MaskPlan) -> Result<Tensor<T>> {
        let gathered = patches.detach().gather(1, &plan.ids_mask)?;
        if !self.config.norm_pix {
            return Ok(gathered.detach());
        }
        let shape = gathered.shape();
        let pd = shape[2];
        let pdt = T::from_f64(pd as f64);
        let eps = T::from_f64(1e-6);
        let data = gathered.to_vec();
        let mut out = vec![T::zero(); data.len()];
        for (row, orow) in data.chunks(pd).zip(out.chunks_mut(pd)) {
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean / pdt;
            let mut var = T::zero();
            for &v in row {
                let c = v - mean;
                var = var + c * c;
            }
            var = var / pdt;
            let inv = T::one() / (var + eps).sqrt();
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        Tensor::from_vec(out, &shape)
    }

    /// Full objective: encode visible, decode, and mean per-patch MSE over
    /// masked patches only. Returns `(pred [B,N,p^2*c], loss)`.
    pub fn forward(&self, patches: &Tensor<T>, plan: &MaskPlan) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = patches.shape()[1];
        if n != plan.num_patches || n != self.encoder.recipe.num_patches() {
            return Err(Error::ShapeMismatch {
                context: "mask plan / model grid mismatch".into(),
                lhs: vec![n],
                rhs: vec![plan.num_patches, self.encoder.recipe.num_patches()],
            });
        }
        let encoded = self.encode_visible(patches, plan)?;
        let pred = self.decode(&encoded, plan)?;
        let pred_masked = pred.gather(1, &plan.ids_mask)?;
        let targets = self.masked_targets(patches, plan)?;
        let loss = pred_masked.mse_loss(&targets)?;
        Ok((pred, loss))
    }

    /// Trainable parameters: encoder groups keep their layer indices, all
    /// decoder parameters share the head group.
    pub fn named_params(&self) -> Vec<(String, Tensor<T>, usize)> {
        let mut out = self.encoder.named_params();
        let head_group = self.encoder.recipe.depth + 1;
        out.extend(
            self.decoder
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t, head_group)),
        );
        out
    }

    pub fn state_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.encoder.state_tensors();
        out.extend(self.decoder.state_tensors());
        out
    }

    pub fn param_groups(&self, weight_decay: f64, exempt: bool) -> Vec<ParamGroup<T>> {
        self.named_params()
            .into_iter()
            .map(|(name, tensor, _)| {
                let wd = if exempt && crate::optim::is_decay_exempt(&name) {
                    0.0
                } else {
                    weight_decay
                };
                ParamGroup {
                    name,
                    tensor,
                    lr_mult: 1.0,
                    weight_decay: wd,
                }
            })
            .collect()
    }
}
