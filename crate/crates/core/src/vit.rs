//! Vision Transformer encoder: named shape recipes, analytic parameter
//! counting, fixed 2-D sine-cosine positional embeddings, pre-norm blocks
//! and block-tap feature extraction.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::optim::ParamGroup;
use crate::seeds::{self, Purpose};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const LN_EPS: f64 = 1e-6;

/// Architecture shape recipe: width/depth/MLP/heads/patch plus the input
/// geometry (band count and image side).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTRecipe {
    pub name: String,
    /// Embedding size D.
    pub width: usize,
    /// Encoder block count L.
    pub depth: usize,
    /// MLP hidden size M.
    pub mlp: usize,
    /// Attention head count H.
    pub heads: usize,
    /// Patch side in pixels.
    pub patch: usize,
    /// Input channel count.
    pub bands: usize,
    /// Input image side in pixels.
    pub image: usize,
    /// Prepend a learnable classification token.
    #[serde(default = "default_true")]
    pub cls_token: bool,
}

fn default_true() -> bool {
    true
}

impl ViTRecipe {
    fn named(name: &str, width: usize, depth: usize, mlp: usize, heads: usize, patch: usize) -> Self {
        ViTRecipe {
            name: name.to_string(),
            width,
            depth,
            mlp,
            heads,
            patch,
            bands: 3,
            image: 224,
            cls_token: true,
        }
    }

    pub fn vit_b() -> Self {
        Self::named("vit-b", 768, 12, 3072, 12, 16)
    }

    pub fn vit_h() -> Self {
        Self::named("vit-h", 1280, 32, 5120, 16, 14)
    }

    pub fn vit_g() -> Self {
        Self::named("vit-g", 1536, 32, 6144, 16, 14)
    }

    pub fn vit_e() -> Self {
        Self::named("vit-e", 2816, 32, 11264, 32, 14)
    }

    /// Desk-scale recipe for CPU experiments. No cls token: probing pools
    /// the patch-token mean.
    pub fn vit_tiny() -> Self {
        ViTRecipe {
            name: "vit-tiny".to_string(),
            width: 128,
            depth: 4,
            mlp: 512,
            heads: 4,
            patch: 8,
            bands: 4,
            image: 32,
            cls_token: false,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "vit-b" => Some(Self::vit_b()),
            "vit-h" => Some(Self::vit_h()),
            "vit-g" => Some(Self::vit_g()),
            "vit-e" => Some(Self::vit_e()),
            "vit-tiny" => Some(Self::vit_tiny()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} must be divisible by heads {}",
                self.width, self.heads
            )));
        }
        validate_input_size(self.image, self.patch)?;
        Ok(())
    }

    /// Patch grid side g = s / p.
    pub fn grid(&self) -> usize {
        self.image / self.patch
    }

    /// Patch token count N = g^2.
    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Sequence length including the cls token when enabled.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + usize::from(self.cls_token)
    }

    /// Flattened per-patch pixel count.
    pub fn patch_dim(&self) -> usize {
        self.bands * self.patch * self.patch
    }
}

/// Check that an image side is an integer number of patches. On failure the
/// error carries the nearest smaller valid size.
pub fn validate_input_size(image: usize, patch: usize) -> Result<()> {
    if image == 0 || patch == 0 {
        return Err(Error::InvalidDim("image and patch sizes must be > 0".into()));
    }
    if image % patch != 0 {
        let floor = (image / patch) * patch;
        return Err(Error::IndivisibleImage {
            size: image,
            patch,
            suggestion: if floor > 0 { floor } else { patch },
        });
    }
    Ok(())
}

/// Parameter-count convention. Published counts rarely state whether the
/// MAE decoder is included, so both are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountConvention {
    EncoderOnly,
    /// Adds an MAE decoder of the given width/depth (MLP ratio 4).
    EncoderPlusDecoder { decoder_width: usize, decoder_depth: usize },
}

fn block_params(width: u64, mlp: u64) -> u64 {
    // attention: q/k/v/out projections with biases; MLP: two affines;
    // two layernorms
    4 * width * width + 4 * width + 2 * width * mlp + width + mlp + 4 * width
}

/// Closed-form parameter count of an instantiated model, i.e. every tensor
/// a checkpoint stores. The fixed sine-cosine positional table is included:
/// it is part of the model state (reference implementations register it as
/// a frozen parameter), and counting it keeps the analytic number equal to
/// the enumerated one.
pub fn count_params(recipe: &ViTRecipe, convention: CountConvention) -> u64 {
    let d = recipe.width as u64;
    let c = recipe.bands as u64;
    let p = recipe.patch as u64;
    let l = recipe.depth as u64;
    let m = recipe.mlp as u64;
    let tokens = recipe.seq_len() as u64;

    let mut total = 0u64;
    total += c * p * p * d + d; // patch embedding + bias
    if recipe.cls_token {
        total += d;
    }
    total += tokens * d; // fixed sin-cos table
    total += l * block_params(d, m);
    total += 2 * d; // final norm

    if let CountConvention::EncoderPlusDecoder { decoder_width, decoder_depth } = convention {
        let dd = decoder_width as u64;
        let ld = decoder_depth as u64;
        let md = 4 * dd;
        total += d * dd + dd; // encoder-to-decoder embed
        total += dd; // mask token
        total += tokens * dd; // decoder sin-cos table
        total += ld * block_params(dd, md);
        total += 2 * dd; // decoder norm
        total += dd * (p * p * c) + p * p * c; // pixel prediction head
    }
    total
}

/// Deterministic 2-D sine-cosine table for a g x g grid, `[g*g, D]`.
/// Lanes split half for row coordinates, half for column coordinates; each
/// half is sines then cosines. Requires `D % 4 == 0`.
pub fn sincos_pos_embed<T: Element>(grid: usize, width: usize) -> Result<Tensor<T>> {
    if width % 4 != 0 {
        return Err(Error::InvalidDim(format!(
            "sincos positional embedding needs width % 4 == 0, got {width}"
        )));
    }
    let quarter = width / 4;
    let omegas: Vec<f64> = (0..quarter)
        .map(|i| 1.0 / 10000f64.powf(i as f64 / quarter as f64))
        .collect();
    let mut data = vec![T::zero(); grid * grid * width];
    for row in 0..grid {
        for col in 0..grid {
            let base = (row * grid + col) * width;
            for (i, &w) in omegas.iter().enumerate() {
                let hr = row as f64 * w;
                let wc = col as f64 * w;
                data[base + i] = T::from_f64(hr.sin());
                data[base + quarter + i] = T::from_f64(hr.cos());
                data[base + 2 * quarter + i] = T::from_f64(wc.sin());
                data[base + 3 * quarter + i] = T::from_f64(wc.cos());
            }
        }
    }
    Tensor::from_vec(data, &[grid * grid, width])
}

/// One pre-norm transformer block: norm -> attention -> residual,
/// norm -> MLP -> residual.
pub struct Block<T: Element> {
    pub norm1_w: Tensor<T>,
    pub norm1_b: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub norm2_w: Tensor<T>,
    pub norm2_b: Tensor<T>,
    pub mlp_w1: Tensor<T>,
    pub mlp_b1: Tensor<T>,
    pub mlp_w2: Tensor<T>,
    pub mlp_b2: Tensor<T>,
    heads: usize,
}

pub(crate) fn init_weight<T: Element>(
    rng: &mut impl Rng,
    shape: &[usize],
    std: f64,
) -> Tensor<T> {
    let normal = Normal::new(0.0f64, std).expect("valid std");
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::param(data, shape).expect("shape checked by caller")
}

impl<T: Element> Block<T> {
    pub fn init(width: usize, mlp: usize, heads: usize, rng: &mut impl Rng) -> Self {
        let d = width;
        Block {
            norm1_w: Tensor::param(vec![T::one(); d], &[d]).unwrap(),
            norm1_b: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            wq: init_weight(rng, &[d, d], 0.02),
            bq: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            wk: init_weight(rng, &[d, d], 0.02),
            bk: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            wv: init_weight(rng, &[d, d], 0.02),
            bv: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            wo: init_weight(rng, &[d, d], 0.02),
            bo: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            norm2_w: Tensor::param(vec![T::one(); d], &[d]).unwrap(),
            norm2_b: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            mlp_w1: init_weight(rng, &[d, mlp], 0.02),
            mlp_b1: Tensor::param(vec![T::zero(); mlp], &[mlp]).unwrap(),
            mlp_w2: init_weight(rng, &[mlp, d], 0.02),
            mlp_b2: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
            heads,
        }
    }

    /// Scaled dot-product self-attention over `[B, S, D]`.
    fn attention(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape();
        let (b, s, d) = (shape[0], shape[1], shape[2]);
        let h = self.heads;
        let dh = d / h;
        let split = |t: &Tensor<T>| -> Result<Tensor<T>> {
            t.reshape(&[b, s, h, dh])?.permute(&[0, 2, 1, 3])
        };
        let q = split(&x.linear(&self.wq, &self.bq)?)?;
        let k = split(&x.linear(&self.wk, &self.bk)?)?;
        let v = split(&x.linear(&self.wv, &self.bv)?)?;
        let scores = q
            .matmul(&k.permute(&[0, 1, 3, 2])?)?
            .scale(T::from_f64(1.0 / (dh as f64).sqrt()))?;
        let attn = scores.softmax()?;
        let ctx = attn
            .matmul(&v)?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, s, d])?;
        ctx.linear(&self.wo, &self.bo)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let eps = T::from_f64(LN_EPS);
        let h = x.layernorm(&self.norm1_w, &self.norm1_b, eps)?;
        let x = x.add(&self.attention(&h)?)?;
        let h2 = x.layernorm(&self.norm2_w, &self.norm2_b, eps)?;
        let m = h2
            .linear(&self.mlp_w1, &self.mlp_b1)?
            .gelu()?
            .linear(&self.mlp_w2, &self.mlp_b2)?;
        x.add(&m)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        let pairs: [(&str, &Tensor<T>); 16] = [
            ("norm1.weight", &self.norm1_w),
            ("norm1.bias", &self.norm1_b),
            ("attn.q.weight", &self.wq),
            ("attn.q.bias", &self.bq),
            ("attn.k.weight", &self.wk),
            ("attn.k.bias", &self.bk),
            ("attn.v.weight", &self.wv),
            ("attn.v.bias", &self.bv),
            ("attn.proj.weight", &self.wo),
            ("attn.proj.bias", &self.bo),
            ("norm2.weight", &self.norm2_w),
            ("norm2.bias", &self.norm2_b),
            ("mlp.fc1.weight", &self.mlp_w1),
            ("mlp.fc1.bias", &self.mlp_b1),
            ("mlp.fc2.weight", &self.mlp_w2),
            ("mlp.fc2.bias", &self.mlp_b2),
        ];
        for (name, t) in pairs {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}

/// ViT encoder instantiated from a recipe. Immutable during forward;
/// parameter mutation happens only between steps.
pub struct ViTModel<T: Element> {
    pub recipe: ViTRecipe,
    /// `[D, c, p, p]` patchify projection.
    pub patch_embed_w: Tensor<T>,
    pub patch_embed_b: Tensor<T>,
    /// `[D]`, present when the recipe enables it.
    pub cls_token: Option<Tensor<T>>,
    /// `[seq_len, D]` fixed sin-cos table (zero row for the cls slot).
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<Block<T>>,
    pub norm_w: Tensor<T>,
    pub norm_b: Tensor<T>,
}

impl<T: Element> ViTModel<T> {
    pub fn init(recipe: &ViTRecipe, seed: u64) -> Result<Self> {
        recipe.validate()?;
        let d = recipe.width;
        let mut rng = seeds::rng(seed, Purpose::Init, 0);
        let patch_embed_w = init_weight(
            &mut rng,
            &[d, recipe.bands, recipe.patch, recipe.patch],
            0.02,
        );
        let patch_embed_b = Tensor::param(vec![T::zero(); d], &[d]).unwrap();
        let cls_token = recipe
            .cls_token
            .then(|| init_weight(&mut rng, &[d], 0.02));
        let pos_embed = build_pos_embed::<T>(recipe.grid(), d, recipe.cls_token)?;
        let blocks = (0..recipe.depth)
            .map(|i| {
                let mut brng = seeds::rng(seed, Purpose::Init, 1 + i as u64);
                Block::init(d, recipe.mlp, recipe.heads, &mut brng)
            })
            .collect();
        Ok(ViTModel {
            recipe: recipe.clone(),
            patch_embed_w,
            patch_embed_b,
            cls_token,
            pos_embed,
            blocks,
            norm_w: Tensor::param(vec![T::one(); d], &[d]).unwrap(),
            norm_b: Tensor::param(vec![T::zero(); d], &[d]).unwrap(),
        })
    }

    /// Project flattened patches `[B, N, p^2*c]` to tokens and add the grid
    /// part of the positional table. No cls token yet.
    pub fn embed_patches(&self, patches: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.recipe.width;
        let pd = self.recipe.patch_dim();
        let shape = patches.shape();
        if shape.len() != 3 || shape[2] != pd || shape[1] != self.recipe.num_patches() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "embed_patches expects [B, {}, {}] for a {}x{} image with {}px patches",
                    self.recipe.num_patches(),
                    pd,
                    self.recipe.image,
                    self.recipe.image,
                    self.recipe.patch
                ),
                lhs: shape,
                rhs: vec![0, self.recipe.num_patches(), pd],
            });
        }
        let w = self.patch_embed_w.reshape(&[d, pd])?.permute(&[1, 0])?;
        let tokens = patches.matmul(&w)?.add(&self.patch_embed_b)?;
        let pos = self.grid_pos_embed_tiled(shape[0], shape[1])?;
        tokens.add(&pos)
    }

    /// Constant `[B, N, D]` tensor tiling the grid rows of the positional
    /// table (the table is frozen, so this stays outside the graph).
    fn grid_pos_embed_tiled(&self, batch: usize, n: usize) -> Result<Tensor<T>> {
        let d = self.recipe.width;
        let skip = usize::from(self.recipe.cls_token);
        let pos = self.pos_embed.to_vec();
        let grid_rows = &pos[skip * d..(skip + n) * d];
        let mut tiled = Vec::with_capacity(batch * n * d);
        for _ in 0..batch {
            tiled.extend_from_slice(grid_rows);
        }
        Tensor::from_vec(tiled, &[batch, n, d])
    }

    /// Prepend the cls token (with its positional row) to `[B, N, D]`.
    pub fn prepend_cls(&self, tokens: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.cls_token {
            None => Ok(tokens.clone()),
            Some(cls) => {
                let shape = tokens.shape();
                let (b, d) = (shape[0], shape[2]);
                let zeros = Tensor::zeros(&[b, 1, d]);
                let cls_row = zeros.add(cls)?;
                Tensor::concat(&cls_row, tokens, 1)
            }
        }
    }

    /// Full encoder pass over flattened patches: embed, cls, blocks, final
    /// norm. Returns `[B, seq_len, D]`.
    pub fn forward_patches(&self, patches: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = self.prepend_cls(&self.embed_patches(patches)?)?;
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        x.layernorm(&self.norm_w, &self.norm_b, T::from_f64(LN_EPS))
    }

    /// Post-block activations at each tap index (pre-final-norm), with the
    /// cls token dropped: a list of `[B, N, D]`.
    pub fn forward_features(
        &self,
        patches: &Tensor<T>,
        taps: &[usize],
    ) -> Result<Vec<Tensor<T>>> {
        let depth = self.recipe.depth;
        if taps.is_empty() {
            return Err(Error::InvalidDim("taps must be non-empty".into()));
        }
        if taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDim(format!(
                "taps must be strictly increasing: {taps:?}"
            )));
        }
        if *taps.last().unwrap() >= depth {
            return Err(Error::InvalidDim(format!(
                "tap {} out of range for depth {depth}",
                taps.last().unwrap()
            )));
        }
        let mut x = self.prepend_cls(&self.embed_patches(patches)?)?;
        let skip = usize::from(self.recipe.cls_token);
        let n = x.shape()[1] - skip;
        let patch_rows: Vec<usize> = (skip..skip + n).collect();
        let mut out = Vec::with_capacity(taps.len());
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x)?;
            if taps.contains(&i) {
                out.push(x.gather(1, &patch_rows)?);
            }
        }
        Ok(out)
    }

    /// Pooled representation for probing: the cls token when present,
    /// otherwise the mean over patch tokens. Input is the final-normed
    /// sequence `[B, S, D]`; output `[B, D]`.
    pub fn pool(&self, sequence: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = sequence.shape();
        let (b, s, d) = (shape[0], shape[1], shape[2]);
        if self.recipe.cls_token {
            sequence.gather(1, &[0])?.reshape(&[b, d])
        } else {
            let summed = sequence
                .permute(&[0, 2, 1])?
                .matmul(&Tensor::full(&[s, 1], T::from_f64(1.0 / s as f64)))?;
            summed.reshape(&[b, d])
        }
    }

    /// Trainable parameters with layer-decay group indices: embedding
    /// tensors are group 0, block `i` is group `i+1`. Heads added by
    /// downstream tasks take group `L+1`.
    pub fn named_params(&self) -> Vec<(String, Tensor<T>, usize)> {
        let mut flat: Vec<(String, Tensor<T>)> = vec![
            ("patch_embed.weight".into(), self.patch_embed_w.clone()),
            ("patch_embed.bias".into(), self.patch_embed_b.clone()),
        ];
        if let Some(cls) = &self.cls_token {
            flat.push(("cls_token".into(), cls.clone()));
        }
        let mut out: Vec<(String, Tensor<T>, usize)> = flat
            .into_iter()
            .map(|(n, t)| (n, t, 0usize))
            .collect();
        for (i, block) in self.blocks.iter().enumerate() {
            let mut bp = Vec::new();
            block.collect_params(&format!("blocks.{i}"), &mut bp);
            out.extend(bp.into_iter().map(|(n, t)| (n, t, i + 1)));
        }
        out.push(("norm.weight".into(), self.norm_w.clone(), self.recipe.depth + 1));
        out.push(("norm.bias".into(), self.norm_b.clone(), self.recipe.depth + 1));
        out
    }

    /// Every persistent tensor, including the frozen positional table.
    /// This is what checkpoints store and what the analytic parameter
    /// count reproduces.
    pub fn state_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> = self
            .named_params()
            .into_iter()
            .map(|(n, t, _)| (n, t))
            .collect();
        out.push(("pos_embed".into(), self.pos_embed.clone()));
        out
    }

    /// Plain parameter groups (uniform lr, decay from `exempt` rule).
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

    /// Freeze or unfreeze every trainable parameter.
    pub fn set_trainable(&self, trainable: bool) {
        for (_, t, _) in self.named_params() {
            t.set_requires_grad(trainable);
        }
    }

    /// FNV-1a checksum over the little-endian bytes of all state tensors,
    /// in state order. Bit-exact equality proxy.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for (_, t) in self.state_tensors() {
            t.with_data(|data| {
                let mut bytes = Vec::with_capacity(data.len() * 8);
                for &v in data {
                    v.write_le(&mut bytes);
                }
                for b in bytes {
                    hash ^= b as u64;
                    hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                }
            });
        }
        hash
    }
}

/// Positional table with an optional zero cls row ahead of the sin-cos grid.
pub fn build_pos_embed<T: Element>(grid: usize, width: usize, cls: bool) -> Result<Tensor<T>> {
    let table = sincos_pos_embed::<T>(grid, width)?;
    let data = table.to_vec();
    if cls {
        let mut with_cls = vec![T::zero(); width];
        with_cls.extend_from_slice(&data);
        Tensor::from_vec(with_cls, &[grid * grid + 1, width])
    } else {
        Tensor::from_vec(data, &[grid * grid, width])
    }
}

/// Default segmentation tap indices for the two depths used by the shape
/// recipes; other depths require explicit taps.
pub fn default_taps(depth: usize) -> Option<Vec<usize>> {
    match depth {
        12 => Some(vec![3, 5, 7, 11]),
        32 => Some(vec![11, 17, 23, 31]),
        _ => None,
    }
}
