//! Downstream adaptation and evaluation: linear probing over a frozen
//! backbone, frozen/full finetuning with layer-wise LR decay, a simplified
//! sum-fusion segmentation decoder over block taps, classification and
//! segmentation metrics, and the budget/iteration calculators.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::mae::patchify;
use crate::optim::{
    layer_multiplier, lr_at, LayerDecaySpec, OptimSpec, Optimizer, ParamGroup, ScheduleSpec,
};
use crate::seeds::{self, Purpose};
use crate::tensor::Tensor;
use crate::vit::{init_weight, ViTModel};
use rand::Rng;
use serde::Serialize;

/// Single affine map over the pooled representation.
pub struct ProbeHead<T: Element> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Element> ProbeHead<T> {
    pub fn init(dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed, Purpose::Init, 0x0ead);
        ProbeHead {
            w: init_weight(&mut rng, &[dim, classes], 0.01),
            b: Tensor::param(vec![T::zero(); classes], &[classes]).unwrap(),
        }
    }

    pub fn logits(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        features.linear(&self.w, &self.b)
    }

    pub fn param_groups(&self) -> Vec<ParamGroup<T>> {
        vec![
            ParamGroup::plain("head.weight", self.w.clone()),
            ParamGroup::plain("head.bias", self.b.clone()),
        ]
    }
}

/// Pooled backbone features for a stack of images, computed in mini-batches
/// with gradient tracking disabled on the backbone.
pub fn extract_pooled_features<T: Element>(
    backbone: &ViTModel<T>,
    images: &Tensor<T>,
    batch: usize,
) -> Result<Tensor<T>> {
    let shape = images.shape();
    if shape.len() != 4 {
        return Err(Error::InvalidDim(format!(
            "expected [B, c, s, s] images, got {shape:?}"
        )));
    }
    let n = shape[0];
    let d = backbone.recipe.width;
    let mut out = Vec::with_capacity(n * d);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let chunk = images.gather(0, &rows)?.detach();
        let patches = patchify(&chunk, backbone.recipe.patch)?;
        let seq = backbone.forward_patches(&patches)?;
        let pooled = backbone.pool(&seq)?;
        out.extend(pooled.to_vec());
        start = end;
    }
    Tensor::from_vec(out, &[n, d])
}

/// Per-dimension standardization statistics fit on training features; the
/// normalization in front of the probe head that makes large base LRs
/// usable.
pub struct FeatureNorm<T: Element> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Element> FeatureNorm<T> {
    pub fn fit(features: &Tensor<T>) -> Result<Self> {
        let shape = features.shape();
        let (n, d) = (shape[0], shape[1]);
        let data = features.to_vec();
        let nt = T::from_f64(n as f64);
        let mut mean = vec![T::zero(); d];
        let mut std = vec![T::zero(); d];
        for row in data.chunks(d) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        for m in &mut mean {
            *m = *m / nt;
        }
        for row in data.chunks(d) {
            for ((s, &v), &m) in std.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *s = *s + c * c;
            }
        }
        let eps = T::from_f64(1e-6);
        for s in &mut std {
            *s = (*s / nt + eps).sqrt();
        }
        Ok(FeatureNorm { mean, std })
    }

    pub fn apply(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = features.shape();
        let d = shape[1];
        if d != self.mean.len() {
            return Err(Error::InvalidDim(format!(
                "feature dim {d} != norm dim {}",
                self.mean.len()
            )));
        }
        let data = features.to_vec();
        let out: Vec<T> = data
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Tensor::from_vec(out, &shape)
    }
}

/// Result of a linear-probing run.
pub struct ProbeOutcome<T: Element> {
    pub head: ProbeHead<T>,
    pub norm: FeatureNorm<T>,
    pub train_losses: Vec<f64>,
    pub accuracy: f64,
}

/// Train a linear classifier on pooled features of a frozen backbone and
/// report top-1 accuracy on the eval split. The backbone receives zero
/// updates (checksummed before/after).
#[allow(clippy::too_many_arguments)]
pub fn linear_probe<T: Element>(
    backbone: &ViTModel<T>,
    train_images: &Tensor<T>,
    train_labels: &[usize],
    eval_images: &Tensor<T>,
    eval_labels: &[usize],
    optim: &OptimSpec,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Result<ProbeOutcome<T>> {
    let checksum_before = backbone.checksum();
    let was_trainable: Vec<bool> = backbone
        .named_params()
        .iter()
        .map(|(_, t, _)| t.requires_grad())
        .collect();
    backbone.set_trainable(false);

    let train_feats = extract_pooled_features(backbone, train_images, batch.max(1))?;
    let eval_feats = extract_pooled_features(backbone, eval_images, batch.max(1))?;
    let norm = FeatureNorm::fit(&train_feats)?;
    let train_feats = norm.apply(&train_feats)?;
    let eval_feats = norm.apply(&eval_feats)?;

    let classes = train_labels.iter().chain(eval_labels).max().map(|m| m + 1).unwrap_or(2);
    let d = backbone.recipe.width;
    let head = ProbeHead::init(d, classes, seed);
    let groups = head.param_groups();
    let mut opt = Optimizer::new(optim.clone())?;

    // warmup a tenth of the run, like the published probe schedule
    let sched = ScheduleSpec::cosine(
        (epochs as f64 / 10.0).max(f64::MIN_POSITIVE),
        epochs.max(1) as f64,
        optim.base_lr,
        0.0,
    );

    let n = train_labels.len();
    let steps_per_epoch = n.div_ceil(batch.max(1));
    let mut train_losses = Vec::new();
    for epoch in 0..epochs {
        let order = shuffled_indices(n, seeds::derive(seed, Purpose::Shuffle, epoch as u64));
        for (step, chunk) in order.chunks(batch.max(1)).enumerate() {
            let feats = train_feats.gather(0, chunk)?.detach();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let loss = head.logits(&feats)?.cross_entropy(&labels)?;
            let value = loss.item().as_f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss((epoch * steps_per_epoch + step) as u64));
            }
            train_losses.push(value);
            loss.backward()?;
            let lr = lr_at(&sched, epoch as f64 + step as f64 / steps_per_epoch.max(1) as f64);
            opt.step(&groups, lr)?;
        }
    }

    let logits = head.logits(&eval_feats)?;
    let pred = argmax_rows(&logits);
    let accuracy = metric_top1(&pred, eval_labels)?;

    for ((_, t, _), flag) in backbone.named_params().iter().zip(was_trainable) {
        t.set_requires_grad(flag);
    }
    let checksum_after = backbone.checksum();
    if checksum_before != checksum_after {
        return Err(Error::Other(
            "frozen backbone changed during probing".into(),
        ));
    }
    Ok(ProbeOutcome {
        head,
        norm,
        train_losses,
        accuracy,
    })
}

/// Row argmax of `[n, k]` logits.
pub fn argmax_rows<T: Element>(logits: &Tensor<T>) -> Vec<usize> {
    let shape = logits.shape();
    let k = shape[shape.len() - 1];
    logits.with_data(|data| {
        data.chunks(k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    })
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

use rand_chacha::rand_core::SeedableRng;

/// Simplified segmentation decoder: four tap projections to a shared
/// feature width, per-tap rescales `[4, 2, 1, 0.5]`, sum fusion at the
/// finest scale, per-pixel classifier, output upsampled to the input size.
pub struct SegLiteDecoder<T: Element> {
    pub projs: Vec<(Tensor<T>, Tensor<T>)>,
    pub cls_w: Tensor<T>,
    pub cls_b: Tensor<T>,
    pub feature_dim: usize,
    pub classes: usize,
    pub rescales: [f64; 4],
}

pub const SEG_RESCALES: [f64; 4] = [4.0, 2.0, 1.0, 0.5];

impl<T: Element> SegLiteDecoder<T> {
    pub fn init(width: usize, feature_dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed, Purpose::Init, 0x5e6);
        let projs = (0..4)
            .map(|_| {
                (
                    init_weight(&mut rng, &[width, feature_dim], 0.02),
                    Tensor::param(vec![T::zero(); feature_dim], &[feature_dim]).unwrap(),
                )
            })
            .collect();
        SegLiteDecoder {
            projs,
            cls_w: init_weight(&mut rng, &[feature_dim, classes], 0.02),
            cls_b: Tensor::param(vec![T::zero(); classes], &[classes]).unwrap(),
            feature_dim,
            classes,
            rescales: SEG_RESCALES,
        }
    }

    pub fn param_groups(&self) -> Vec<ParamGroup<T>> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.projs.iter().enumerate() {
            out.push(ParamGroup::plain(&format!("seg.proj{i}.weight"), w.clone()));
            out.push(ParamGroup::plain(&format!("seg.proj{i}.bias"), b.clone()));
        }
        out.push(ParamGroup::plain("seg.classifier.weight", self.cls_w.clone()));
        out.push(ParamGroup::plain("seg.classifier.bias", self.cls_b.clone()));
        out
    }
}

/// Side length after applying a rescale factor to a `g x g` grid.
pub fn rescaled_side(grid: usize, factor: f64) -> Result<usize> {
    let exact = grid as f64 * factor;
    let side = exact.round() as usize;
    if side == 0 || (side as f64 - exact).abs() > 1e-9 {
        return Err(Error::InvalidDim(format!(
            "rescale factor {factor} on grid {grid} gives non-integer side {exact}"
        )));
    }
    Ok(side)
}

/// Nearest-neighbor spatial index map from an `m_in` grid to `m_out`.
fn nearest_indices(m_in: usize, m_out: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(m_out * m_out);
    for oy in 0..m_out {
        let sy = oy * m_in / m_out;
        for ox in 0..m_out {
            let sx = ox * m_in / m_out;
            idx.push(sy * m_in + sx);
        }
    }
    idx
}

/// Decode four tap features `[B, N, D]` into per-pixel logits
/// `[B, H, W, classes]` with `H = W = image_side`.
pub fn seg_forward<T: Element>(
    decoder: &SegLiteDecoder<T>,
    taps: &[Tensor<T>],
    image_side: usize,
) -> Result<Tensor<T>> {
    if taps.len() != 4 {
        return Err(Error::InvalidDim(format!(
            "seg decoder expects 4 taps, got {}",
            taps.len()
        )));
    }
    let shape = taps[0].shape();
    let (b, n) = (shape[0], shape[1]);
    let g = (n as f64).sqrt() as usize;
    if g * g != n {
        return Err(Error::InvalidDim(format!(
            "token count {n} is not a square grid"
        )));
    }
    let finest = rescaled_side(
        g,
        decoder
            .rescales
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max),
    )?;

    let mut fused: Option<Tensor<T>> = None;
    for (tap, (&factor, (w, bias))) in taps
        .iter()
        .zip(decoder.rescales.iter().zip(&decoder.projs))
    {
        let side = rescaled_side(g, factor)?;
        let projected = tap.linear(w, bias)?; // [B, N, F]
        let spatial = projected.permute(&[0, 2, 1])?; // [B, F, g*g]
        let scaled = if side == g {
            spatial
        } else {
            spatial.gather(2, &nearest_indices(g, side))?
        };
        let at_finest = if side == finest {
            scaled
        } else {
            scaled.gather(2, &nearest_indices(side, finest))?
        };
        fused = Some(match fused {
            None => at_finest,
            Some(acc) => acc.add(&at_finest)?,
        });
    }
    let fused = fused.expect("four taps processed");
    // classifier over channels, then upsample to the image size
    let tokens = fused.permute(&[0, 2, 1])?; // [B, finest^2, F]
    let logits = tokens.linear(&decoder.cls_w, &decoder.cls_b)?; // [B, finest^2, k]
    let up = if finest == image_side {
        logits
    } else {
        logits.gather(1, &nearest_indices(finest, image_side))?
    };
    up.reshape(&[b, image_side, image_side, decoder.classes])?
        .with_shape_check(image_side)
}

trait ShapeCheck<T: Element>: Sized {
    fn with_shape_check(self, side: usize) -> Result<Tensor<T>>;
}

impl<T: Element> ShapeCheck<T> for Tensor<T> {
    fn with_shape_check(self, side: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        debug_assert_eq!(s[1], side);
        debug_assert_eq!(s[2], side);
        Ok(self)
    }
}

/// Finetuning mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneMode {
    /// Backbone frozen: only the decoder/head trains.
    Frozen,
    /// Everything trains; backbone groups get layer-wise LR decay.
    Full,
}

/// Parameter groups for finetuning: decoder/head at full LR, backbone
/// groups scaled by `rate^(L+1-group)` in full mode, absent in frozen mode.
pub fn finetune_param_groups<T: Element>(
    backbone: &ViTModel<T>,
    head_groups: Vec<ParamGroup<T>>,
    mode: FinetuneMode,
    layer_decay: &LayerDecaySpec,
    weight_decay: f64,
) -> Result<Vec<ParamGroup<T>>> {
    let mut groups = Vec::new();
    let depth = backbone.recipe.depth;
    match mode {
        FinetuneMode::Frozen => {
            backbone.set_trainable(false);
        }
        FinetuneMode::Full => {
            backbone.set_trainable(true);
            for (name, tensor, layer_group) in backbone.named_params() {
                let lr_mult = layer_multiplier(layer_decay, layer_group, depth)?;
                let wd = if crate::optim::is_decay_exempt(&name) {
                    0.0
                } else {
                    weight_decay
                };
                groups.push(ParamGroup {
                    name,
                    tensor,
                    lr_mult,
                    weight_decay: wd,
                });
            }
        }
    }
    groups.extend(head_groups);
    Ok(groups)
}

/// Segmentation finetuning outcome.
pub struct SegOutcome {
    pub train_losses: Vec<f64>,
    pub miou: f64,
    pub steps_run: u64,
}

/// Finetune a `SegLiteDecoder` on tiles+masks for a fixed number of
/// optimizer steps (iterations, not epochs, so data budgets compare
/// fairly). Aborts with the step index if the loss goes non-finite.
#[allow(clippy::too_many_arguments)]
pub fn finetune_seg<T: Element>(
    backbone: &ViTModel<T>,
    decoder: &SegLiteDecoder<T>,
    images: &Tensor<T>,
    masks: &[Vec<u8>],
    mode: FinetuneMode,
    optim: &OptimSpec,
    sched: &ScheduleSpec,
    layer_decay: &LayerDecaySpec,
    iterations: u64,
    batch: usize,
    taps: &[usize],
    seed: u64,
) -> Result<SegOutcome> {
    let groups = finetune_param_groups(
        backbone,
        decoder.param_groups(),
        mode,
        layer_decay,
        optim.weight_decay,
    )?;
    let mut opt = Optimizer::new(optim.clone())?;
    let n = masks.len();
    let side = images.shape()[2];
    let batch = batch.max(1).min(n);
    let steps_per_epoch = n.div_ceil(batch) as f64;

    let mut train_losses = Vec::new();
    let mut steps_run = 0u64;
    'outer: for epoch in 0.. {
        let order = shuffled_indices(n, seeds::derive(seed, Purpose::Shuffle, epoch));
        for chunk in order.chunks(batch) {
            if steps_run >= iterations {
                break 'outer;
            }
            let chunk_images = images.gather(0, chunk)?.detach();
            let patches = patchify(&chunk_images, backbone.recipe.patch)?;
            let tap_feats = backbone.forward_features(&patches, taps)?;
            let logits = seg_forward(decoder, &tap_feats, side)?;
            let flat = logits.reshape(&[chunk.len() * side * side, decoder.classes])?;
            let mut targets = Vec::with_capacity(chunk.len() * side * side);
            for &i in chunk {
                targets.extend(masks[i].iter().map(|&m| m as usize));
            }
            let loss = flat.cross_entropy(&targets)?;
            let value = loss.item().as_f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(steps_run));
            }
            train_losses.push(value);
            loss.backward()?;
            let lr = lr_at(sched, steps_run as f64 / steps_per_epoch);
            opt.step(&groups, lr)?;
            steps_run += 1;
        }
    }

    // evaluate mIoU on the training tiles (desk-scale check)
    let miou = eval_seg_miou(backbone, decoder, images, masks, taps, batch)?;
    Ok(SegOutcome {
        train_losses,
        miou,
        steps_run,
    })
}

/// mIoU of the decoder over a tile set.
pub fn eval_seg_miou<T: Element>(
    backbone: &ViTModel<T>,
    decoder: &SegLiteDecoder<T>,
    images: &Tensor<T>,
    masks: &[Vec<u8>],
    taps: &[usize],
    batch: usize,
) -> Result<f64> {
    let n = masks.len();
    let side = images.shape()[2];
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut start = 0;
    let batch = batch.max(1);
    while start < n {
        let end = (start + batch).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let chunk_images = images.gather(0, &rows)?.detach();
        let patches = patchify(&chunk_images, backbone.recipe.patch)?;
        let tap_feats = backbone.forward_features(&patches, taps)?;
        let logits = seg_forward(decoder, &tap_feats, side)?;
        let flat = logits.reshape(&[rows.len() * side * side, decoder.classes])?;
        preds.extend(argmax_rows(&flat));
        for &i in &rows {
            truths.extend(masks[i].iter().map(|&m| m as usize));
        }
        start = end;
    }
    metric_miou(&preds, &truths, decoder.classes)
}

// ---- metrics ----------------------------------------------------------

fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<Vec<u64>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidDim(format!(
            "metric inputs must be equal-length and non-empty: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&v| v >= classes) {
        return Err(Error::InvalidDim(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut m = vec![0u64; classes * classes];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t * classes + p] += 1;
    }
    Ok(m)
}

/// Fraction of exact matches.
pub fn metric_top1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidDim("empty or mismatched metric inputs".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Unweighted mean per-class F1. Classes absent from both prediction and
/// truth are excluded from the mean.
pub fn metric_mf1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let m = confusion(pred, truth, classes)?;
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..classes {
        let tp = m[c * classes + c];
        let fp: u64 = (0..classes).filter(|&t| t != c).map(|t| m[t * classes + c]).sum();
        let fn_: u64 = (0..classes).filter(|&p| p != c).map(|p| m[c * classes + p]).sum();
        if tp + fp + fn_ == 0 {
            continue; // class absent everywhere
        }
        counted += 1;
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    if counted == 0 {
        return Err(Error::InvalidDim("no classes present in metric inputs".into()));
    }
    Ok(sum / counted as f64)
}

/// Unweighted mean per-class intersection-over-union, with the same
/// class-absent rule as `metric_mf1`.
pub fn metric_miou(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let m = confusion(pred, truth, classes)?;
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..classes {
        let tp = m[c * classes + c];
        let fp: u64 = (0..classes).filter(|&t| t != c).map(|t| m[t * classes + c]).sum();
        let fn_: u64 = (0..classes).filter(|&p| p != c).map(|p| m[c * classes + p]).sum();
        let union = tp + fp + fn_;
        if union == 0 {
            continue;
        }
        counted += 1;
        sum += tp as f64 / union as f64;
    }
    if counted == 0 {
        return Err(Error::InvalidDim("no classes present in metric inputs".into()));
    }
    Ok(sum / counted as f64)
}

// ---- budget arithmetic -------------------------------------------------

/// Training-budget summary normalized to iterations at batch size 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetReport {
    pub dataset_size: u64,
    pub epochs: u64,
    pub effective_batch: u64,
    /// `dataset_size * epochs`
    pub iterations_at_bs1: u64,
    /// `ceil(dataset_size / effective_batch) * epochs`
    pub optimizer_steps: u64,
}

impl BudgetReport {
    /// Iterations formatted the way published tables round: tenths of a
    /// million with an `M` suffix (e.g. `200.2M`).
    pub fn iterations_display(&self) -> String {
        format_millions(self.iterations_at_bs1)
    }
}

pub fn format_millions(value: u64) -> String {
    if value >= 1_000_000 {
        let m = (value as f64 / 1e6 * 10.0).round() / 10.0;
        format!("{m:.1}M")
    } else if value >= 1_000 {
        let k = (value as f64 / 1e3 * 10.0).round() / 10.0;
        format!("{k:.1}k")
    } else {
        format!("{value}")
    }
}

pub fn calc_budget(dataset_size: u64, epochs: u64, effective_batch: u64) -> Result<BudgetReport> {
    if dataset_size == 0 || epochs == 0 || effective_batch == 0 {
        return Err(Error::Config("budget inputs must be >= 1".into()));
    }
    Ok(BudgetReport {
        dataset_size,
        epochs,
        effective_batch,
        iterations_at_bs1: dataset_size * epochs,
        optimizer_steps: dataset_size.div_ceil(effective_batch) * epochs,
    })
}

/// Seeded random subset of `round(fraction * n)` indices (at least one),
/// ascending. Fraction 1.0 is the identity.
pub fn subset_split(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "subset fraction must be in (0,1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok((0..n).collect());
    }
    let m = ((fraction * n as f64).round() as usize).max(1).min(n);
    let mut rng = seeds::rng(seed, Purpose::Subset, 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..m].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}
