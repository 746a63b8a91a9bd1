//! Optimizers (AdamW, LARS, SGD-momentum) and learning-rate machinery:
//! linear-warmup cosine annealing, step decay, layer-wise decay and
//! effective-batch LR scaling.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Which optimizer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    AdamW,
    Lars,
    Sgd,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSpec {
    pub kind: OptimKind,
    pub base_lr: f64,
    /// Adam betas.
    pub betas: (f64, f64),
    /// Momentum for LARS / SGD.
    pub momentum: f64,
    pub weight_decay: f64,
    /// LARS trust coefficient.
    pub trust_coefficient: f64,
    pub eps: f64,
    /// Exempt norm scales, biases and single-token parameters from weight
    /// decay.
    pub decay_exempt_norms_and_biases: bool,
}

impl Default for OptimSpec {
    fn default() -> Self {
        OptimSpec {
            kind: OptimKind::AdamW,
            base_lr: 1.5e-4,
            betas: (0.9, 0.95),
            momentum: 0.9,
            weight_decay: 0.05,
            trust_coefficient: 0.001,
            eps: 1e-8,
            decay_exempt_norms_and_biases: true,
        }
    }
}

impl OptimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0 || self.eps <= 0.0 {
            return Err(Error::Config("optimizer lr and eps must be > 0".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config(format!("betas must be in [0,1): {:?}", self.betas)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0,1): {}", self.momentum)));
        }
        Ok(())
    }

    pub fn lars(base_lr: f64) -> Self {
        OptimSpec {
            kind: OptimKind::Lars,
            base_lr,
            weight_decay: 0.0,
            ..Default::default()
        }
    }
}

/// Scale a base learning rate by the effective batch against the
/// 256-sample reference batch: `base_lr * effective_batch / 256`.
pub fn scale_lr(base_lr: f64, effective_batch: usize) -> f64 {
    base_lr * effective_batch as f64 / 256.0
}

/// LR schedule shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Step,
}

/// Learning-rate schedule over epochs (fractional epochs allowed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub peak_lr: f64,
    pub min_lr: f64,
    /// Step-decay factor.
    pub gamma: f64,
    /// Epochs at which step decay multiplies by gamma.
    pub milestones: Vec<f64>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Cosine,
            warmup_epochs: 40.0,
            total_epochs: 100.0,
            peak_lr: 1e-3,
            min_lr: 0.0,
            gamma: 0.1,
            milestones: Vec::new(),
        }
    }
}

impl ScheduleSpec {
    pub fn cosine(warmup: f64, total: f64, peak: f64, min: f64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Cosine,
            warmup_epochs: warmup,
            total_epochs: total,
            peak_lr: peak,
            min_lr: min,
            ..Default::default()
        }
    }

    pub fn step(peak: f64, gamma: f64, milestones: Vec<f64>, total: f64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Step,
            warmup_epochs: 0.0,
            total_epochs: total,
            peak_lr: peak,
            min_lr: 0.0,
            gamma,
            milestones,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.warmup_epochs && self.warmup_epochs < self.total_epochs) {
            return Err(Error::Config(format!(
                "need 0 <= warmup ({}) < total ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.min_lr > self.peak_lr {
            return Err(Error::Config("min_lr must be <= peak_lr".into()));
        }
        Ok(())
    }
}

/// Learning rate at a fractional epoch position. Linear ramp `0 -> peak`
/// over `[0, warmup)`, then for the cosine kind a half-cosine `peak -> min`
/// over `[warmup, total]`; the step kind multiplies by gamma at each passed
/// milestone.
pub fn lr_at(sched: &ScheduleSpec, epoch_fraction: f64) -> f64 {
    let t = epoch_fraction.clamp(0.0, sched.total_epochs);
    if t < sched.warmup_epochs {
        return sched.peak_lr * t / sched.warmup_epochs;
    }
    match sched.kind {
        ScheduleKind::Cosine => {
            let span = sched.total_epochs - sched.warmup_epochs;
            let progress = if span > 0.0 { (t - sched.warmup_epochs) / span } else { 1.0 };
            sched.min_lr
                + (sched.peak_lr - sched.min_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        }
        ScheduleKind::Step => {
            let passed = sched.milestones.iter().filter(|&&m| t >= m).count() as i32;
            sched.peak_lr * sched.gamma.powi(passed)
        }
    }
}

/// Layer-wise LR decay: embedding is group 0, block `i` is group `i+1`,
/// the head is group `L+1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerDecaySpec {
    pub rate: f64,
}

impl Default for LayerDecaySpec {
    fn default() -> Self {
        LayerDecaySpec { rate: 0.9 }
    }
}

/// Multiplier `rate^(L+1-group)` for a parameter group.
pub fn layer_multiplier(spec: &LayerDecaySpec, group: usize, depth: usize) -> Result<f64> {
    if group > depth + 1 {
        return Err(Error::Config(format!(
            "layer group {group} out of range for depth {depth}"
        )));
    }
    Ok(spec.rate.powi((depth + 1 - group) as i32))
}

/// A parameter as the optimizer sees it: handle plus per-parameter LR
/// multiplier and weight decay.
#[derive(Clone)]
pub struct ParamGroup<T: Element> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub lr_mult: f64,
    pub weight_decay: f64,
}

impl<T: Element> ParamGroup<T> {
    pub fn plain(name: &str, tensor: Tensor<T>) -> Self {
        ParamGroup {
            name: name.to_string(),
            tensor,
            lr_mult: 1.0,
            weight_decay: 0.0,
        }
    }
}

/// True for parameter names conventionally exempt from weight decay:
/// norm scales/shifts, biases, and single-token parameters.
pub fn is_decay_exempt(name: &str) -> bool {
    name.ends_with(".bias")
        || name.contains("norm")
        || name.contains("cls")
        || name.contains("mask_token")
        || name.contains("pos_embed")
}

/// Optimizer with per-parameter state. State vectors are kept in `f64`
/// regardless of the element type so sharded/replicated runs agree exactly.
pub struct Optimizer<T: Element> {
    spec: OptimSpec,
    /// AdamW first/second moments or momentum buffers, per group.
    state_a: Vec<Vec<T>>,
    state_b: Vec<Vec<T>>,
    step_count: u64,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Element> Optimizer<T> {
    pub fn new(spec: OptimSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Optimizer {
            spec,
            state_a: Vec::new(),
            state_b: Vec::new(),
            step_count: 0,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn spec(&self) -> &OptimSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    fn ensure_state(&mut self, groups: &[ParamGroup<T>]) {
        if self.state_a.len() != groups.len() {
            self.state_a = groups.iter().map(|g| vec![T::zero(); g.tensor.numel()]).collect();
            self.state_b = groups.iter().map(|g| vec![T::zero(); g.tensor.numel()]).collect();
        }
    }

    /// Apply one update with learning rate `lr` (already scheduled). Reads
    /// each tensor's accumulated gradient; missing gradients are treated
    /// as zero. Gradients are cleared after a successful step.
    pub fn step(&mut self, groups: &[ParamGroup<T>], lr: f64) -> Result<()> {
        self.ensure_state(groups);
        self.step_count += 1;
        for (gi, group) in groups.iter().enumerate() {
            let grad = match group.tensor.grad() {
                Some(g) => g,
                None => vec![T::zero(); group.tensor.numel()],
            };
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGrad(group.name.clone()));
            }
            let eff_lr = T::from_f64(lr * group.lr_mult);
            let wd = T::from_f64(group.weight_decay);
            match self.spec.kind {
                OptimKind::AdamW => self.adamw_update(gi, group, &grad, eff_lr, wd),
                OptimKind::Lars => self.lars_update(gi, group, &grad, eff_lr, wd),
                OptimKind::Sgd => self.sgd_update(gi, group, &grad, eff_lr, wd),
            }
            group.tensor.zero_grad();
        }
        Ok(())
    }

    /// Bias-corrected Adam update plus decoupled weight decay `lr*wd*w`.
    fn adamw_update(&mut self, gi: usize, group: &ParamGroup<T>, grad: &[T], lr: T, wd: T) {
        let (b1, b2) = (T::from_f64(self.spec.betas.0), T::from_f64(self.spec.betas.1));
        let eps = T::from_f64(self.spec.eps);
        let t = self.step_count as i32;
        let bc1 = T::one() - T::from_f64(self.spec.betas.0.powi(t));
        let bc2 = T::one() - T::from_f64(self.spec.betas.1.powi(t));
        let m = &mut self.state_a[gi];
        let v = &mut self.state_b[gi];
        group.tensor.update_data(|w| {
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * grad[i];
                v[i] = b2 * v[i] + (T::one() - b2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] = w[i] - lr * mhat / (vhat.sqrt() + eps) - lr * wd * w[i];
            }
        });
    }

    /// Layer-wise adaptive rate scaling: per-tensor local LR
    /// `trust * |w| / (|g| + wd * |w|)` when both norms are positive
    /// (1 otherwise), then SGD-momentum at `lr * local`.
    fn lars_update(&mut self, gi: usize, group: &ParamGroup<T>, grad: &[T], lr: T, wd: T) {
        let trust = T::from_f64(self.spec.trust_coefficient);
        let mu = T::from_f64(self.spec.momentum);
        let buf = &mut self.state_a[gi];
        group.tensor.update_data(|w| {
            let mut wn = T::zero();
            let mut gn = T::zero();
            for i in 0..w.len() {
                wn = wn + w[i] * w[i];
                gn = gn + grad[i] * grad[i];
            }
            let wn = wn.sqrt();
            let gn = gn.sqrt();
            let local = if wn > T::zero() && gn > T::zero() {
                trust * wn / (gn + wd * wn)
            } else {
                T::one()
            };
            let eta = lr * local;
            for i in 0..w.len() {
                let g_eff = grad[i] + wd * w[i];
                buf[i] = mu * buf[i] + g_eff;
                w[i] = w[i] - eta * buf[i];
            }
        });
    }

    fn sgd_update(&mut self, gi: usize, group: &ParamGroup<T>, grad: &[T], lr: T, wd: T) {
        let mu = T::from_f64(self.spec.momentum);
        let buf = &mut self.state_a[gi];
        group.tensor.update_data(|w| {
            for i in 0..w.len() {
                let g_eff = grad[i] + wd * w[i];
                buf[i] = mu * buf[i] + g_eff;
                w[i] = w[i] - lr * buf[i];
            }
        });
    }

    /// Snapshot both state buffers as flat vectors in group order
    /// (zero-initialized when no step has run yet).
    pub fn export_flat(&mut self, groups: &[ParamGroup<T>]) -> (Vec<T>, Vec<T>) {
        self.ensure_state(groups);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for gi in 0..groups.len() {
            a.extend_from_slice(&self.state_a[gi]);
            b.extend_from_slice(&self.state_b[gi]);
        }
        (a, b)
    }

    /// Restore flat state buffers saved by `export_flat`.
    pub fn import_flat(
        &mut self,
        groups: &[ParamGroup<T>],
        a: &[T],
        b: &[T],
        step_count: u64,
    ) -> Result<()> {
        self.ensure_state(groups);
        let total: usize = groups.iter().map(|g| g.tensor.numel()).sum();
        if a.len() != total || b.len() != total {
            return Err(Error::Checkpoint(format!(
                "optimizer state length {} / {} does not match {total} parameters",
                a.len(),
                b.len()
            )));
        }
        self.step_count = step_count;
        let mut offset = 0;
        for (gi, group) in groups.iter().enumerate() {
            let n = group.tensor.numel();
            self.state_a[gi].copy_from_slice(&a[offset..offset + n]);
            self.state_b[gi].copy_from_slice(&b[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}
