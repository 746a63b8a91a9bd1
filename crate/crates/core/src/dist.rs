//! Deterministic in-process simulation of K training workers under two
//! strategies: replicated data parallelism (gradient all-reduce) and flat
//! parameter sharding (all-gather forward, reduce-scatter gradients).
//!
//! Workers are logical: they execute sequentially in worker-id order, and
//! every reduction runs in a fixed binary-tree order over worker ids, so
//! results are bit-reproducible regardless of scheduling or thread count.
//! Floating-point non-associativity makes that order part of the contract.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::optim::{OptimKind, OptimSpec, Optimizer, ParamGroup};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Parallelism strategy of a worker group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Replicated,
    Sharded,
}

/// A sliceable global batch.
pub trait SimBatch: Clone {
    fn len(&self) -> usize;
    fn slice(&self, start: usize, end: usize) -> Self;
}

/// What a worker replica must expose to the simulator: a stable parameter
/// order and a scalar mean loss over a batch slice. `step` feeds layers
/// that derive per-step randomness (masking) so every worker agrees on it.
pub trait SimModel<T: Element> {
    type Batch: SimBatch;

    fn param_groups(&self) -> Vec<ParamGroup<T>>;
    fn loss(&self, batch: &Self::Batch, step: u64) -> Result<Tensor<T>>;
}

/// Contiguous partition of the flat parameter vector; shard sizes differ by
/// at most one element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardMap {
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl ShardMap {
    pub fn new(total: usize, workers: usize) -> ShardMap {
        let base = total / workers;
        let rem = total % workers;
        let mut ranges = Vec::with_capacity(workers);
        let mut start = 0;
        for w in 0..workers {
            let len = base + usize::from(w < rem);
            ranges.push(start..start + len);
            start += len;
        }
        ShardMap { ranges }
    }

    pub fn total(&self) -> usize {
        self.ranges.last().map(|r| r.end).unwrap_or(0)
    }
}

/// Elementwise mean across per-worker buffers, summed in a fixed
/// binary-tree order over worker ids.
pub fn all_reduce_mean<T: Element>(buffers: &[Vec<T>]) -> Result<Vec<T>> {
    let k = buffers.len();
    if k == 0 {
        return Err(Error::Config("all_reduce over zero workers".into()));
    }
    let len = buffers[0].len();
    for (w, b) in buffers.iter().enumerate() {
        if b.len() != len {
            return Err(Error::ShapeMismatch {
                context: format!("all_reduce buffer of worker {w}"),
                lhs: vec![len],
                rhs: vec![b.len()],
            });
        }
    }
    let sum = tree_sum(buffers);
    let kt = T::from_f64(k as f64);
    Ok(sum.into_iter().map(|v| v / kt).collect())
}

fn tree_sum<T: Element>(buffers: &[Vec<T>]) -> Vec<T> {
    let k = buffers.len();
    let mut acc: Vec<Vec<T>> = buffers.to_vec();
    let mut stride = 1;
    while stride < k {
        let mut i = 0;
        while i + stride < k {
            let (left, right) = acc.split_at_mut(i + stride);
            let dst = &mut left[i];
            let src = &right[0];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + *s;
            }
            i += 2 * stride;
        }
        stride *= 2;
    }
    acc.swap_remove(0)
}

/// Tree-reduce then scatter: worker `w` receives the mean of its shard
/// range. By construction `all_gather(reduce_scatter(x)) ==
/// all_reduce_mean(x)` bit-exactly.
pub fn reduce_scatter_mean<T: Element>(
    buffers: &[Vec<T>],
    map: &ShardMap,
) -> Result<Vec<Vec<T>>> {
    let reduced = all_reduce_mean(buffers)?;
    Ok(map
        .ranges
        .iter()
        .map(|r| reduced[r.clone()].to_vec())
        .collect())
}

/// Concatenate shards in worker-id order.
pub fn all_gather<T: Element>(shards: &[Vec<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(shards.iter().map(Vec::len).sum());
    for s in shards {
        out.extend_from_slice(s);
    }
    out
}

/// Simulated bytes a single worker moves per step (receive side): the
/// classic ring/tree accounting `2 * P * (K-1) / K` elements for both a
/// gradient all-reduce and an all-gather + reduce-scatter pair.
pub fn comm_bytes_per_worker(total_params: usize, workers: usize, elem_bytes: usize) -> u64 {
    if workers <= 1 {
        return 0;
    }
    let p = total_params as u64;
    let k = workers as u64;
    2 * p * (k - 1) / k * elem_bytes as u64
}

/// Throughput and communication summary for a strategy.
#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub strategy: Strategy,
    pub workers: usize,
    pub total_params: usize,
    pub steps: usize,
    pub samples_per_sec: f64,
    pub bytes_per_step_per_worker: u64,
    pub bytes_per_step_total: u64,
}

/// K logical workers with replicas (or shard views) of one model.
pub struct WorkerGroup<T: Element, M: SimModel<T>> {
    strategy: Strategy,
    workers: Vec<M>,
    params: Vec<Vec<ParamGroup<T>>>,
    optimizers: Vec<Optimizer<T>>,
    shard_map: Option<ShardMap>,
    shard_tensors: Vec<Option<Tensor<T>>>,
    shard_groups: Vec<Vec<ParamGroup<T>>>,
    step: u64,
}

impl<T: Element, M: SimModel<T>> WorkerGroup<T, M> {
    /// Build `k` identical replicas via `builder(worker_id)`; the builder
    /// must produce bit-identical models for every id (same init seed).
    pub fn new(
        k: usize,
        strategy: Strategy,
        optim: OptimSpec,
        builder: impl Fn(usize) -> Result<M>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        if strategy == Strategy::Sharded && optim.kind == OptimKind::Lars {
            return Err(Error::Config(
                "sharded strategy needs an elementwise optimizer (adamw or sgd); \
                 LARS uses per-tensor norms that do not shard"
                    .into(),
            ));
        }
        let workers: Vec<M> = (0..k).map(&builder).collect::<Result<_>>()?;
        let params: Vec<Vec<ParamGroup<T>>> = workers.iter().map(|w| w.param_groups()).collect();

        let flat0 = flatten_params(&params[0]);
        for (w, p) in params.iter().enumerate().skip(1) {
            let flat = flatten_params(p);
            if !bits_equal(&flat0, &flat) {
                return Err(Error::ReplicaDrift {
                    worker: w,
                    got: fnv_bits(&flat),
                    expected: fnv_bits(&flat0),
                });
            }
        }

        let optimizers = (0..k)
            .map(|_| Optimizer::new(optim.clone()))
            .collect::<Result<Vec<_>>>()?;

        let (shard_map, shard_tensors, shard_groups) = if strategy == Strategy::Sharded {
            let map = ShardMap::new(flat0.len(), k);
            let mut tensors = Vec::with_capacity(k);
            let mut groups = Vec::with_capacity(k);
            for r in &map.ranges {
                // a worker can own zero elements when K > P
                if r.is_empty() {
                    tensors.push(None);
                    groups.push(Vec::new());
                    continue;
                }
                let t = Tensor::param(flat0[r.clone()].to_vec(), &[r.len()])?;
                groups.push(vec![ParamGroup {
                    name: "shard".to_string(),
                    tensor: t.clone(),
                    lr_mult: 1.0,
                    weight_decay: optim.weight_decay,
                }]);
                tensors.push(Some(t));
            }
            (Some(map), tensors, groups)
        } else {
            (None, Vec::new(), Vec::new())
        };

        Ok(WorkerGroup {
            strategy,
            workers,
            params,
            optimizers,
            shard_map,
            shard_tensors,
            shard_groups,
            step: 0,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    /// Borrow one worker's model replica.
    pub fn worker(&self, idx: usize) -> &M {
        &self.workers[idx]
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn total_params(&self) -> usize {
        self.params[0].iter().map(|g| g.tensor.numel()).sum()
    }

    /// Flat parameter vector: worker 0's replica (replicated) or the
    /// gathered shards (sharded); the two views coincide after every step.
    pub fn flat_params(&self) -> Vec<T> {
        match self.strategy {
            Strategy::Replicated => flatten_params(&self.params[0]),
            Strategy::Sharded => {
                let shards: Vec<Vec<T>> = self
                    .shard_tensors
                    .iter()
                    .map(|t| t.as_ref().map(Tensor::to_vec).unwrap_or_default())
                    .collect();
                all_gather(&shards)
            }
        }
    }

    /// Overwrite the flat parameter vector on every worker (replicated) or
    /// across the shards (sharded).
    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let total = self.total_params();
        if flat.len() != total {
            return Err(Error::Checkpoint(format!(
                "flat parameter vector has {} elements, model has {total}",
                flat.len()
            )));
        }
        for groups in &self.params {
            unflatten_params(groups, flat);
        }
        if let Some(map) = &self.shard_map {
            for (tensor, range) in self.shard_tensors.iter().zip(&map.ranges) {
                if let Some(t) = tensor {
                    t.set_data(flat[range.clone()].to_vec());
                }
            }
        }
        Ok(())
    }

    /// Flat optimizer state (both moment buffers) plus step count, in
    /// parameter order regardless of strategy.
    pub fn export_opt_state(&mut self) -> (Vec<T>, Vec<T>, u64) {
        match self.strategy {
            Strategy::Replicated => {
                let (a, b) = self.optimizers[0].export_flat(&self.params[0]);
                (a, b, self.step)
            }
            Strategy::Sharded => {
                let mut shards_a = Vec::new();
                let mut shards_b = Vec::new();
                for w in 0..self.workers.len() {
                    if self.shard_groups[w].is_empty() {
                        shards_a.push(Vec::new());
                        shards_b.push(Vec::new());
                    } else {
                        let (a, b) = self.optimizers[w].export_flat(&self.shard_groups[w]);
                        shards_a.push(a);
                        shards_b.push(b);
                    }
                }
                (all_gather(&shards_a), all_gather(&shards_b), self.step)
            }
        }
    }

    /// Restore optimizer state saved by `export_opt_state`.
    pub fn import_opt_state(&mut self, a: &[T], b: &[T], step: u64) -> Result<()> {
        self.step = step;
        match self.strategy {
            Strategy::Replicated => {
                for w in 0..self.workers.len() {
                    self.optimizers[w].import_flat(&self.params[w], a, b, step)?;
                }
            }
            Strategy::Sharded => {
                let map = self.shard_map.clone().expect("sharded group has a map");
                for w in 0..self.workers.len() {
                    if self.shard_groups[w].is_empty() {
                        continue;
                    }
                    let r = map.ranges[w].clone();
                    self.optimizers[w].import_flat(
                        &self.shard_groups[w],
                        &a[r.clone()],
                        &b[r],
                        step,
                    )?;
                }
            }
        }
        Ok(())
    }

    /// One synchronous training step over a global batch. Returns the mean
    /// loss across workers.
    pub fn train_step(&mut self, batch: &M::Batch, lr: f64) -> Result<T> {
        let k = self.workers.len();
        if batch.len() % k != 0 {
            return Err(Error::Config(format!(
                "global batch of {} does not divide across {k} workers",
                batch.len()
            )));
        }
        match self.strategy {
            Strategy::Replicated => self.step_replicated(batch, lr),
            Strategy::Sharded => self.step_sharded(batch, lr),
        }
    }

    fn worker_grads(&self, batch: &M::Batch) -> Result<(Vec<Vec<T>>, Vec<T>)> {
        let k = self.workers.len();
        let per = batch.len() / k;
        let mut grads = Vec::with_capacity(k);
        let mut losses = Vec::with_capacity(k);
        for (w, model) in self.workers.iter().enumerate() {
            for g in &self.params[w] {
                g.tensor.zero_grad();
            }
            let slice = batch.slice(w * per, (w + 1) * per);
            let loss = model.loss(&slice, self.step)?;
            loss.backward()?;
            losses.push(loss.item());
            grads.push(flatten_grads(&self.params[w]));
        }
        Ok((grads, losses))
    }

    fn step_replicated(&mut self, batch: &M::Batch, lr: f64) -> Result<T> {
        let (grads, losses) = self.worker_grads(batch)?;
        let mean_grad = all_reduce_mean(&grads)?;
        for w in 0..self.workers.len() {
            scatter_grads(&self.params[w], &mean_grad);
            self.optimizers[w].step(&self.params[w], lr)?;
        }
        self.step += 1;
        self.check_replica_drift()?;
        let loss_mean = all_reduce_mean(&losses.into_iter().map(|l| vec![l]).collect::<Vec<_>>())?;
        Ok(loss_mean[0])
    }

    fn step_sharded(&mut self, batch: &M::Batch, lr: f64) -> Result<T> {
        let map = self.shard_map.clone().expect("sharded group has a map");
        // all-gather shards into every replica's full parameters
        let shards: Vec<Vec<T>> = self
            .shard_tensors
            .iter()
            .map(|t| t.as_ref().map(Tensor::to_vec).unwrap_or_default())
            .collect();
        let full = all_gather(&shards);
        if full.len() != map.total() {
            return Err(Error::Config("shard coverage violation".into()));
        }
        for w in 0..self.workers.len() {
            unflatten_params(&self.params[w], &full);
        }
        let (grads, losses) = self.worker_grads(batch)?;
        let shard_grads = reduce_scatter_mean(&grads, &map)?;
        for w in 0..self.workers.len() {
            if let Some(shard) = &self.shard_tensors[w] {
                shard.zero_grad();
                shard.accumulate_grad(&shard_grads[w]);
                self.shard_opts_step(w, lr)?;
            }
        }
        self.step += 1;
        let loss_mean = all_reduce_mean(&losses.into_iter().map(|l| vec![l]).collect::<Vec<_>>())?;
        Ok(loss_mean[0])
    }

    fn shard_opts_step(&mut self, w: usize, lr: f64) -> Result<()> {
        self.optimizers[w].step(&self.shard_groups[w], lr)
    }

    /// Hard error if the replicas have bitwise diverged.
    fn check_replica_drift(&self) -> Result<()> {
        let flat0 = flatten_params(&self.params[0]);
        let expected = fnv_bits(&flat0);
        for w in 1..self.workers.len() {
            let flat = flatten_params(&self.params[w]);
            let got = fnv_bits(&flat);
            if got != expected {
                return Err(Error::ReplicaDrift {
                    worker: w,
                    got,
                    expected,
                });
            }
        }
        Ok(())
    }

    /// Run `steps` timed steps and report samples/sec plus modeled
    /// communication volume.
    pub fn throughput_report(
        &mut self,
        batch: &M::Batch,
        steps: usize,
        lr: f64,
    ) -> Result<ThroughputReport> {
        if steps == 0 {
            return Err(Error::Config("need at least one timed step".into()));
        }
        let start = std::time::Instant::now();
        for _ in 0..steps {
            self.train_step(batch, lr)?;
        }
        let elapsed = start.elapsed().as_secs_f64().max(1e-9);
        let p = self.total_params();
        let k = self.worker_count();
        let per_worker = comm_bytes_per_worker(p, k, std::mem::size_of::<T>());
        Ok(ThroughputReport {
            strategy: self.strategy,
            workers: k,
            total_params: p,
            steps,
            samples_per_sec: (steps * batch.len()) as f64 / elapsed,
            bytes_per_step_per_worker: per_worker,
            bytes_per_step_total: per_worker * k as u64,
        })
    }
}

fn flatten_params<T: Element>(groups: &[ParamGroup<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for g in groups {
        g.tensor.with_data(|d| out.extend_from_slice(d));
    }
    out
}

fn flatten_grads<T: Element>(groups: &[ParamGroup<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for g in groups {
        match g.tensor.grad() {
            Some(grad) => out.extend_from_slice(&grad),
            None => out.extend(std::iter::repeat(T::zero()).take(g.tensor.numel())),
        }
    }
    out
}

fn scatter_grads<T: Element>(groups: &[ParamGroup<T>], flat: &[T]) {
    let mut offset = 0;
    for g in groups {
        let n = g.tensor.numel();
        g.tensor.zero_grad();
        g.tensor.accumulate_grad(&flat[offset..offset + n]);
        offset += n;
    }
}

fn unflatten_params<T: Element>(groups: &[ParamGroup<T>], flat: &[T]) {
    let mut offset = 0;
    for g in groups {
        let n = g.tensor.numel();
        g.tensor.set_data(flat[offset..offset + n].to_vec());
        offset += n;
    }
}

fn bits_equal<T: Element>(a: &[T], b: &[T]) -> bool {
    fnv_bits(a) == fnv_bits(b) && a.len() == b.len()
}

fn fnv_bits<T: Element>(values: &[T]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for &v in values {
        v.write_le(&mut bytes);
    }
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_reduce_cancellation() {
        let g = vec![1.0f64, -2.0, 3.0];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let out = all_reduce_mean(&[g, neg]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_reduce_identical_inputs() {
        let g = vec![0.5f64, 1.5];
        let out = all_reduce_mean(&[g.clone(), g.clone(), g.clone(), g.clone()]).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn all_reduce_hand_mean() {
        let out = all_reduce_mean(&[vec![1.0f64], vec![2.0], vec![6.0]]).unwrap();
        assert_eq!(out, vec![3.0]);
    }

    #[test]
    fn all_reduce_rejects_mismatched_shapes() {
        assert!(all_reduce_mean(&[vec![1.0f64], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn shard_map_partitions_evenly() {
        let map = ShardMap::new(10, 3);
        assert_eq!(map.ranges, vec![0..4, 4..7, 7..10]);
        assert_eq!(map.total(), 10);
        let sizes: Vec<usize> = map.ranges.iter().map(|r| r.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn reduce_scatter_then_gather_equals_all_reduce() {
        let buffers = vec![
            vec![1.0f64, 2.0, 3.0, 4.0, 5.0],
            vec![0.5, -1.0, 2.5, 0.0, 1.0],
            vec![-0.25, 0.125, 8.0, -3.0, 2.0],
        ];
        let map = ShardMap::new(5, 3);
        let scattered = reduce_scatter_mean(&buffers, &map).unwrap();
        let gathered = all_gather(&scattered);
        let reduced = all_reduce_mean(&buffers).unwrap();
        for (a, b) in gathered.iter().zip(&reduced) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn comm_volume_formula() {
        // K=1: no peers
        assert_eq!(comm_bytes_per_worker(1000, 1, 8), 0);
        // K=2, P params, f64: 2*P*(1/2) elements = P elements
        assert_eq!(comm_bytes_per_worker(1000, 2, 8), 1000 * 8);
        // monotone in P for fixed K
        let a = comm_bytes_per_worker(1000, 4, 4);
        let b = comm_bytes_per_worker(2000, 4, 4);
        assert!(b > a);
    }

    // toy model: scalar affine regression, mean-squared loss
    #[derive(Clone)]
    struct ToyBatch {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl SimBatch for ToyBatch {
        fn len(&self) -> usize {
            self.xs.len()
        }
        fn slice(&self, start: usize, end: usize) -> Self {
            ToyBatch {
                xs: self.xs[start..end].to_vec(),
                ys: self.ys[start..end].to_vec(),
            }
        }
    }

    struct ToyModel {
        w: Tensor<f64>,
        b: Tensor<f64>,
    }

    impl ToyModel {
        fn new() -> Result<Self> {
            Ok(ToyModel {
                w: Tensor::param(vec![0.1], &[1, 1])?,
                b: Tensor::param(vec![0.0], &[1])?,
            })
        }
    }

    impl SimModel<f64> for ToyModel {
        type Batch = ToyBatch;

        fn param_groups(&self) -> Vec<ParamGroup<f64>> {
            vec![
                ParamGroup::plain("w", self.w.clone()),
                ParamGroup::plain("b", self.b.clone()),
            ]
        }

        fn loss(&self, batch: &ToyBatch, _step: u64) -> Result<Tensor<f64>> {
            let n = batch.len();
            let x = Tensor::from_vec(batch.xs.clone(), &[n, 1])?;
            let y = Tensor::from_vec(batch.ys.clone(), &[n, 1])?;
            let pred = x.matmul(&self.w)?.add(&self.b)?;
            pred.mse_loss(&y)
        }
    }

    fn toy_batch(n: usize) -> ToyBatch {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 0.7).collect();
        ToyBatch { xs, ys }
    }

    fn adamw_spec() -> OptimSpec {
        OptimSpec {
            weight_decay: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn replicated_equals_sequential_large_batch() {
        let batch = toy_batch(8);
        let mut group =
            WorkerGroup::new(4, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        let mut single =
            WorkerGroup::new(1, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        for _ in 0..10 {
            group.train_step(&batch, 1e-2).unwrap();
            single.train_step(&batch, 1e-2).unwrap();
        }
        let a = group.flat_params();
        let b = single.flat_params();
        for (x, y) in a.iter().zip(&b) {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-12);
            assert!(rel < 1e-6, "{x} vs {y} (rel {rel})");
        }
    }

    #[test]
    fn sharded_matches_replicated() {
        let batch = toy_batch(8);
        let mut rep =
            WorkerGroup::new(4, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        let mut sha =
            WorkerGroup::new(4, Strategy::Sharded, adamw_spec(), |_| ToyModel::new()).unwrap();
        for _ in 0..10 {
            rep.train_step(&batch, 1e-2).unwrap();
            sha.train_step(&batch, 1e-2).unwrap();
        }
        let a = rep.flat_params();
        let b = sha.flat_params();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits(), "{x} vs {y}");
        }
    }

    #[test]
    fn k1_sharded_is_plain_trainer() {
        let batch = toy_batch(4);
        let mut sharded =
            WorkerGroup::new(1, Strategy::Sharded, adamw_spec(), |_| ToyModel::new()).unwrap();
        let mut plain =
            WorkerGroup::new(1, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        for _ in 0..5 {
            sharded.train_step(&batch, 1e-2).unwrap();
            plain.train_step(&batch, 1e-2).unwrap();
        }
        assert_eq!(
            sharded
                .flat_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            plain
                .flat_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn reruns_are_bit_identical() {
        let run = || {
            let batch = toy_batch(8);
            let mut g =
                WorkerGroup::new(2, Strategy::Replicated, adamw_spec(), |_| ToyModel::new())
                    .unwrap();
            for _ in 0..7 {
                g.train_step(&batch, 5e-3).unwrap();
            }
            g.flat_params()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn indivisible_batch_is_rejected() {
        let batch = toy_batch(6);
        let mut g =
            WorkerGroup::new(4, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        assert!(g.train_step(&batch, 1e-2).is_err());
    }

    #[test]
    fn lars_cannot_be_sharded() {
        let spec = OptimSpec {
            kind: OptimKind::Lars,
            ..Default::default()
        };
        let err = match WorkerGroup::new(2, Strategy::Sharded, spec, |_| ToyModel::new()) {
            Err(e) => e,
            Ok(_) => panic!("sharded LARS must be rejected"),
        };
        assert!(err.to_string().contains("elementwise"));
    }

    #[test]
    fn throughput_report_shapes() {
        let batch = toy_batch(4);
        let mut g =
            WorkerGroup::new(2, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        let report = g.throughput_report(&batch, 3, 1e-2).unwrap();
        assert_eq!(report.steps, 3);
        assert!(report.samples_per_sec > 0.0);
        assert_eq!(report.bytes_per_step_per_worker, 2 * 2 * 1 / 2 * 8);
        let mut single =
            WorkerGroup::new(1, Strategy::Replicated, adamw_spec(), |_| ToyModel::new()).unwrap();
        let report1 = single.throughput_report(&batch, 1, 1e-2).unwrap();
        assert_eq!(report1.bytes_per_step_total, 0);
    }
}
