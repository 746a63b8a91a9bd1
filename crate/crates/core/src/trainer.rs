//! MAE pretraining loop on top of the worker-group simulator: epoch
//! shuffling, per-sample augmentation, per-step mask plans, LR scheduling
//! with the effective-batch scaling rule, metrics JSONL, and bit-exact
//! checkpoint/resume. All randomness is derived from the run seed and the
//! step/epoch indices, so resuming at step n replays the exact stream.

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{DataConfig, RunConfig};
use crate::data::augment::{hflip, random_resized_crop};
use crate::data::synthetic::{gen_synthetic, SyntheticKind};
use crate::data::{compute_band_stats, tiles_to_tensor, BandStats, TileSample};
use crate::dist::{SimBatch, SimModel, Strategy, WorkerGroup};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::mae::{make_mask, patchify, MaeModel};
use crate::optim::{lr_at, scale_lr, ParamGroup, ScheduleSpec};
use crate::seeds::{self, Purpose};
use crate::tensor::Tensor;
use rand::Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// A stack of normalized images acting as the global batch.
#[derive(Clone)]
pub struct TileBatch<T: Element> {
    pub images: Tensor<T>,
}

impl<T: Element> SimBatch for TileBatch<T> {
    fn len(&self) -> usize {
        self.images.shape()[0]
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        let rows: Vec<usize> = (start..end).collect();
        TileBatch {
            images: self.images.gather(0, &rows).expect("slice in range").detach(),
        }
    }
}

/// MAE objective wrapped for the worker-group simulator. The mask plan for
/// step `s` is derived from `(root_seed, s)`, so every worker (and a
/// sequential rerun) agrees on it.
pub struct PretrainTask<T: Element> {
    pub model: MaeModel<T>,
    pub root_seed: u64,
    weight_decay: f64,
}

impl<T: Element> PretrainTask<T> {
    pub fn init(config: &RunConfig) -> Result<Self> {
        let recipe = config.recipe.resolve()?;
        let mae_config = config.mae_config()?;
        Ok(PretrainTask {
            model: MaeModel::init(&recipe, mae_config, config.seed)?,
            root_seed: config.seed,
            weight_decay: config.optim.weight_decay,
        })
    }

    pub fn from_checkpoint(config: &RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        Ok(PretrainTask {
            model: crate::checkpoint::load_mae(ckpt)?,
            root_seed: config.seed,
            weight_decay: config.optim.weight_decay,
        })
    }
}

impl<T: Element> SimModel<T> for PretrainTask<T> {
    type Batch = TileBatch<T>;

    fn param_groups(&self) -> Vec<ParamGroup<T>> {
        self.model.param_groups(self.weight_decay, true)
    }

    fn loss(&self, batch: &TileBatch<T>, step: u64) -> Result<Tensor<T>> {
        let patches = patchify(&batch.images, self.model.encoder.recipe.patch)?;
        let n = self.model.encoder.recipe.num_patches();
        let plan = make_mask(
            n,
            self.model.config.mask_ratio,
            seeds::derive(self.root_seed, Purpose::Mask, step),
        )?;
        let (_, loss) = self.model.forward(&patches, &plan)?;
        Ok(loss)
    }
}

/// JSONL metrics sink: `{run_id, task, metric, value, step}` per line.
pub struct MetricsWriter {
    file: std::fs::File,
    run_id: String,
}

impl MetricsWriter {
    pub fn append(path: impl AsRef<Path>, run_id: &str) -> Result<Self> {
        if let Some(dir) = path.as_ref().parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(MetricsWriter {
            file,
            run_id: run_id.to_string(),
        })
    }

    pub fn emit(&mut self, task: &str, metric: &str, value: f64, step: u64) -> Result<()> {
        let line = serde_json::json!({
            "run_id": self.run_id,
            "task": task,
            "metric": metric,
            "value": value,
            "step": step,
        });
        writeln!(self.file, "{line}")?;
        Ok(())
    }
}

/// Convert a metrics JSONL file to CSV.
pub fn metrics_to_csv(jsonl: impl AsRef<Path>, csv: impl AsRef<Path>) -> Result<()> {
    let text = std::fs::read_to_string(jsonl.as_ref())?;
    let mut out = String::from("run_id,task,metric,value,step\n");
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            v["run_id"].as_str().unwrap_or(""),
            v["task"].as_str().unwrap_or(""),
            v["metric"].as_str().unwrap_or(""),
            v["value"],
            v["step"]
        ));
    }
    std::fs::write(csv.as_ref(), out)?;
    Ok(())
}

/// Load training tiles per the data config.
pub fn load_tiles(data: &DataConfig) -> Result<Vec<TileSample>> {
    match data {
        DataConfig::Synthetic { n, size, bands } => {
            Ok(gen_synthetic(SyntheticKind::Texture, *n, *size, *bands, 0x7e97)?.tiles)
        }
        DataConfig::Tiles { dir } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
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
            paths.iter().map(TileSample::read_from).collect()
        }
    }
}

/// Outcome of a pretraining run.
pub struct PretrainReport {
    pub steps_run: u64,
    pub losses: Vec<f64>,
    pub final_checkpoint: PathBuf,
}

/// The pretraining driver.
pub struct Pretrainer<T: Element> {
    config: RunConfig,
    group: WorkerGroup<T, PretrainTask<T>>,
    tiles: Vec<TileSample>,
    stats: BandStats,
    schedule: ScheduleSpec,
    steps_per_epoch: u64,
    start_step: u64,
}

impl<T: Element> Pretrainer<T> {
    /// Fresh run from a config.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let tiles = load_tiles(&config.data)?;
        Self::build(config, tiles, None)
    }

    /// Resume from a checkpoint written by a previous run of the same
    /// config: replays the remaining steps bit-exactly.
    pub fn resume(config: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        config.validate()?;
        let tiles = load_tiles(&config.data)?;
        Self::build(config, tiles, Some(ckpt))
    }

    /// Fresh run, then overwrite every tensor that exists in `ckpt` with a
    /// matching shape (transfer warm start). Band compatibility is checked
    /// up front.
    pub fn warm_start(config: RunConfig, ckpt: &Checkpoint) -> Result<(Self, usize)> {
        config.validate()?;
        let recipe = config.recipe.resolve()?;
        crate::checkpoint::check_band_compat(ckpt, &recipe)?;
        let mut trainer = Self::new(config)?;
        let mut loaded = 0;
        let model = &trainer.group.worker(0).model;
        let state = model.state_tensors();
        for (name, tensor) in state {
            if !ckpt.has_tensor(&name) {
                continue;
            }
            let incoming = ckpt.get_tensor::<T>(&name)?;
            if incoming.shape() == tensor.shape() {
                tensor.set_data(incoming.to_vec());
                loaded += 1;
            }
        }
        // propagate to every replica/shard
        let flat: Vec<T> = {
            let groups = trainer.group.worker(0).param_groups();
            let mut out = Vec::new();
            for g in &groups {
                g.tensor.with_data(|d| out.extend_from_slice(d));
            }
            out
        };
        trainer.group.set_flat_params(&flat)?;
        Ok((trainer, loaded))
    }

    fn build(config: RunConfig, tiles: Vec<TileSample>, ckpt: Option<&Checkpoint>) -> Result<Self> {
        if tiles.len() < config.batch {
            return Err(Error::Config(format!(
                "batch {} exceeds dataset of {} tiles",
                config.batch,
                tiles.len()
            )));
        }
        let stats = match ckpt.and_then(|c| c.meta.norm_stats.clone()) {
            Some(stats) => stats,
            None => compute_band_stats(&tiles)?,
        };
        let group = WorkerGroup::new(
            config.workers.count,
            config.workers.strategy,
            config.optim.clone(),
            |_| match ckpt {
                Some(c) => PretrainTask::from_checkpoint(&config, c),
                None => PretrainTask::init(&config),
            },
        )?;
        let steps_per_epoch = (tiles.len() / config.batch) as u64;
        let peak = scale_lr(config.optim.base_lr, config.batch);
        let schedule = ScheduleSpec {
            kind: config.schedule.kind,
            warmup_epochs: config.schedule.warmup_epochs.min(config.epochs as f64 * 0.5),
            total_epochs: config.epochs as f64,
            peak_lr: peak,
            min_lr: config.schedule.min_lr,
            gamma: config.schedule.gamma,
            milestones: config.schedule.milestones.clone(),
        };
        let mut trainer = Pretrainer {
            config,
            group,
            tiles,
            stats,
            schedule,
            steps_per_epoch,
            start_step: 0,
        };
        if let Some(c) = ckpt {
            let a = c.get_vec::<T>("opt/a")?;
            let b = c.get_vec::<T>("opt/b")?;
            trainer.group.import_opt_state(&a, &b, c.meta.step)?;
            trainer.start_step = c.meta.step;
        }
        Ok(trainer)
    }

    pub fn total_steps(&self) -> u64 {
        self.config.epochs * self.steps_per_epoch
    }

    pub fn stats(&self) -> &BandStats {
        &self.stats
    }

    pub fn model(&self) -> &MaeModel<T> {
        &self.group.worker(0).model
    }

    fn build_batch(&self, epoch: u64, indices: &[usize]) -> Result<TileBatch<T>> {
        let out_size = self.config.recipe.resolve()?.image as u32;
        let mut batch_tiles = Vec::with_capacity(indices.len());
        for &i in indices {
            let tile = &self.tiles[i];
            let tile = if self.config.augment {
                let aug_seed =
                    seeds::derive(self.config.seed, Purpose::Augment, (epoch << 32) ^ i as u64);
                let cropped = random_resized_crop(
                    tile,
                    out_size,
                    (0.2, 1.0),
                    (3.0 / 4.0, 4.0 / 3.0),
                    aug_seed,
                )?;
                hflip(&cropped, 0.5, aug_seed.wrapping_add(1))
            } else {
                tile.clone()
            };
            batch_tiles.push(tile);
        }
        let images = tiles_to_tensor(&batch_tiles, &self.stats)?;
        let data: Vec<T> = images.to_vec().into_iter().map(|v| T::from_f64(v as f64)).collect();
        Ok(TileBatch {
            images: Tensor::from_vec(data, &images.shape())?,
        })
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut rng = seeds::rng(self.config.seed, Purpose::Shuffle, epoch);
        let mut idx: Vec<usize> = (0..self.tiles.len()).collect();
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }

    fn save_checkpoint(&mut self, path: &Path) -> Result<()> {
        let (a, b, step) = self.group.export_opt_state();
        let meta = CheckpointMeta {
            recipe: Some(self.model().encoder.recipe.clone()),
            mae: Some(self.model().config.clone()),
            norm_stats: Some(self.stats.clone()),
            mask_ratio: Some(self.model().config.mask_ratio),
            step,
            root_seed: self.config.seed,
        };
        let mut ckpt = Checkpoint::new(meta);
        for (name, tensor) in self.model().state_tensors() {
            ckpt.add_tensor(&name, &tensor)?;
        }
        ckpt.add_tensor("opt/a", &Tensor::from_vec(a.clone(), &[a.len()])?)?;
        ckpt.add_tensor("opt/b", &Tensor::from_vec(b.clone(), &[b.len()])?)?;
        ckpt.save(path)
    }

    /// Run (or continue) the loop until the configured step budget,
    /// optionally stopping early after `max_steps` of this invocation.
    pub fn run(&mut self, max_steps: Option<u64>) -> Result<PretrainReport> {
        let out_dir = self.config.out_dir.clone();
        std::fs::create_dir_all(&out_dir)?;
        self.config
            .save_effective(out_dir.join("effective-config.json"))?;
        let run_id = format!(
            "pretrain-{}-seed{}",
            self.config.recipe.resolve()?.name,
            self.config.seed
        );
        let mut metrics = MetricsWriter::append(out_dir.join("metrics.jsonl"), &run_id)?;

        let total = self.total_steps();
        let mut losses = Vec::new();
        let mut ran = 0u64;
        let mut step = self.start_step;
        while step < total {
            if let Some(limit) = max_steps {
                if ran >= limit {
                    break;
                }
            }
            let epoch = step / self.steps_per_epoch;
            let pos = (step % self.steps_per_epoch) as usize;
            let order = self.epoch_order(epoch);
            let indices = &order[pos * self.config.batch..(pos + 1) * self.config.batch];
            let batch = self.build_batch(epoch, indices)?;
            let lr = lr_at(&self.schedule, step as f64 / self.steps_per_epoch as f64);
            let loss = self.group.train_step(&batch, lr)?.as_f64();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(step));
            }
            metrics.emit("pretrain", "mae_loss", loss, step)?;
            losses.push(loss);
            step += 1;
            ran += 1;
            if self.config.checkpoint_every > 0 && step % self.config.checkpoint_every == 0 {
                self.save_checkpoint(&out_dir.join(format!("ckpt-step{step:08}.orkt")))?;
            }
        }
        self.start_step = step;
        let final_path = out_dir.join("final.orkt");
        self.save_checkpoint(&final_path)?;
        Ok(PretrainReport {
            steps_run: ran,
            losses,
            final_checkpoint: final_path,
        })
    }
}

/// Outcome of the distributed-equivalence suites.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DdpCheckReport {
    pub workers: usize,
    pub steps: u64,
    /// Max relative deviation: K-worker replicated vs 1-worker sequential.
    pub replicated_vs_sequential: f64,
    /// Max relative deviation: sharded vs replicated at the same K.
    pub sharded_vs_replicated: f64,
    /// Bitwise equality across two identical replicated reruns.
    pub rerun_bit_identical: bool,
    pub tolerance: f64,
}

impl DdpCheckReport {
    pub fn passed(&self) -> bool {
        self.replicated_vs_sequential < self.tolerance
            && self.sharded_vs_replicated < self.tolerance
            && self.rerun_bit_identical
    }
}

fn max_rel_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Run both equivalence suites in f64 on a 2-block model: (a) K workers at
/// batch `per_worker` replicated against one worker seeing the whole
/// batch, and (b) sharded against replicated. Deterministic; reruns are
/// bit-identical.
pub fn ddp_check(k: usize, steps: u64) -> Result<DdpCheckReport> {
    use crate::config::{RecipeRef, WorkerConfig};
    use crate::vit::ViTRecipe;

    if k == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let per_worker = 2usize;
    let global = per_worker * k;
    let recipe = ViTRecipe {
        name: "ddp-check".into(),
        width: 16,
        depth: 2,
        mlp: 32,
        heads: 2,
        patch: 4,
        bands: 3,
        image: 16,
        cls_token: true,
    };
    let config = |workers: WorkerConfig| RunConfig {
        recipe: RecipeRef::Inline(recipe.clone()),
        data: DataConfig::Synthetic {
            n: global.max(8),
            size: 16,
            bands: 3,
        },
        workers,
        seed: 0xddc,
        epochs: 1,
        batch: global,
        augment: false,
        out_dir: std::env::temp_dir().join("vitmae-ddp-check"),
        checkpoint_every: 0,
        optim: crate::optim::OptimSpec {
            weight_decay: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };

    let tiles = load_tiles(&config(WorkerConfig::default()).data)?;
    let stats = compute_band_stats(&tiles)?;
    let images = tiles_to_tensor(&tiles[..global], &stats)?;
    let data: Vec<f64> = images.to_vec().into_iter().map(|v| v as f64).collect();
    let batch = TileBatch::<f64> {
        images: Tensor::from_vec(data, &images.shape())?,
    };

    let run = |workers: usize, strategy: Strategy| -> Result<Vec<f64>> {
        let cfg = config(WorkerConfig {
            count: workers,
            strategy,
        });
        let mut group = WorkerGroup::<f64, _>::new(
            workers,
            strategy,
            cfg.optim.clone(),
            |_| PretrainTask::<f64>::init(&cfg),
        )?;
        for _ in 0..steps {
            group.train_step(&batch, 1e-3)?;
        }
        Ok(group.flat_params())
    };

    let replicated = run(k, Strategy::Replicated)?;
    let sequential = run(1, Strategy::Replicated)?;
    let sharded = run(k, Strategy::Sharded)?;
    let rerun = run(k, Strategy::Replicated)?;

    let bit_identical = replicated
        .iter()
        .zip(&rerun)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    Ok(DdpCheckReport {
        workers: k,
        steps,
        replicated_vs_sequential: max_rel_deviation(&replicated, &sequential),
        sharded_vs_replicated: max_rel_deviation(&sharded, &replicated),
        rerun_bit_identical: bit_identical,
        tolerance: 1e-6,
    })
}
