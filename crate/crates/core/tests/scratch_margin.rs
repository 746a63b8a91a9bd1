// scratch experiment: desk-scale probe margin measurement (to be replaced)
use std::time::Instant;
use vitmae::config::{DataConfig, RecipeRef, RunConfig, WorkerConfig};
use vitmae::data::synthetic::{gen_synthetic, SyntheticKind};
use vitmae::data::{compute_band_stats, tiles_to_tensor};
use vitmae::dist::Strategy;
use vitmae::optim::OptimSpec;
use vitmae::tasks::linear_probe;
use vitmae::tensor::Tensor;
use vitmae::trainer::Pretrainer;
use vitmae::vit::{ViTModel, ViTRecipe};

#[test]
#[ignore]
fn measure_probe_margin() {
    for seed in [0u64, 1, 2] {
        let t0 = Instant::now();
        let set = gen_synthetic(SyntheticKind::Classification { classes: 4 }, 2000, 32, 4, 1000 + seed).unwrap();
        let stats = compute_band_stats(&set.tiles).unwrap();
        let images = tiles_to_tensor(&set.tiles, &stats).unwrap();
        let labels = set.labels.clone();

        // pretrain
        let dir = tempfile::tempdir().unwrap();
        let tile_dir = dir.path().join("tiles");
        std::fs::create_dir_all(&tile_dir).unwrap();
        for t in &set.tiles { t.write_to(tile_dir.join(format!("{}.mtil", t.id))).unwrap(); }
        let config = RunConfig {
            recipe: RecipeRef::Name("vit-tiny".into()),
            data: DataConfig::Tiles { dir: tile_dir },
            workers: WorkerConfig { count: 1, strategy: Strategy::Replicated },
            seed,
            epochs: 10,
            batch: 64,
            augment: true,
            out_dir: dir.path().join("run"),
            checkpoint_every: 0,
            ..Default::default()
        };
        let mut trainer = Pretrainer::<f32>::new(config).unwrap();
        let report = trainer.run(None).unwrap();
        let pretrain_secs = t0.elapsed().as_secs_f64();

        // split
        let n = labels.len();
        let eval_idx: Vec<usize> = (0..n).filter(|i| i % 5 == 0).collect();
        let train_idx: Vec<usize> = (0..n).filter(|i| i % 5 != 0).collect();
        let tx = images.gather(0, &train_idx).unwrap().detach();
        let ty: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let ex = images.gather(0, &eval_idx).unwrap().detach();
        let ey: Vec<usize> = eval_idx.iter().map(|&i| labels[i]).collect();

        let probe = |bb: &ViTModel<f32>| {
            linear_probe(bb, &tx, &ty, &ex, &ey, &OptimSpec::lars(10.0), 30, 128, 7).unwrap().accuracy
        };
        let t1 = Instant::now();
        let acc_pre = probe(&trainer.model().encoder);
        let random = ViTModel::<f32>::init(&ViTRecipe::vit_tiny(), 5000 + seed).unwrap();
        let acc_rand = probe(&random);
        let probe_secs = t1.elapsed().as_secs_f64();
        println!(
            "seed {seed}: pretrain {:.1}s ({} steps, loss {:.4}->{:.4}), probes {:.1}s, acc_pre {:.4}, acc_rand {:.4}, margin {:.1} pts",
            pretrain_secs, report.steps_run,
            report.losses.first().unwrap(), report.losses.last().unwrap(),
            probe_secs, acc_pre, acc_rand, (acc_pre - acc_rand) * 100.0
        );
        let _ = Tensor::<f32>::zeros(&[1]);
    }
}
