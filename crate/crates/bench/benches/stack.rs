//! Throughput benchmarks for the hot paths: matmul kernels, encoder
//! forward, one MAE train step, and the all-reduce collective.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use vitmae::data::synthetic::{gen_synthetic, SyntheticKind};
use vitmae::data::{compute_band_stats, tiles_to_tensor};
use vitmae::dist::all_reduce_mean;
use vitmae::mae::{make_mask, patchify, MaeConfig, MaeModel};
use vitmae::optim::{OptimSpec, Optimizer};
use vitmae::tensor::Tensor;
use vitmae::vit::{ViTModel, ViTRecipe};

fn rand_tensor(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(data, shape).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    for &n in &[64usize, 128, 256] {
        let a = rand_tensor(&mut rng, &[n, n]);
        let b = rand_tensor(&mut rng, &[n, n]);
        group.throughput(Throughput::Elements((2 * n * n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| a.matmul(&b).unwrap())
        });
    }
    group.finish();
}

fn tiny_model() -> MaeModel<f32> {
    let recipe = ViTRecipe::vit_tiny();
    MaeModel::init(&recipe, MaeConfig::scaled_for(&recipe), 0).unwrap()
}

fn bench_encoder_forward(c: &mut Criterion) {
    let recipe = ViTRecipe::vit_tiny();
    let model = ViTModel::<f32>::init(&recipe, 0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let patches = rand_tensor(&mut rng, &[8, recipe.num_patches(), recipe.patch_dim()]);
    c.bench_function("vit_tiny_forward_b8", |b| {
        b.iter(|| model.forward_patches(&patches).unwrap())
    });
}

fn bench_mae_step(c: &mut Criterion) {
    let model = tiny_model();
    let recipe = model.encoder.recipe.clone();
    let set = gen_synthetic(SyntheticKind::Texture, 8, recipe.image, recipe.bands, 0).unwrap();
    let stats = compute_band_stats(&set.tiles).unwrap();
    let images = tiles_to_tensor(&set.tiles, &stats).unwrap();
    let patches = patchify(&images, recipe.patch).unwrap();
    let plan = make_mask(recipe.num_patches(), model.config.mask_ratio, 0).unwrap();
    let groups = model.param_groups(0.05, true);
    let mut opt = Optimizer::new(OptimSpec::default()).unwrap();
    c.bench_function("mae_tiny_train_step_b8", |b| {
        b.iter(|| {
            let (_, loss) = model.forward(&patches, &plan).unwrap();
            loss.backward().unwrap();
            opt.step(&groups, 1e-4).unwrap();
        })
    });
}

fn bench_all_reduce(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let buffers: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..100_000).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("all_reduce_mean_8x100k", |b| {
        b.iter(|| all_reduce_mean(&buffers).unwrap())
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_encoder_forward,
    bench_mae_step,
    bench_all_reduce
);
criterion_main!(benches);
