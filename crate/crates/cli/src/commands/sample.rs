use clap::Args;
use std::path::PathBuf;
use vitmae::data::manifest::{read_catalog, write_manifest};
use vitmae::data::sampler::{sample_manifest, SamplerQuotas};
use vitmae::Result;

#[derive(Args)]
pub struct SampleArgs {
    /// Input catalog (JSONL of manifest entries).
    #[arg(long)]
    catalog: PathBuf,
    /// Output manifest path (JSONL).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    target_locations: usize,
    #[arg(long, default_value_t = 4)]
    max_views: usize,
    /// Allow repeated seasons within one location's views.
    #[arg(long)]
    allow_repeated_seasons: bool,
    #[arg(long, default_value_t = 0.60)]
    population_target: f64,
    #[arg(long, default_value_t = 0.05)]
    population_tolerance: f64,
    #[arg(long, default_value_t = 1)]
    min_stratum_coverage: usize,
    /// Warn instead of failing on unsatisfiable quotas.
    #[arg(long)]
    best_effort: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: SampleArgs) -> Result<i32> {
    let catalog = read_catalog(&args.catalog)?;
    let quotas = SamplerQuotas {
        target_locations: args.target_locations,
        max_views_per_location: args.max_views,
        require_distinct_seasons: !args.allow_repeated_seasons,
        population_nonzero_fraction: args.population_target,
        population_tolerance: args.population_tolerance,
        min_stratum_coverage: args.min_stratum_coverage,
        best_effort: args.best_effort,
    };
    let (manifest, diagnostics) = sample_manifest(&catalog, &quotas, args.seed)?;
    write_manifest(&args.out, &manifest)?;
    println!("{}", serde_json::to_string_pretty(&diagnostics)?);
    for warning in &diagnostics.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(0)
}
