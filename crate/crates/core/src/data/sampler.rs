//! Diversity-stratified manifest sampling: greedy stratified round-robin
//! over (land cover x climate zone) strata with seeded shuffling, followed
//! by a population-quota repair pass. Deterministic per seed.

use super::manifest::ManifestEntry;
use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// Quotas the sampled manifest must satisfy.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerQuotas {
    /// Number of locations to select.
    pub target_locations: usize,
    pub max_views_per_location: usize,
    /// All chosen views of a location must come from pairwise-distinct
    /// seasons.
    pub require_distinct_seasons: bool,
    /// Target fraction of selected locations with non-zero population.
    pub population_nonzero_fraction: f64,
    /// Acceptance band around the population target.
    pub population_tolerance: f64,
    /// Minimum selected locations per available stratum.
    pub min_stratum_coverage: usize,
    /// Warn instead of erroring on unsatisfiable quotas.
    pub best_effort: bool,
}

impl Default for SamplerQuotas {
    fn default() -> Self {
        SamplerQuotas {
            target_locations: 64,
            max_views_per_location: 4,
            require_distinct_seasons: true,
            population_nonzero_fraction: 0.60,
            population_tolerance: 0.05,
            min_stratum_coverage: 1,
            best_effort: false,
        }
    }
}

/// Achieved-diversity report emitted next to the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerDiagnostics {
    pub locations: usize,
    pub views: usize,
    pub population_nonzero_fraction: f64,
    pub stratum_counts: BTreeMap<String, usize>,
    pub season_view_counts: BTreeMap<String, usize>,
    pub sensor_view_counts: BTreeMap<String, usize>,
    pub views_per_location_histogram: BTreeMap<usize, usize>,
    pub warnings: Vec<String>,
}

struct Location {
    stratum: (String, String),
    nonzero_pop: bool,
    views: Vec<usize>, // indices into the catalog
}

fn group_locations(catalog: &[ManifestEntry]) -> Result<BTreeMap<String, Location>> {
    let mut locations: BTreeMap<String, Location> = BTreeMap::new();
    for (i, entry) in catalog.iter().enumerate() {
        entry.validate()?;
        let loc = locations
            .entry(entry.location_id.clone())
            .or_insert_with(|| Location {
                stratum: entry.stratum(),
                nonzero_pop: entry.population > 0.0,
                views: Vec::new(),
            });
        loc.views.push(i);
    }
    Ok(locations)
}

/// Pick each location's views: sorted by (date, path) for determinism,
/// first view per season when distinct seasons are required, capped at
/// `max_views`.
fn choose_views(
    catalog: &[ManifestEntry],
    views: &[usize],
    quotas: &SamplerQuotas,
) -> Vec<usize> {
    let mut ordered: Vec<usize> = views.to_vec();
    ordered.sort_by(|&a, &b| {
        (catalog[a].date, &catalog[a].path).cmp(&(catalog[b].date, &catalog[b].path))
    });
    let mut chosen = Vec::new();
    let mut seen_seasons = Vec::new();
    for idx in ordered {
        if chosen.len() >= quotas.max_views_per_location {
            break;
        }
        let season = catalog[idx].season;
        if quotas.require_distinct_seasons && seen_seasons.contains(&season) {
            continue;
        }
        seen_seasons.push(season);
        chosen.push(idx);
    }
    chosen
}

/// Select locations and per-location views satisfying the quotas.
/// Returns the manifest (a subset of the catalog, no duplicates) plus
/// diagnostics. Infeasible quotas produce an error naming the first
/// unsatisfiable constraint unless `best_effort` is set.
pub fn sample_manifest(
    catalog: &[ManifestEntry],
    quotas: &SamplerQuotas,
    seed: u64,
) -> Result<(Vec<ManifestEntry>, SamplerDiagnostics)> {
    if catalog.is_empty() {
        return Err(Error::Config("catalog is empty".into()));
    }
    if quotas.target_locations == 0 || quotas.max_views_per_location == 0 {
        return Err(Error::Config("quotas must be positive".into()));
    }
    if !(0.0..=1.0).contains(&quotas.population_nonzero_fraction)
        || !(0.0..=1.0).contains(&quotas.population_tolerance)
    {
        return Err(Error::Config("population fractions must be in [0,1]".into()));
    }

    let locations = group_locations(catalog)?;
    let loc_ids: Vec<String> = locations.keys().cloned().collect();
    let mut warnings = Vec::new();

    if quotas.target_locations > loc_ids.len() {
        let msg = format!(
            "target of {} locations exceeds the {} available",
            quotas.target_locations,
            loc_ids.len()
        );
        if quotas.best_effort {
            warnings.push(msg);
        } else {
            return Err(Error::Infeasible(msg));
        }
    }
    let target = quotas.target_locations.min(loc_ids.len());

    // strata over location ids, seeded shuffle within each stratum
    let mut rng = seeds::rng(seed, Purpose::Sampler, 0);
    let mut strata: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for (id, loc) in &locations {
        strata.entry(loc.stratum.clone()).or_default().push(id.clone());
    }
    for ids in strata.values_mut() {
        for i in (1..ids.len()).rev() {
            let j = rng.gen_range(0..=i);
            ids.swap(i, j);
        }
    }

    let needed_for_coverage = strata.len() * quotas.min_stratum_coverage;
    if needed_for_coverage > target {
        let msg = format!(
            "stratum coverage needs {} locations ({} strata x {}), target is only {target}",
            needed_for_coverage,
            strata.len(),
            quotas.min_stratum_coverage
        );
        if quotas.best_effort {
            warnings.push(msg);
        } else {
            return Err(Error::Infeasible(msg));
        }
    }
    for (key, ids) in &strata {
        if ids.len() < quotas.min_stratum_coverage {
            let msg = format!(
                "stratum ({}, {}) has only {} locations, need {}",
                key.0,
                key.1,
                ids.len(),
                quotas.min_stratum_coverage
            );
            if quotas.best_effort {
                warnings.push(msg);
            } else {
                return Err(Error::Infeasible(msg));
            }
        }
    }

    // greedy round-robin over strata: coverage first, then fill to target
    let mut selected: Vec<String> = Vec::new();
    let mut cursors: BTreeMap<(String, String), usize> = BTreeMap::new();
    let stratum_keys: Vec<(String, String)> = strata.keys().cloned().collect();
    let mut round = 0usize;
    while selected.len() < target {
        let mut advanced = false;
        for key in &stratum_keys {
            if selected.len() >= target {
                break;
            }
            let ids = &strata[key];
            let cursor = cursors.entry(key.clone()).or_insert(0);
            // keep strict round-robin: one pick per stratum per round
            if *cursor > round {
                continue;
            }
            if let Some(id) = ids.get(*cursor) {
                selected.push(id.clone());
                *cursor += 1;
                advanced = true;
            }
        }
        if !advanced {
            break; // every stratum exhausted
        }
        round += 1;
    }

    // population repair pass: swap selections within the same stratum to
    // land inside the tolerance band, preserving stratum coverage
    let is_nonzero = |id: &String| locations[id].nonzero_pop;
    let band = (
        quotas.population_nonzero_fraction - quotas.population_tolerance,
        quotas.population_nonzero_fraction + quotas.population_tolerance,
    );
    let fraction = |sel: &[String]| {
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().filter(|id| is_nonzero(id)).count() as f64 / sel.len() as f64
        }
    };
    let mut guard = 0;
    loop {
        let f = fraction(&selected);
        if (f >= band.0 && f <= band.1) || guard > selected.len() * 2 {
            break;
        }
        guard += 1;
        let need_nonzero = f < band.0;
        // find a swap candidate: an unselected location of the wanted kind,
        // preferring the same stratum as a removable selected location
        let mut swapped = false;
        'outer: for (pos, id) in selected.iter().enumerate() {
            if is_nonzero(id) == need_nonzero {
                continue; // removing this would not help
            }
            let stratum = &locations[id].stratum;
            for candidate in &strata[stratum] {
                if selected.contains(candidate) {
                    continue;
                }
                if is_nonzero(candidate) == need_nonzero {
                    selected[pos] = candidate.clone();
                    swapped = true;
                    break 'outer;
                }
            }
        }
        if !swapped {
            break;
        }
    }
    let achieved = fraction(&selected);
    if (achieved - quotas.population_nonzero_fraction).abs() > quotas.population_tolerance + 1e-12 {
        let msg = format!(
            "population quota unsatisfiable: achieved nonzero fraction {achieved:.3} outside \
             {:.3} +/- {:.3}",
            quotas.population_nonzero_fraction, quotas.population_tolerance
        );
        if quotas.best_effort {
            warnings.push(msg);
        } else {
            return Err(Error::Infeasible(msg));
        }
    }

    // materialize views
    let mut manifest: Vec<ManifestEntry> = Vec::new();
    let mut stratum_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut season_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut sensor_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut views_hist: BTreeMap<usize, usize> = BTreeMap::new();
    for id in &selected {
        let loc = &locations[id];
        let views = choose_views(catalog, &loc.views, quotas);
        *views_hist.entry(views.len()).or_default() += 1;
        *stratum_counts
            .entry(format!("{}|{}", loc.stratum.0, loc.stratum.1))
            .or_default() += 1;
        for idx in views {
            let entry = &catalog[idx];
            *season_counts
                .entry(format!("{:?}", entry.season).to_lowercase())
                .or_default() += 1;
            *sensor_counts.entry(format!("{:?}", entry.sensor)).or_default() += 1;
            manifest.push(entry.clone());
        }
    }

    let diagnostics = SamplerDiagnostics {
        locations: selected.len(),
        views: manifest.len(),
        population_nonzero_fraction: achieved,
        stratum_counts,
        season_view_counts: season_counts,
        sensor_view_counts: sensor_counts,
        views_per_location_histogram: views_hist,
        warnings,
    };
    Ok((manifest, diagnostics))
}
