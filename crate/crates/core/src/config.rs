//! Run configuration: one JSON document describing a training run. Unknown
//! keys are rejected; all defaults are materialized into the effective
//! config stored next to the run outputs.

use crate::dist::Strategy;
use crate::error::{Error, Result};
use crate::mae::MaeConfig;
use crate::optim::{LayerDecaySpec, OptimSpec, ScheduleSpec};
use crate::vit::ViTRecipe;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Recipe by well-known name or spelled out inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecipeRef {
    Name(String),
    Inline(ViTRecipe),
}

impl RecipeRef {
    pub fn resolve(&self) -> Result<ViTRecipe> {
        match self {
            RecipeRef::Inline(r) => Ok(r.clone()),
            RecipeRef::Name(name) => ViTRecipe::by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown recipe name '{name}'"))),
        }
    }
}

impl Default for RecipeRef {
    fn default() -> Self {
        RecipeRef::Name("vit-tiny".to_string())
    }
}

/// Where training tiles come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Generated texture tiles.
    Synthetic { n: usize, size: usize, bands: usize },
    /// A directory of `.mtil` files (sorted by file name).
    Tiles { dir: PathBuf },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            n: 512,
            size: 32,
            bands: 4,
        }
    }
}

/// Worker-group shape for the distributed simulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkerConfig {
    pub count: usize,
    pub strategy: Strategy,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig {
            count: 1,
            strategy: Strategy::Replicated,
        }
    }
}

/// Full pretraining run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub recipe: RecipeRef,
    pub data: DataConfig,
    pub mae: Option<MaeConfig>,
    pub optim: OptimSpec,
    pub schedule: ScheduleSpec,
    pub layer_decay: LayerDecaySpec,
    pub workers: WorkerConfig,
    pub seed: u64,
    pub epochs: u64,
    pub batch: usize,
    /// Apply RandomResizedCrop + RandomHorizontalFlip during pretraining.
    pub augment: bool,
    pub out_dir: PathBuf,
    /// Checkpoint every N steps (0 = only final).
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            recipe: RecipeRef::default(),
            data: DataConfig::default(),
            mae: None,
            optim: OptimSpec::default(),
            schedule: ScheduleSpec {
                warmup_epochs: 2.0,
                total_epochs: 20.0,
                ..Default::default()
            },
            layer_decay: LayerDecaySpec::default(),
            workers: WorkerConfig::default(),
            seed: 0,
            epochs: 20,
            batch: 64,
            augment: true,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let recipe = self.recipe.resolve()?;
        recipe.validate()?;
        self.optim.validate()?;
        self.schedule.validate()?;
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be >= 1".into()));
        }
        if self.workers.count == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        if self.batch % self.workers.count != 0 {
            return Err(Error::Config(format!(
                "batch {} must divide across {} workers",
                self.batch, self.workers.count
            )));
        }
        Ok(())
    }

    /// Resolved MAE config: explicit, or scaled to the recipe.
    pub fn mae_config(&self) -> Result<MaeConfig> {
        let recipe = self.recipe.resolve()?;
        Ok(self
            .mae
            .clone()
            .unwrap_or_else(|| MaeConfig::scaled_for(&recipe)))
    }

    /// Write the fully-materialized effective config (every field present).
    pub fn save_effective(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut effective = self.clone();
        effective.recipe = RecipeRef::Inline(self.recipe.resolve()?);
        effective.mae = Some(self.mae_config()?);
        let text = serde_json::to_string_pretty(&effective)?;
        if let Some(dir) = path.as_ref().parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path.as_ref(), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"bogus_key": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn recipe_by_name_and_inline() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"recipe": "vit-b"}"#).unwrap();
        assert_eq!(cfg.recipe.resolve().unwrap().width, 768);
        let cfg: RunConfig = serde_json::from_str(
            r#"{"recipe": {"name":"custom","width":64,"depth":2,"mlp":128,"heads":2,
                "patch":4,"bands":3,"image":16}}"#,
        )
        .unwrap();
        assert_eq!(cfg.recipe.resolve().unwrap().width, 64);
        assert!(serde_json::from_str::<RunConfig>(r#"{"recipe": "vit-z"}"#)
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn effective_config_materializes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("effective.json");
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        cfg.save_effective(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        // every top-level field present, including resolved sub-configs
        for key in [
            "recipe", "data", "mae", "optim", "schedule", "layer_decay", "workers", "seed",
            "epochs", "batch", "augment", "out_dir", "checkpoint_every",
        ] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert!(value["mae"].is_object());
        // reloadable
        RunConfig::load(&path).unwrap();
    }

    #[test]
    fn batch_must_divide_workers() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"batch": 6, "workers": {"count": 4}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
