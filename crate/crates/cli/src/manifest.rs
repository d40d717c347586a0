use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spacnet_core::interface::InterfaceConfig;
use spacnet_core::seed::derive_seed;
use spacnet_core::synth::{CutProtocol, Difficulty, ShapeKind};
use spacnet_model::{ModelConfig, TrainConfig};
use spacnet_tensor::AdamW;

use crate::error::{CliError, Result};
use crate::points::PointFormat;

/// Seed stream labels under the manifest's global seed.
pub mod stream {
    pub const SHAPE: u64 = 0;
    pub const TRAIN_VIEW: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TEST_CUT: u64 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub shuffle: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { epochs: 300, lr: 5e-4, weight_decay: 5e-4, lr_decay: 5e-4, shuffle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub shapes: Vec<ShapeKind>,
    /// Ground-truth points per shape.
    pub gt_points: usize,
    pub protocol: CutProtocol,
    /// Random-viewpoint training samples per shape; difficulties cycle S, M, H.
    pub train_per_shape: usize,
    /// Difficulties cut at each of the eight fixed test viewpoints.
    pub test_difficulties: Vec<Difficulty>,
    /// Use every ground-truth shape as the MMD reference library during eval.
    #[serde(default)]
    pub mmd_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub format: PointFormat,
    pub model: ModelConfig,
    pub interface: InterfaceConfig,
    pub train: TrainSettings,
    pub dataset: DatasetSpec,
}

impl ExperimentManifest {
    pub fn desk() -> Self {
        let model = ModelConfig::desk();
        let shapes = ["sphere", "box", "cylinder", "torus"]
            .iter()
            .map(|n| ShapeKind::default_named(n).expect("known shape"))
            .collect();
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/desk"),
            format: PointFormat::Ply,
            interface: InterfaceConfig { n_t: model.n_t, ..InterfaceConfig::default() },
            model,
            train: TrainSettings::default(),
            dataset: DatasetSpec {
                shapes,
                gt_points: 2048,
                protocol: CutProtocol::Viewpoint,
                train_per_shape: 4,
                test_difficulties: Difficulty::ALL.to_vec(),
                mmd_reference: false,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.interface.validate()?;
        let d = &self.dataset;
        let invalid = |msg: String| Err(CliError::Validation(msg));
        if self.interface.n_t != self.model.n_t {
            return invalid(format!("interface n_t {} differs from model n_t {}", self.interface.n_t, self.model.n_t));
        }
        if d.shapes.is_empty() {
            return invalid("dataset needs at least one shape".into());
        }
        if d.test_difficulties.is_empty() && d.train_per_shape == 0 {
            return invalid("dataset would be empty".into());
        }
        let hardest = d.test_difficulties.iter().copied().chain(Difficulty::ALL).map(Difficulty::fraction).fold(0.0, f64::max);
        let kept = d.gt_points - mask_count(d.gt_points, hardest).min(d.gt_points);
        if kept < self.model.n_input {
            return invalid(format!(
                "{} ground-truth points leave {kept} after the hardest cut, model expects {}",
                d.gt_points, self.model.n_input
            ));
        }
        if self.train.epochs == 0 || !(self.train.lr > 0.0) {
            return invalid("training needs epochs > 0 and lr > 0".into());
        }
        Ok(())
    }

    /// Model configuration with the initialization seed drawn from the global seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { init_seed: derive_seed(self.seed, &[stream::INIT]), ..self.model.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            optimizer: AdamW { lr: t.lr, weight_decay: t.weight_decay, ..AdamW::default() },
            lr_decay: t.lr_decay,
            seed: derive_seed(self.seed, &[stream::SHUFFLE]),
            shuffle: t.shuffle,
        }
    }

    pub fn dataset_index_path(&self) -> PathBuf {
        self.out_dir.join("dataset.json")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("model.ckpt")
    }
}

/// Points removed for a nominal masked fraction.
pub fn mask_count(gt_points: usize, fraction: f64) -> usize {
    (fraction * gt_points as f64).round() as usize
}
