//! The bundled desk-scale benchmark: Gaussian clusters and a frozen random teacher.

use std::path::Path;

use crate::config::DistillConfig;
use crate::data::{gaussian_clusters, save_dataset, Dataset};
use crate::error::Result;
use crate::model::{init_model, save_model, Activation, MlpModel, ModelSpec};

pub const TRAIN_SAMPLES: usize = 1000;
pub const TEST_SAMPLES: usize = 500;
pub const CLASSES: usize = 10;
pub const INPUT_DIM: usize = 32;
pub const TEACHER_HIDDEN: usize = 64;
pub const TEACHER_DIM: usize = 16;
/// Std of the cluster centers; samples have unit noise around them.
pub const CENTER_SCALE: f64 = 1.5;

/// Config shipped as `configs/quickstart.toml`.
pub const QUICKSTART_CONFIG: &str = include_str!("../configs/quickstart.toml");

#[derive(Debug, Clone)]
pub struct DeskBenchmark {
    pub train: Dataset,
    /// Held out from distillation; same cluster centers as `train`.
    pub test: Dataset,
    pub teacher: MlpModel,
}

impl DeskBenchmark {
    pub fn generate(seed: u64) -> Result<Self> {
        let all = gaussian_clusters(TRAIN_SAMPLES + TEST_SAMPLES, CLASSES, INPUT_DIM, CENTER_SCALE, seed)?;
        let frac = TEST_SAMPLES as f64 / (TRAIN_SAMPLES + TEST_SAMPLES) as f64;
        let (train, test) = all.split(frac, seed)?;
        let teacher = init_model(
            &ModelSpec::mlp(INPUT_DIM, &[TEACHER_HIDDEN], TEACHER_DIM, Activation::Relu),
            seed.wrapping_add(1),
        )?;
        Ok(Self { train, test, teacher })
    }

    /// Writes `data.cssd`, `eval.cssd`, `teacher.cssm` and `config.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(format!("creating {}", dir.display()), e))?;
        save_dataset(&self.train, &dir.join("data.cssd"))?;
        save_dataset(&self.test, &dir.join("eval.cssd"))?;
        save_model(&self.teacher, &dir.join("teacher.cssm"))?;
        crate::binio::write_atomic(&dir.join("config.toml"), QUICKSTART_CONFIG.as_bytes())
    }
}

/// Reference benchmark settings: λ = 1, k = 4, 50 epochs, 8-D student with a head to 16-D.
pub fn benchmark_config(seed: u64) -> DistillConfig {
    let mut cfg = DistillConfig::default();
    cfg.seed = seed;
    cfg.loss.lambda = 1.0;
    cfg.neighbors.k = 4;
    cfg.neighbors.pool = 16;
    cfg.train.epochs = 50;
    cfg.student.hidden = vec![32];
    cfg.student.output_dim = 8;
    cfg
}
