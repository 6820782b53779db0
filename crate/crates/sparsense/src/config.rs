//! Declarative experiment description for `sparsense bench`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsense_core::bench::{trial_seed, NoiseTarget, PipelineKind, PipelineSpec};
use sparsense_core::sdn::{Activation, PruneMode, PruneSchedule, TrainConfig};
use sparsense_core::snapshots::{gen_synthetic, Generator, SnapshotMatrix, SplitStrategy};

use crate::ensemble::{SplitPlan, TrialJob};
use crate::error::{Error, Result};
use crate::formats::{load_dataset, read_bytes, MatrixFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Generator {
        generator: Generator,
        #[serde(default)]
        seed: u64,
    },
    File {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default)]
        format: Option<MatrixFormat>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_count: usize,
    #[serde(default)]
    pub strategy: SplitStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub psnr_db: f64,
    #[serde(default)]
    pub target: NoiseTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![35, 40],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }
}

/// Pruning settings for `p_sdn`; pruning always stops at the swept sensor
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub mode: PruneMode,
    pub fraction: f64,
    pub ladder: Vec<f64>,
    /// Random candidate pool size; every valid index when absent.
    pub candidates: Option<usize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        let d = PruneSchedule::default();
        PruneConfig {
            mode: d.mode,
            fraction: d.fraction,
            ladder: d.ladder,
            candidates: None,
        }
    }
}

impl PruneConfig {
    pub fn schedule(&self, stop_at: usize) -> PruneSchedule {
        PruneSchedule {
            mode: self.mode,
            fraction: self.fraction,
            ladder: self.ladder.clone(),
            stop_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub pipelines: Vec<PipelineKind>,
    /// Sensor counts to sweep.
    pub sensors: Vec<usize>,
    pub trials: usize,
    /// Master seed; trial `t` uses a seed derived from it and `t`, shared
    /// by every pipeline and sensor count.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; one per core when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Emit PGM placement and reconstruction maps for the first trial.
    #[serde(default = "yes")]
    pub maps: bool,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    /// Parses TOML, or JSON when the file ends in `.json`, then validates.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json(text)
        } else {
            Self::from_toml(text)
        }
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let DatasetSource::File { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.pipelines.is_empty() {
            return bad("pipelines must not be empty".into());
        }
        if self.sensors.is_empty() || self.sensors.contains(&0) {
            return bad("sensors must be a non-empty list of positive counts".into());
        }
        if self.split.train_count == 0 {
            return bad("split.train_count must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        for job in self.jobs().into_iter().take(self.pipelines.len() * self.sensors.len()) {
            job.spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            train_count: self.split.train_count,
            strategy: self.split.strategy,
        }
    }

    pub fn spec(&self, kind: PipelineKind, n: usize, trial: usize) -> PipelineSpec {
        let mut spec = PipelineSpec::new(kind, n, trial_seed(self.seed, trial));
        spec.hidden = self.model.hidden.clone();
        spec.hidden_activation = self.model.hidden_activation;
        spec.output_activation = self.model.output_activation;
        spec.train = self.train.clone();
        if let Some(noise) = &self.noise {
            spec.psnr_db = Some(noise.psnr_db);
            spec.noise_target = noise.target;
        }
        spec.prune = self.prune.schedule(n);
        spec.candidates = self.prune.candidates;
        spec
    }

    /// Trials in a fixed order: trial index, then pipeline, then sensor count.
    pub fn jobs(&self) -> Vec<TrialJob> {
        let mut jobs = Vec::with_capacity(self.trials * self.pipelines.len() * self.sensors.len());
        for trial in 0..self.trials {
            for &kind in &self.pipelines {
                for &n in &self.sensors {
                    jobs.push(TrialJob {
                        spec: self.spec(kind, n, trial),
                        trial,
                    });
                }
            }
        }
        jobs
    }

    pub fn load_data(&self) -> Result<SnapshotMatrix> {
        match &self.dataset {
            DatasetSource::Generator { generator, seed } => Ok(gen_synthetic(generator, *seed)?),
            DatasetSource::File { path, format } => {
                load_dataset(path, format.unwrap_or_else(|| MatrixFormat::from_path(path)))
            }
        }
    }
}
