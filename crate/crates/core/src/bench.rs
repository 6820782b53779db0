//! The four reconstruction pipelines and the metrics used to compare them.
//!
//! - `q_sdn`: QR-pivot sensors feeding a shallow decoder.
//! - `r_sdn`: random sensors feeding a shallow decoder.
//! - `p_sdn`: sensors chosen by iterative input pruning of a decoder.
//! - `q_pod`: QR-pivot sensors with linear gappy-POD reconstruction.
//!
//! A trial derives every random stream from its master seed, so pipelines
//! run with the same seed see the same split and the same noise draw.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::lowrank::{fit_coefficients, pod_basis, reconstruct};
use crate::math::sqrt;
use crate::placement::{qr_pivots, random_sensors, sample_columns, SensorMethod, SensorSet};
use crate::rng::{derive_indexed_seed, derive_seed, Fingerprint};
use crate::sdn::{init_model, iterative_prune, train, Activation, Architecture, PruneSchedule, TrainConfig};
use crate::snapshots::{NoiseSpec, SnapshotMatrix, SplitSpec, SplitStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PipelineKind {
    QSdn,
    RSdn,
    PSdn,
    QPod,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::QSdn => "q_sdn",
            PipelineKind::RSdn => "r_sdn",
            PipelineKind::PSdn => "p_sdn",
            PipelineKind::QPod => "q_pod",
        }
    }

    pub fn uses_decoder(self) -> bool {
        !matches!(self, PipelineKind::QPod)
    }
}

/// Which side of the split receives measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseTarget {
    #[default]
    Both,
    TrainOnly,
    TestOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub n_sensors: usize,
    /// POD rank; must equal `n_sensors` for `q_pod`. Ignored by decoder
    /// pipelines, which use `n_sensors` modes for placement.
    pub rank_r: usize,
    /// Hidden layer widths of the decoder.
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub train: TrainConfig,
    /// Peak signal-to-noise ratio in dB; `None` for clean data.
    pub psnr_db: Option<f64>,
    pub noise_target: NoiseTarget,
    /// Pruning schedule for `p_sdn`; `stop_at` is forced to `n_sensors`.
    pub prune: PruneSchedule,
    /// Size of the random candidate pool for `p_sdn` (`None`: every index).
    pub candidates: Option<usize>,
    pub seed: u64,
}

impl PipelineSpec {
    pub fn new(kind: PipelineKind, n_sensors: usize, seed: u64) -> Self {
        PipelineSpec {
            kind,
            n_sensors,
            rank_r: n_sensors,
            hidden: alloc::vec![35, 40],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            train: TrainConfig::default(),
            psnr_db: None,
            noise_target: NoiseTarget::Both,
            prune: PruneSchedule::default(),
            candidates: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sensors == 0 {
            return Err(Error::invalid("n_sensors must be positive"));
        }
        if self.kind == PipelineKind::QPod && self.rank_r != self.n_sensors {
            return Err(Error::invalid(format!(
                "q_pod needs rank_r = n_sensors, got r = {} and n = {}",
                self.rank_r, self.n_sensors
            )));
        }
        if self.kind.uses_decoder() && self.hidden.is_empty() {
            return Err(Error::invalid("decoder pipelines need at least one hidden layer"));
        }
        if let Some(psnr) = self.psnr_db {
            NoiseSpec { psnr_db: psnr, seed: 0 }.validate()?;
        }
        if let Some(c) = self.candidates {
            if c < self.n_sensors {
                return Err(Error::invalid(format!(
                    "candidate pool of {c} is smaller than n_sensors = {}",
                    self.n_sensors
                )));
            }
        }
        self.train.validate()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut fp = Fingerprint::new()
            .bytes(self.kind.as_str().as_bytes())
            .u64(self.n_sensors as u64)
            .u64(self.rank_r as u64)
            .u64(self.train.fingerprint())
            .f64s(&[self.psnr_db.unwrap_or(f64::INFINITY), self.prune.fraction])
            .u64(self.candidates.map_or(0, |c| c as u64 + 1))
            .u64(self.seed)
            .bytes(self.hidden_activation.as_str().as_bytes())
            .bytes(self.output_activation.as_str().as_bytes());
        for &h in &self.hidden {
            fp = fp.u64(h as u64);
        }
        fp.finish()
    }
}

/// Result of one pipeline run (wall time is measured by the caller).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub kind: PipelineKind,
    pub n_sensors: usize,
    pub seed: u64,
    pub spec_fingerprint: u64,
    pub sensors: SensorSet,
    pub relative_error: f64,
    pub per_sample_errors: Vec<f64>,
    /// Reconstruction of the first test column (mean included).
    pub example_reconstruction: Vec<f64>,
    /// Largest condition estimate of the sensed block (`q_pod` only).
    pub max_condition: Option<f64>,
}

/// Mean relative ℓ₂ error over test columns, with both reconstruction and
/// truth shifted by the training mean.
pub fn relative_error(x_hat: &Matrix, x_test: &Matrix, mean: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim("reconstruction rows", x_test.rows(), x_hat.rows())?;
    check_dim("reconstruction columns", x_test.cols(), x_hat.cols())?;
    check_dim("mean length", x_test.rows(), mean.len())?;
    if x_test.cols() == 0 {
        return Err(Error::invalid("no test columns"));
    }
    let mut per_sample = Vec::with_capacity(x_test.cols());
    let mut diff = alloc::vec![0.0; mean.len()];
    let mut truth = alloc::vec![0.0; mean.len()];
    for (k, (xh, x)) in x_hat.columns().zip(x_test.columns()).enumerate() {
        for i in 0..mean.len() {
            truth[i] = x[i] - mean[i];
            diff[i] = (xh[i] - mean[i]) - truth[i];
        }
        let den = norm2(&truth);
        if den == 0.0 {
            return Err(Error::ZeroNormTruth { column: k });
        }
        per_sample.push(norm2(&diff) / den);
    }
    let re = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok((re, per_sample))
}

/// Mean and spread of per-trial errors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
    pub std_err: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64], failures: usize) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            count: 0,
            failures,
            mean: f64::NAN,
            std: f64::NAN,
            std_err: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = sqrt(var);
    Summary {
        count: n,
        failures,
        mean,
        std,
        std_err: std / sqrt(n as f64),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Master seed of trial `index` in an ensemble seeded with `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_indexed_seed(master, "trial", index as u64)
}

/// Train/test split of a trial, drawn from the trial's own split stream so
/// every pipeline run with that seed sees the same columns.
pub fn split_for_trial(
    data: &SnapshotMatrix,
    train_count: usize,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<(SnapshotMatrix, SnapshotMatrix)> {
    data.split(&SplitSpec {
        train_count,
        seed: derive_seed(seed, "split"),
        strategy,
    })
    .map_err(|e| e.in_stage("split"))
}

fn apply_noise(data: &SnapshotMatrix, psnr: Option<f64>, seed: u64) -> Result<SnapshotMatrix> {
    match psnr {
        Some(p) => data.add_noise(&NoiseSpec { psnr_db: p, seed }),
        None => Ok(data.clone()),
    }
}

/// Runs one pipeline end to end on an existing split.
pub fn run_pipeline(spec: &PipelineSpec, train_data: &SnapshotMatrix, test_data: &SnapshotMatrix) -> Result<TrialOutcome> {
    spec.validate()?;
    check_dim("test state dimension", train_data.dim(), test_data.dim())?;
    let m = train_data.dim();
    if spec.n_sensors > m {
        return Err(Error::invalid(format!("{} sensors exceed the state dimension {m}", spec.n_sensors)));
    }

    let (noisy_train, noisy_test) = match spec.noise_target {
        NoiseTarget::Both => (spec.psnr_db, spec.psnr_db),
        NoiseTarget::TrainOnly => (spec.psnr_db, None),
        NoiseTarget::TestOnly => (None, spec.psnr_db),
    };
    let train_data = apply_noise(train_data, noisy_train, derive_seed(spec.seed, "noise-train")).map_err(|e| e.in_stage("noise"))?;
    let test_data = apply_noise(test_data, noisy_test, derive_seed(spec.seed, "noise-test")).map_err(|e| e.in_stage("noise"))?;

    let mean = train_data.row_mean();
    let train_c = train_data.center_with(&mean)?;
    let test_c = test_data.center_with(&mean)?;

    let mut train_cfg = spec.train.clone();
    train_cfg.seed = derive_seed(spec.seed, "train");
    let init_seed = derive_seed(spec.seed, "init");
    let n = spec.n_sensors;

    let mut max_condition = None;
    let (sensors, mut x_hat) = match spec.kind {
        PipelineKind::QSdn | PipelineKind::RSdn => {
            let sensors = if spec.kind == PipelineKind::QSdn {
                let basis = pod_basis(&train_c, n, &mean).map_err(|e| e.in_stage("basis"))?;
                qr_pivots(&basis, n).map_err(|e| e.in_stage("placement"))?
            } else {
                random_sensors(m, n, derive_seed(spec.seed, "placement"), &[]).map_err(|e| e.in_stage("placement"))?
            };
            let mut arch = Architecture::decoder(n, &spec.hidden, m);
            arch.hidden_activation = spec.hidden_activation;
            arch.output_activation = spec.output_activation;
            let model = init_model(&arch, train_cfg.init, init_seed).map_err(|e| e.in_stage("init"))?;
            let s_train = sample_columns(train_c.values(), &sensors)?;
            let (model, _) = train(&model, &s_train, train_c.values(), &train_cfg).map_err(|e| e.in_stage("train"))?;
            let s_test = sample_columns(test_c.values(), &sensors)?;
            let y = model.forward(&s_test).map_err(|e| e.in_stage("evaluate"))?;
            (sensors, y)
        }
        PipelineKind::PSdn => {
            let pool = spec.candidates.unwrap_or(m);
            let candidates = if pool == m {
                SensorSet::new((0..m).collect(), m, SensorMethod::Random, None)?
            } else {
                random_sensors(m, pool, derive_seed(spec.seed, "candidates"), &[]).map_err(|e| e.in_stage("candidates"))?
            };
            let mut schedule = spec.prune.clone();
            schedule.stop_at = n;
            let mut arch = Architecture::decoder(pool, &spec.hidden, m);
            arch.hidden_activation = spec.hidden_activation;
            arch.output_activation = spec.output_activation;
            let s_full = sample_columns(train_c.values(), &candidates)?;
            let outcome = iterative_prune(&s_full, train_c.values(), &candidates, &schedule, &train_cfg, &arch)
                .map_err(|e| e.in_stage("prune"))?;
            let s_test = sample_columns(test_c.values(), &candidates)?;
            let y = outcome.model.forward(&s_test).map_err(|e| e.in_stage("evaluate"))?;
            (outcome.sensors, y)
        }
        PipelineKind::QPod => {
            let basis = pod_basis(&train_c, spec.rank_r, &mean).map_err(|e| e.in_stage("basis"))?;
            let sensors = qr_pivots(&basis, n).map_err(|e| e.in_stage("placement"))?;
            let mut y = Matrix::zeros(m, test_c.len());
            let mut worst: f64 = 0.0;
            for j in 0..test_c.len() {
                let s: Vec<f64> = sensors.indices().iter().map(|&i| test_c.column(j)[i]).collect();
                let fit = fit_coefficients(&basis, &sensors, &s).map_err(|e| e.in_stage("fit"))?;
                worst = worst.max(fit.condition);
                let x = reconstruct(&basis, &fit.coefficients, false)?;
                y.col_mut(j).copy_from_slice(&x);
            }
            max_condition = Some(worst);
            (sensors, y)
        }
    };

    // back to absolute values
    for j in 0..x_hat.cols() {
        for (v, mu) in x_hat.col_mut(j).iter_mut().zip(&mean) {
            *v += mu;
        }
    }
    let (re, per_sample) = relative_error(&x_hat, test_data.values(), &mean).map_err(|e| e.in_stage("evaluate"))?;
    Ok(TrialOutcome {
        kind: spec.kind,
        n_sensors: n,
        seed: spec.seed,
        spec_fingerprint: spec.fingerprint(),
        sensors,
        relative_error: re,
        per_sample_errors: per_sample,
        example_reconstruction: x_hat.col(0).to_vec(),
        max_condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::{gen_synthetic, Generator, RankRandomParams};
    use alloc::vec;

    #[test]
    fn relative_error_examples() {
        let x = Matrix::from_rows(&[&[3.0], &[4.0]]);
        let mean = [0.0, 0.0];
        assert_eq!(relative_error(&x, &x, &mean).unwrap().0, 0.0);
        let xh = Matrix::from_rows(&[&[3.0], &[0.0]]);
        let (re, per) = relative_error(&xh, &x, &mean).unwrap();
        assert!((re - 0.8).abs() < 1e-15);
        assert_eq!(per.len(), 1);
        // predicting the mean
        let mean = [1.0, -2.0];
        let xh = Matrix::from_rows(&[&[1.0], &[-2.0]]);
        assert_eq!(relative_error(&xh, &x, &mean).unwrap().0, 1.0);
    }

    #[test]
    fn zero_norm_truth_is_reported() {
        let x = Matrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let err = relative_error(&x, &x, &[3.0, 4.0]).unwrap_err();
        assert_eq!(err, Error::ZeroNormTruth { column: 1 });
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[0.25], 0);
        assert_eq!((s.mean, s.std), (0.25, 0.0));
        let s = summarize(&[0.5, 0.5, 0.5], 1);
        assert_eq!((s.mean, s.std, s.failures), (0.5, 0.0, 1));
        let s = summarize(&[1.0, 2.0, 3.0, 4.0], 0);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std_err - s.std / 2.0).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        let mut s = PipelineSpec::new(PipelineKind::QPod, 3, 0);
        s.rank_r = 4;
        assert!(s.validate().is_err());
        let mut s = PipelineSpec::new(PipelineKind::QSdn, 3, 0);
        s.hidden.clear();
        assert!(s.validate().is_err());
        assert!(PipelineSpec::new(PipelineKind::RSdn, 0, 0).validate().is_err());
    }

    #[test]
    fn q_pod_exact_on_in_span_data() {
        let g = Generator::RankRRandom(RankRandomParams {
            m: 300,
            snapshots: 40,
            rank: 3,
            amplitude: 2.0,
        });
        let data = gen_synthetic(&g, 4).unwrap();
        let (train, test) = data
            .split(&SplitSpec {
                train_count: 30,
                seed: 1,
                strategy: SplitStrategy::Random,
            })
            .unwrap();
        let out = run_pipeline(&PipelineSpec::new(PipelineKind::QPod, 3, 7), &train, &test).unwrap();
        assert!(out.relative_error < 1e-8, "{}", out.relative_error);
        assert_eq!(out.per_sample_errors.len(), 10);
        assert_eq!(out.sensors.method(), SensorMethod::QrPivot);
    }

    #[test]
    fn decoder_pipelines_are_deterministic() {
        let g = Generator::RankRRandom(RankRandomParams {
            m: 50,
            snapshots: 30,
            rank: 2,
            amplitude: 1.0,
        });
        let data = gen_synthetic(&g, 1).unwrap();
        let (train, test) = data
            .split(&SplitSpec {
                train_count: 24,
                seed: 0,
                strategy: SplitStrategy::Leading,
            })
            .unwrap();
        for kind in [PipelineKind::QSdn, PipelineKind::RSdn, PipelineKind::PSdn] {
            let mut spec = PipelineSpec::new(kind, 2, 3);
            spec.hidden = vec![6];
            spec.train.max_epochs = 20;
            spec.candidates = Some(6);
            spec.psnr_db = Some(40.0);
            let a = run_pipeline(&spec, &train, &test).unwrap();
            let b = run_pipeline(&spec, &train, &test).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.sensors.len(), 2);
        }
    }
}
