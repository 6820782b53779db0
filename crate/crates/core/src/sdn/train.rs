use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::adam::{Adam, AdamConfig};
use super::grad::{loss, loss_and_gradients};
use super::model::{Init, SdnModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::math::round;
use crate::rng::{derive_seed, rng_from_seed, Fingerprint};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Fraction of training columns held out to monitor early stopping.
    pub val_fraction: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            max_epochs: 1000,
            patience: 5,
            batch_size: None,
            val_fraction: 0.1,
            seed: 0,
            init: Init::GlorotUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return Err(Error::invalid(format!("adam betas must lie in (0, 1), got {:?}", self.adam_betas)));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        Fingerprint::new()
            .f64s(&[self.learning_rate, self.adam_betas.0, self.adam_betas.1, self.adam_eps, self.val_fraction])
            .u64(self.max_epochs as u64)
            .u64(self.patience as u64)
            .u64(self.batch_size.map_or(0, |b| b as u64))
            .u64(self.seed)
            .u64(self.init as u64)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Monitored loss: validation loss, or the post-epoch training loss when
    /// no validation columns are held out.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Patience-based stopping rule on a monitored loss. An epoch improves only
/// if its loss is strictly below the best seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.wait += 1;
            StopDecision {
                improved: false,
                stop: self.wait >= self.patience,
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Trains `model` on measurement/state pairs (one sample per column) with
/// ADAM and patience-based early stopping, returning the parameters from the
/// best monitored epoch.
pub fn train(model: &SdnModel, s_train: &Matrix, x_train: &Matrix, config: &TrainConfig) -> Result<(SdnModel, History)> {
    config.validate()?;
    check_dim("training batch size", s_train.cols(), x_train.cols())?;
    let n = s_train.cols();
    if n == 0 {
        return Err(Error::invalid("training needs at least one column"));
    }
    let mut val_count = round(config.val_fraction * n as f64) as usize;
    if config.val_fraction > 0.0 {
        val_count = val_count.max(1);
    }
    if val_count >= n {
        return Err(Error::invalid(format!(
            "val_fraction {} leaves no training columns out of {n}",
            config.val_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if val_count > 0 {
        order.shuffle(&mut rng_from_seed(derive_seed(config.seed, "val")));
    }
    let (val_idx, fit_idx) = order.split_at(val_count);
    let mut val_idx = val_idx.to_vec();
    let mut fit_idx = fit_idx.to_vec();
    val_idx.sort_unstable();
    fit_idx.sort_unstable();

    let (s_fit, x_fit) = (s_train.select_cols(&fit_idx), x_train.select_cols(&fit_idx));
    let val = (val_count > 0).then(|| (s_train.select_cols(&val_idx), x_train.select_cols(&val_idx)));
    let batch = config.batch_size.unwrap_or(fit_idx.len()).min(fit_idx.len());
    let mut batch_rng = rng_from_seed(derive_seed(config.seed, "batch"));

    let mut current = model.clone();
    let mut best = model.clone();
    let mut opt = Adam::new(model, config.adam());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = History {
        best_val_loss: f64::INFINITY,
        ..History::default()
    };

    let mut positions: Vec<usize> = (0..fit_idx.len()).collect();
    for epoch in 1..=config.max_epochs {
        let mut train_loss = 0.0;
        if batch == fit_idx.len() {
            let (l, g) = loss_and_gradients(&current, &s_fit, &x_fit).map_err(|_| Error::Divergence { epoch })?;
            opt.step(&mut current, &g)?;
            train_loss = l;
        } else {
            positions.shuffle(&mut batch_rng);
            for chunk in positions.chunks(batch) {
                let (sb, xb) = (s_fit.select_cols(chunk), x_fit.select_cols(chunk));
                let (l, g) = loss_and_gradients(&current, &sb, &xb).map_err(|_| Error::Divergence { epoch })?;
                opt.step(&mut current, &g)?;
                train_loss += l * chunk.len() as f64;
            }
            train_loss /= fit_idx.len() as f64;
        }
        let monitored = match &val {
            Some((sv, xv)) => loss(&current, sv, xv),
            None => loss(&current, &s_fit, &x_fit),
        }
        .map_err(|_| Error::Divergence { epoch })?;
        if !current.parameters().iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: monitored,
        });
        let decision = stopper.observe(epoch, monitored);
        if decision.improved {
            best.clone_from(&current);
        }
        if decision.stop {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.best_val_loss = stopper.best();
    if history.best_epoch == 0 {
        // max_epochs == 0: nothing was trained
        history.best_val_loss = match &val {
            Some((sv, xv)) => loss(model, sv, xv)?,
            None => loss(model, &s_fit, &x_fit)?,
        };
    }
    Ok((best, history))
}

impl Init {
    pub fn as_str(self) -> &'static str {
        match self {
            Init::GlorotUniform => "glorot_uniform",
            Init::SmallNormal => "small_normal",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdn::{init_model, Architecture};
    use rand::Rng as _;

    #[test]
    fn early_stopping_stops_exactly_patience_epochs_after_best() {
        let mut es = EarlyStopping::new(5);
        let losses = [5.0, 4.0, 3.0, 3.0, 3.5, 3.0, 4.0, 3.2, 1.0];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(i + 1, l).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(es.best_epoch(), 3);
        assert_eq!(stopped_at, Some(8));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let arch = Architecture::decoder(2, &[4], 3);
        let model = init_model(&arch, Init::GlorotUniform, 1).unwrap();
        let s = Matrix::from_col_major(2, 10, (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let x = Matrix::from_col_major(3, 10, (0..30).map(|i| (i as f64).sin()).collect()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&model, &s, &x, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(history.epochs.windows(2).all(|w| w[0].val_loss == w[1].val_loss));
        assert_eq!(history.epochs.len(), 1 + cfg.patience);
    }

    #[test]
    fn learns_a_realizable_linear_map() {
        let mut rng = crate::rng::rng_from_seed(5);
        let (d, m, n) = (3, 12, 80);
        let w = Matrix::from_col_major(m, d, (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let s = Matrix::from_col_major(d, n, (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = w.matmul(&s).unwrap();
        let arch = Architecture::decoder(d, &[16], m);
        let model = init_model(&arch, Init::GlorotUniform, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 2000,
            patience: 100,
            val_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&model, &s, &x, &cfg).unwrap();
        let y = trained.forward(&s).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        assert!((num / den).sqrt() < 1e-2, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn returns_best_validation_parameters() {
        let mut rng = crate::rng::rng_from_seed(9);
        let s = Matrix::from_col_major(2, 40, (0..80).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = Matrix::from_col_major(3, 40, (0..120).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let model = init_model(&Architecture::decoder(2, &[8], 3), Init::GlorotUniform, 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 300,
            patience: 5,
            val_fraction: 0.25,
            ..TrainConfig::default()
        };
        let (_, history) = train(&model, &s, &x, &cfg).unwrap();
        let min = history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert!(history.best_val_loss <= min + 1e-12);
    }

    #[test]
    fn minibatch_training_is_deterministic() {
        let s = Matrix::from_col_major(2, 30, (0..60).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        let x = Matrix::from_col_major(2, 30, (0..60).map(|i| (i as f64 * 0.11).sin()).collect()).unwrap();
        let model = init_model(&Architecture::decoder(2, &[5], 2), Init::GlorotUniform, 3).unwrap();
        let cfg = TrainConfig {
            batch_size: Some(7),
            max_epochs: 20,
            ..TrainConfig::default()
        };
        assert_eq!(train(&model, &s, &x, &cfg).unwrap(), train(&model, &s, &x, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            TrainConfig { patience: 0, ..TrainConfig::default() },
            TrainConfig { adam_betas: (1.0, 0.9), ..TrainConfig::default() },
            TrainConfig { val_fraction: 1.0, ..TrainConfig::default() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
