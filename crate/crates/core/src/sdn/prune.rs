use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::model::{init_model, Architecture, SdnModel};
use super::train::{train, TrainConfig};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::math::{round, sqrt};
use crate::placement::{SensorMethod, SensorSet};
use crate::rng::derive_indexed_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PruneMode {
    /// Remove `fraction` of the surviving inputs at every stage.
    #[default]
    FractionOfRemaining,
    /// Step through target sparsities (fractions of the original width).
    TargetSparsityLadder,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PruneSchedule {
    pub mode: PruneMode,
    pub fraction: f64,
    pub ladder: Vec<f64>,
    /// Pruning stops once this many inputs survive.
    pub stop_at: usize,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        PruneSchedule {
            mode: PruneMode::FractionOfRemaining,
            fraction: 0.2,
            ladder: Vec::new(),
            stop_at: 1,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self, inputs: usize) -> Result<()> {
        if self.stop_at == 0 || self.stop_at > inputs {
            return Err(Error::invalid(format!("stop_at must be in [1, {inputs}], got {}", self.stop_at)));
        }
        match self.mode {
            PruneMode::FractionOfRemaining => {
                if !(self.fraction > 0.0 && self.fraction < 1.0) {
                    return Err(Error::invalid(format!("prune fraction must lie in (0, 1), got {}", self.fraction)));
                }
            }
            PruneMode::TargetSparsityLadder => {
                if self.ladder.is_empty() {
                    return Err(Error::invalid("sparsity ladder is empty"));
                }
                if self.ladder.iter().any(|s| !(0.0..1.0).contains(s)) || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid(format!(
                        "sparsity ladder must be strictly increasing in [0, 1): {:?}",
                        self.ladder
                    )));
                }
            }
        }
        Ok(())
    }

    /// Survivor count after the `stage`-th prune (1-based), or `None` once
    /// `stop_at` is reached. Always strictly below `surviving`.
    pub fn next_keep(&self, surviving: usize, original: usize, stage: usize) -> Option<usize> {
        if surviving <= self.stop_at {
            return None;
        }
        let target = match self.mode {
            PruneMode::FractionOfRemaining => {
                let removed = (round(self.fraction * surviving as f64) as usize).max(1);
                surviving.saturating_sub(removed)
            }
            PruneMode::TargetSparsityLadder => match self.ladder.get(stage - 1) {
                Some(&sparsity) => original - round(sparsity * original as f64) as usize,
                // ladder exhausted: finish at stop_at
                None => self.stop_at,
            },
        };
        Some(target.clamp(self.stop_at, surviving - 1))
    }

    /// Surviving counts visited from `inputs` down to `stop_at`.
    pub fn counts(&self, inputs: usize) -> Vec<usize> {
        let mut out = vec![inputs];
        let mut stage = 1;
        while let Some(k) = self.next_keep(*out.last().expect("non-empty"), inputs, stage) {
            out.push(k);
            stage += 1;
        }
        out
    }
}

/// Root-mean-square of each input's outgoing first-layer weights.
pub fn input_rms(model: &SdnModel) -> Vec<f64> {
    let w = &model.weights()[0];
    w.columns()
        .map(|c| sqrt(c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64))
        .collect()
}

/// Masks the surviving inputs with the smallest first-layer RMS weights so
/// that exactly `keep` survive. Ties prune the lower index first.
pub fn prune_inputs(model: &SdnModel, keep: usize) -> Result<SdnModel> {
    let surviving = model.surviving_inputs();
    if keep >= surviving.len() {
        return Err(Error::invalid(format!(
            "keep = {keep} must be below the {} surviving inputs",
            surviving.len()
        )));
    }
    let rms = input_rms(model);
    let mut ranked = surviving;
    ranked.sort_by(|&a, &b| rms[a].total_cmp(&rms[b]).then(a.cmp(&b)));
    let mut mask = model.input_mask().to_vec();
    for &i in &ranked[..ranked.len() - keep] {
        mask[i] = false;
    }
    let mut pruned = model.clone();
    pruned.set_mask_unchecked(mask);
    pruned.zero_masked_columns();
    Ok(pruned)
}

/// One train-then-prune stage of [`iterative_prune`].
#[derive(Debug, Clone, PartialEq)]
pub struct PruneStage {
    pub stage: usize,
    /// Candidate positions active while this stage trained.
    pub surviving: Vec<usize>,
    pub epochs: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub sensors: SensorSet,
    pub model: SdnModel,
    pub trajectory: Vec<PruneStage>,
}

/// Iterative magnitude pruning of the input layer.
///
/// `s_full` holds measurements at every candidate in `candidates` (one row
/// per candidate, one column per sample) and `x` the matching states. Each
/// stage trains to early stop, prunes per `schedule`, and re-draws the
/// surviving weights before retraining. `hidden` and the activations come
/// from `arch`; its first and last widths are replaced by the candidate
/// count and state dimension.
pub fn iterative_prune(
    s_full: &Matrix,
    x: &Matrix,
    candidates: &SensorSet,
    schedule: &PruneSchedule,
    config: &TrainConfig,
    arch: &Architecture,
) -> Result<PruneOutcome> {
    let d0 = candidates.len();
    check_dim("candidate measurement rows", d0, s_full.rows())?;
    check_dim("state dimension", candidates.m(), x.rows())?;
    schedule.validate(d0)?;
    let mut arch = arch.clone();
    arch.validate()?;
    arch.layer_sizes[0] = d0;
    *arch.layer_sizes.last_mut().expect("validated sizes") = x.rows();

    let mut model = init_model(&arch, config.init, derive_indexed_seed(config.seed, "prune-init", 0))?;
    let mut trajectory = Vec::new();
    let mut stage = 0;
    loop {
        let surviving = model.surviving_inputs();
        let (trained, history) = train(&model, s_full, x, config).map_err(|e| e.in_stage("prune/train"))?;
        trajectory.push(PruneStage {
            stage,
            surviving: surviving.clone(),
            epochs: history.epochs.len(),
            best_val_loss: history.best_val_loss,
            final_train_loss: history.epochs.last().map_or(f64::NAN, |e| e.train_loss),
        });
        stage += 1;
        let Some(keep) = schedule.next_keep(surviving.len(), d0, stage) else {
            model = trained;
            break;
        };
        model = prune_inputs(&trained, keep)?;
        model.reinitialize(config.init, derive_indexed_seed(config.seed, "prune-init", stage as u64));
    }

    let indices = model.surviving_inputs().iter().map(|&p| candidates.indices()[p]).collect();
    let sensors = SensorSet::new(indices, candidates.m(), SensorMethod::Pruned, Some(config.seed))?;
    Ok(PruneOutcome {
        sensors,
        model,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdn::Init;

    #[test]
    fn rms_ranking_masks_smallest() {
        let arch = Architecture::decoder(3, &[2], 1);
        let w1 = Matrix::from_rows(&[&[3.0, 0.1, 2.0], &[-3.0, -0.1, 2.0]]);
        let w2 = Matrix::from_rows(&[&[1.0, 1.0]]);
        let model = SdnModel::from_parts(arch, vec![w1, w2], vec![vec![0.0; 2], vec![0.0]], vec![true; 3]).unwrap();
        let rms = input_rms(&model);
        assert_eq!(rms, vec![3.0, 0.1, 2.0]);
        let pruned = prune_inputs(&model, 2).unwrap();
        assert_eq!(pruned.input_mask(), &[true, false, true]);
        assert!(prune_inputs(&pruned, 2).is_err());
        assert_eq!(prune_inputs(&pruned, 1).unwrap().input_mask(), &[true, false, false]);
    }

    #[test]
    fn masks_only_turn_off() {
        let arch = Architecture::decoder(6, &[4], 2);
        let model = init_model(&arch, Init::GlorotUniform, 11).unwrap();
        let a = prune_inputs(&model, 4).unwrap();
        let b = prune_inputs(&a, 2).unwrap();
        for (before, after) in a.input_mask().iter().zip(b.input_mask()) {
            assert!(*before || !*after);
        }
        assert_eq!(b.surviving_inputs().len(), 2);
    }

    #[test]
    fn schedule_arithmetic() {
        let s = PruneSchedule {
            fraction: 0.5,
            stop_at: 2,
            ..PruneSchedule::default()
        };
        assert_eq!(s.counts(8), vec![8, 4, 2]);
        let s = PruneSchedule {
            fraction: 0.2,
            stop_at: 3,
            ..PruneSchedule::default()
        };
        assert_eq!(s.counts(20), vec![20, 16, 13, 10, 8, 6, 5, 4, 3]);
        let ladder = PruneSchedule {
            mode: PruneMode::TargetSparsityLadder,
            ladder: vec![0.1, 0.2, 0.5, 0.9],
            stop_at: 1,
            ..PruneSchedule::default()
        };
        assert_eq!(ladder.counts(10), vec![10, 9, 8, 5, 1]);
    }

    #[test]
    fn schedule_validation() {
        let bad = [
            PruneSchedule { fraction: 1.0, ..PruneSchedule::default() },
            PruneSchedule { stop_at: 0, ..PruneSchedule::default() },
            PruneSchedule {
                mode: PruneMode::TargetSparsityLadder,
                ladder: vec![0.3, 0.2],
                ..PruneSchedule::default()
            },
        ];
        for s in bad {
            assert!(s.validate(10).is_err());
        }
    }
}
