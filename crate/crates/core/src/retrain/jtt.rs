use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::nn::{train_plain, train_upweighted, Network, TrainConfig, EVAL_CHUNK};
use crate::pseudo::PseudoGroupLabels;
use crate::retrain::derive_seed;
use crate::scalar::Scalar;

/// One upweighting run: a short identification training, its error set, and
/// a reweighted retrain from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JttConfig {
    pub id_epochs: usize,
    pub lambda_up: f64,
    pub retrain_epochs: usize,
    pub seed: u64,
}

impl JttConfig {
    pub fn validate(&self) -> Result<()> {
        if self.id_epochs == 0 || self.retrain_epochs == 0 {
            return Err(Error::InvalidConfig(
                "identification and retrain epochs must be positive".into(),
            ));
        }
        if !(self.lambda_up >= 1.0 && self.lambda_up.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_up must be at least 1, got {}",
                self.lambda_up
            )));
        }
        Ok(())
    }
}

/// Search grid over identification length and upweight factor, scored by
/// worst pseudo-group validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JttGrid {
    pub id_epochs: Vec<usize>,
    pub lambda_up: Vec<f64>,
    pub retrain_epochs: usize,
    pub seed: u64,
}

impl Default for JttGrid {
    fn default() -> Self {
        JttGrid {
            id_epochs: vec![1, 2],
            lambda_up: vec![5.0, 20.0, 50.0],
            retrain_epochs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JttRunStats {
    pub id_epochs: usize,
    pub lambda_up: f64,
    pub error_set_size: usize,
    pub worst_group_val: f64,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JttReport {
    pub runs: Vec<JttRunStats>,
    pub chosen_id_epochs: usize,
    pub chosen_lambda_up: f64,
    /// True when the chosen run's identification net fit its training data
    /// perfectly, so upweighting degenerated to plain retraining.
    pub error_set_empty: bool,
}

fn image_shape<S: Scalar>(data: &GroupedDataset<S>) -> Result<(usize, usize, usize)> {
    match data.images.shape() {
        [_, c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::InvalidShape(format!(
            "expected (n, channels, height, width) images, got {other:?}"
        ))),
    }
}

/// Trains a fresh identification net for `cfg.id_epochs`, collects its
/// training errors, and retrains another fresh net with each error counted
/// `cfg.lambda_up` times through per-sample loss weights, keeping the epoch
/// snapshot with the best worst-group accuracy over `val_group_ids`. An
/// empty error set leaves every weight at one, which is plain retraining.
pub fn jtt_single<S: Scalar>(
    train: &GroupedDataset<S>,
    val: &GroupedDataset<S>,
    val_group_ids: &[usize],
    cfg: &JttConfig,
    base: &TrainConfig,
) -> Result<(Network<S>, JttRunStats)> {
    cfg.validate()?;
    let input = image_shape(train)?;
    let id_net = Network::conv_net(input, train.num_classes, derive_seed(cfg.seed, 11))?;
    let id_cfg = TrainConfig {
        epochs: cfg.id_epochs,
        seed: derive_seed(cfg.seed, 12),
        ..base.clone()
    };
    let id_net = train_plain(id_net, train, &id_cfg)?;
    let preds = id_net.predict(&train.images, EVAL_CHUNK)?;
    let mut weights = vec![S::one(); train.len()];
    let mut error_set_size = 0;
    for (w, (&p, &y)) in weights.iter_mut().zip(preds.iter().zip(&train.class_labels)) {
        if p != y {
            *w = S::of_f64(cfg.lambda_up);
            error_set_size += 1;
        }
    }

    let fresh = Network::conv_net(input, train.num_classes, derive_seed(cfg.seed, 13))?;
    let retrain_cfg = TrainConfig {
        epochs: cfg.retrain_epochs,
        seed: derive_seed(cfg.seed, 14),
        ..base.clone()
    };
    let outcome = train_upweighted(fresh, train, &weights, val, val_group_ids, &retrain_cfg)?;
    let stats = JttRunStats {
        id_epochs: cfg.id_epochs,
        lambda_up: cfg.lambda_up,
        error_set_size,
        worst_group_val: outcome.best_accuracy,
        best_epoch: outcome.best_epoch,
    };
    Ok((outcome.network, stats))
}

/// Runs [`jtt_single`] over every `(id_epochs, lambda_up)` cell and keeps
/// the run with the best worst pseudo-group validation accuracy; earlier
/// cells win ties.
pub fn jtt_retrain<S: Scalar>(
    train: &GroupedDataset<S>,
    val: &GroupedDataset<S>,
    val_groups: &PseudoGroupLabels,
    grid: &JttGrid,
    base: &TrainConfig,
) -> Result<(Network<S>, JttReport)> {
    if grid.id_epochs.is_empty() || grid.lambda_up.is_empty() {
        return Err(Error::InvalidConfig("empty upweighting grid".into()));
    }
    let gids = val_groups.group_ids_for_split(val.len())?;
    let mut runs: Vec<JttRunStats> = Vec::new();
    let mut best: Option<(f64, Network<S>, usize, f64)> = None;
    for &id_epochs in &grid.id_epochs {
        for &lambda_up in &grid.lambda_up {
            let cfg = JttConfig {
                id_epochs,
                lambda_up,
                retrain_epochs: grid.retrain_epochs,
                seed: grid.seed,
            };
            let (net, stats) = jtt_single(train, val, &gids, &cfg, base)?;
            if best
                .as_ref()
                .is_none_or(|(score, ..)| stats.worst_group_val > *score)
            {
                best = Some((stats.worst_group_val, net, id_epochs, lambda_up));
            }
            runs.push(stats);
        }
    }
    let (_, network, chosen_id_epochs, chosen_lambda_up) =
        best.expect("grid has at least one cell");
    let error_set_empty = runs
        .iter()
        .find(|r| r.id_epochs == chosen_id_epochs && r.lambda_up == chosen_lambda_up)
        .is_some_and(|r| r.error_set_size == 0);
    Ok((
        network,
        JttReport {
            runs,
            chosen_id_epochs,
            chosen_lambda_up,
            error_set_empty,
        },
    ))
}
