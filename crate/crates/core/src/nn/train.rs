use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy_weighted;
use crate::nn::network::{Network, ParamGrads};
use crate::nn::Layer;
use crate::scalar::Scalar;

pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            weight_decay: 1e-4,
            batch_size: 128,
            epochs: 5,
            schedule: LrSchedule::Cosine,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate at a given optimizer step under the configured schedule.
pub fn learning_rate_at(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Cosine => {
            if total_steps == 0 {
                return cfg.learning_rate;
            }
            let frac = step as f64 / total_steps as f64;
            cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}

/// One plain gradient step: `p <- p - lr(step) * (grad + weight_decay * p)`.
pub fn sgd_step<S: Scalar>(
    net: &mut Network<S>,
    grads: &ParamGrads<S>,
    cfg: &TrainConfig,
    step: usize,
    total_steps: usize,
) {
    let lr = S::of_f64(learning_rate_at(cfg, step, total_steps));
    let wd = S::of_f64(cfg.weight_decay);
    for (layer, grad) in net.layers_mut().iter_mut().zip(&grads.layers) {
        let Some(grad) = grad else { continue };
        let (weights, bias) = match layer {
            Layer::Dense { weights, bias } => (weights, bias),
            Layer::Conv2d { kernels, bias, .. } => (kernels, bias),
            _ => continue,
        };
        for (p, &g) in weights.data_mut().iter_mut().zip(grad.weights.data()) {
            *p = *p - lr * (g + wd * *p);
        }
        for (p, &g) in bias.data_mut().iter_mut().zip(grad.bias.data()) {
            *p = *p - lr * (g + wd * *p);
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub selection_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome<S> {
    pub network: Network<S>,
    pub best_epoch: Option<usize>,
    pub best_accuracy: f64,
    pub history: Vec<EpochStats>,
}

/// Runs mini-batch SGD epochs over a dataset, reshuffling every epoch with a
/// generator derived from the seed and epoch index, and hands the model to
/// `after_epoch` at every epoch boundary.
fn run_epochs<S: Scalar>(
    net: &mut Network<S>,
    data: &GroupedDataset<S>,
    sample_weights: Option<&[S]>,
    cfg: &TrainConfig,
    mut after_epoch: impl FnMut(&Network<S>, usize, f64) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("training split"));
    }
    for &label in &data.class_labels {
        if label >= net.num_classes() {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: net.num_classes(),
            });
        }
    }
    if let Some(w) = sample_weights {
        if w.len() != n {
            return Err(Error::InvalidShape(format!(
                "{} sample weights for {} samples",
                w.len(),
                n
            )));
        }
    }
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed
                .wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch_idx in indices.chunks(cfg.batch_size) {
            let images = data.images.gather(batch_idx);
            let labels: Vec<usize> = batch_idx.iter().map(|&i| data.class_labels[i]).collect();
            let weights: Vec<S> = match sample_weights {
                Some(w) => batch_idx.iter().map(|&i| w[i]).collect(),
                None => vec![S::one(); batch_idx.len()],
            };
            let trace = net.forward_trace(&images)?;
            let (loss, grad) = cross_entropy_weighted(trace.logits(), &labels, &weights)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            loss_sum += loss * batch_idx.len() as f64;
            let grads = net.backward(&trace, &grad);
            sgd_step(net, &grads, cfg, step, total_steps);
            step += 1;
        }
        after_epoch(net, epoch, loss_sum / n as f64)?;
    }
    Ok(())
}

/// Mean over classes of per-class accuracy, ignoring classes with no samples.
pub fn balanced_accuracy(predictions: &[usize], labels: &[usize], num_classes: usize) -> f64 {
    let mut correct = vec![0usize; num_classes];
    let mut count = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        count[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..num_classes {
        if count[c] > 0 {
            sum += correct[c] as f64 / count[c] as f64;
            present += 1;
        }
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

/// Minimum per-group accuracy over the groups present in `groups`.
pub fn worst_group_accuracy(predictions: &[usize], labels: &[usize], groups: &[usize]) -> f64 {
    let max_group = groups.iter().copied().max().unwrap_or(0);
    let mut correct = vec![0usize; max_group + 1];
    let mut count = vec![0usize; max_group + 1];
    for ((&p, &y), &g) in predictions.iter().zip(labels).zip(groups) {
        count[g] += 1;
        if p == y {
            correct[g] += 1;
        }
    }
    count
        .iter()
        .zip(&correct)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &c)| c as f64 / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Standard empirical-risk training with early stopping: runs the configured
/// number of epochs and returns the parameters from the epoch with the
/// highest class-balanced validation accuracy (first epoch wins ties).
/// Zero epochs return the initial parameters unchanged.
pub fn train_erm<S: Scalar>(
    net: Network<S>,
    train: &GroupedDataset<S>,
    val: &GroupedDataset<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    if val.len() == 0 {
        return Err(Error::Empty("validation split"));
    }
    let mut current = net;
    let mut best: Option<(f64, usize, Network<S>)> = None;
    let mut history = Vec::new();
    let num_classes = current.num_classes();
    run_epochs(&mut current, train, None, cfg, |model, epoch, mean_loss| {
        let preds = model.predict(&val.images, EVAL_CHUNK)?;
        let acc = balanced_accuracy(&preds, &val.class_labels, num_classes);
        history.push(EpochStats {
            epoch,
            mean_loss,
            selection_accuracy: acc,
        });
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch, model.clone()));
        }
        Ok(())
    })?;
    Ok(match best {
        Some((acc, epoch, network)) => TrainOutcome {
            network,
            best_epoch: Some(epoch),
            best_accuracy: acc,
            history,
        },
        None => TrainOutcome {
            network: current,
            best_epoch: None,
            best_accuracy: f64::NAN,
            history,
        },
    })
}

/// Runs the configured epochs and keeps the final parameters, with no
/// validation-based selection.
pub fn train_plain<S: Scalar>(
    net: Network<S>,
    train: &GroupedDataset<S>,
    cfg: &TrainConfig,
) -> Result<Network<S>> {
    let mut current = net;
    run_epochs(&mut current, train, None, cfg, |_, _, _| Ok(()))?;
    Ok(current)
}

/// Training with per-sample loss weights, selecting the epoch snapshot with
/// the highest worst-group validation accuracy over `val_groups`.
pub fn train_upweighted<S: Scalar>(
    net: Network<S>,
    train: &GroupedDataset<S>,
    sample_weights: &[S],
    val: &GroupedDataset<S>,
    val_groups: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    if val.len() == 0 {
        return Err(Error::Empty("validation split"));
    }
    if val_groups.len() != val.len() {
        return Err(Error::InvalidShape(format!(
            "{} group labels for {} validation samples",
            val_groups.len(),
            val.len()
        )));
    }
    let mut current = net;
    let mut best: Option<(f64, usize, Network<S>)> = None;
    let mut history = Vec::new();
    run_epochs(
        &mut current,
        train,
        Some(sample_weights),
        cfg,
        |model, epoch, mean_loss| {
            let preds = model.predict(&val.images, EVAL_CHUNK)?;
            let acc = worst_group_accuracy(&preds, &val.class_labels, val_groups);
            history.push(EpochStats {
                epoch,
                mean_loss,
                selection_accuracy: acc,
            });
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
            Ok(())
        },
    )?;
    Ok(match best {
        Some((acc, epoch, network)) => TrainOutcome {
            network,
            best_epoch: Some(epoch),
            best_accuracy: acc,
            history,
        },
        None => TrainOutcome {
            network: current,
            best_epoch: None,
            best_accuracy: f64::NAN,
            history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cosine_schedule_hits_half_at_midpoint() {
        let cfg = TrainConfig {
            learning_rate: 0.4,
            schedule: LrSchedule::Cosine,
            ..TrainConfig::default()
        };
        assert_relative_eq!(learning_rate_at(&cfg, 50, 100), 0.2, max_relative = 1e-12);
        assert_relative_eq!(learning_rate_at(&cfg, 0, 100), 0.4, max_relative = 1e-12);
        assert!(learning_rate_at(&cfg, 100, 100) < 1e-15);
    }

    #[test]
    fn constant_schedule_ignores_step() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            schedule: LrSchedule::Constant,
            ..TrainConfig::default()
        };
        assert_eq!(learning_rate_at(&cfg, 7, 100), 0.1);
    }

    #[test]
    fn balanced_accuracy_averages_per_class() {
        let preds = [0, 0, 1, 1];
        let labels = [0, 1, 1, 1];
        assert_relative_eq!(
            balanced_accuracy(&preds, &labels, 2),
            (1.0 + 2.0 / 3.0) / 2.0
        );
    }

    #[test]
    fn worst_group_takes_the_minimum() {
        let preds = [0, 0, 1, 0];
        let labels = [0, 0, 1, 1];
        let groups = [0, 0, 1, 1];
        assert_relative_eq!(worst_group_accuracy(&preds, &labels, &groups), 0.5);
    }
}
