use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, worst_group_accuracy, Layer, Network, EVAL_CHUNK};
use crate::pseudo::PseudoGroupLabels;
use crate::retrain::{derive_seed, subsample_balanced};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const STD_FLOOR: f64 = 1e-8;
const MAX_ITERS: usize = 5_000;
const MIN_DECREASE: f64 = 1e-8;

/// Settings for the last-layer refit: the L1 strength grid, how many
/// half-splits score each strength, and how many balanced refits are
/// averaged into the installed head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfrConfig {
    pub l1_strengths: Vec<f64>,
    pub n_sweep_splits: usize,
    pub n_final_subsamples: usize,
    pub seed: u64,
}

impl Default for DfrConfig {
    fn default() -> Self {
        DfrConfig {
            l1_strengths: vec![1.0, 0.7, 0.3, 0.1, 0.07, 0.03, 0.01],
            n_sweep_splits: 5,
            n_final_subsamples: 20,
            seed: 0,
        }
    }
}

impl DfrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l1_strengths.is_empty() {
            return Err(Error::InvalidConfig("l1_strengths must be nonempty".into()));
        }
        for &s in &self.l1_strengths {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "l1 strengths must be positive, got {s}"
                )));
            }
        }
        for pair in self.l1_strengths.windows(2) {
            if pair[0] <= pair[1] {
                return Err(Error::InvalidConfig(format!(
                    "l1 strengths must descend, got {} before {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.n_sweep_splits == 0 {
            return Err(Error::InvalidConfig("n_sweep_splits must be positive".into()));
        }
        if self.n_final_subsamples == 0 {
            return Err(Error::InvalidConfig(
                "n_final_subsamples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A refit classification head together with the feature statistics it was
/// fit under: logits are `Wᵀz + b` for `z = (x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct LastLayer {
    /// `(features, classes)`.
    pub weights: Tensor<f64>,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    /// Floored at [`STD_FLOOR`].
    pub feature_std: Vec<f64>,
}

impl LastLayer {
    pub fn num_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.weights.shape()[1]
    }

    fn logits_into(&self, raw: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        let c = self.num_classes();
        for (f, &x) in raw.iter().enumerate() {
            let z = (x - self.feature_mean[f]) / self.feature_std[f];
            for (slot, &w) in out.iter_mut().zip(&self.weights.data()[f * c..(f + 1) * c]) {
                *slot += z * w;
            }
        }
    }

    /// Argmax class per row of raw (unstandardized) features; ties resolve
    /// to the lowest class index.
    pub fn predict(&self, features: &Tensor<f64>) -> Result<Vec<usize>> {
        if features.shape().len() != 2 || features.shape()[1] != self.num_features() {
            return Err(Error::InvalidShape(format!(
                "expected (n, {}) features, got {:?}",
                self.num_features(),
                features.shape()
            )));
        }
        let mut logits = vec![0.0; self.num_classes()];
        let mut out = Vec::with_capacity(features.batch_size());
        for i in 0..features.batch_size() {
            self.logits_into(features.sample(i), &mut logits);
            let mut best = 0;
            for (k, &v) in logits.iter().enumerate() {
                if v > logits[best] {
                    best = k;
                }
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Rewrites the network's final dense layer to compute these logits from
    /// raw features, folding the standardization into weights and bias. No
    /// other layer is touched.
    pub fn install<S: Scalar>(&self, net: &mut Network<S>) -> Result<()> {
        let (d, c) = (self.num_features(), self.num_classes());
        let idx = net.final_dense_index();
        let Layer::Dense { weights, bias } = &mut net.layers_mut()[idx] else {
            unreachable!("final_dense_index returns a dense layer");
        };
        if weights.shape() != [d, c] {
            return Err(Error::InvalidShape(format!(
                "refit head is ({d}, {c}) but the final dense layer is {:?}",
                weights.shape()
            )));
        }
        for f in 0..d {
            for k in 0..c {
                weights.data_mut()[f * c + k] =
                    S::of_f64(self.weights.data()[f * c + k] / self.feature_std[f]);
            }
        }
        for k in 0..c {
            let mut shift = 0.0;
            for f in 0..d {
                shift += self.feature_mean[f] * self.weights.data()[f * c + k]
                    / self.feature_std[f];
            }
            bias.data_mut()[k] = S::of_f64(self.bias[k] - shift);
        }
        Ok(())
    }
}

fn soft_threshold(w: f64, threshold: f64) -> f64 {
    if w > threshold {
        w - threshold
    } else if w < -threshold {
        w + threshold
    } else {
        0.0
    }
}

fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn head_logits(z: &Tensor<f64>, w: &[f64], b: &[f64], c: usize) -> Tensor<f64> {
    let n = z.batch_size();
    let d = z.shape()[1];
    let mut out = Tensor::zeros(&[n, c]);
    for i in 0..n {
        let zr = z.sample(i);
        let row = out.sample_mut(i);
        row.copy_from_slice(b);
        for f in 0..d {
            let zv = zr[f];
            for (slot, &wv) in row.iter_mut().zip(&w[f * c..(f + 1) * c]) {
                *slot += zv * wv;
            }
        }
    }
    out
}

/// Like [`fit_l1_logreg`], also returning the penalized objective after the
/// start point and after every accepted step.
pub fn fit_l1_logreg_traced(
    features: &Tensor<f64>,
    labels: &[usize],
    num_classes: usize,
    lambda: f64,
) -> Result<(LastLayer, Vec<f64>)> {
    if features.shape().len() != 2 {
        return Err(Error::InvalidShape(format!(
            "expected (n, features), got {:?}",
            features.shape()
        )));
    }
    let n = features.batch_size();
    let d = features.shape()[1];
    if labels.len() != n {
        return Err(Error::InvalidShape(format!(
            "{} labels for {n} feature rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("l1 logistic fit"));
    }
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "l1 strength must be finite and non-negative, got {lambda}"
        )));
    }
    for &y in labels {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes,
            });
        }
    }
    let mut present = vec![false; num_classes];
    for &y in labels {
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidConfig(
            "l1 logistic fit needs at least two classes present".into(),
        ));
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(features.sample(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for i in 0..n {
        for (s, (&x, &m)) in std.iter_mut().zip(features.sample(i).iter().zip(&mean)) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt().max(STD_FLOOR);
    }
    let mut z = Tensor::<f64>::zeros(&[n, d]);
    for i in 0..n {
        for (slot, (&x, (&m, &s))) in z
            .sample_mut(i)
            .iter_mut()
            .zip(features.sample(i).iter().zip(mean.iter().zip(&std)))
        {
            *slot = (x - m) / s;
        }
    }

    let c = num_classes;
    let mut w = vec![0.0; d * c];
    let mut b = vec![0.0; c];
    let (mut f_cur, mut grad_logits) = cross_entropy(&head_logits(&z, &w, &b, c), labels)?;
    let mut objective = f_cur + lambda * l1_norm(&w);
    let mut trace = vec![objective];
    let mut t = 1.0;
    for _ in 0..MAX_ITERS {
        let mut gw = vec![0.0; d * c];
        let mut gb = vec![0.0; c];
        for i in 0..n {
            let zr = z.sample(i);
            let gr = &grad_logits.data()[i * c..(i + 1) * c];
            for f in 0..d {
                let zv = zr[f];
                for (slot, &g) in gw[f * c..(f + 1) * c].iter_mut().zip(gr) {
                    *slot += zv * g;
                }
            }
            for (slot, &g) in gb.iter_mut().zip(gr) {
                *slot += g;
            }
        }
        let (w_next, b_next, f_next, grad_next) = loop {
            let mut w_try = vec![0.0; d * c];
            for ((slot, &wv), &g) in w_try.iter_mut().zip(&w).zip(&gw) {
                *slot = soft_threshold(wv - t * g, t * lambda);
            }
            let b_try: Vec<f64> = b.iter().zip(&gb).map(|(&bv, &g)| bv - t * g).collect();
            let (f_try, grad_try) = cross_entropy(&head_logits(&z, &w_try, &b_try, c), labels)?;
            let mut linear = 0.0;
            let mut quad = 0.0;
            for ((&wt, &wv), &g) in w_try.iter().zip(&w).zip(&gw) {
                let delta = wt - wv;
                linear += g * delta;
                quad += delta * delta;
            }
            for ((&bt, &bv), &g) in b_try.iter().zip(&b).zip(&gb) {
                let delta = bt - bv;
                linear += g * delta;
                quad += delta * delta;
            }
            if f_try <= f_cur + linear + quad / (2.0 * t) + 1e-12 || t < 1e-18 {
                break (w_try, b_try, f_try, grad_try);
            }
            t *= 0.5;
        };
        w = w_next;
        b = b_next;
        f_cur = f_next;
        grad_logits = grad_next;
        let next_objective = f_cur + lambda * l1_norm(&w);
        trace.push(next_objective);
        let decrease = objective - next_objective;
        objective = next_objective;
        if decrease < MIN_DECREASE {
            break;
        }
    }

    let layer = LastLayer {
        weights: Tensor::from_vec(&[d, c], w)?,
        bias: b,
        feature_mean: mean,
        feature_std: std,
    };
    Ok((layer, trace))
}

/// Fits a multinomial logistic head on standardized features, minimizing
/// mean cross-entropy plus `lambda` times the L1 norm of the weights (bias
/// unpenalized) by proximal gradient descent with a backtracking line
/// search. Stops when the objective decrease falls below 1e-8 or after
/// 5,000 accepted steps.
pub fn fit_l1_logreg(
    features: &Tensor<f64>,
    labels: &[usize],
    num_classes: usize,
    lambda: f64,
) -> Result<LastLayer> {
    fit_l1_logreg_traced(features, labels, num_classes, lambda).map(|(layer, _)| layer)
}

/// Element-wise mean of refit heads, normalization statistics included.
pub fn average_last_layers(layers: &[LastLayer]) -> Result<LastLayer> {
    let Some(first) = layers.first() else {
        return Err(Error::Empty("head averaging"));
    };
    for layer in &layers[1..] {
        if layer.weights.shape() != first.weights.shape() {
            return Err(Error::InvalidShape(format!(
                "cannot average a {:?} head with a {:?} head",
                layer.weights.shape(),
                first.weights.shape()
            )));
        }
    }
    let scale = 1.0 / layers.len() as f64;
    let mut out = LastLayer {
        weights: Tensor::zeros(first.weights.shape()),
        bias: vec![0.0; first.bias.len()],
        feature_mean: vec![0.0; first.feature_mean.len()],
        feature_std: vec![0.0; first.feature_std.len()],
    };
    for layer in layers {
        for (slot, &v) in out.weights.data_mut().iter_mut().zip(layer.weights.data()) {
            *slot += v;
        }
        for (slot, &v) in out.bias.iter_mut().zip(&layer.bias) {
            *slot += v;
        }
        for (slot, &v) in out.feature_mean.iter_mut().zip(&layer.feature_mean) {
            *slot += v;
        }
        for (slot, &v) in out.feature_std.iter_mut().zip(&layer.feature_std) {
            *slot += v;
        }
    }
    for slot in out.weights.data_mut() {
        *slot *= scale;
    }
    for slot in out
        .bias
        .iter_mut()
        .chain(&mut out.feature_mean)
        .chain(&mut out.feature_std)
    {
        *slot *= scale;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub l1_strength: f64,
    pub split_scores: Vec<f64>,
    pub mean_worst_group: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfrReport {
    pub sweep: Vec<SweepEntry>,
    pub chosen_l1: f64,
    pub n_final_subsamples: usize,
    /// Samples each nonempty group contributes to a balanced subsample.
    pub balanced_group_size: usize,
}

/// Refits the final dense layer on group-balanced subsamples: the L1
/// strength is chosen by mean worst-group accuracy over held-out halves,
/// the final head averages `n_final_subsamples` refits, and the result is
/// installed into a clone of `net`. Every layer but the final dense one is
/// returned bit-identical.
pub fn dfr_retrain<S: Scalar>(
    net: &Network<S>,
    data: &GroupedDataset<S>,
    groups: &PseudoGroupLabels,
    cfg: &DfrConfig,
) -> Result<(Network<S>, DfrReport)> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::NoGroups);
    }
    let c = net.num_classes();
    for (row, (&idx, &y)) in groups
        .sample_indices
        .iter()
        .zip(&groups.class_labels)
        .enumerate()
    {
        if idx >= data.len() {
            return Err(Error::InvalidShape(format!(
                "pseudo-label row {row} points at sample {idx} of a split with {}",
                data.len()
            )));
        }
        if y != data.class_labels[idx] {
            return Err(Error::InvalidConfig(format!(
                "pseudo-label row {row} says class {y} but sample {idx} has class {}",
                data.class_labels[idx]
            )));
        }
        if y >= c {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: c,
            });
        }
    }

    let feats = net.penultimate_features(&data.images, EVAL_CHUNK)?;
    let d = feats.shape()[1];
    let m = groups.len();
    let mut x = Tensor::<f64>::zeros(&[m, d]);
    for (row, &idx) in groups.sample_indices.iter().enumerate() {
        for (slot, &v) in x.sample_mut(row).iter_mut().zip(feats.sample(idx)) {
            *slot = v.as_f64();
        }
    }
    let y = &groups.class_labels;
    let g = &groups.group_ids;

    let balanced = subsample_balanced(groups, derive_seed(cfg.seed, 1));
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); groups.num_groups];
    for &row in &balanced {
        by_group[g[row]].push(row);
    }
    let s0 = by_group
        .iter()
        .filter(|rows| !rows.is_empty())
        .map(|rows| rows.len())
        .min()
        .unwrap_or(0);
    if s0 < 2 {
        let gid = by_group
            .iter()
            .position(|rows| !rows.is_empty() && rows.len() == s0)
            .unwrap_or(0);
        return Err(Error::GroupTooSmall {
            group: gid,
            size: s0,
            min: 2,
            what: "half-split scoring",
        });
    }

    let fit_half = s0 - s0 / 2;
    let mut halvings: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(cfg.n_sweep_splits);
    for split in 0..cfg.n_sweep_splits {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2 + split as u64));
        let mut fit_rows = Vec::new();
        let mut eval_rows = Vec::new();
        for rows in &by_group {
            if rows.is_empty() {
                continue;
            }
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            fit_rows.extend_from_slice(&shuffled[..fit_half]);
            eval_rows.extend_from_slice(&shuffled[fit_half..]);
        }
        halvings.push((fit_rows, eval_rows));
    }

    let gather_labels = |rows: &[usize], src: &[usize]| -> Vec<usize> {
        rows.iter().map(|&r| src[r]).collect()
    };

    let mut sweep = Vec::with_capacity(cfg.l1_strengths.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &cfg.l1_strengths {
        let mut split_scores = Vec::with_capacity(cfg.n_sweep_splits);
        for (fit_rows, eval_rows) in &halvings {
            let layer = fit_l1_logreg(
                &x.gather(fit_rows),
                &gather_labels(fit_rows, y),
                c,
                lambda,
            )?;
            let preds = layer.predict(&x.gather(eval_rows))?;
            split_scores.push(worst_group_accuracy(
                &preds,
                &gather_labels(eval_rows, y),
                &gather_labels(eval_rows, g),
            ));
        }
        let mean_worst_group = split_scores.iter().sum::<f64>() / split_scores.len() as f64;
        if best.is_none_or(|(score, _)| mean_worst_group > score) {
            best = Some((mean_worst_group, lambda));
        }
        sweep.push(SweepEntry {
            l1_strength: lambda,
            split_scores,
            mean_worst_group,
        });
    }
    let chosen_l1 = best.map(|(_, lambda)| lambda).unwrap_or(0.0);

    let mut heads = Vec::with_capacity(cfg.n_final_subsamples);
    for i in 0..cfg.n_final_subsamples {
        let rows = subsample_balanced(groups, derive_seed(cfg.seed, 1000 + i as u64));
        heads.push(fit_l1_logreg(
            &x.gather(&rows),
            &gather_labels(&rows, y),
            c,
            chosen_l1,
        )?);
    }
    let head = average_last_layers(&heads)?;

    let mut out = net.clone();
    head.install(&mut out)?;
    Ok((
        out,
        DfrReport {
            sweep,
            chosen_l1,
            n_final_subsamples: cfg.n_final_subsamples,
            balanced_group_size: s0,
        },
    ))
}
