//! Layer-wise relevance propagation: walks a trained network backwards from
//! one logit and splits that value over the input pixels, yielding a signed
//! heatmap per sample. Dense layers use a stabilized-denominator rule, conv
//! layers a positive-weight-boosting rule; pooling redistributes
//! proportionally and activations pass relevance through.

mod rules;
mod store;

pub use store::{load_heatmaps, save_heatmaps, write_pgm};

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, ForwardTrace, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which redistribution rule a layer kind uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Raw contributions over a denominator stabilized by `epsilon`.
    Epsilon,
    /// Positive weights boosted by `gamma`, exact denominator.
    Gamma,
}

/// Class whose logit seeds the propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    /// The argmax logit of each sample.
    Predicted,
    /// The dataset's class label.
    Given,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrpConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub dense_rule: Rule,
    pub conv_rule: Rule,
    pub target_policy: TargetPolicy,
    /// Side length heatmaps are pooled down to; `None` keeps the input side.
    pub downsize: Option<usize>,
}

impl Default for LrpConfig {
    fn default() -> Self {
        LrpConfig {
            epsilon: 1e-6,
            gamma: 0.25,
            dense_rule: Rule::Epsilon,
            conv_rule: Rule::Gamma,
            target_policy: TargetPolicy::Predicted,
            downsize: Some(14),
        }
    }
}

impl LrpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma must be non-negative and finite, got {}",
                self.gamma
            )));
        }
        if self.downsize == Some(0) {
            return Err(Error::InvalidConfig(
                "downsize side must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn params<S: Scalar>(&self, rule: Rule) -> (S, S) {
        match rule {
            Rule::Epsilon => (S::zero(), S::of_f64(self.epsilon)),
            Rule::Gamma => (S::of_f64(self.gamma), S::zero()),
        }
    }
}

/// Signed relevance for one sample, shaped like the network input.
#[derive(Debug, Clone)]
pub struct RelevanceMap<S> {
    pub sample_index: usize,
    pub target: usize,
    pub relevance: Tensor<S>,
}

/// One single-plane heatmap per dataset sample, in dataset order. Rows are
/// already channel-summed and pooled to `side`, ready to flatten for
/// clustering.
#[derive(Debug, Clone)]
pub struct HeatmapSet<S> {
    pub side: usize,
    pub sample_indices: Vec<usize>,
    pub targets: Vec<usize>,
    /// Shaped `(n, side, side)`.
    pub maps: Tensor<S>,
}

impl<S: Scalar> HeatmapSet<S> {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    /// Flat `side * side` vector of one map.
    pub fn vector(&self, i: usize) -> &[S] {
        self.maps.sample(i)
    }
}

/// Runs the backward relevance pass from an explicit output-layer seed.
/// `trace` must come from a batch of one. The propagation is linear in the
/// seed, so scaling or negating it scales the returned map the same way.
pub fn propagate_relevance<S: Scalar>(
    net: &Network<S>,
    trace: &ForwardTrace<S>,
    seed: &[S],
    cfg: &LrpConfig,
) -> Result<Tensor<S>> {
    let layers = net.layers();
    if trace.activations.len() != layers.len() + 1 || trace.logits().batch_size() != 1 {
        return Err(Error::InvalidShape(
            "relevance propagation needs a single-sample trace".into(),
        ));
    }
    if seed.len() != trace.logits().sample_len() {
        return Err(Error::InvalidShape(format!(
            "seed length {} does not match {} outputs",
            seed.len(),
            trace.logits().sample_len()
        )));
    }

    let mut rel: Vec<S> = seed.to_vec();
    for (i, layer) in layers.iter().enumerate().rev() {
        let input = &trace.activations[i];
        let in_shape = &input.shape()[1..];
        let x = input.sample(0);
        rel = match layer {
            crate::nn::Layer::Dense { weights, bias } => {
                let (gamma, epsilon) = cfg.params::<S>(cfg.dense_rule);
                rules::dense_relevance(x, weights, bias.data(), &rel, gamma, epsilon)
            }
            crate::nn::Layer::Conv2d {
                kernels,
                bias,
                stride,
            } => {
                let (gamma, epsilon) = cfg.params::<S>(cfg.conv_rule);
                let out_shape = layer.out_shape(i, in_shape)?;
                rules::conv_relevance_sample(
                    x,
                    in_shape,
                    kernels,
                    bias.data(),
                    *stride,
                    &rel,
                    &out_shape,
                    gamma,
                    epsilon,
                )
            }
            crate::nn::Layer::ReLU => rel,
            crate::nn::Layer::AvgPool { window } => {
                let out_shape = layer.out_shape(i, in_shape)?;
                rules::avgpool_relevance_sample(x, in_shape, *window, &rel, &out_shape)
            }
            crate::nn::Layer::Flatten => rel,
        };
    }

    let in_shape = trace.activations[0].shape()[1..].to_vec();
    let map = Tensor::from_vec(&in_shape, rel)?;
    if !map.all_finite() {
        return Err(Error::NonFinite("relevance"));
    }
    Ok(map)
}

/// Heatmap for one sample, seeded with the logit of an explicit class.
pub fn lrp_heatmap_for<S: Scalar>(
    net: &Network<S>,
    x: &Tensor<S>,
    cfg: &LrpConfig,
    target: usize,
) -> Result<RelevanceMap<S>> {
    let mut batch_shape = vec![1];
    batch_shape.extend_from_slice(x.shape());
    let batched = Tensor::from_vec(&batch_shape, x.data().to_vec())?;
    let trace = net.forward_trace(&batched)?;
    let logits = trace.logits().sample(0);
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    let mut seed = vec![S::zero(); logits.len()];
    seed[target] = logits[target];
    let relevance = propagate_relevance(net, &trace, &seed, cfg)?;
    Ok(RelevanceMap {
        sample_index: 0,
        target,
        relevance,
    })
}

/// Heatmap for one sample, seeded with its argmax logit.
pub fn lrp_heatmap<S: Scalar>(
    net: &Network<S>,
    x: &Tensor<S>,
    cfg: &LrpConfig,
) -> Result<RelevanceMap<S>> {
    let mut batch_shape = vec![1];
    batch_shape.extend_from_slice(x.shape());
    let batched = Tensor::from_vec(&batch_shape, x.data().to_vec())?;
    let logits = net.forward(&batched)?;
    let target = argmax_rows(&logits)[0];
    lrp_heatmap_for(net, x, cfg, target)
}

/// Sums channels to one plane. Accepts `(c, h, w)` or an already-flat
/// `(h, w)` map.
pub fn channel_sum<S: Scalar>(map: &Tensor<S>) -> Result<Tensor<S>> {
    match map.shape() {
        [h, w] => Tensor::from_vec(&[*h, *w], map.data().to_vec()),
        [c, h, w] => {
            let plane_len = h * w;
            let mut plane = vec![S::zero(); plane_len];
            for ch in 0..*c {
                let src = &map.data()[ch * plane_len..(ch + 1) * plane_len];
                for (p, &v) in plane.iter_mut().zip(src) {
                    *p += v;
                }
            }
            Tensor::from_vec(&[*h, *w], plane)
        }
        other => Err(Error::InvalidShape(format!(
            "expected a (c, h, w) or (h, w) map, got {:?}",
            other
        ))),
    }
}

/// Channel-sums a relevance map and block-averages the plane down to
/// `side * side`. Each output cell is the mean of its block, so for an
/// integer block width `b` the plane total shrinks by `b * b`. `side` equal
/// to the input side is the identity on the channel-summed plane.
pub fn downsize<S: Scalar>(map: &RelevanceMap<S>, side: usize) -> Result<RelevanceMap<S>> {
    let plane = channel_sum(&map.relevance)?;
    let pooled = downsize_plane(&plane, side)?;
    Ok(RelevanceMap {
        sample_index: map.sample_index,
        target: map.target,
        relevance: pooled,
    })
}

fn downsize_plane<S: Scalar>(plane: &Tensor<S>, side: usize) -> Result<Tensor<S>> {
    let (h, w) = (plane.shape()[0], plane.shape()[1]);
    if h != w {
        return Err(Error::InvalidShape(format!(
            "downsize needs a square plane, got {}x{}",
            h, w
        )));
    }
    if side == 0 {
        return Err(Error::InvalidConfig(
            "downsize side must be at least 1".into(),
        ));
    }
    if side > h {
        return Err(Error::InvalidConfig(format!(
            "downsize side {} exceeds map side {}",
            side, h
        )));
    }
    let bound = |i: usize| i * h / side;
    let mut out = vec![S::zero(); side * side];
    for oy in 0..side {
        let (y0, y1) = (bound(oy), bound(oy + 1));
        for ox in 0..side {
            let (x0, x1) = (bound(ox), bound(ox + 1));
            let mut sum = S::zero();
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += plane.data()[y * w + x];
                }
            }
            out[oy * side + ox] = sum / S::of_f64(((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    Tensor::from_vec(&[side, side], out)
}

/// Heatmaps for every sample of a split, in order: forward each sample, pick
/// the target class per `cfg.target_policy`, propagate, channel-sum, and
/// pool down to `cfg.downsize`.
pub fn heatmap_set<S: Scalar>(
    net: &Network<S>,
    data: &GroupedDataset<S>,
    cfg: &LrpConfig,
) -> Result<HeatmapSet<S>> {
    if data.is_empty() {
        return Err(Error::Empty("heatmap extraction"));
    }
    let in_side = data.images.shape()[2];
    let side = cfg.downsize.unwrap_or(in_side);
    let n = data.len();
    let mut maps = Tensor::zeros(&[n, side, side]);
    let mut targets = Vec::with_capacity(n);
    let sample_shape = data.images.shape()[1..].to_vec();
    for i in 0..n {
        let x = Tensor::from_vec(&sample_shape, data.images.sample(i).to_vec())?;
        let map = match cfg.target_policy {
            TargetPolicy::Predicted => lrp_heatmap(net, &x, cfg),
            TargetPolicy::Given => lrp_heatmap_for(net, &x, cfg, data.class_labels[i]),
        }
        .map_err(|e| Error::Sample {
            index: i,
            source: Box::new(e),
        })?;
        let plane = channel_sum(&map.relevance)?;
        let pooled = downsize_plane(&plane, side)?;
        maps.sample_mut(i).copy_from_slice(pooled.data());
        targets.push(map.target);
    }
    Ok(HeatmapSet {
        side,
        sample_indices: (0..n).collect(),
        targets,
        maps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrColumn, ShortcutKind, Split};
    use crate::nn::Layer;

    fn single_dense_net() -> Network<f64> {
        Network::new(vec![Layer::Dense {
            weights: Tensor::from_vec(&[2, 1], vec![0.5, 0.25]).unwrap(),
            bias: Tensor::zeros(&[1]),
        }])
        .unwrap()
    }

    fn zero_eps_config() -> LrpConfig {
        LrpConfig {
            epsilon: 0.0,
            gamma: 0.0,
            downsize: None,
            ..LrpConfig::default()
        }
    }

    #[test]
    fn hand_example_through_the_full_entry_point() {
        let net = single_dense_net();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let map = lrp_heatmap(&net, &x, &zero_eps_config()).unwrap();
        assert_eq!(map.target, 0);
        assert_eq!(map.relevance.data(), &[0.5, 0.5]);
    }

    #[test]
    fn explicit_target_out_of_range() {
        let net = single_dense_net();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let err = lrp_heatmap_for(&net, &x, &zero_eps_config(), 3).unwrap_err();
        assert!(matches!(err, Error::TargetOutOfRange { index: 3, len: 1 }));
    }

    #[test]
    fn negated_seed_negates_every_value() {
        let net = Network::conv_net((1, 12, 12), 3, 11).unwrap();
        let x = Tensor::from_vec(&[1, 1, 12, 12], (0..144).map(|v| v as f64 / 144.0).collect())
            .unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let logits = trace.logits().sample(0).to_vec();
        let cfg = LrpConfig::default();
        let mut seed = vec![0.0; logits.len()];
        seed[1] = logits[1];
        let pos = propagate_relevance(&net, &trace, &seed, &cfg).unwrap();
        for s in seed.iter_mut() {
            *s = -*s;
        }
        let neg = propagate_relevance(&net, &trace, &seed, &cfg).unwrap();
        for (&p, &n) in pos.data().iter().zip(neg.data()) {
            assert_eq!(p, -n);
        }
    }

    #[test]
    fn channel_sum_adds_planes() {
        let map = Tensor::from_vec(&[2, 1, 2], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let plane = channel_sum(&map).unwrap();
        assert_eq!(plane.shape(), &[1, 2]);
        assert_eq!(plane.data(), &[11.0, 22.0]);
    }

    #[test]
    fn downsize_two_by_two_to_single_mean() {
        let map = RelevanceMap {
            sample_index: 0,
            target: 0,
            relevance: Tensor::from_vec(&[1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap(),
        };
        let out = downsize(&map, 1).unwrap();
        assert_eq!(out.relevance.shape(), &[1, 1]);
        assert_eq!(out.relevance.data(), &[4.0]);
    }

    #[test]
    fn downsize_keeps_constant_maps_constant() {
        let map = RelevanceMap {
            sample_index: 0,
            target: 0,
            relevance: Tensor::filled(&[1, 28, 28], 0.3f64),
        };
        let out = downsize(&map, 14).unwrap();
        assert_eq!(out.relevance.shape(), &[14, 14]);
        for &v in out.relevance.data() {
            assert!((v - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn downsize_to_original_side_is_identity() {
        let vals: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let map = RelevanceMap {
            sample_index: 0,
            target: 0,
            relevance: Tensor::from_vec(&[1, 4, 4], vals.clone()).unwrap(),
        };
        let out = downsize(&map, 4).unwrap();
        assert_eq!(out.relevance.data(), &vals[..]);
    }

    #[test]
    fn downsize_rejects_zero_and_oversize_sides() {
        let map = RelevanceMap {
            sample_index: 0,
            target: 0,
            relevance: Tensor::<f64>::zeros(&[1, 4, 4]),
        };
        assert!(downsize(&map, 0).is_err());
        assert!(downsize(&map, 5).is_err());
    }

    fn tiny_dataset(n: usize) -> GroupedDataset<f64> {
        let mut vals = Vec::with_capacity(n * 144);
        for i in 0..n {
            for p in 0..144 {
                vals.push(((i * 37 + p * 11) % 100) as f64 / 100.0);
            }
        }
        GroupedDataset {
            split: Split::Val,
            images: Tensor::from_vec(&[n, 1, 12, 12], vals).unwrap(),
            class_labels: (0..n).map(|i| i % 2).collect(),
            num_classes: 2,
            attrs: vec![AttrColumn {
                kind: ShortcutKind::Tint,
                cardinality: 2,
                values: vec![0; n],
            }],
        }
    }

    #[test]
    fn heatmap_set_aligns_one_map_per_sample() {
        let net = Network::conv_net((1, 12, 12), 2, 5).unwrap();
        let data = tiny_dataset(10);
        let cfg = LrpConfig {
            downsize: Some(4),
            ..LrpConfig::default()
        };
        let set = heatmap_set(&net, &data, &cfg).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set.side, 4);
        assert_eq!(set.sample_indices, (0..10).collect::<Vec<_>>());
        assert_eq!(set.maps.shape(), &[10, 4, 4]);
        assert_eq!(set.vector(3).len(), 16);
    }

    #[test]
    fn given_policy_matches_predicted_when_labels_agree() {
        let net = Network::conv_net((1, 12, 12), 2, 5).unwrap();
        let mut data = tiny_dataset(6);
        data.class_labels = net.predict(&data.images, 8).unwrap();
        let cfg = LrpConfig {
            downsize: Some(6),
            ..LrpConfig::default()
        };
        let predicted = heatmap_set(&net, &data, &cfg).unwrap();
        let given = heatmap_set(
            &net,
            &data,
            &LrpConfig {
                target_policy: TargetPolicy::Given,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(predicted.targets, given.targets);
        assert_eq!(predicted.maps.data(), given.maps.data());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = LrpConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-6;
        cfg.gamma = -0.1;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.25;
        cfg.downsize = Some(0);
        assert!(cfg.validate().is_err());
    }
}
