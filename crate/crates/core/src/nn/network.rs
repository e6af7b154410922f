use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, ParamGrad};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Feed-forward network: an ordered stack of layers ending in a Dense layer
/// whose output width is the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    layers: Vec<Layer<S>>,
    num_classes: usize,
}

/// Activations recorded during a forward pass: `activations[i]` is the input
/// to layer `i`, and the final entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    pub activations: Vec<Tensor<S>>,
}

impl<S> ForwardTrace<S> {
    pub fn logits(&self) -> &Tensor<S> {
        self.activations.last().expect("trace is never empty")
    }
}

/// Per-layer gradients aligned with the network's layer list; `None` for
/// layers without parameters.
#[derive(Debug, Clone)]
pub struct ParamGrads<S> {
    pub layers: Vec<Option<ParamGrad<S>>>,
}

impl<S: Scalar> ParamGrads<S> {
    pub fn zeros_like(net: &Network<S>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, bias } | Layer::Conv2d { kernels: weights, bias, .. } => {
                    Some(ParamGrad {
                        weights: Tensor::zeros(weights.shape()),
                        bias: Tensor::zeros(bias.shape()),
                    })
                }
                _ => None,
            })
            .collect();
        ParamGrads { layers }
    }

    pub fn accumulate(&mut self, other: &ParamGrads<S>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, &y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                    *x += y;
                }
                for (x, &y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += y;
                }
            }
        }
    }
}

impl<S: Scalar> Network<S> {
    /// Builds a network from layers; the last Dense layer's output width
    /// defines the class count.
    pub fn new(layers: Vec<Layer<S>>) -> Result<Self> {
        let num_classes = layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { weights, .. } => Some(weights.shape()[1]),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig("network needs at least one Dense layer".into()))?;
        Ok(Network {
            layers,
            num_classes,
        })
    }

    /// Small convolutional classifier for `(channels, height, width)` images:
    /// Conv(8, 3x3) - ReLU - AvgPool(2) - Conv(16, 3x3) - ReLU - AvgPool(2) -
    /// Flatten - Dense(64) - ReLU - Dense(num_classes).
    ///
    /// Weights are He-normal draws from a generator seeded with `seed`;
    /// biases start at zero. The same seed always yields the same parameters.
    pub fn conv_net(input: (usize, usize, usize), num_classes: usize, seed: u64) -> Result<Self> {
        let (c, h, w) = input;
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        layers.push(conv_layer(&mut rng, 8, c, 3)?);
        layers.push(Layer::ReLU);
        layers.push(Layer::AvgPool { window: 2 });
        layers.push(conv_layer(&mut rng, 16, 8, 3)?);
        layers.push(Layer::ReLU);
        layers.push(Layer::AvgPool { window: 2 });
        layers.push(Layer::Flatten);
        let (h1, w1) = ((h - 2) / 2, (w - 2) / 2);
        let (h2, w2) = ((h1 - 2) / 2, (w1 - 2) / 2);
        let flat = 16 * h2 * w2;
        if flat == 0 {
            return Err(Error::InvalidConfig(format!(
                "input {input:?} too small for the convolutional stack"
            )));
        }
        layers.push(dense_layer(&mut rng, flat, 64)?);
        layers.push(Layer::ReLU);
        layers.push(dense_layer(&mut rng, 64, num_classes)?);
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Index of the final Dense layer.
    pub fn final_dense_index(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense { .. }))
            .expect("constructor guarantees a Dense layer")
    }

    /// Logits for a batch with leading batch axis.
    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let mut current = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(i, current.as_ref().unwrap_or(input))?;
            current = Some(out);
        }
        current.ok_or(Error::Empty("network has no layers"))
    }

    /// Forward pass keeping every intermediate activation.
    pub fn forward_trace(&self, input: &Tensor<S>) -> Result<ForwardTrace<S>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(i, activations.last().unwrap())?;
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Parameter gradients for a recorded forward pass and a gradient at the
    /// output. The input gradient of the first layer is never materialized.
    pub fn backward(&self, trace: &ForwardTrace<S>, grad_logits: &Tensor<S>) -> ParamGrads<S> {
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = grad_logits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (grad_in, grad_param) = layer.backward(&trace.activations[i], &upstream, i > 0);
            grads[i] = grad_param;
            if let Some(g) = grad_in {
                upstream = g;
            }
        }
        ParamGrads { layers: grads }
    }

    /// Logits computed in fixed-size chunks to bound peak memory.
    pub fn forward_batched(&self, images: &Tensor<S>, chunk: usize) -> Result<Tensor<S>> {
        let n = images.batch_size();
        let mut logits = Tensor::zeros(&[n, self.num_classes]);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let batch = images.gather(&(start..end).collect::<Vec<_>>());
            let out = self.forward(&batch)?;
            logits.data_mut()[start * self.num_classes..end * self.num_classes]
                .copy_from_slice(out.data());
            start = end;
        }
        Ok(logits)
    }

    /// Inputs to the final Dense layer, one feature row per sample.
    pub fn penultimate_features(&self, images: &Tensor<S>, chunk: usize) -> Result<Tensor<S>> {
        let n = images.batch_size();
        let stop = self.final_dense_index();
        let width = match &self.layers[stop] {
            Layer::Dense { weights, .. } => weights.shape()[0],
            _ => unreachable!(),
        };
        let mut features = Tensor::zeros(&[n, width]);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let mut current = images.gather(&(start..end).collect::<Vec<_>>());
            for (i, layer) in self.layers[..stop].iter().enumerate() {
                current = layer.forward(i, &current)?;
            }
            features.data_mut()[start * width..end * width].copy_from_slice(current.data());
            start = end;
        }
        Ok(features)
    }

    /// Argmax class per sample; ties resolve to the lowest index.
    pub fn predict(&self, images: &Tensor<S>, chunk: usize) -> Result<Vec<usize>> {
        let logits = self.forward_batched(images, chunk)?;
        Ok(argmax_rows(&logits))
    }
}

/// Row-wise argmax with ties resolving to the lowest index.
pub fn argmax_rows<S: Scalar>(logits: &Tensor<S>) -> Vec<usize> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn he_normal<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<S> {
    let std = (2.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            S::of_f64(z * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape by construction")
}

fn conv_layer<S: Scalar>(
    rng: &mut ChaCha8Rng,
    out_ch: usize,
    in_ch: usize,
    k: usize,
) -> Result<Layer<S>> {
    Ok(Layer::Conv2d {
        kernels: he_normal(rng, &[out_ch, in_ch, k, k], in_ch * k * k),
        bias: Tensor::zeros(&[out_ch]),
        stride: 1,
    })
}

fn dense_layer<S: Scalar>(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Result<Layer<S>> {
    Ok(Layer::Dense {
        weights: he_normal(rng, &[n_in, n_out], n_in),
        bias: Tensor::zeros(&[n_out]),
    })
}

/// Uniform draws in `(-scale, scale)` for every bias in the network, useful
/// for exercising bias handling on otherwise freshly seeded networks.
pub fn randomize_biases<S: Scalar>(net: &mut Network<S>, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        if let Layer::Dense { bias, .. } | Layer::Conv2d { bias, .. } = layer {
            for b in bias.data_mut() {
                *b = S::of_f64(rng.gen_range(-scale..scale));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_net_shapes_line_up() {
        let net: Network<f64> = Network::conv_net((3, 28, 28), 2, 1).unwrap();
        let x = Tensor::zeros(&[2, 3, 28, 28]);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert_eq!(net.num_classes(), 2);
        assert_eq!(net.final_dense_index(), net.layers().len() - 1);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a: Network<f64> = Network::conv_net((3, 28, 28), 2, 42).unwrap();
        let b: Network<f64> = Network::conv_net((3, 28, 28), 2, 42).unwrap();
        let c: Network<f64> = Network::conv_net((3, 28, 28), 2, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trace_records_every_layer_input() {
        let net: Network<f64> = Network::conv_net((3, 28, 28), 2, 7).unwrap();
        let x = Tensor::zeros(&[1, 3, 28, 28]);
        let trace = net.forward_trace(&x).unwrap();
        assert_eq!(trace.activations.len(), net.layers().len() + 1);
        assert_eq!(trace.logits().shape(), &[1, 2]);
    }

    #[test]
    fn penultimate_features_match_manual_forward() {
        let net: Network<f64> = Network::conv_net((3, 28, 28), 2, 9).unwrap();
        let x = Tensor::from_vec(
            &[1, 3, 28, 28],
            (0..3 * 28 * 28).map(|i| (i % 11) as f64 / 11.0).collect(),
        )
        .unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let manual = &trace.activations[net.final_dense_index()];
        let feats = net.penultimate_features(&x, 8).unwrap();
        assert_eq!(feats.shape(), &[1, 64]);
        assert_eq!(feats.data(), manual.data());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![0, 1]);
    }
}
