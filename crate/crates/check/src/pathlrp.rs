use exmap_core::nn::Network;
use exmap_core::Layer64;

fn stab(z: f64, epsilon: f64) -> f64 {
    let sign = if z >= 0.0 { 1.0 } else { -1.0 };
    z + epsilon * sign
}

fn fraction(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

/// Input relevance by explicit path enumeration for networks of one or two
/// Dense layers, with an optional ReLU between them. The relevance entering
/// the network is the target logit itself, and every path
/// `input -> (hidden ->) target` contributes the product of its per-layer
/// contribution fractions.
pub fn path_relevance(net: &Network<f64>, x: &[f64], target: usize, epsilon: f64) -> Vec<f64> {
    let dense: Vec<_> = net
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer64::Dense { weights, bias } => Some((weights, bias)),
            _ => None,
        })
        .collect();
    let has_relu = net
        .layers()
        .iter()
        .any(|l| matches!(l, Layer64::ReLU));
    match dense.len() {
        1 => {
            let (w, b) = dense[0];
            let n_in = w.shape()[0];
            let n_out = w.shape()[1];
            let mut z_t = b.data()[target];
            for i in 0..n_in {
                z_t += x[i] * w.data()[i * n_out + target];
            }
            let denom = stab(z_t, epsilon);
            (0..n_in)
                .map(|i| fraction(x[i] * w.data()[i * n_out + target], denom) * z_t)
                .collect()
        }
        2 => {
            let (w1, b1) = dense[0];
            let (w2, b2) = dense[1];
            let n_in = w1.shape()[0];
            let n_hidden = w1.shape()[1];
            let n_out = w2.shape()[1];
            let pre: Vec<f64> = (0..n_hidden)
                .map(|h| {
                    let mut acc = b1.data()[h];
                    for i in 0..n_in {
                        acc += x[i] * w1.data()[i * n_hidden + h];
                    }
                    acc
                })
                .collect();
            let hidden: Vec<f64> = if has_relu {
                pre.iter().map(|&v| v.max(0.0)).collect()
            } else {
                pre.clone()
            };
            let mut z_t = b2.data()[target];
            for (h, &nh) in hidden.iter().enumerate() {
                z_t += nh * w2.data()[h * n_out + target];
            }
            let denom_top = stab(z_t, epsilon);
            let mut out = vec![0.0; n_in];
            for h in 0..n_hidden {
                let top_fraction = fraction(hidden[h] * w2.data()[h * n_out + target], denom_top);
                let r_h = top_fraction * z_t;
                let denom_h = stab(pre[h], epsilon);
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot += fraction(x[i] * w1.data()[i * n_hidden + h], denom_h) * r_h;
                }
            }
            out
        }
        n => panic!("path enumeration supports 1 or 2 Dense layers, got {n}"),
    }
}
