use exmap_core::nn::{cross_entropy, Network};
use exmap_core::tensor::Tensor;
use exmap_core::Layer64;

/// Worst relative disagreement between backpropagated and central-difference
/// gradients, over every parameter of the network.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
}

fn loss_of(net: &Network<f64>, images: &Tensor<f64>, labels: &[usize]) -> f64 {
    let logits = net.forward(images).expect("forward");
    cross_entropy(&logits, labels).expect("loss").0
}

fn param_mut(net: &mut Network<f64>, layer: usize, bias: bool, idx: usize) -> &mut f64 {
    match &mut net.layers_mut()[layer] {
        Layer64::Dense { weights, bias: b } | Layer64::Conv2d { kernels: weights, bias: b, .. } => {
            if bias {
                &mut b.data_mut()[idx]
            } else {
                &mut weights.data_mut()[idx]
            }
        }
        _ => panic!("layer {layer} has no parameters"),
    }
}

/// Central differences with step `h` against the analytic gradient of the
/// mean cross-entropy on the given batch. The relative error of one
/// parameter is `|fd - bp| / max(|fd|, |bp|, 1)`.
pub fn grad_check(
    net: &Network<f64>,
    images: &Tensor<f64>,
    labels: &[usize],
    h: f64,
) -> GradCheckReport {
    let trace = net.forward_trace(images).expect("forward");
    let (_, grad_logits) = cross_entropy(trace.logits(), labels).expect("loss");
    let analytic = net.backward(&trace, &grad_logits);

    let mut work = net.clone();
    let mut max_rel_error = 0.0f64;
    let mut params_checked = 0;
    for (li, grad) in analytic.layers.iter().enumerate() {
        let Some(grad) = grad else { continue };
        for (bias, grads) in [(false, grad.weights.data()), (true, grad.bias.data())] {
            for (j, &bp) in grads.iter().enumerate() {
                let original = *param_mut(&mut work, li, bias, j);
                *param_mut(&mut work, li, bias, j) = original + h;
                let up = loss_of(&work, images, labels);
                *param_mut(&mut work, li, bias, j) = original - h;
                let down = loss_of(&work, images, labels);
                *param_mut(&mut work, li, bias, j) = original;
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1.0);
                if rel > max_rel_error {
                    max_rel_error = rel;
                }
                params_checked += 1;
            }
        }
    }
    GradCheckReport {
        max_rel_error,
        params_checked,
    }
}
