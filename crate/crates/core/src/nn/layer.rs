use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One network layer. Parametric layers own their parameters directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<S> {
    /// Fully connected: weights shaped `(in, out)`, bias shaped `(out)`.
    Dense { weights: Tensor<S>, bias: Tensor<S> },
    /// 2-D convolution without padding: kernels shaped
    /// `(out_ch, in_ch, kh, kw)`, bias shaped `(out_ch)`.
    Conv2d {
        kernels: Tensor<S>,
        bias: Tensor<S>,
        stride: usize,
    },
    ReLU,
    /// Average pooling with a square window and stride equal to the window;
    /// trailing rows/columns that do not fill a window are dropped.
    AvgPool { window: usize },
    /// Collapses all per-sample axes into one.
    Flatten,
}

/// Gradients for one parametric layer, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct ParamGrad<S> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::ReLU => "relu",
            Layer::AvgPool { .. } => "avgpool",
            Layer::Flatten => "flatten",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn out_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::ShapeMismatch {
            layer: index,
            expected,
            actual: format!("{:?}", input),
        };
        match self {
            Layer::Dense { weights, .. } => {
                let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
                if input != [n_in] {
                    return Err(mismatch(format!("[{}]", n_in)));
                }
                Ok(vec![n_out])
            }
            Layer::Conv2d {
                kernels, stride, ..
            } => {
                let k = kernels.shape();
                let (out_ch, in_ch, kh, kw) = (k[0], k[1], k[2], k[3]);
                if input.len() != 3 || input[0] != in_ch {
                    return Err(mismatch(format!("[{}, h, w]", in_ch)));
                }
                let (h, w) = (input[1], input[2]);
                if h < kh || w < kw {
                    return Err(mismatch(format!("[{}, >={}, >={}]", in_ch, kh, kw)));
                }
                Ok(vec![out_ch, (h - kh) / stride + 1, (w - kw) / stride + 1])
            }
            Layer::ReLU => Ok(input.to_vec()),
            Layer::AvgPool { window } => {
                if input.len() != 3 {
                    return Err(mismatch("[c, h, w]".into()));
                }
                let (c, h, w) = (input[0], input[1], input[2]);
                if h < *window || w < *window {
                    return Err(mismatch(format!("[c, >={}, >={}]", window, window)));
                }
                Ok(vec![c, h / window, w / window])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn forward(&self, index: usize, input: &Tensor<S>) -> Result<Tensor<S>> {
        let batch = input.batch_size();
        let per_sample = self.out_shape(index, &input.shape()[1..])?;
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&per_sample);
        let mut output = Tensor::zeros(&out_shape);
        match self {
            Layer::Dense { weights, bias } => {
                dense_forward(input, weights, bias, &mut output);
            }
            Layer::Conv2d {
                kernels,
                bias,
                stride,
            } => {
                let in_shape = &input.shape()[1..];
                for b in 0..batch {
                    conv_forward_sample(
                        input.sample(b),
                        in_shape,
                        kernels,
                        bias,
                        *stride,
                        output.sample_mut(b),
                        &per_sample,
                    );
                }
            }
            Layer::ReLU => {
                for (o, &x) in output.data_mut().iter_mut().zip(input.data()) {
                    *o = if x > S::zero() { x } else { S::zero() };
                }
            }
            Layer::AvgPool { window } => {
                let in_shape = &input.shape()[1..];
                for b in 0..batch {
                    avgpool_forward_sample(
                        input.sample(b),
                        in_shape,
                        *window,
                        output.sample_mut(b),
                        &per_sample,
                    );
                }
            }
            Layer::Flatten => {
                output.data_mut().copy_from_slice(input.data());
            }
        }
        Ok(output)
    }

    /// Gradient of the loss with respect to this layer's input and parameters,
    /// given the input it saw in the forward pass and the gradient at its
    /// output. `need_grad_in` skips the input gradient for the first layer.
    pub fn backward(
        &self,
        input: &Tensor<S>,
        grad_out: &Tensor<S>,
        need_grad_in: bool,
    ) -> (Option<Tensor<S>>, Option<ParamGrad<S>>) {
        let batch = input.batch_size();
        match self {
            Layer::Dense { weights, bias } => {
                let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
                let mut grad = ParamGrad {
                    weights: Tensor::zeros(weights.shape()),
                    bias: Tensor::zeros(bias.shape()),
                };
                let gw = grad.weights.data_mut();
                for b in 0..batch {
                    let x = input.sample(b);
                    let go = grad_out.sample(b);
                    for k in 0..n_in {
                        let xk = x[k];
                        let row = &mut gw[k * n_out..(k + 1) * n_out];
                        for (gwv, &gov) in row.iter_mut().zip(go) {
                            *gwv += xk * gov;
                        }
                    }
                    for (gbv, &gov) in grad.bias.data_mut().iter_mut().zip(go) {
                        *gbv += gov;
                    }
                }
                let grad_in = need_grad_in.then(|| {
                    let mut gi = Tensor::zeros(input.shape());
                    let w = weights.data();
                    for b in 0..batch {
                        let go = grad_out.sample(b);
                        let gx = gi.sample_mut(b);
                        for k in 0..n_in {
                            let row = &w[k * n_out..(k + 1) * n_out];
                            let mut acc = S::zero();
                            for (&wv, &gov) in row.iter().zip(go) {
                                acc += wv * gov;
                            }
                            gx[k] = acc;
                        }
                    }
                    gi
                });
                (grad_in, Some(grad))
            }
            Layer::Conv2d {
                kernels,
                bias,
                stride,
            } => {
                let in_shape = &input.shape()[1..];
                let out_shape = &grad_out.shape()[1..];
                let mut grad = ParamGrad {
                    weights: Tensor::zeros(kernels.shape()),
                    bias: Tensor::zeros(bias.shape()),
                };
                let mut grad_in = need_grad_in.then(|| Tensor::zeros(input.shape()));
                for b in 0..batch {
                    conv_backward_sample(
                        input.sample(b),
                        in_shape,
                        kernels,
                        *stride,
                        grad_out.sample(b),
                        out_shape,
                        &mut grad,
                        grad_in.as_mut().map(|g| g.sample_mut(b)),
                    );
                }
                (grad_in, Some(grad))
            }
            Layer::ReLU => {
                let grad_in = need_grad_in.then(|| {
                    let mut gi = Tensor::zeros(input.shape());
                    for ((g, &x), &go) in gi
                        .data_mut()
                        .iter_mut()
                        .zip(input.data())
                        .zip(grad_out.data())
                    {
                        *g = if x > S::zero() { go } else { S::zero() };
                    }
                    gi
                });
                (grad_in, None)
            }
            Layer::AvgPool { window } => {
                let grad_in = need_grad_in.then(|| {
                    let mut gi = Tensor::zeros(input.shape());
                    let in_shape = &input.shape()[1..];
                    let out_shape = &grad_out.shape()[1..];
                    for b in 0..batch {
                        avgpool_backward_sample(
                            gi.sample_mut(b),
                            in_shape,
                            *window,
                            grad_out.sample(b),
                            out_shape,
                        );
                    }
                    gi
                });
                (grad_in, None)
            }
            Layer::Flatten => {
                let grad_in = need_grad_in.then(|| {
                    Tensor::from_vec(input.shape(), grad_out.data().to_vec())
                        .expect("flatten preserves element count")
                });
                (grad_in, None)
            }
        }
    }
}

fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    output: &mut Tensor<S>,
) {
    let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
    let w = weights.data();
    for b in 0..input.batch_size() {
        let x = input.sample(b);
        let out = output.sample_mut(b);
        out.copy_from_slice(bias.data());
        for k in 0..n_in {
            let xk = x[k];
            let row = &w[k * n_out..(k + 1) * n_out];
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += xk * wv;
            }
        }
    }
}

pub(crate) fn conv_forward_sample<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
    stride: usize,
    output: &mut [S],
    out_shape: &[usize],
) {
    let (in_ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let kshape = kernels.shape();
    let (out_ch, kh, kw) = (kshape[0], kshape[2], kshape[3]);
    let (o_h, o_w) = (out_shape[1], out_shape[2]);
    let k = kernels.data();
    for o in 0..out_ch {
        let plane = &mut output[o * o_h * o_w..(o + 1) * o_h * o_w];
        plane.fill(bias.data()[o]);
        for i in 0..in_ch {
            let in_plane = &input[i * h * w..(i + 1) * h * w];
            let kbase = ((o * in_ch) + i) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = k[kbase + ky * kw + kx];
                    if stride == 1 {
                        for y in 0..o_h {
                            let src = &in_plane[(y + ky) * w + kx..][..o_w];
                            let dst = &mut plane[y * o_w..(y + 1) * o_w];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    } else {
                        for y in 0..o_h {
                            let row = &in_plane[(y * stride + ky) * w..];
                            let dst = &mut plane[y * o_w..(y + 1) * o_w];
                            for (x, d) in dst.iter_mut().enumerate() {
                                *d += wv * row[x * stride + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_sample<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    kernels: &Tensor<S>,
    stride: usize,
    grad_out: &[S],
    out_shape: &[usize],
    grad: &mut ParamGrad<S>,
    grad_in: Option<&mut [S]>,
) {
    let (in_ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let kshape = kernels.shape();
    let (out_ch, kh, kw) = (kshape[0], kshape[2], kshape[3]);
    let (o_h, o_w) = (out_shape[1], out_shape[2]);
    let gw = grad.weights.data_mut();
    let gb = grad.bias.data_mut();
    for o in 0..out_ch {
        let go_plane = &grad_out[o * o_h * o_w..(o + 1) * o_h * o_w];
        let mut bsum = S::zero();
        for &g in go_plane {
            bsum += g;
        }
        gb[o] += bsum;
        for i in 0..in_ch {
            let in_plane = &input[i * h * w..(i + 1) * h * w];
            let kbase = ((o * in_ch) + i) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = S::zero();
                    if stride == 1 {
                        for y in 0..o_h {
                            let src = &in_plane[(y + ky) * w + kx..][..o_w];
                            let go_row = &go_plane[y * o_w..(y + 1) * o_w];
                            for (&s, &g) in src.iter().zip(go_row) {
                                acc += s * g;
                            }
                        }
                    } else {
                        for y in 0..o_h {
                            let row = &in_plane[(y * stride + ky) * w..];
                            let go_row = &go_plane[y * o_w..(y + 1) * o_w];
                            for (x, &g) in go_row.iter().enumerate() {
                                acc += row[x * stride + kx] * g;
                            }
                        }
                    }
                    gw[kbase + ky * kw + kx] += acc;
                }
            }
        }
    }
    if let Some(gi) = grad_in {
        let k = kernels.data();
        for o in 0..out_ch {
            let go_plane = &grad_out[o * o_h * o_w..(o + 1) * o_h * o_w];
            for i in 0..in_ch {
                let gi_plane = &mut gi[i * h * w..(i + 1) * h * w];
                let kbase = ((o * in_ch) + i) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = k[kbase + ky * kw + kx];
                        if stride == 1 {
                            for y in 0..o_h {
                                let go_row = &go_plane[y * o_w..(y + 1) * o_w];
                                let dst = &mut gi_plane[(y + ky) * w + kx..][..o_w];
                                for (d, &g) in dst.iter_mut().zip(go_row) {
                                    *d += wv * g;
                                }
                            }
                        } else {
                            for y in 0..o_h {
                                let go_row = &go_plane[y * o_w..(y + 1) * o_w];
                                let base = (y * stride + ky) * w;
                                for (x, &g) in go_row.iter().enumerate() {
                                    gi_plane[base + x * stride + kx] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn avgpool_forward_sample<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    window: usize,
    output: &mut [S],
    out_shape: &[usize],
) {
    let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (o_h, o_w) = (out_shape[1], out_shape[2]);
    let inv = S::one() / S::of_f64((window * window) as f64);
    for c in 0..ch {
        let in_plane = &input[c * h * w..(c + 1) * h * w];
        let out_plane = &mut output[c * o_h * o_w..(c + 1) * o_h * o_w];
        for oy in 0..o_h {
            for ox in 0..o_w {
                let mut acc = S::zero();
                for dy in 0..window {
                    let row = &in_plane[(oy * window + dy) * w + ox * window..][..window];
                    for &v in row {
                        acc += v;
                    }
                }
                out_plane[oy * o_w + ox] = acc * inv;
            }
        }
    }
}

fn avgpool_backward_sample<S: Scalar>(
    grad_in: &mut [S],
    in_shape: &[usize],
    window: usize,
    grad_out: &[S],
    out_shape: &[usize],
) {
    let (ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (o_h, o_w) = (out_shape[1], out_shape[2]);
    let inv = S::one() / S::of_f64((window * window) as f64);
    for c in 0..ch {
        let gi_plane = &mut grad_in[c * h * w..(c + 1) * h * w];
        let go_plane = &grad_out[c * o_h * o_w..(c + 1) * o_h * o_w];
        for oy in 0..o_h {
            for ox in 0..o_w {
                let g = go_plane[oy * o_w + ox] * inv;
                for dy in 0..window {
                    let row = &mut gi_plane[(oy * window + dy) * w + ox * window..][..window];
                    for v in row {
                        *v += g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(weights: Vec<S64>, shape: [usize; 2], bias: Vec<S64>) -> Layer<S64> {
        Layer::Dense {
            weights: Tensor::from_vec(&shape, weights).unwrap(),
            bias: Tensor::from_vec(&[shape[1]], bias).unwrap(),
        }
    }
    type S64 = f64;

    #[test]
    fn dense_identity_passes_input_through() {
        let layer = dense(vec![1.0, 0.0, 0.0, 1.0], [2, 2], vec![0.0, 0.0]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let y = layer.forward(0, &x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_two_in_one_out() {
        let layer = dense(vec![0.5, 0.25], [2, 1], vec![0.0]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let y = layer.forward(0, &x).unwrap();
        assert_eq!(y.data(), &[1.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[1, 4], vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        let y = Layer::ReLU.forward(0, &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.5, 2.0]);
    }

    #[test]
    fn avgpool_averages_windows() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let y = Layer::AvgPool { window: 2 }.forward(0, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn avgpool_drops_trailing_rows() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
        let y = Layer::AvgPool { window: 2 }.forward(0, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn conv_single_kernel_matches_hand_computation() {
        let kernels = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let layer = Layer::Conv2d {
            kernels,
            bias,
            stride: 1,
        };
        let x = Tensor::from_vec(&[1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = layer.forward(0, &x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[1.0 + 5.0 + 0.5, 2.0 + 6.0 + 0.5]);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let layer = dense(vec![0.5, 0.25], [2, 1], vec![0.0]);
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = layer.forward(7, &x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 7"), "{msg}");
        assert!(msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn flatten_collapses_sample_axes() {
        let x = Tensor::from_vec(&[2, 1, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let y = Layer::Flatten.forward(0, &x).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        assert_eq!(y.data(), x.data());
    }
}
