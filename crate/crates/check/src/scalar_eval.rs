use exmap_core::nn::Network;
use exmap_core::Layer64;

/// Evaluates a network on one sample with plain nested loops, carrying the
/// activation as a flat vector and its shape alongside. Written from the
/// layer definitions, not from the batched kernels under test.
pub fn scalar_forward(net: &Network<f64>, sample: &[f64], in_shape: &[usize]) -> Vec<f64> {
    let mut values = sample.to_vec();
    let mut shape = in_shape.to_vec();
    for layer in net.layers() {
        match layer {
            Layer64::Dense { weights, bias } => {
                let n_in = weights.shape()[0];
                let n_out = weights.shape()[1];
                assert_eq!(values.len(), n_in);
                let mut out = vec![0.0; n_out];
                for (l, o) in out.iter_mut().enumerate() {
                    let mut acc = bias.data()[l];
                    for k in 0..n_in {
                        acc += values[k] * weights.data()[k * n_out + l];
                    }
                    *o = acc;
                }
                values = out;
                shape = vec![n_out];
            }
            Layer64::Conv2d {
                kernels,
                bias,
                stride,
            } => {
                let (out_ch, in_ch, kh, kw) = (
                    kernels.shape()[0],
                    kernels.shape()[1],
                    kernels.shape()[2],
                    kernels.shape()[3],
                );
                let (h, w) = (shape[1], shape[2]);
                assert_eq!(shape[0], in_ch);
                let o_h = (h - kh) / stride + 1;
                let o_w = (w - kw) / stride + 1;
                let mut out = vec![0.0; out_ch * o_h * o_w];
                for o in 0..out_ch {
                    for y in 0..o_h {
                        for x in 0..o_w {
                            let mut acc = bias.data()[o];
                            for i in 0..in_ch {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let iv = values
                                            [i * h * w + (y * stride + ky) * w + x * stride + kx];
                                        let wv = kernels.data()
                                            [((o * in_ch + i) * kh + ky) * kw + kx];
                                        acc += iv * wv;
                                    }
                                }
                            }
                            out[o * o_h * o_w + y * o_w + x] = acc;
                        }
                    }
                }
                values = out;
                shape = vec![out_ch, o_h, o_w];
            }
            Layer64::ReLU => {
                for v in values.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Layer64::AvgPool { window } => {
                let (ch, h, w) = (shape[0], shape[1], shape[2]);
                let o_h = h / window;
                let o_w = w / window;
                let mut out = vec![0.0; ch * o_h * o_w];
                for c in 0..ch {
                    for y in 0..o_h {
                        for x in 0..o_w {
                            let mut acc = 0.0;
                            for dy in 0..*window {
                                for dx in 0..*window {
                                    acc += values[c * h * w + (y * window + dy) * w + x * window + dx];
                                }
                            }
                            out[c * o_h * o_w + y * o_w + x] = acc / (window * window) as f64;
                        }
                    }
                }
                values = out;
                shape = vec![ch, o_h, o_w];
            }
            Layer64::Flatten => {
                shape = vec![values.len()];
            }
        }
    }
    values
}
