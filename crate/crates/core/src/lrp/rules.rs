use crate::nn::layer::conv_forward_sample;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `z + epsilon * sign(z)` with `sign(0) = +1`.
pub(super) fn stabilize<S: Scalar>(z: S, epsilon: S) -> S {
    if z < S::zero() {
        z - epsilon
    } else {
        z + epsilon
    }
}

fn boost_positive<S: Scalar>(v: S, gamma: S) -> S {
    if v > S::zero() {
        v + gamma * v
    } else {
        v
    }
}

/// Redistributes relevance through a dense layer. Each output unit `l` hands
/// its relevance back to the inputs in proportion to `a_k * w_kl / z_l`,
/// where `z_l` is the stabilized pre-activation. Units whose stabilized
/// denominator is exactly zero keep their relevance (it is dropped), and the
/// bias share is absorbed.
pub(super) fn dense_relevance<S: Scalar>(
    input: &[S],
    weights: &Tensor<S>,
    bias: &[S],
    rel_out: &[S],
    gamma: S,
    epsilon: S,
) -> Vec<S> {
    let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
    let w = weights.data();
    let boost = gamma > S::zero();

    let mut z = vec![S::zero(); n_out];
    for (l, zl) in z.iter_mut().enumerate() {
        *zl = boost_positive(bias[l], gamma);
    }
    for k in 0..n_in {
        let ak = input[k];
        let row = &w[k * n_out..(k + 1) * n_out];
        for (zl, &wv) in z.iter_mut().zip(row) {
            let wv = if boost { boost_positive(wv, gamma) } else { wv };
            *zl += ak * wv;
        }
    }

    let mut scale = vec![S::zero(); n_out];
    for l in 0..n_out {
        let denom = stabilize(z[l], epsilon);
        if denom != S::zero() {
            scale[l] = rel_out[l] / denom;
        }
    }

    let mut rel_in = vec![S::zero(); n_in];
    for k in 0..n_in {
        let row = &w[k * n_out..(k + 1) * n_out];
        let mut acc = S::zero();
        for (&sv, &wv) in scale.iter().zip(row) {
            let wv = if boost { boost_positive(wv, gamma) } else { wv };
            acc += wv * sv;
        }
        rel_in[k] = input[k] * acc;
    }
    rel_in
}

/// Conv counterpart of [`dense_relevance`]: recomputes the pre-activations
/// with positively boosted parameters, divides the outgoing relevance by
/// them, and scatters it back through the kernel taps weighted by the input
/// activations.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv_relevance_sample<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    kernels: &Tensor<S>,
    bias: &[S],
    stride: usize,
    rel_out: &[S],
    out_shape: &[usize],
    gamma: S,
    epsilon: S,
) -> Vec<S> {
    let kernels = if gamma > S::zero() {
        let mut boosted = kernels.clone();
        for v in boosted.data_mut() {
            *v = boost_positive(*v, gamma);
        }
        boosted
    } else {
        kernels.clone()
    };
    let bias: Vec<S> = bias.iter().map(|&b| boost_positive(b, gamma)).collect();
    let bias = Tensor::from_vec(&[bias.len()], bias).expect("bias length");

    let mut z = vec![S::zero(); rel_out.len()];
    conv_forward_sample(input, in_shape, &kernels, &bias, stride, &mut z, out_shape);

    let mut scale = vec![S::zero(); rel_out.len()];
    for (sv, (&zl, &rl)) in scale.iter_mut().zip(z.iter().zip(rel_out)) {
        let denom = stabilize(zl, epsilon);
        if denom != S::zero() {
            *sv = rl / denom;
        }
    }

    let (in_ch, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let kshape = kernels.shape();
    let (out_ch, kh, kw) = (kshape[0], kshape[2], kshape[3]);
    let (o_h, o_w) = (out_shape[1], out_shape[2]);
    let k = kernels.data();
    let mut rel_in = vec![S::zero(); input.len()];
    for o in 0..out_ch {
        let s_plane = &scale[o * o_h * o_w..(o + 1) * o_h * o_w];
        for i in 0..in_ch {
            let dst_plane = &mut rel_in[i * h * w..(i + 1) * h * w];
            let kbase = ((o * in_ch) + i) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = k[kbase + ky * kw + kx];
                    for y in 0..o_h {
                        let dst = &mut dst_plane[(y * stride + ky) * w + kx..];
                        let src = &s_plane[y * o_w..(y + 1) * o_w];
                        if stride == 1 {
                            for (d, &s) in dst[..o_w].iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        } else {
                            for (x, &s) in src.iter().enumerate() {
                                dst[x * stride] += wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
    for (r, &a) in rel_in.iter_mut().zip(input) {
        *r *= a;
    }
    rel_in
}

/// Each pooling window hands its relevance back in proportion to the input
/// activations; a window summing to exactly zero splits it equally instead.
pub(super) fn avgpool_relevance_sample<S: Scalar>(
    input: &[S],
    in_shape: &[usize],
    window: usize,
    rel_out: &[S],
    out_shape: &[usize],
) -> Vec<S> {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (c, o_h, o_w) = (out_shape[0], out_shape[1], out_shape[2]);
    let count = S::of_f64((window * window) as f64);
    let mut rel_in = vec![S::zero(); input.len()];
    for ch in 0..c {
        let in_plane = &input[ch * h * w..(ch + 1) * h * w];
        let dst_plane = &mut rel_in[ch * h * w..(ch + 1) * h * w];
        let out_plane = &rel_out[ch * o_h * o_w..(ch + 1) * o_h * o_w];
        for oy in 0..o_h {
            for ox in 0..o_w {
                let rl = out_plane[oy * o_w + ox];
                let mut sum = S::zero();
                for dy in 0..window {
                    for dx in 0..window {
                        sum += in_plane[(oy * window + dy) * w + ox * window + dx];
                    }
                }
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = (oy * window + dy) * w + ox * window + dx;
                        dst_plane[idx] = if sum == S::zero() {
                            rl / count
                        } else {
                            in_plane[idx] / sum * rl
                        };
                    }
                }
            }
        }
    }
    rel_in
}
