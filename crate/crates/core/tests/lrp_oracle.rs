use exmap_check::path_relevance;
use exmap_core::data::{class_template, gen_single_shortcut, SpuriousSpec, IMAGE_SIDE};
use exmap_core::lrp::{heatmap_set, lrp_heatmap, lrp_heatmap_for, LrpConfig, Rule};
use exmap_core::nn::{randomize_biases, train_erm, Layer, Network, TrainConfig};
use exmap_core::tensor::Tensor;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let dist = Uniform::new(0.0, 1.0);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| dist.sample(rng))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn conservation_matches_target_logit_on_bias_free_nets() {
    let exact = LrpConfig {
        epsilon: 0.0,
        gamma: 0.0,
        downsize: None,
        ..LrpConfig::default()
    };
    let boosted = LrpConfig {
        gamma: 0.25,
        ..exact
    };
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for seed in 0..5 {
        let net = Network::<f64>::conv_net((3, 16, 16), 3, seed).unwrap();
        for _ in 0..20 {
            let x = random_input(&mut rng, &[3, 16, 16]);
            for cfg in [&exact, &boosted] {
                let map = lrp_heatmap(&net, &x, cfg).unwrap();
                let total: f64 = map.relevance.data().iter().sum();
                let batched =
                    Tensor::from_vec(&[1, 3, 16, 16], x.data().to_vec()).unwrap();
                let logit = net.forward(&batched).unwrap().data()[map.target];
                let rel = (total - logit).abs() / logit.abs().max(1e-12);
                assert!(
                    rel <= 1e-6,
                    "seed {seed}: total {total} vs logit {logit} (rel {rel:.3e})"
                );
            }
        }
    }
}

#[test]
fn leakage_with_biases_stays_under_five_percent() {
    let cfg = LrpConfig {
        epsilon: 1e-6,
        gamma: 0.0,
        downsize: None,
        ..LrpConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut leaks = Vec::new();
    for seed in 0..5 {
        let mut net = Network::<f64>::conv_net((3, 16, 16), 3, seed).unwrap();
        randomize_biases(&mut net, 0.02, 900 + seed);
        for _ in 0..20 {
            let x = random_input(&mut rng, &[3, 16, 16]);
            let batched = Tensor::from_vec(&[1, 3, 16, 16], x.data().to_vec()).unwrap();
            let logits = net.forward(&batched).unwrap();
            let target = logits
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            let map = lrp_heatmap_for(&net, &x, &cfg, target).unwrap();
            let total: f64 = map.relevance.data().iter().sum();
            let logit = logits.data()[target];
            leaks.push((total - logit).abs() / logit.abs());
        }
    }
    let mean = leaks.iter().sum::<f64>() / leaks.len() as f64;
    assert!(
        mean <= 0.05,
        "mean leakage {mean:.4} over {} inputs",
        leaks.len()
    );
}

fn random_dense(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Layer<f64> {
    let scale = 1.0 / (n_in as f64).sqrt();
    let data = (0..n_in * n_out)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v * scale
        })
        .collect();
    Layer::Dense {
        weights: Tensor::from_vec(&[n_in, n_out], data).unwrap(),
        bias: Tensor::zeros(&[n_out]),
    }
}

#[test]
fn dense_two_layer_nets_match_path_enumeration() {
    let cfg = LrpConfig {
        epsilon: 0.0,
        gamma: 0.0,
        downsize: None,
        ..LrpConfig::default()
    };
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let n_in = 3 + (i % 4) as usize;
        let n_hidden = 2 + (i % 5) as usize;
        let n_out = 2 + (i % 3) as usize;
        let mut layers = vec![random_dense(&mut rng, n_in, n_hidden)];
        if i % 2 == 1 {
            layers.push(Layer::ReLU);
        }
        layers.push(random_dense(&mut rng, n_hidden, n_out));
        let net = Network::new(layers).unwrap();

        let dist = Uniform::new(-1.0, 1.0);
        let x: Vec<f64> = (0..n_in).map(|_| dist.sample(&mut rng)).collect();
        let xt = Tensor::from_vec(&[n_in], x.clone()).unwrap();
        let target = (i % n_out as u64) as usize;

        let map = lrp_heatmap_for(&net, &xt, &cfg, target).unwrap();
        let oracle = path_relevance(&net, &x, target, 0.0);
        for (k, (&got, &want)) in map.relevance.data().iter().zip(&oracle).enumerate() {
            assert!(
                (got - want).abs() <= 1e-10,
                "net {i}, input {k}: {got} vs oracle {want}"
            );
        }
    }
}

fn unrolled_conv_dense(kernels: &Tensor<f64>, bias: &[f64], in_shape: [usize; 3]) -> Layer<f64> {
    let [in_ch, h, w] = in_shape;
    let kshape = kernels.shape().to_vec();
    let (out_ch, kh, kw) = (kshape[0], kshape[2], kshape[3]);
    let (o_h, o_w) = (h - kh + 1, w - kw + 1);
    let n_in = in_ch * h * w;
    let n_out = out_ch * o_h * o_w;
    let mut weights = vec![0.0; n_in * n_out];
    let mut out_bias = vec![0.0; n_out];
    for o in 0..out_ch {
        for oy in 0..o_h {
            for ox in 0..o_w {
                let l = (o * o_h + oy) * o_w + ox;
                out_bias[l] = bias[o];
                for ic in 0..in_ch {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let k = (ic * h + oy + ky) * w + ox + kx;
                            let kv =
                                kernels.data()[((o * in_ch + ic) * kh + ky) * kw + kx];
                            weights[k * n_out + l] = kv;
                        }
                    }
                }
            }
        }
    }
    Layer::Dense {
        weights: Tensor::from_vec(&[n_in, n_out], weights).unwrap(),
        bias: Tensor::from_vec(&[n_out], out_bias).unwrap(),
    }
}

#[test]
fn conv_rule_with_zero_gamma_matches_unrolled_dense_epsilon_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let kernels = Tensor::from_vec(
        &[3, 2, 2, 2],
        (0..24).map(|_| normal(&mut rng) * 0.5).collect(),
    )
    .unwrap();
    let conv_bias: Vec<f64> = (0..3).map(|_| normal(&mut rng) * 0.1).collect();
    let head = random_dense(&mut rng, 27, 4);
    let conv_net = Network::new(vec![
        Layer::Conv2d {
            kernels: kernels.clone(),
            bias: Tensor::from_vec(&[3], conv_bias.clone()).unwrap(),
            stride: 1,
        },
        Layer::Flatten,
        head.clone(),
    ])
    .unwrap();
    let dense_net = Network::new(vec![
        Layer::Flatten,
        unrolled_conv_dense(&kernels, &conv_bias, [2, 4, 4]),
        head,
    ])
    .unwrap();

    let conv_cfg = LrpConfig {
        epsilon: 1e-12,
        gamma: 0.0,
        downsize: None,
        ..LrpConfig::default()
    };
    let dense_cfg = LrpConfig {
        conv_rule: Rule::Epsilon,
        dense_rule: Rule::Epsilon,
        ..conv_cfg
    };

    let dist = Uniform::new(-1.0, 1.0);
    for t in 0..4 {
        let x = Tensor::from_vec(&[2, 4, 4], (0..32).map(|_| dist.sample(&mut rng)).collect())
            .unwrap();
        let via_conv = lrp_heatmap_for(&conv_net, &x, &conv_cfg, t).unwrap();
        let via_dense = lrp_heatmap_for(&dense_net, &x, &dense_cfg, t).unwrap();
        for (k, (&a, &b)) in via_conv
            .relevance
            .data()
            .iter()
            .zip(via_dense.relevance.data())
            .enumerate()
        {
            assert!(
                (a - b).abs() <= 1e-8,
                "target {t}, pixel {k}: conv {a} vs unrolled {b}"
            );
        }
    }
}

#[test]
fn heatmaps_lean_on_shortcut_pixels_for_a_biased_net() {
    let spec = SpuriousSpec {
        train_size: 2000,
        val_size: 500,
        test_size: 200,
        rho: 0.99,
        rho2: 0.99,
        val_rho: None,
        seed: 7,
    };
    let triple = gen_single_shortcut::<f64>(&spec).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let net = Network::conv_net((3, IMAGE_SIDE, IMAGE_SIDE), 2, 7).unwrap();
    let outcome = train_erm(net, &triple.train, &triple.val, &cfg).unwrap();

    let mut subset = triple.val.clone();
    let keep: Vec<usize> = (0..100).collect();
    subset.images = subset.images.gather(&keep);
    subset.class_labels.truncate(100);
    for col in &mut subset.attrs {
        col.values.truncate(100);
    }

    let lrp_cfg = LrpConfig {
        downsize: None,
        ..LrpConfig::default()
    };
    let maps = heatmap_set(&outcome.network, &subset, &lrp_cfg).unwrap();

    let templates = [class_template(0), class_template(1)];
    let mut on_stroke = (0.0, 0usize);
    let mut off_stroke = (0.0, 0usize);
    for i in 0..maps.len() {
        let plane = maps.vector(i);
        let template = &templates[subset.class_labels[i]];
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let v = plane[y * IMAGE_SIDE + x].abs();
                if template[y][x] {
                    on_stroke.0 += v;
                    on_stroke.1 += 1;
                } else {
                    off_stroke.0 += v;
                    off_stroke.1 += 1;
                }
            }
        }
    }
    let class_mean = on_stroke.0 / on_stroke.1 as f64;
    let shortcut_mean = off_stroke.0 / off_stroke.1 as f64;
    assert!(
        shortcut_mean > class_mean,
        "shortcut-pixel mean {shortcut_mean:.5} vs class-pattern mean {class_mean:.5}"
    );
}
