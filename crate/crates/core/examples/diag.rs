use exmap_core::data::{
    class_template, gen_multi_shortcut, gen_single_shortcut, GroupedDataset, SpuriousSpec,
    IMAGE_SIDE,
};
use exmap_core::lrp::{heatmap_set, LrpConfig};
use exmap_core::nn::{train_erm, Network, TrainConfig, EVAL_CHUNK};

fn energy_report(net: &Network<f64>, data: &GroupedDataset<f64>, take: usize) {
    let subset = data.subset(&(0..take.min(data.len())).collect::<Vec<_>>());
    let cfg = LrpConfig {
        downsize: None,
        ..LrpConfig::default()
    };
    let maps = heatmap_set(net, &subset, &cfg).unwrap();
    let mut stroke_sum = 0.0f64;
    let mut stroke_px = 0usize;
    let mut off_sum = 0.0f64;
    let mut off_px = 0usize;
    for i in 0..maps.len() {
        let template = class_template(subset.class_labels[i]);
        let map = maps.vector(i);
        for y in 0..IMAGE_SIDE {
            for x in 0..IMAGE_SIDE {
                let v = map[y * IMAGE_SIDE + x].abs();
                if template[y][x] {
                    stroke_sum += v;
                    stroke_px += 1;
                } else {
                    off_sum += v;
                    off_px += 1;
                }
            }
        }
    }
    println!(
        "  energy: stroke {:.6} off-stroke {:.6} ratio {:.3}",
        stroke_sum / stroke_px as f64,
        off_sum / off_px as f64,
        (off_sum / off_px as f64) / (stroke_sum / stroke_px as f64)
    );
}

fn group_report(net: &Network<f64>, data: &GroupedDataset<f64>) {
    let preds = net.predict(&data.images, EVAL_CHUNK).unwrap();
    let gids = data.group_ids();
    let mut hits = vec![0usize; data.num_groups()];
    let mut counts = vec![0usize; data.num_groups()];
    let mut total = 0usize;
    for i in 0..data.len() {
        counts[gids[i]] += 1;
        if preds[i] == data.class_labels[i] {
            hits[gids[i]] += 1;
            total += 1;
        }
    }
    let mut wga = 1.0f64;
    for g in 0..data.num_groups() {
        let acc = hits[g] as f64 / counts[g].max(1) as f64;
        if counts[g] > 0 {
            wga = wga.min(acc);
        }
    }
    println!(
        "  groups {:?} mean {:.4} wga {:.4}",
        hits.iter()
            .zip(&counts)
            .map(|(h, c)| format!("{h}/{c}"))
            .collect::<Vec<_>>(),
        total as f64 / data.len() as f64,
        wga
    );
}

fn probe_features(net: &Network<f64>, train: &GroupedDataset<f64>, test: &GroupedDataset<f64>) {
    let feats = net.penultimate_features(&train.images, EVAL_CHUNK).unwrap();
    let d = feats.sample_len();
    let gids = train.group_ids();
    let num_groups = train.num_groups();
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); num_groups];
    for (i, &g) in gids.iter().enumerate() {
        by_group[g].push(i);
    }
    let min_size = by_group
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.len())
        .min()
        .unwrap();
    let mut idx = Vec::new();
    for g in &by_group {
        idx.extend_from_slice(&g[..min_size.min(g.len())]);
    }
    println!(
        "  probe: {} balanced samples ({} per group), feature dim {}",
        idx.len(),
        min_size,
        d
    );

    let mut wvec = vec![0.0f64; d];
    let mut b = 0.0f64;
    let lr = 0.5;
    for _ in 0..800 {
        let mut gw = vec![0.0f64; d];
        let mut gb = 0.0f64;
        for &i in &idx {
            let x = feats.sample(i);
            let y = train.class_labels[i] as f64;
            let z: f64 = x.iter().zip(&wvec).map(|(a, w)| a * w).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y;
            for (g, &xv) in gw.iter_mut().zip(x) {
                *g += err * xv;
            }
            gb += err;
        }
        let n = idx.len() as f64;
        for (w, g) in wvec.iter_mut().zip(&gw) {
            *w -= lr * g / n;
        }
        b -= lr * gb / n;
    }

    let test_feats = net.penultimate_features(&test.images, EVAL_CHUNK).unwrap();
    let tg = test.group_ids();
    let mut hits = vec![0usize; test.num_groups()];
    let mut counts = vec![0usize; test.num_groups()];
    for i in 0..test.len() {
        let x = test_feats.sample(i);
        let z: f64 = x.iter().zip(&wvec).map(|(a, w)| a * w).sum::<f64>() + b;
        let pred = usize::from(z > 0.0);
        counts[tg[i]] += 1;
        if pred == test.class_labels[i] {
            hits[tg[i]] += 1;
        }
    }
    let mut wga = 1.0f64;
    let mut total = 0usize;
    for g in 0..test.num_groups() {
        if counts[g] > 0 {
            wga = wga.min(hits[g] as f64 / counts[g] as f64);
        }
        total += hits[g];
    }
    println!(
        "  probe on test: groups {:?} mean {:.4} wga {:.4}",
        hits.iter()
            .zip(&counts)
            .map(|(h, c)| format!("{h}/{c}"))
            .collect::<Vec<_>>(),
        total as f64 / test.len() as f64,
        wga
    );
}

fn main() {
    println!("single-shortcut rho 0.99, 20k, epochs 8:");
    let spec = SpuriousSpec {
        train_size: 20000,
        val_size: 1000,
        test_size: 4000,
        rho: 0.99,
        rho2: 0.99,
        val_rho: None,
        seed: 7,
    };
    let triple = gen_single_shortcut::<f64>(&spec).unwrap();
    let cfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let net = Network::conv_net((3, IMAGE_SIDE, IMAGE_SIDE), 2, 7).unwrap();
    let outcome = train_erm(net, &triple.train, &triple.val, &cfg).unwrap();
    println!("  best epoch {:?} acc {:.4}", outcome.best_epoch, outcome.best_accuracy);
    for e in &outcome.history {
        println!(
            "  epoch {} loss {:.4} sel-acc {:.4}",
            e.epoch, e.mean_loss, e.selection_accuracy
        );
    }
    group_report(&outcome.network, &triple.test);
    probe_features(&outcome.network, &triple.train, &triple.test);
    energy_report(&outcome.network, &triple.val, 200);

    println!("multi-shortcut rho 0.95, 4k, epochs 8:");
    let spec2 = SpuriousSpec {
        train_size: 4000,
        val_size: 1000,
        test_size: 4000,
        rho: 0.95,
        rho2: 0.95,
        val_rho: None,
        seed: 7,
    };
    let triple2 = gen_multi_shortcut::<f64>(&spec2).unwrap();
    let net2 = Network::conv_net((3, IMAGE_SIDE, IMAGE_SIDE), 2, 8).unwrap();
    let cfg2 = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let outcome2 = train_erm(net2, &triple2.train, &triple2.val, &cfg2).unwrap();
    println!("  best epoch {:?} acc {:.4}", outcome2.best_epoch, outcome2.best_accuracy);
    for e in &outcome2.history {
        println!(
            "  epoch {} loss {:.4} sel-acc {:.4}",
            e.epoch, e.mean_loss, e.selection_accuracy
        );
    }
    group_report(&outcome2.network, &triple2.test);
    probe_features(&outcome2.network, &triple2.train, &triple2.test);
}
