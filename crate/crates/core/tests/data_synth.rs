use exmap_check::{decode_class, decode_glyph, decode_tint, decoder_accuracy};
use exmap_core::data::{
    dequantize, gen_multi_shortcut, gen_single_shortcut, quantize, read_idx_u8, strip_spurious,
    write_idx_u8, GroupedDataset, ShortcutKind, SpuriousSpec,
};
use proptest::prelude::*;

fn images_of(data: &GroupedDataset<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..data.len()).map(|i| data.images.sample(i).to_vec())
}

fn attr_values(data: &GroupedDataset<f64>, kind: ShortcutKind) -> &[usize] {
    &data.attr_column(kind).unwrap().values
}

fn assert_binomial(count: usize, n: usize, p: f64, what: &str) {
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    let dev = (count as f64 - mean).abs();
    assert!(
        dev <= 3.0 * sigma,
        "{what}: count {count} deviates from {mean:.1} by {dev:.1} (3 sigma = {:.1})",
        3.0 * sigma
    );
}

fn assert_bookkeeping(data: &GroupedDataset<f64>, rho: f64, kind: ShortcutKind) {
    let counts = data.group_counts();
    assert_eq!(counts.iter().sum::<usize>(), data.len());
    let agree = attr_values(data, kind)
        .iter()
        .zip(&data.class_labels)
        .filter(|(v, l)| v == l)
        .count();
    assert_binomial(agree, data.len(), rho, "attr-class agreement");
}

#[test]
fn single_shortcut_pixels_carry_both_signals() {
    let spec = SpuriousSpec {
        train_size: 4000,
        val_size: 400,
        test_size: 400,
        rho: 0.99,
        rho2: 0.99,
        val_rho: None,
        seed: 3,
    };
    let triple = gen_single_shortcut::<f64>(&spec).unwrap();
    for data in [&triple.train, &triple.val, &triple.test] {
        let tints = attr_values(data, ShortcutKind::Tint);
        assert_eq!(decoder_accuracy(images_of(data), tints, decode_tint), 1.0);
        assert_eq!(
            decoder_accuracy(images_of(data), &data.class_labels, decode_class),
            1.0
        );
        assert_bookkeeping(data, spec.rho, ShortcutKind::Tint);
    }
}

#[test]
fn minority_cells_track_the_binomial_at_high_correlation() {
    let spec = SpuriousSpec {
        train_size: 20_000,
        val_size: 200,
        test_size: 200,
        rho: 0.99,
        rho2: 0.99,
        val_rho: None,
        seed: 5,
    };
    let triple = gen_single_shortcut::<f64>(&spec).unwrap();
    let counts = triple.train.group_counts();
    let n = triple.train.len();
    assert_binomial(counts[0], n, 0.5 * spec.rho, "majority cell 0");
    assert_binomial(counts[1], n, 0.5 * (1.0 - spec.rho), "minority cell 1");
    assert_binomial(counts[2], n, 0.5 * (1.0 - spec.rho), "minority cell 2");
    assert_binomial(counts[3], n, 0.5 * spec.rho, "majority cell 3");
}

#[test]
fn balanced_correlation_fills_all_cells_evenly() {
    let spec = SpuriousSpec {
        train_size: 8000,
        val_size: 200,
        test_size: 200,
        rho: 0.5,
        rho2: 0.5,
        val_rho: None,
        seed: 7,
    };
    let single = gen_single_shortcut::<f64>(&spec).unwrap();
    for (g, &c) in single.train.group_counts().iter().enumerate() {
        assert_binomial(c, single.train.len(), 0.25, &format!("single cell {g}"));
    }
    let multi = gen_multi_shortcut::<f64>(&spec).unwrap();
    assert_eq!(multi.train.num_groups(), 8);
    for (g, &c) in multi.train.group_counts().iter().enumerate() {
        assert_binomial(c, multi.train.len(), 0.125, &format!("multi cell {g}"));
    }
}

#[test]
fn multi_shortcut_flags_match_the_pixels() {
    let spec = SpuriousSpec {
        train_size: 4000,
        val_size: 1000,
        test_size: 4000,
        rho: 0.95,
        rho2: 0.95,
        val_rho: None,
        seed: 11,
    };
    let triple = gen_multi_shortcut::<f64>(&spec).unwrap();
    for data in [&triple.train, &triple.val, &triple.test] {
        let tints = attr_values(data, ShortcutKind::Tint);
        let glyphs = attr_values(data, ShortcutKind::Glyph);
        assert_eq!(decoder_accuracy(images_of(data), tints, decode_tint), 1.0);
        assert_eq!(decoder_accuracy(images_of(data), glyphs, decode_glyph), 1.0);
        assert_eq!(
            decoder_accuracy(images_of(data), &data.class_labels, decode_class),
            1.0
        );
        assert_bookkeeping(data, spec.rho, ShortcutKind::Tint);
        assert_bookkeeping(data, spec.rho2, ShortcutKind::Glyph);
    }

    let counts = triple.train.group_counts();
    let n = triple.train.len();
    for (g, &c) in counts.iter().enumerate() {
        let (class, attrs) = triple.train.describe_group(g);
        let p_tint = if attrs[0] == class { spec.rho } else { 1.0 - spec.rho };
        let p_glyph = if attrs[1] == class {
            spec.rho2
        } else {
            1.0 - spec.rho2
        };
        assert_binomial(c, n, 0.5 * p_tint * p_glyph, &format!("cell {g}"));
    }
}

#[test]
fn stripping_silences_only_the_stripped_signal() {
    let spec = SpuriousSpec {
        train_size: 2000,
        val_size: 1000,
        test_size: 1000,
        rho: 0.95,
        rho2: 0.95,
        val_rho: None,
        seed: 13,
    };
    let test = gen_multi_shortcut::<f64>(&spec).unwrap().test;
    let tints = attr_values(&test, ShortcutKind::Tint).to_vec();
    let glyphs = attr_values(&test, ShortcutKind::Glyph).to_vec();

    let no_tint = strip_spurious(&test, ShortcutKind::Tint).unwrap();
    let tint_acc = decoder_accuracy(images_of(&no_tint), &tints, decode_tint);
    assert!(
        (tint_acc - 0.5).abs() <= 0.1,
        "stripped tint still decodes at {tint_acc}"
    );
    assert_eq!(
        decoder_accuracy(images_of(&no_tint), &glyphs, decode_glyph),
        1.0
    );
    assert_eq!(
        decoder_accuracy(images_of(&no_tint), &no_tint.class_labels, decode_class),
        1.0
    );

    let no_glyph = strip_spurious(&test, ShortcutKind::Glyph).unwrap();
    let glyph_acc = decoder_accuracy(images_of(&no_glyph), &glyphs, decode_glyph);
    assert!(
        (glyph_acc - 0.5).abs() <= 0.1,
        "stripped glyph still decodes at {glyph_acc}"
    );
    assert_eq!(
        decoder_accuracy(images_of(&no_glyph), &tints, decode_tint),
        1.0
    );

    let bare = strip_spurious(&no_tint, ShortcutKind::Glyph).unwrap();
    assert_eq!(
        decoder_accuracy(images_of(&bare), &bare.class_labels, decode_class),
        1.0
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn idx_image_round_trip_matches_quantization(
        a in 1usize..6,
        b in 1usize..6,
        c in 1usize..4,
        raw in proptest::collection::vec(0.0f64..=1.0, 1..120),
    ) {
        let len = a * b * c;
        let values: Vec<f64> = (0..len).map(|i| raw[i % raw.len()]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs.idx");
        let bytes: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();
        write_idx_u8(&path, &[a, b, c], &bytes).unwrap();
        let (dims, back) = read_idx_u8(&path).unwrap();
        prop_assert_eq!(dims, vec![a, b, c]);
        prop_assert_eq!(&back, &bytes);
        for (&byte, &v) in back.iter().zip(&values) {
            prop_assert_eq!(dequantize(byte), dequantize(quantize(v)));
        }
    }

    #[test]
    fn idx_labels_round_trip_bit_exact(labels in proptest::collection::vec(any::<u8>(), 1..300)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.idx");
        write_idx_u8(&path, &[labels.len()], &labels).unwrap();
        let (dims, back) = read_idx_u8(&path).unwrap();
        prop_assert_eq!(dims, vec![labels.len()]);
        prop_assert_eq!(back, labels);
    }
}
