use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{AttrColumn, DatasetTriple, GroupedDataset, ShortcutKind, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 2;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIDE: usize = 28;
pub const GLYPH_SIDE: usize = 6;

/// Background intensity of every channel.
pub const BASE: f64 = 0.15;
/// Added to the red (attribute 0) or green (attribute 1) channel outside the
/// class stroke.
pub const TINT_BOOST: f64 = 0.25;
/// Blue-channel intensity on class-stroke pixels, darker than the
/// background; red and green stay at `BASE` there, so the stroke carries no
/// tint.
pub const STROKE_VALUE: f64 = 0.05;
/// Standard deviation of the per-pixel Gaussian noise added to every channel.
pub const NOISE_SIGMA: f64 = 0.05;

const GLYPH_HIGH: f64 = 0.9;
const GLYPH_LOW: f64 = 0.1;

/// Generator spec for the spurious-correlation image sets.
///
/// `rho` is the probability that the tint attribute agrees with the class;
/// `rho2` plays the same role for the corner glyph in the two-shortcut
/// generator. `val_rho` optionally rebalances the validation split only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpuriousSpec {
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub rho: f64,
    pub rho2: f64,
    pub val_rho: Option<f64>,
    pub seed: u64,
}

impl Default for SpuriousSpec {
    fn default() -> Self {
        SpuriousSpec {
            train_size: 20_000,
            val_size: 1_000,
            test_size: 4_000,
            rho: 0.99,
            rho2: 0.99,
            val_rho: None,
            seed: 0,
        }
    }
}

impl SpuriousSpec {
    fn check_rho(name: &str, rho: f64) -> Result<()> {
        if !(0.5..=1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!(
                "{name} must lie in [0.5, 1.0], got {rho}"
            )));
        }
        Ok(())
    }

    /// Errors when a split expects a fractional-but-nonzero number of samples
    /// in its rarest cell, i.e. the split cannot realize its minority groups.
    fn check_split(split: Split, size: usize, cell_prob: f64, rho: f64) -> Result<()> {
        if size == 0 {
            return Err(Error::Empty(match split {
                Split::Train => "train split",
                Split::Val => "val split",
                Split::Test => "test split",
            }));
        }
        let expected = size as f64 * cell_prob;
        if cell_prob > 0.0 && expected < 1.0 {
            return Err(Error::MinorityUnrealizable {
                size,
                rho,
                expected,
            });
        }
        Ok(())
    }

    pub fn validate(&self, two_shortcuts: bool) -> Result<()> {
        Self::check_rho("rho", self.rho)?;
        if two_shortcuts {
            Self::check_rho("rho2", self.rho2)?;
        }
        if let Some(v) = self.val_rho {
            Self::check_rho("val_rho", v)?;
        }
        let minority = |rho: f64| {
            if two_shortcuts {
                0.5 * (1.0 - rho) * (1.0 - self.rho2)
            } else {
                0.5 * (1.0 - rho)
            }
        };
        Self::check_split(Split::Train, self.train_size, minority(self.rho), self.rho)?;
        let val_rho = self.val_rho.unwrap_or(self.rho);
        Self::check_split(Split::Val, self.val_size, minority(val_rho), val_rho)?;
        Self::check_split(Split::Test, self.test_size, minority(self.rho), self.rho)?;
        Ok(())
    }
}

/// Stroke mask for a class: class 0 draws a diagonal cross, class 1 a ring,
/// both inside the central region and away from the glyph corner.
pub fn class_template(class: usize) -> [[bool; IMAGE_SIDE]; IMAGE_SIDE] {
    let mut mask = [[false; IMAGE_SIDE]; IMAGE_SIDE];
    match class {
        0 => {
            for (r, row) in mask.iter_mut().enumerate().take(26).skip(8) {
                for (c, cell) in row.iter_mut().enumerate().take(26).skip(8) {
                    let (y, x) = (r as i64 - 8, c as i64 - 8);
                    if (y - x).abs() <= 1 || (y + x - 17).abs() <= 1 {
                        *cell = true;
                    }
                }
            }
        }
        1 => {
            for (r, row) in mask.iter_mut().enumerate() {
                for (c, cell) in row.iter_mut().enumerate() {
                    let dy = r as f64 - 16.5;
                    let dx = c as f64 - 16.5;
                    let d = (dy * dy + dx * dx).sqrt();
                    if (5.5..=7.0).contains(&d) {
                        *cell = true;
                    }
                }
            }
        }
        _ => {}
    }
    mask
}

fn glyph_value(variant: usize, r: usize, c: usize) -> f64 {
    match variant {
        0 => GLYPH_HIGH,
        _ => {
            if (r + c) % 2 == 0 {
                GLYPH_HIGH
            } else {
                GLYPH_LOW
            }
        }
    }
}

fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let tag = match split {
        Split::Train => 1u64,
        Split::Val => 2,
        Split::Test => 3,
    };
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn render_sample<S: Scalar>(
    out: &mut [S],
    class: usize,
    tint: usize,
    glyph: Option<usize>,
    rng: &mut ChaCha8Rng,
) {
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let template = class_template(class);
    let mut pixels = [[[BASE; IMAGE_SIDE]; IMAGE_SIDE]; IMAGE_CHANNELS];
    let tint_channel = if tint == 0 { 0 } else { 1 };
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            if template[r][c] {
                pixels[2][r][c] = STROKE_VALUE;
            } else {
                pixels[tint_channel][r][c] += TINT_BOOST;
            }
        }
    }
    if let Some(variant) = glyph {
        for r in 0..GLYPH_SIDE {
            for c in 0..GLYPH_SIDE {
                let v = glyph_value(variant, r, c);
                for plane in pixels.iter_mut() {
                    plane[r][c] = v;
                }
            }
        }
    }
    for (ch, plane) in pixels.iter().enumerate() {
        for (r, row) in plane.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                let noisy = (v + z * NOISE_SIGMA).clamp(0.0, 1.0);
                out[ch * hw + r * IMAGE_SIDE + c] = S::of_f64(noisy);
            }
        }
    }
}

fn gen_split<S: Scalar>(
    split: Split,
    size: usize,
    rho_tint: f64,
    rho_glyph: Option<f64>,
    seed: u64,
) -> GroupedDataset<S> {
    let mut rng = split_rng(seed, split);
    let mut images = Tensor::zeros(&[size, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE]);
    let mut class_labels = Vec::with_capacity(size);
    let mut tints = Vec::with_capacity(size);
    let mut glyphs = Vec::with_capacity(size);
    for i in 0..size {
        let class = usize::from(rng.gen_bool(0.5));
        let tint = if rng.gen_bool(rho_tint) {
            class
        } else {
            1 - class
        };
        let glyph = rho_glyph.map(|rho| if rng.gen_bool(rho) { class } else { 1 - class });
        render_sample(images.sample_mut(i), class, tint, glyph, &mut rng);
        class_labels.push(class);
        tints.push(tint);
        if let Some(g) = glyph {
            glyphs.push(g);
        }
    }
    let mut attrs = vec![AttrColumn {
        kind: ShortcutKind::Tint,
        cardinality: 2,
        values: tints,
    }];
    if rho_glyph.is_some() {
        attrs.push(AttrColumn {
            kind: ShortcutKind::Glyph,
            cardinality: 2,
            values: glyphs,
        });
    }
    GroupedDataset {
        split,
        images,
        class_labels,
        num_classes: NUM_CLASSES,
        attrs,
    }
}

/// Three splits with a single tint shortcut correlated with the class at
/// `spec.rho` (validation at `spec.val_rho` when set). The same spec and
/// seed always produce identical splits.
pub fn gen_single_shortcut<S: Scalar>(spec: &SpuriousSpec) -> Result<DatasetTriple<S>> {
    spec.validate(false)?;
    let val_rho = spec.val_rho.unwrap_or(spec.rho);
    Ok(DatasetTriple {
        train: gen_split(Split::Train, spec.train_size, spec.rho, None, spec.seed),
        val: gen_split(Split::Val, spec.val_size, val_rho, None, spec.seed),
        test: gen_split(Split::Test, spec.test_size, spec.rho, None, spec.seed),
    })
}

/// Three splits carrying both the tint and the corner glyph, independently
/// correlated with the class at `spec.rho` and `spec.rho2`.
pub fn gen_multi_shortcut<S: Scalar>(spec: &SpuriousSpec) -> Result<DatasetTriple<S>> {
    spec.validate(true)?;
    let val_rho = spec.val_rho.unwrap_or(spec.rho);
    Ok(DatasetTriple {
        train: gen_split(
            Split::Train,
            spec.train_size,
            spec.rho,
            Some(spec.rho2),
            spec.seed,
        ),
        val: gen_split(Split::Val, spec.val_size, val_rho, Some(spec.rho2), spec.seed),
        test: gen_split(
            Split::Test,
            spec.test_size,
            spec.rho,
            Some(spec.rho2),
            spec.seed,
        ),
    })
}

/// Copy of the dataset with one shortcut neutralized in the pixels; labels
/// and attribute columns are unchanged. Tint removal averages the red and
/// green channels per pixel; glyph removal repaints the corner patch with the
/// background value. Both are idempotent.
pub fn strip_spurious<S: Scalar>(
    data: &GroupedDataset<S>,
    kind: ShortcutKind,
) -> Result<GroupedDataset<S>> {
    data.attr_column(kind)?;
    let mut out = data.clone();
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let half = S::of_f64(0.5);
    let base = S::of_f64(BASE);
    for i in 0..out.len() {
        let img = out.images.sample_mut(i);
        match kind {
            ShortcutKind::Tint => {
                for p in 0..hw {
                    let mean = (img[p] + img[hw + p]) * half;
                    img[p] = mean;
                    img[hw + p] = mean;
                }
            }
            ShortcutKind::Glyph => {
                for ch in 0..IMAGE_CHANNELS {
                    for r in 0..GLYPH_SIDE {
                        for c in 0..GLYPH_SIDE {
                            img[ch * hw + r * IMAGE_SIDE + c] = base;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
