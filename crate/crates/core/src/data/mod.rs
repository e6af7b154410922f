//! Grouped image datasets with planted shortcut attributes, plus their
//! on-disk formats.

mod idx;
mod io;
mod meta;
mod synth;

pub use idx::{dequantize, quantize, read_idx_u8, write_idx_u8};
pub use io::{load_split, save_splits};
pub use meta::{read_meta, write_meta};
pub use synth::{
    class_template, gen_multi_shortcut, gen_single_shortcut, strip_spurious, SpuriousSpec, BASE,
    GLYPH_SIDE, IMAGE_CHANNELS, IMAGE_SIDE, NOISE_SIGMA, NUM_CLASSES, STROKE_VALUE, TINT_BOOST,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Planted shortcut channels a generated dataset can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortcutKind {
    /// Whole-image color bias: red-dominant for attribute 0, green-dominant
    /// for attribute 1.
    Tint,
    /// 6x6 top-left corner patch: filled for attribute 0, checkerboard for
    /// attribute 1.
    Glyph,
}

impl ShortcutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShortcutKind::Tint => "tint",
            ShortcutKind::Glyph => "glyph",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tint" => Ok(ShortcutKind::Tint),
            "glyph" => Ok(ShortcutKind::Glyph),
            other => Err(Error::UnknownAttribute(other.to_string())),
        }
    }
}

/// One attribute column: a value in `0..cardinality` per sample.
#[derive(Debug, Clone)]
pub struct AttrColumn {
    pub kind: ShortcutKind,
    pub cardinality: usize,
    pub values: Vec<usize>,
}

/// One split of an image dataset with class labels and zero or more planted
/// attribute columns. Group ids enumerate `(class, attributes)` cells
/// row-major: class first, then each attribute column in order.
#[derive(Debug, Clone)]
pub struct GroupedDataset<S> {
    pub split: Split,
    /// Images shaped `(n, channels, height, width)` with values in `[0, 1]`.
    pub images: Tensor<S>,
    pub class_labels: Vec<usize>,
    pub num_classes: usize,
    pub attrs: Vec<AttrColumn>,
}

impl<S: Scalar> GroupedDataset<S> {
    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.num_classes
            * self
                .attrs
                .iter()
                .map(|a| a.cardinality)
                .product::<usize>()
    }

    /// Group id of one sample: `class` folded row-major with its attributes.
    pub fn group_id(&self, i: usize) -> usize {
        let mut gid = self.class_labels[i];
        for col in &self.attrs {
            gid = gid * col.cardinality + col.values[i];
        }
        gid
    }

    pub fn group_ids(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.group_id(i)).collect()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_groups()];
        for i in 0..self.len() {
            counts[self.group_id(i)] += 1;
        }
        counts
    }

    /// `(class, attribute values)` cell described by a group id.
    pub fn describe_group(&self, gid: usize) -> (usize, Vec<usize>) {
        let mut rest = gid;
        let mut attrs = vec![0usize; self.attrs.len()];
        for (slot, col) in attrs.iter_mut().zip(&self.attrs).rev() {
            *slot = rest % col.cardinality;
            rest /= col.cardinality;
        }
        (rest, attrs)
    }

    pub fn attr_column(&self, kind: ShortcutKind) -> Result<&AttrColumn> {
        self.attrs
            .iter()
            .find(|c| c.kind == kind)
            .ok_or_else(|| Error::UnknownAttribute(kind.as_str().to_string()))
    }

    /// New dataset holding the given samples, in the given order. Indices may
    /// repeat.
    pub fn subset(&self, indices: &[usize]) -> GroupedDataset<S> {
        GroupedDataset {
            split: self.split,
            images: self.images.gather(indices),
            class_labels: indices.iter().map(|&i| self.class_labels[i]).collect(),
            num_classes: self.num_classes,
            attrs: self
                .attrs
                .iter()
                .map(|col| AttrColumn {
                    kind: col.kind,
                    cardinality: col.cardinality,
                    values: indices.iter().map(|&i| col.values[i]).collect(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.images.batch_size() != n {
            return Err(Error::InvalidShape(format!(
                "{} images for {} labels",
                self.images.batch_size(),
                n
            )));
        }
        for &label in &self.class_labels {
            if label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes: self.num_classes,
                });
            }
        }
        for col in &self.attrs {
            if col.values.len() != n {
                return Err(Error::InvalidShape(format!(
                    "attribute column {} has {} values for {} samples",
                    col.kind.as_str(),
                    col.values.len(),
                    n
                )));
            }
            if let Some(&v) = col.values.iter().find(|&&v| v >= col.cardinality) {
                return Err(Error::LabelOutOfRange {
                    label: v,
                    num_classes: col.cardinality,
                });
            }
        }
        Ok(())
    }
}

/// Train, validation, and test splits drawn from one generator spec.
#[derive(Debug, Clone)]
pub struct DatasetTriple<S> {
    pub train: GroupedDataset<S>,
    pub val: GroupedDataset<S>,
    pub test: GroupedDataset<S>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> GroupedDataset<f64> {
        GroupedDataset {
            split: Split::Train,
            images: Tensor::zeros(&[4, 1, 2, 2]),
            class_labels: vec![0, 0, 1, 1],
            num_classes: 2,
            attrs: vec![AttrColumn {
                kind: ShortcutKind::Tint,
                cardinality: 2,
                values: vec![0, 1, 0, 1],
            }],
        }
    }

    #[test]
    fn group_ids_are_class_major() {
        let d = toy();
        assert_eq!(d.num_groups(), 4);
        assert_eq!(d.group_ids(), vec![0, 1, 2, 3]);
        assert_eq!(d.describe_group(3), (1, vec![1]));
    }

    #[test]
    fn two_attr_group_ids_fold_row_major() {
        let mut d = toy();
        d.attrs.push(AttrColumn {
            kind: ShortcutKind::Glyph,
            cardinality: 2,
            values: vec![1, 0, 1, 0],
        });
        assert_eq!(d.num_groups(), 8);
        assert_eq!(d.group_ids(), vec![1, 2, 5, 6]);
        assert_eq!(d.describe_group(6), (1, vec![1, 0]));
    }

    #[test]
    fn validate_catches_bad_labels() {
        let mut d = toy();
        d.class_labels[0] = 5;
        assert!(d.validate().is_err());
    }

    #[test]
    fn subset_keeps_order_and_attrs() {
        let d = toy();
        let s = d.subset(&[3, 1, 1]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.class_labels, vec![1, 0, 0]);
        assert_eq!(s.attrs[0].values, vec![1, 1, 1]);
        assert_eq!(s.group_ids(), vec![3, 1, 1]);
        s.validate().unwrap();
    }
}
