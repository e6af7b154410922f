use std::path::Path;

use crate::data::idx::{dequantize, quantize, read_idx_u8, write_idx_u8};
use crate::data::meta::{meta_get, read_meta, write_meta};
use crate::data::{AttrColumn, DatasetTriple, GroupedDataset, ShortcutKind, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn images_path(dir: &Path, split: Split) -> std::path::PathBuf {
    dir.join(format!("{}-images.idx", split.as_str()))
}

fn labels_path(dir: &Path, split: Split) -> std::path::PathBuf {
    dir.join(format!("{}-labels.idx", split.as_str()))
}

fn attr_path(dir: &Path, split: Split, kind: ShortcutKind) -> std::path::PathBuf {
    dir.join(format!("{}-attr-{}.idx", split.as_str(), kind.as_str()))
}

fn save_split<S: Scalar>(dir: &Path, data: &GroupedDataset<S>) -> Result<()> {
    let bytes: Vec<u8> = data.images.data().iter().map(|&v| quantize(v.as_f64())).collect();
    write_idx_u8(&images_path(dir, data.split), data.images.shape(), &bytes)?;
    let labels: Vec<u8> = data.class_labels.iter().map(|&l| l as u8).collect();
    write_idx_u8(&labels_path(dir, data.split), &[labels.len()], &labels)?;
    for col in &data.attrs {
        let values: Vec<u8> = col.values.iter().map(|&v| v as u8).collect();
        write_idx_u8(
            &attr_path(dir, data.split, col.kind),
            &[values.len()],
            &values,
        )?;
    }
    Ok(())
}

/// Writes all three splits as idx files plus a `meta.txt` sidecar recording
/// the generator parameters and the realized group-count table.
pub fn save_splits<S: Scalar>(
    dir: &Path,
    triple: &DatasetTriple<S>,
    extra_meta: &[(String, String)],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let shortcuts: Vec<&str> = triple.train.attrs.iter().map(|c| c.kind.as_str()).collect();
    let mut meta: Vec<(String, String)> = vec![
        ("format".into(), "grouped-image-dataset".into()),
        ("num_classes".into(), triple.train.num_classes.to_string()),
        ("shortcuts".into(), shortcuts.join(",")),
    ];
    meta.extend_from_slice(extra_meta);
    for split in [&triple.train, &triple.val, &triple.test] {
        save_split(dir, split)?;
        meta.push((
            format!("size.{}", split.split.as_str()),
            split.len().to_string(),
        ));
        for (gid, count) in split.group_counts().iter().enumerate() {
            meta.push((
                format!("group_count.{}.{}", split.split.as_str(), gid),
                count.to_string(),
            ));
        }
    }
    write_meta(&dir.join("meta.txt"), &meta)
}

/// Reads one split back from a dataset directory written by [`save_splits`].
pub fn load_split<S: Scalar>(dir: &Path, split: Split) -> Result<GroupedDataset<S>> {
    let meta_path = dir.join("meta.txt");
    if !meta_path.exists() {
        return Err(Error::MissingArtifact {
            stage: "dataset load",
            missing: meta_path.display().to_string(),
            run_first: "gen-data",
        });
    }
    let meta = read_meta(&meta_path)?;
    let num_classes: usize = meta_get(&meta, "num_classes")
        .ok_or_else(|| Error::Format {
            format: "metadata",
            path: meta_path.display().to_string(),
            reason: "missing num_classes".into(),
        })?
        .parse()
        .map_err(|_| Error::Format {
            format: "metadata",
            path: meta_path.display().to_string(),
            reason: "num_classes is not an integer".into(),
        })?;
    let shortcut_list = meta_get(&meta, "shortcuts").unwrap_or("");
    let mut kinds = Vec::new();
    for name in shortcut_list.split(',').filter(|s| !s.is_empty()) {
        kinds.push(ShortcutKind::parse(name)?);
    }

    let (dims, bytes) = read_idx_u8(&images_path(dir, split))?;
    let data: Vec<S> = bytes.iter().map(|&b| S::of_f64(dequantize(b))).collect();
    let images = Tensor::from_vec(&dims, data)?;
    let (label_dims, label_bytes) = read_idx_u8(&labels_path(dir, split))?;
    if label_dims.len() != 1 || label_dims[0] != images.batch_size() {
        return Err(Error::InvalidShape(format!(
            "labels shaped {:?} for {} images",
            label_dims,
            images.batch_size()
        )));
    }
    let class_labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let mut attrs = Vec::new();
    for kind in kinds {
        let (adims, abytes) = read_idx_u8(&attr_path(dir, split, kind))?;
        if adims.len() != 1 || adims[0] != class_labels.len() {
            return Err(Error::InvalidShape(format!(
                "attribute {} shaped {:?} for {} samples",
                kind.as_str(),
                adims,
                class_labels.len()
            )));
        }
        attrs.push(AttrColumn {
            kind,
            cardinality: 2,
            values: abytes.iter().map(|&b| b as usize).collect(),
        });
    }
    let data = GroupedDataset {
        split,
        images,
        class_labels,
        num_classes,
        attrs,
    };
    data.validate()?;
    Ok(data)
}
