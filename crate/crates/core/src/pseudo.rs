//! Pseudo-group construction: cluster explanation heatmaps (or penultimate
//! features) and cross the cluster index with the class label to get group
//! ids for retraining.

use crate::cluster::{kmeans, spectral_cluster, ClusterAssignment};
use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::lrp::HeatmapSet;
use crate::nn::{Network, EVAL_CHUNK};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Which vectors were clustered to produce the pseudo-groups, or whether
/// the dataset's own annotation was copied through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoSource {
    Gexmap,
    Lexmap,
    George,
    #[serde(rename = "true-labels")]
    TrueLabels,
}

impl PseudoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PseudoSource::Gexmap => "gexmap",
            PseudoSource::Lexmap => "lexmap",
            PseudoSource::George => "george",
            PseudoSource::TrueLabels => "true-labels",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gexmap" => Ok(PseudoSource::Gexmap),
            "lexmap" => Ok(PseudoSource::Lexmap),
            "george" => Ok(PseudoSource::George),
            "true-labels" => Ok(PseudoSource::TrueLabels),
            other => Err(Error::InvalidConfig(format!(
                "unknown pseudo-label source {other:?}"
            ))),
        }
    }
}

/// Cluster assignment strategy for the pseudo-labeling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClusteringChoice {
    /// Affinity graph, eigengap cluster count, pivoted-QR assignment.
    Spectral,
    /// Plain k-means with a fixed cluster count.
    Kmeans { k: usize },
}

impl ClusteringChoice {
    fn run(&self, vectors: &[Vec<f64>], seed: u64) -> Result<ClusterAssignment> {
        match self {
            ClusteringChoice::Spectral => spectral_cluster(vectors),
            ClusteringChoice::Kmeans { k } => kmeans(vectors, *k, seed),
        }
    }
}

/// Inferred group structure over one split: a cluster index per sample
/// crossed with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoGroupLabels {
    /// Index into the split the labels were built from.
    pub sample_indices: Vec<usize>,
    pub class_labels: Vec<usize>,
    pub attr_labels: Vec<usize>,
    pub group_ids: Vec<usize>,
    pub num_classes: usize,
    pub num_attrs: usize,
    /// Size of the `(class, attr)` index space, including empty cells.
    pub num_groups: usize,
    /// Group ids in `[0, num_groups)` with no samples.
    pub empty_groups: Vec<usize>,
    pub source: PseudoSource,
}

impl PseudoGroupLabels {
    pub fn len(&self) -> usize {
        self.group_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_ids.is_empty()
    }

    /// Samples per group id over the full index space.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_groups];
        for &g in &self.group_ids {
            counts[g] += 1;
        }
        counts
    }

    /// Group id per split row. Requires the labels to cover rows
    /// `0..split_len` exactly once.
    pub fn group_ids_for_split(&self, split_len: usize) -> Result<Vec<usize>> {
        if self.len() != split_len {
            return Err(Error::InvalidShape(format!(
                "{} pseudo-label rows for a split of {split_len}",
                self.len()
            )));
        }
        let mut out = vec![usize::MAX; split_len];
        for (row, &idx) in self.sample_indices.iter().enumerate() {
            if idx >= split_len {
                return Err(Error::InvalidShape(format!(
                    "pseudo-label sample index {idx} outside a split of {split_len}"
                )));
            }
            if out[idx] != usize::MAX {
                return Err(Error::InvalidShape(format!(
                    "duplicate pseudo-label sample index {idx}"
                )));
            }
            out[idx] = self.group_ids[row];
        }
        Ok(out)
    }
}

fn cross(
    sample_indices: Vec<usize>,
    class_labels: Vec<usize>,
    attr_labels: Vec<usize>,
    num_classes: usize,
    num_attrs: usize,
    source: PseudoSource,
) -> PseudoGroupLabels {
    let group_ids: Vec<usize> = class_labels
        .iter()
        .zip(&attr_labels)
        .map(|(&c, &a)| c * num_attrs + a)
        .collect();
    let num_groups = num_classes * num_attrs;
    let mut counts = vec![0usize; num_groups];
    for &g in &group_ids {
        counts[g] += 1;
    }
    let empty_groups = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(g, _)| g)
        .collect();
    PseudoGroupLabels {
        sample_indices,
        class_labels,
        attr_labels,
        group_ids,
        num_classes,
        num_attrs,
        num_groups,
        empty_groups,
        source,
    }
}

/// Flattens each heatmap and scales it to unit L2 norm. An all-zero map is
/// left as zeros.
pub fn normalized_heatmap_vectors(heatmaps: &HeatmapSet<f64>) -> Vec<Vec<f64>> {
    (0..heatmaps.len())
        .map(|i| {
            let raw = heatmaps.vector(i);
            let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                raw.iter().map(|&v| v / norm).collect()
            } else {
                raw.to_vec()
            }
        })
        .collect()
}

fn split_classes(heatmaps: &HeatmapSet<f64>, class_labels: &[usize]) -> Result<Vec<usize>> {
    let mut own = Vec::with_capacity(heatmaps.len());
    for &idx in &heatmaps.sample_indices {
        let Some(&label) = class_labels.get(idx) else {
            return Err(Error::InvalidShape(format!(
                "heatmap sample index {idx} outside the {} class labels",
                class_labels.len()
            )));
        };
        own.push(label);
    }
    Ok(own)
}

/// Clusters every heatmap in one pass and crosses the shared cluster index
/// with the class label.
pub fn gexmap(
    heatmaps: &HeatmapSet<f64>,
    class_labels: &[usize],
    num_classes: usize,
    clustering: ClusteringChoice,
    seed: u64,
) -> Result<PseudoGroupLabels> {
    let own_classes = split_classes(heatmaps, class_labels)?;
    let vectors = normalized_heatmap_vectors(heatmaps);
    let assignment = clustering.run(&vectors, seed)?;
    Ok(cross(
        heatmaps.sample_indices.clone(),
        own_classes,
        assignment.labels,
        num_classes,
        assignment.k,
        PseudoSource::Gexmap,
    ))
}

/// Clusters heatmaps separately within each class. Cluster index spaces are
/// per-class, so group ids enumerate `(class, within-class cluster)` pairs
/// by class-major offsets instead of the uniform crossing formula.
pub fn lexmap(
    heatmaps: &HeatmapSet<f64>,
    class_labels: &[usize],
    num_classes: usize,
    clustering: ClusteringChoice,
    seed: u64,
) -> Result<PseudoGroupLabels> {
    let own_classes = split_classes(heatmaps, class_labels)?;
    let vectors = normalized_heatmap_vectors(heatmaps);
    let n = vectors.len();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in own_classes.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: c,
                num_classes,
            });
        }
        members[c].push(i);
    }
    for (class, rows) in members.iter().enumerate() {
        if rows.len() < 4 {
            return Err(Error::ClassTooSmall {
                class,
                size: rows.len(),
                min: 4,
            });
        }
    }

    let mut attr_labels = vec![0usize; n];
    let mut group_ids = vec![0usize; n];
    let mut offset = 0usize;
    let mut max_k = 0usize;
    for rows in &members {
        let class_vectors: Vec<Vec<f64>> = rows.iter().map(|&i| vectors[i].clone()).collect();
        let assignment = clustering.run(&class_vectors, seed)?;
        for (pos, &i) in rows.iter().enumerate() {
            attr_labels[i] = assignment.labels[pos];
            group_ids[i] = offset + assignment.labels[pos];
        }
        offset += assignment.k;
        max_k = max_k.max(assignment.k);
    }

    Ok(PseudoGroupLabels {
        sample_indices: heatmaps.sample_indices.clone(),
        class_labels: own_classes,
        attr_labels,
        group_ids,
        num_classes,
        num_attrs: max_k,
        num_groups: offset,
        empty_groups: Vec::new(),
        source: PseudoSource::Lexmap,
    })
}

/// Penultimate-layer activation vectors, each scaled by its largest absolute
/// entry. An all-zero vector is left as zeros.
pub fn george_features(
    net: &Network<f64>,
    data: &GroupedDataset<f64>,
) -> Result<Vec<Vec<f64>>> {
    let features = net.penultimate_features(&data.images, EVAL_CHUNK)?;
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let raw = features.sample(i);
        let peak = raw.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak > 0.0 {
            out.push(raw.iter().map(|&v| v / peak).collect());
        } else {
            out.push(raw.to_vec());
        }
    }
    Ok(out)
}

/// Feature-clustering baseline: same clustering core and crossing as
/// [`gexmap`], applied to max-normalized penultimate activations instead of
/// heatmaps.
pub fn george_groups(
    net: &Network<f64>,
    data: &GroupedDataset<f64>,
    clustering: ClusteringChoice,
    seed: u64,
) -> Result<PseudoGroupLabels> {
    let vectors = george_features(net, data)?;
    let assignment = clustering.run(&vectors, seed)?;
    Ok(cross(
        (0..data.len()).collect(),
        data.class_labels.clone(),
        assignment.labels,
        data.num_classes,
        assignment.k,
        PseudoSource::George,
    ))
}

/// The dataset's own group annotation in pseudo-label form, with every
/// attribute column folded row-major into one attribute index. Group ids
/// match [`GroupedDataset::group_id`] exactly.
pub fn true_label_groups<S: Scalar>(data: &GroupedDataset<S>) -> PseudoGroupLabels {
    let num_attrs = (data.num_groups() / data.num_classes).max(1);
    let attr_labels = (0..data.len())
        .map(|i| data.group_id(i) % num_attrs)
        .collect();
    cross(
        (0..data.len()).collect(),
        data.class_labels.clone(),
        attr_labels,
        data.num_classes,
        num_attrs,
        PseudoSource::TrueLabels,
    )
}

/// Writes one `sample_index,class,attr,group_id,source` row per sample.
pub fn write_pseudo_csv(path: &Path, labels: &PseudoGroupLabels) -> Result<()> {
    let mut out = String::from("sample_index,class,attr,group_id,source\n");
    for i in 0..labels.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            labels.sample_indices[i],
            labels.class_labels[i],
            labels.attr_labels[i],
            labels.group_ids[i],
            labels.source.as_str()
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn parse_field(path: &Path, line: usize, field: &str) -> Result<usize> {
    field.parse().map_err(|_| Error::Format {
        format: "pseudo-label CSV",
        path: path.display().to_string(),
        reason: format!("line {line}: {field:?} is not an integer"),
    })
}

/// Reads a file written by [`write_pseudo_csv`]. Group structure fields are
/// reconstructed from the rows.
pub fn read_pseudo_csv(path: &Path, num_classes: usize) -> Result<PseudoGroupLabels> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "sample_index,class,attr,group_id,source" {
        return Err(Error::Format {
            format: "pseudo-label CSV",
            path: path.display().to_string(),
            reason: format!("unexpected header {header:?}"),
        });
    }

    let mut sample_indices = Vec::new();
    let mut class_labels = Vec::new();
    let mut attr_labels = Vec::new();
    let mut group_ids = Vec::new();
    let mut source: Option<PseudoSource> = None;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format {
                format: "pseudo-label CSV",
                path: path.display().to_string(),
                reason: format!("line {}: expected 5 fields, got {}", lineno + 2, fields.len()),
            });
        }
        sample_indices.push(parse_field(path, lineno + 2, fields[0])?);
        class_labels.push(parse_field(path, lineno + 2, fields[1])?);
        attr_labels.push(parse_field(path, lineno + 2, fields[2])?);
        group_ids.push(parse_field(path, lineno + 2, fields[3])?);
        let row_source = PseudoSource::parse(fields[4])?;
        match source {
            None => source = Some(row_source),
            Some(s) if s == row_source => {}
            Some(s) => {
                return Err(Error::Format {
                    format: "pseudo-label CSV",
                    path: path.display().to_string(),
                    reason: format!(
                        "line {}: source {} conflicts with earlier {}",
                        lineno + 2,
                        row_source.as_str(),
                        s.as_str()
                    ),
                });
            }
        }
    }
    let Some(source) = source else {
        return Err(Error::Format {
            format: "pseudo-label CSV",
            path: path.display().to_string(),
            reason: "no data rows".to_string(),
        });
    };

    let num_attrs = attr_labels.iter().map(|&a| a + 1).max().unwrap_or(0);
    let num_groups = group_ids.iter().map(|&g| g + 1).max().unwrap_or(0);
    let num_groups = match source {
        PseudoSource::Lexmap => num_groups,
        _ => (num_classes * num_attrs).max(num_groups),
    };
    let mut counts = vec![0usize; num_groups];
    for &g in &group_ids {
        counts[g] += 1;
    }
    let empty_groups = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(g, _)| g)
        .collect();
    Ok(PseudoGroupLabels {
        sample_indices,
        class_labels,
        attr_labels,
        group_ids,
        num_classes,
        num_attrs,
        num_groups,
        empty_groups,
        source,
    })
}
