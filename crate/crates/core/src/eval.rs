//! Group accuracy reports, shortcut-gap metrics, and partition agreement.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, Split};
use crate::error::{Error, Result};
use crate::nn::{Network, EVAL_CHUNK};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group_id: usize,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    /// Nonempty groups only, ascending by group id.
    pub per_group: Vec<GroupAccuracy>,
    pub worst_group_accuracy: f64,
    /// Fraction of all samples classified correctly.
    pub mean_accuracy: f64,
    /// Mean of per-group accuracies, every nonempty group weighted equally.
    pub adjusted_mean: f64,
}

/// Accuracy report from already-computed predictions against an arbitrary
/// grouping of the same samples.
pub fn report_from_predictions(
    preds: &[usize],
    labels: &[usize],
    group_ids: &[usize],
    num_groups: usize,
    split: Split,
) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Empty("report_from_predictions"));
    }
    if preds.len() != labels.len() || preds.len() != group_ids.len() {
        return Err(Error::InvalidShape(format!(
            "predictions ({}), labels ({}), and group ids ({}) must align",
            preds.len(),
            labels.len(),
            group_ids.len()
        )));
    }
    let mut count = vec![0usize; num_groups];
    let mut correct = vec![0usize; num_groups];
    for i in 0..preds.len() {
        let gid = group_ids[i];
        if gid >= num_groups {
            return Err(Error::InvalidShape(format!(
                "group id {gid} out of range for {num_groups} groups"
            )));
        }
        count[gid] += 1;
        correct[gid] += usize::from(preds[i] == labels[i]);
    }
    let per_group: Vec<GroupAccuracy> = (0..num_groups)
        .filter(|&g| count[g] > 0)
        .map(|g| GroupAccuracy {
            group_id: g,
            count: count[g],
            correct: correct[g],
            accuracy: correct[g] as f64 / count[g] as f64,
        })
        .collect();
    let worst = per_group
        .iter()
        .map(|g| g.accuracy)
        .fold(f64::INFINITY, f64::min);
    let total_correct: usize = correct.iter().sum();
    let mean = total_correct as f64 / preds.len() as f64;
    let adjusted =
        per_group.iter().map(|g| g.accuracy).sum::<f64>() / per_group.len() as f64;
    Ok(EvalReport {
        split,
        per_group,
        worst_group_accuracy: worst,
        mean_accuracy: mean,
        adjusted_mean: adjusted,
    })
}

/// Evaluate a network against the dataset's own group annotation.
pub fn evaluate<S: Scalar>(net: &Network<S>, data: &GroupedDataset<S>) -> Result<EvalReport> {
    let preds = net.predict(&data.images, EVAL_CHUNK)?;
    report_from_predictions(
        &preds,
        &data.class_labels,
        &data.group_ids(),
        data.num_groups(),
        data.split,
    )
}

/// Evaluate with an externally supplied grouping of the same samples, such as
/// pseudo-group labels.
pub fn evaluate_with_groups<S: Scalar>(
    net: &Network<S>,
    data: &GroupedDataset<S>,
    group_ids: &[usize],
    num_groups: usize,
) -> Result<EvalReport> {
    let preds = net.predict(&data.images, EVAL_CHUNK)?;
    report_from_predictions(&preds, &data.class_labels, group_ids, num_groups, data.split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub condition: String,
    pub count: usize,
    /// None when no sample falls under the condition.
    pub accuracy: Option<f64>,
    /// Condition accuracy minus mean accuracy; negative means a drop.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub split: Split,
    pub mean_accuracy: f64,
    pub conditions: Vec<GapEntry>,
}

fn gap_entries(
    correct: &[bool],
    uncommon_a: &[bool],
    uncommon_b: &[bool],
    names: [String; 3],
) -> (f64, Vec<GapEntry>) {
    let n = correct.len();
    let mean = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let masks: [Vec<bool>; 3] = [
        (0..n).map(|i| uncommon_a[i] && !uncommon_b[i]).collect(),
        (0..n).map(|i| !uncommon_a[i] && uncommon_b[i]).collect(),
        (0..n).map(|i| uncommon_a[i] && uncommon_b[i]).collect(),
    ];
    let conditions = names
        .into_iter()
        .zip(masks)
        .map(|(condition, mask)| {
            let count = mask.iter().filter(|&&m| m).count();
            let accuracy = (count > 0).then(|| {
                let hits = (0..n).filter(|&i| mask[i] && correct[i]).count();
                hits as f64 / count as f64
            });
            GapEntry {
                condition,
                count,
                accuracy,
                gap: accuracy.map(|a| a - mean),
            }
        })
        .collect();
    (mean, conditions)
}

/// Accuracy drops on the cells where one or both shortcut attributes disagree
/// with the class, relative to the whole-split mean. Requires a dataset with
/// exactly two attribute columns whose cardinality matches the class count.
pub fn gap_metrics<S: Scalar>(net: &Network<S>, data: &GroupedDataset<S>) -> Result<GapReport> {
    if data.is_empty() {
        return Err(Error::Empty("gap_metrics"));
    }
    if data.attrs.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "gap metrics need two attribute columns, found {}",
            data.attrs.len()
        )));
    }
    for col in &data.attrs {
        if col.cardinality != data.num_classes {
            return Err(Error::InvalidConfig(format!(
                "attribute {} has cardinality {}, cannot compare with {} classes",
                col.kind.as_str(),
                col.cardinality,
                data.num_classes
            )));
        }
    }
    let preds = net.predict(&data.images, EVAL_CHUNK)?;
    let correct: Vec<bool> = preds
        .iter()
        .zip(&data.class_labels)
        .map(|(p, l)| p == l)
        .collect();
    let uncommon = |col: usize| -> Vec<bool> {
        data.attrs[col]
            .values
            .iter()
            .zip(&data.class_labels)
            .map(|(v, l)| v != l)
            .collect()
    };
    let names = [
        format!("{}-only-uncommon", data.attrs[0].kind.as_str()),
        format!("{}-only-uncommon", data.attrs[1].kind.as_str()),
        "both-uncommon".to_string(),
    ];
    let (mean, conditions) = gap_entries(&correct, &uncommon(0), &uncommon(1), names);
    Ok(GapReport {
        split: data.split,
        mean_accuracy: mean,
        conditions,
    })
}

/// Mean-accuracy loss when the spurious signal is stripped from the inputs.
pub fn fgonly_drop(full: &EvalReport, stripped: &EvalReport) -> f64 {
    full.mean_accuracy - stripped.mean_accuracy
}

fn choose2(c: usize) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same samples. Label values
/// are arbitrary; only the induced partitions matter. Trivially identical
/// partitions (both one cluster, or both all singletons) score 1.0.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidShape(format!(
            "labelings must align: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Empty("adjusted_rand_index"));
    }
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len());
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// One `method,split,wga_pct,mean_pct,adjusted_mean_pct` line per report.
pub fn summary_csv(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from("method,split,wga_pct,mean_pct,adjusted_mean_pct\n");
    for (name, report) in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            name,
            report.split.as_str(),
            pct(report.worst_group_accuracy),
            pct(report.mean_accuracy),
            pct(report.adjusted_mean)
        )
        .unwrap();
    }
    out
}

fn markdown_table(header: &[String], body: &[Vec<String>]) -> String {
    let ncols = header.len();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        let line = (0..ncols)
            .map(|c| format!("{:<width$}", cells[c], width = widths[c]))
            .collect::<Vec<_>>()
            .join(" | ");
        writeln!(out, "| {} |", line).unwrap();
    };
    emit(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    emit(&mut out, &rule);
    for row in body {
        emit(&mut out, row);
    }
    out
}

/// Aligned markdown table with one row per method.
pub fn summary_markdown(rows: &[(&str, &EvalReport)]) -> String {
    let header: Vec<String> = ["Method", "WGA%", "Mean%", "Adjusted%"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r)| {
            vec![
                name.to_string(),
                pct(r.worst_group_accuracy),
                pct(r.mean_accuracy),
                pct(r.adjusted_mean),
            ]
        })
        .collect();
    markdown_table(&header, &body)
}

impl GapReport {
    fn rows(&self) -> Vec<Vec<String>> {
        let mut body = vec![vec![
            "mean".to_string(),
            self.conditions.iter().map(|c| c.count).sum::<usize>().to_string(),
            pct(self.mean_accuracy),
            String::new(),
        ]];
        for entry in &self.conditions {
            body.push(vec![
                entry.condition.clone(),
                entry.count.to_string(),
                entry.accuracy.map_or("NA".to_string(), pct),
                entry
                    .gap
                    .map_or("NA".to_string(), |g| format!("{:+.1}", 100.0 * g)),
            ]);
        }
        body
    }

    /// `condition,count,accuracy_pct,gap_pts` lines; the first row is the
    /// whole-split mean, and its count column holds only the condition totals.
    pub fn csv(&self) -> String {
        let mut out = String::from("condition,count,accuracy_pct,gap_pts\n");
        for row in self.rows() {
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }

    pub fn markdown(&self) -> String {
        let header: Vec<String> = ["Condition", "Count", "Acc%", "Gap(pts)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        markdown_table(&header, &self.rows())
    }
}
