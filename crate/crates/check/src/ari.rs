use std::collections::HashMap;

fn choose2(c: usize) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings, computed straight from the
/// contingency table. Both inputs must have the same length; labels may be
/// arbitrary usize values. Identical-partition degenerate cases (both single
/// cluster, or both all-singletons) score 1.0.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let n = a.len();
    assert!(n >= 2, "need at least two samples");

    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_insert(0) += 1;
        *rows.entry(a[i]).or_insert(0) += 1;
        *cols.entry(b[i]).or_insert(0) += 1;
    }

    let sum_cells: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);

    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_cells - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::adjusted_rand;

    #[test]
    fn identical_partitions_score_one() {
        assert_eq!(adjusted_rand(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
    }

    #[test]
    fn relabeling_does_not_matter() {
        assert_eq!(adjusted_rand(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
    }

    #[test]
    fn split_cluster_scores_four_sevenths() {
        let ari = adjusted_rand(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((ari - 4.0 / 7.0).abs() < 1e-12, "got {ari}");
    }

    #[test]
    fn degenerate_single_cluster_scores_one() {
        assert_eq!(adjusted_rand(&[0, 0, 0], &[5, 5, 5]), 1.0);
    }

    #[test]
    fn crossed_partition_goes_negative() {
        let ari = adjusted_rand(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((ari - (-0.5)).abs() < 1e-12, "got {ari}");
    }
}
