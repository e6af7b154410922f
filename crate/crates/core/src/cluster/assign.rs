use super::{ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Assigns each embedding row to one of `k` clusters. Rows are normalized to
/// unit length (a zero row is kept as is), QR with column pivoting on the
/// transposed embedding picks `k` representative rows, and every sample goes
/// to the representative with the largest absolute inner product. Clusters
/// that end up unoccupied are compacted away, so `k` in the result may be
/// smaller than requested.
pub fn cluster_qr(embedding: &Tensor<f64>, k: usize) -> Result<ClusterAssignment> {
    let shape = embedding.shape();
    if shape.len() != 2 {
        return Err(Error::InvalidShape(format!(
            "embedding must be two-dimensional, got {shape:?}"
        )));
    }
    let (n, dim) = (shape[0], shape[1]);
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "cluster-QR needs k >= 2, got {k}"
        )));
    }
    if dim != k {
        return Err(Error::InvalidShape(format!(
            "embedding has {dim} columns, expected k = {k}"
        )));
    }
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} samples into {k} clusters"
        )));
    }

    let mut rows = vec![vec![0.0f64; dim]; n];
    for i in 0..n {
        let raw = embedding.sample(i);
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (dst, &src) in rows[i].iter_mut().zip(raw) {
                *dst = src / norm;
            }
        } else {
            rows[i].copy_from_slice(raw);
        }
    }

    let pivots = pivoted_rows(&rows, k);

    let mut labels = Vec::with_capacity(n);
    for row in &rows {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (j, &p) in pivots.iter().enumerate() {
            let score: f64 = row.iter().zip(&rows[p]).map(|(a, b)| a * b).sum::<f64>().abs();
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        labels.push(best);
    }

    let mut seen = vec![false; k];
    for &l in &labels {
        seen[l] = true;
    }
    let mut remap = vec![0usize; k];
    let mut next = 0usize;
    for (j, &occupied) in seen.iter().enumerate() {
        if occupied {
            remap[j] = next;
            next += 1;
        }
    }
    for l in &mut labels {
        *l = remap[*l];
    }

    Ok(ClusterAssignment {
        labels,
        k: next,
        method: ClusterMethod::Spectral,
    })
}

/// Column-pivoted Gram-Schmidt on the transposed embedding: repeatedly picks
/// the row with the largest residual norm, then deflates every remaining row
/// against it.
fn pivoted_rows(rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = rows.len();
    let mut residual: Vec<Vec<f64>> = rows.to_vec();
    let mut picked = vec![false; n];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = usize::MAX;
        let mut best_norm2 = f64::NEG_INFINITY;
        for i in 0..n {
            if picked[i] {
                continue;
            }
            let norm2: f64 = residual[i].iter().map(|v| v * v).sum();
            if norm2 > best_norm2 {
                best_norm2 = norm2;
                best = i;
            }
        }
        picked[best] = true;
        pivots.push(best);
        let norm = best_norm2.max(0.0).sqrt();
        if norm <= 0.0 {
            continue;
        }
        let basis: Vec<f64> = residual[best].iter().map(|v| v / norm).collect();
        for i in 0..n {
            if picked[i] {
                continue;
            }
            let proj: f64 = residual[i].iter().zip(&basis).map(|(a, b)| a * b).sum();
            for (r, b) in residual[i].iter_mut().zip(&basis) {
                *r -= proj * b;
            }
        }
    }
    pivots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator_embedding(blocks: &[usize]) -> Tensor<f64> {
        let n: usize = blocks.iter().sum();
        let k = blocks.len();
        let mut out = Tensor::<f64>::zeros(&[n, k]);
        let mut row = 0;
        for (b, &size) in blocks.iter().enumerate() {
            for _ in 0..size {
                out.set2(row, b, 1.0 / (size as f64).sqrt());
                row += 1;
            }
        }
        out
    }

    #[test]
    fn indicator_blocks_are_recovered_exactly() {
        let emb = indicator_embedding(&[4, 3, 5]);
        let got = cluster_qr(&emb, 3).unwrap();
        assert_eq!(got.k, 3);
        assert_eq!(got.method, ClusterMethod::Spectral);
        for i in 0..4 {
            assert_eq!(got.labels[i], got.labels[0]);
        }
        for i in 4..7 {
            assert_eq!(got.labels[i], got.labels[4]);
        }
        for i in 7..12 {
            assert_eq!(got.labels[i], got.labels[7]);
        }
        assert_ne!(got.labels[0], got.labels[4]);
        assert_ne!(got.labels[4], got.labels[7]);
        assert_ne!(got.labels[0], got.labels[7]);
    }

    #[test]
    fn permuting_rows_permutes_labels() {
        let emb = indicator_embedding(&[2, 2, 2]);
        let base = cluster_qr(&emb, 3).unwrap();
        let perm = [5usize, 3, 1, 4, 2, 0];
        let mut shuffled = Tensor::<f64>::zeros(&[6, 3]);
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..3 {
                shuffled.set2(dst, j, emb.at2(src, j));
            }
        }
        let moved = cluster_qr(&shuffled, 3).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for (dst2, &src2) in perm.iter().enumerate() {
                assert_eq!(
                    moved.labels[dst] == moved.labels[dst2],
                    base.labels[src] == base.labels[src2]
                );
            }
        }
    }

    #[test]
    fn zero_rows_still_get_a_label() {
        let mut emb = indicator_embedding(&[3, 3]);
        for j in 0..2 {
            emb.set2(0, j, 0.0);
        }
        let got = cluster_qr(&emb, 2).unwrap();
        assert_eq!(got.labels.len(), 6);
        assert!(got.labels.iter().all(|&l| l < got.k));
    }

    #[test]
    fn unoccupied_clusters_are_compacted() {
        let mut emb = Tensor::<f64>::zeros(&[4, 3]);
        for i in 0..4 {
            emb.set2(i, 0, 1.0);
        }
        emb.set2(3, 1, 1e-9);
        let got = cluster_qr(&emb, 3).unwrap();
        assert!(got.k <= 3);
        let max = *got.labels.iter().max().unwrap();
        assert_eq!(max + 1, got.k);
    }

    #[test]
    fn wrong_column_count_is_rejected() {
        let emb = indicator_embedding(&[2, 2]);
        assert!(cluster_qr(&emb, 3).is_err());
        assert!(cluster_qr(&emb, 1).is_err());
    }
}
