//! Grouping of flattened heatmap vectors: dense RBF affinity graph,
//! symmetric normalized Laplacian, Jacobi eigendecomposition with eigengap
//! model selection, pivoted-QR assignment, and a plain k-means alternative.

mod assign;
mod eigen;
mod kmeans;

pub use assign::cluster_qr;
pub use eigen::{eigengap_k, smallest_eigs, EigenPairs};
pub use kmeans::kmeans;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// How a [`ClusterAssignment`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMethod {
    Spectral,
    Kmeans,
}

impl std::fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClusterMethod::Spectral => write!(f, "spectral"),
            ClusterMethod::Kmeans => write!(f, "kmeans"),
        }
    }
}

/// Cluster index per sample. Every index in `[0, k)` is occupied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: ClusterMethod,
}

/// Dense affinity graph over a set of equal-length vectors. Weights are
/// symmetric, nonnegative, and zero on the diagonal.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub n: usize,
    /// Shaped `(n, n)`.
    pub weights: Tensor<f64>,
    /// RBF bandwidth the graph was built with; `None` for externally
    /// supplied weights.
    pub kernel_sigma: Option<f64>,
}

impl AffinityMatrix {
    /// Wraps an externally built weight matrix, checking symmetry (within
    /// 1e-12), nonnegativity, and a zero diagonal.
    pub fn from_weights(weights: Tensor<f64>) -> Result<Self> {
        let shape = weights.shape();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(Error::InvalidShape(format!(
                "affinity weights must be square, got {shape:?}"
            )));
        }
        let n = shape[0];
        for i in 0..n {
            if weights.at2(i, i) != 0.0 {
                return Err(Error::InvalidShape(format!(
                    "affinity diagonal entry {i} is {}, expected 0",
                    weights.at2(i, i)
                )));
            }
            for j in (i + 1)..n {
                let a = weights.at2(i, j);
                let b = weights.at2(j, i);
                if a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidShape(format!(
                        "affinity entry ({i}, {j}) is negative"
                    )));
                }
                if (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidShape(format!(
                        "affinity entries ({i}, {j}) and ({j}, {i}) differ by {}",
                        (a - b).abs()
                    )));
                }
            }
        }
        Ok(AffinityMatrix {
            n,
            weights,
            kernel_sigma: None,
        })
    }
}

/// Builds the RBF affinity graph `W_ij = exp(-d_ij^2 / (2 sigma^2))` with the
/// bandwidth set to the median pairwise distance.
pub fn affinity(vectors: &[Vec<f64>]) -> Result<AffinityMatrix> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Empty("affinity needs at least two vectors"));
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::InvalidShape(format!(
                "vector {i} has length {}, expected {dim}",
                v.len()
            )));
        }
    }

    let mut dist2 = Tensor::<f64>::zeros(&[n, n]);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist2.set2(i, j, d2);
            dist2.set2(j, i, d2);
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let sigma = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if sigma <= 0.0 {
        return Err(Error::DegenerateAffinity);
    }

    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut weights = Tensor::<f64>::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                weights.set2(i, j, (-dist2.at2(i, j) * inv).exp());
            }
        }
    }
    Ok(AffinityMatrix {
        n,
        weights,
        kernel_sigma: Some(sigma),
    })
}

/// Symmetric normalized Laplacian `L = I - D^{-1/2} W D^{-1/2}`. A row with
/// zero degree becomes an identity row.
pub fn sym_laplacian(graph: &AffinityMatrix) -> Tensor<f64> {
    let n = graph.n;
    let mut scale = vec![0.0; n];
    for i in 0..n {
        let degree: f64 = graph.weights.sample(i).iter().sum();
        if degree > 0.0 {
            scale[i] = 1.0 / degree.sqrt();
        }
    }
    let mut lap = Tensor::<f64>::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let off = scale[i] * graph.weights.at2(i, j) * scale[j];
            let v = if i == j { 1.0 - off } else { -off };
            lap.set2(i, j, v);
        }
    }
    lap
}

/// Full pipeline on raw vectors: affinity, Laplacian, spectrum, eigengap
/// cluster count, pivoted-QR assignment.
pub fn spectral_cluster(vectors: &[Vec<f64>]) -> Result<ClusterAssignment> {
    let graph = affinity(vectors)?;
    let lap = sym_laplacian(&graph);
    let eigs = smallest_eigs(&lap, 10)?;
    let k = eigengap_k(&eigs.values);
    cluster_qr(&eigs.leading(k), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points() -> Vec<Vec<f64>> {
        vec![vec![0.0], vec![1.0], vec![2.0]]
    }

    #[test]
    fn median_bandwidth_on_a_line() {
        let graph = affinity(&line_points()).unwrap();
        assert_eq!(graph.kernel_sigma, Some(1.0));
        let w01 = graph.weights.at2(0, 1);
        let w02 = graph.weights.at2(0, 2);
        assert!((w01 - (-0.5f64).exp()).abs() < 1e-15, "got {w01}");
        assert!((w02 - (-2.0f64).exp()).abs() < 1e-15, "got {w02}");
    }

    #[test]
    fn identical_vectors_get_weight_one() {
        let points = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![3.0, 4.0]];
        let graph = affinity(&points).unwrap();
        assert_eq!(graph.weights.at2(0, 1), 1.0);
        assert_eq!(graph.weights.at2(0, 0), 0.0);
    }

    #[test]
    fn all_identical_vectors_are_degenerate() {
        let points = vec![vec![1.0, 2.0]; 4];
        let err = affinity(&points).unwrap_err();
        assert_eq!(err.category(), "degenerate-affinity");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let points = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(affinity(&points).is_err());
    }

    #[test]
    fn fewer_than_two_vectors_is_empty_input() {
        let err = affinity(&[vec![1.0]]).unwrap_err();
        assert_eq!(err.category(), "empty-input");
    }

    #[test]
    fn affinity_is_symmetric_with_zero_diagonal() {
        let points: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        let graph = affinity(&points).unwrap();
        for i in 0..7 {
            assert_eq!(graph.weights.at2(i, i), 0.0);
            for j in 0..7 {
                let a = graph.weights.at2(i, j);
                assert!((a - graph.weights.at2(j, i)).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn complete_graph_laplacian_entries() {
        let mut w = Tensor::<f64>::filled(&[4, 4], 0.5);
        for i in 0..4 {
            w.set2(i, i, 0.0);
        }
        let graph = AffinityMatrix::from_weights(w).unwrap();
        let lap = sym_laplacian(&graph);
        for i in 0..4 {
            assert!((lap.at2(i, i) - 1.0).abs() < 1e-15);
            for j in 0..4 {
                if i != j {
                    assert!((lap.at2(i, j) - (-1.0 / 3.0)).abs() < 1e-15);
                }
                assert!((lap.at2(i, j) - lap.at2(j, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_degree_row_becomes_identity_row() {
        let mut w = Tensor::<f64>::zeros(&[3, 3]);
        w.set2(0, 1, 1.0);
        w.set2(1, 0, 1.0);
        let graph = AffinityMatrix::from_weights(w).unwrap();
        let lap = sym_laplacian(&graph);
        assert_eq!(lap.at2(2, 2), 1.0);
        assert_eq!(lap.at2(2, 0), 0.0);
        assert_eq!(lap.at2(2, 1), 0.0);
        assert_eq!(lap.at2(0, 2), 0.0);
    }

    #[test]
    fn external_weights_are_validated() {
        let mut w = Tensor::<f64>::zeros(&[2, 2]);
        w.set2(0, 1, 0.5);
        w.set2(1, 0, 0.6);
        assert!(AffinityMatrix::from_weights(w).is_err());

        let mut diag = Tensor::<f64>::zeros(&[2, 2]);
        diag.set2(0, 0, 1.0);
        assert!(AffinityMatrix::from_weights(diag).is_err());

        let mut neg = Tensor::<f64>::zeros(&[2, 2]);
        neg.set2(0, 1, -0.1);
        neg.set2(1, 0, -0.1);
        assert!(AffinityMatrix::from_weights(neg).is_err());
    }
}
