use crate::error::{Error, Result};
use crate::tensor::Tensor;

const OFF_NORM_TARGET: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Ascending eigenvalues with matching orthonormal eigenvectors. Column `j`
/// of `vectors` (shaped `(n, m)`) belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Tensor<f64>,
}

impl EigenPairs {
    /// Copies the first `k` eigenvector columns into an `(n, k)` embedding,
    /// capping `k` at the stored count.
    pub fn leading(&self, k: usize) -> Tensor<f64> {
        let n = self.vectors.shape()[0];
        let m = self.vectors.shape()[1];
        let k = k.min(m);
        let mut out = Tensor::<f64>::zeros(&[n, k]);
        for i in 0..n {
            for j in 0..k {
                out.set2(i, j, self.vectors.at2(i, j));
            }
        }
        out
    }
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a[i * n + j];
            sum += 2.0 * v * v;
        }
    }
    sum.sqrt()
}

/// The `m` smallest eigenpairs of a symmetric matrix, by cyclic Jacobi
/// rotations run until the off-diagonal Frobenius norm drops below 1e-12.
pub fn smallest_eigs(matrix: &Tensor<f64>, m: usize) -> Result<EigenPairs> {
    let shape = matrix.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::InvalidShape(format!(
            "eigendecomposition needs a square matrix, got {shape:?}"
        )));
    }
    let n = shape[0];
    if n == 0 {
        return Err(Error::Empty("eigendecomposition"));
    }
    if !matrix.all_finite() {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix.at2(i, j) - matrix.at2(j, i)).abs() > 1e-9 {
                return Err(Error::InvalidShape(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut a = matrix.data().to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            let mean = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = mean;
            a[j * n + i] = mean;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let skip = 1e-14 / n as f64;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&a, n) < OFF_NORM_TARGET {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    let np = c * apj - s * aqj;
                    let nq = s * apj + c * aqj;
                    a[p * n + j] = np;
                    a[q * n + j] = nq;
                    a[j * n + p] = np;
                    a[j * n + q] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for j in 0..n {
                    let vjp = v[j * n + p];
                    let vjq = v[j * n + q];
                    v[j * n + p] = c * vjp - s * vjq;
                    v[j * n + q] = s * vjp + c * vjq;
                }
            }
        }
    }
    if !converged && off_norm(&a, n) >= OFF_NORM_TARGET {
        return Err(Error::NonConvergence {
            what: "Jacobi eigendecomposition",
            iters: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let take = m.min(n);
    let mut values = Vec::with_capacity(take);
    let mut vectors = Tensor::<f64>::zeros(&[n, take]);
    for (col, &idx) in order.iter().take(take).enumerate() {
        values.push(a[idx * n + idx]);
        for row in 0..n {
            vectors.set2(row, col, v[row * n + idx]);
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Cluster count from the largest gap among the first ten eigenvalues of the
/// ascending spectrum: the 1-based position of the first maximal gap,
/// clamped below at 2.
pub fn eigengap_k(eigvals: &[f64]) -> usize {
    let m = eigvals.len().min(10);
    let mut best_pos = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 1..m {
        let gap = eigvals[i] - eigvals[i - 1];
        if gap > best_gap {
            best_gap = gap;
            best_pos = i;
        }
    }
    best_pos.max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_smallest_two() {
        let m = Tensor::from_vec(&[3, 3], vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0])
            .unwrap();
        let eigs = smallest_eigs(&m, 2).unwrap();
        assert_eq!(eigs.values, vec![1.0, 2.0]);
        assert!((eigs.vectors.at2(1, 0).abs() - 1.0).abs() < 1e-12);
        assert!((eigs.vectors.at2(2, 1).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_solution() {
        let m = Tensor::from_vec(&[2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eigs = smallest_eigs(&m, 2).unwrap();
        assert!((eigs.values[0] - 1.0).abs() < 1e-12);
        assert!((eigs.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn residuals_and_orthonormality_on_a_dense_matrix() {
        let n = 8;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = ((i * 7 + j * 13) % 17) as f64 / 17.0;
                data[i * n + j] = v;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mean = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = mean;
                data[j * n + i] = mean;
            }
        }
        let m = Tensor::from_vec(&[n, n], data.clone()).unwrap();
        let eigs = smallest_eigs(&m, n).unwrap();
        for col in 0..n {
            let lambda = eigs.values[col];
            let mut residual = 0.0f64;
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += data[i * n + j] * eigs.vectors.at2(j, col);
                }
                let r = acc - lambda * eigs.vectors.at2(i, col);
                residual += r * r;
            }
            assert!(residual.sqrt() <= 1e-9, "column {col}: {}", residual.sqrt());
        }
        for c1 in 0..n {
            for c2 in 0..n {
                let dot: f64 = (0..n)
                    .map(|i| eigs.vectors.at2(i, c1) * eigs.vectors.at2(i, c2))
                    .sum();
                let want = if c1 == c2 { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-8, "columns {c1},{c2}: {dot}");
            }
        }
        for w in eigs.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = Tensor::from_vec(&[2, 2], vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(smallest_eigs(&m, 2).is_err());
    }

    #[test]
    fn gap_after_third_eigenvalue_gives_three() {
        assert_eq!(eigengap_k(&[0.0, 0.0, 0.0, 0.5, 0.6]), 3);
    }

    #[test]
    fn leading_gap_clamps_to_two() {
        assert_eq!(eigengap_k(&[0.0, 0.5, 0.55]), 2);
    }

    #[test]
    fn equal_gaps_break_ties_at_two() {
        assert_eq!(eigengap_k(&[0.0, 0.1, 0.2, 0.3]), 2);
    }

    #[test]
    fn gaps_beyond_the_tenth_eigenvalue_are_ignored() {
        let mut vals = vec![0.0; 10];
        vals.extend([9.0, 9.1]);
        for (i, v) in vals.iter_mut().enumerate().take(10).skip(1) {
            *v = 0.01 * i as f64;
        }
        vals[5] = vals[4] + 0.2;
        for i in 6..10 {
            vals[i] = vals[i - 1] + 0.01;
        }
        assert_eq!(eigengap_k(&vals), 5);
    }
}
