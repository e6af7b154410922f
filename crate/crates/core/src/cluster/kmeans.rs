use super::{ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MAX_ITERS: usize = 300;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from k-means++ seeding, run to an assignment fixpoint or
/// 300 rounds. An empty cluster is repaired by stealing the point farthest
/// from its center in the largest cluster, so every index in `[0, k)` is
/// occupied in the result.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = vectors.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k-means needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} samples into {k} clusters"
        )));
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

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(vectors[rng.gen_range(0..n)].clone());
    let mut nearest: Vec<f64> = vectors.iter().map(|v| dist2(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(vectors[idx].clone());
        for (i, v) in vectors.iter().enumerate() {
            let d = dist2(v, centers.last().unwrap());
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        let mut next = Vec::with_capacity(n);
        for v in vectors {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(v, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            next.push(best);
        }

        loop {
            let mut counts = vec![0usize; k];
            for &l in &next {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let largest = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap();
            let victim = next
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == largest)
                .max_by(|(i, _), (j, _)| {
                    dist2(&vectors[*i], &centers[largest])
                        .partial_cmp(&dist2(&vectors[*j], &centers[largest]))
                        .unwrap()
                        .then(j.cmp(i))
                })
                .map(|(i, _)| i)
                .unwrap();
            next[victim] = empty;
            centers[empty] = vectors[victim].clone();
        }

        let moved = next != labels;
        labels = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            for d in center.iter_mut() {
                *d = 0.0;
            }
            for &i in &members {
                for (d, &x) in center.iter_mut().zip(&vectors[i]) {
                    *d += x;
                }
            }
            let count = members.len() as f64;
            for d in center.iter_mut() {
                *d /= count;
            }
        }
        if !moved {
            break;
        }
    }

    Ok(ClusterAssignment {
        labels,
        k,
        method: ClusterMethod::Kmeans,
    })
}
