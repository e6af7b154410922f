use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Symmetric affinity matrix with planted blocks: `intra` on within-block
/// pairs, `inter` across blocks, zero diagonal, plus optional uniform noise
/// of amplitude `noise` (entries clamp to stay non-negative). Returns the
/// flattened row-major matrix and the true block label per row.
pub fn planted_affinity(
    sizes: &[usize],
    intra: f64,
    inter: f64,
    noise: f64,
    seed: u64,
) -> (Vec<f64>, Vec<usize>) {
    let n: usize = sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (block, &size) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(block).take(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let base = if labels[i] == labels[j] { intra } else { inter };
            let jitter = if noise > 0.0 {
                rng.gen_range(-noise..noise)
            } else {
                0.0
            };
            let v = (base + jitter).max(0.0);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    (w, labels)
}

/// Isotropic Gaussian point clouds around the given centers, `per` points
/// each. Returns the points and cloud label per point.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    per: usize,
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(centers.len() * per);
    let mut labels = Vec::with_capacity(centers.len() * per);
    for (cluster, center) in centers.iter().enumerate() {
        for _ in 0..per {
            let point: Vec<f64> = center
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + sigma * z
                })
                .collect();
            points.push(point);
            labels.push(cluster);
        }
    }
    (points, labels)
}
