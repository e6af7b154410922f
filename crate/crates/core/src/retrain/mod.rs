//! Group-robust retraining on top of (pseudo-)group labels: balanced
//! last-layer refits, and error-set upweighting.

mod dfr;
mod jtt;

pub use dfr::{
    average_last_layers, dfr_retrain, fit_l1_logreg, fit_l1_logreg_traced, DfrConfig, DfrReport,
    LastLayer, SweepEntry,
};
pub use jtt::{jtt_retrain, jtt_single, JttConfig, JttGrid, JttReport, JttRunStats};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pseudo::PseudoGroupLabels;

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Rows of `groups` forming a group-balanced subsample: every nonempty group
/// contributes exactly the size of the smallest nonempty group, drawn without
/// replacement, and the combined list is shuffled. Both draws come from one
/// generator seeded with `seed`.
pub fn subsample_balanced(groups: &PseudoGroupLabels, seed: u64) -> Vec<usize> {
    let counts = groups.group_counts();
    let Some(min_size) = counts.iter().copied().filter(|&c| c > 0).min() else {
        return Vec::new();
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups.num_groups];
    for (row, &g) in groups.group_ids.iter().enumerate() {
        members[g].push(row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(min_size * counts.iter().filter(|&&c| c > 0).count());
    for rows in &mut members {
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(&mut rng);
        picked.extend_from_slice(&rows[..min_size]);
    }
    picked.shuffle(&mut rng);
    picked
}

#[cfg(test)]
pub(crate) fn labels_from_group_ids(
    group_ids: Vec<usize>,
    num_groups: usize,
) -> PseudoGroupLabels {
    let n = group_ids.len();
    let counts = {
        let mut c = vec![0usize; num_groups];
        for &g in &group_ids {
            c[g] += 1;
        }
        c
    };
    PseudoGroupLabels {
        sample_indices: (0..n).collect(),
        class_labels: vec![0; n],
        attr_labels: group_ids.clone(),
        group_ids,
        num_classes: 1,
        num_attrs: num_groups,
        num_groups,
        empty_groups: counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(g, _)| g)
            .collect(),
        source: crate::pseudo::PseudoSource::Gexmap,
    }
}
