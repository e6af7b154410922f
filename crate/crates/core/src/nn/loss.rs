use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over a batch of logits, with the gradient with
/// respect to the logits. Uses max-subtraction, so extreme logits do not
/// overflow.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(S, Tensor<S>)> {
    let ones = vec![S::one(); labels.len()];
    cross_entropy_weighted(logits, labels, &ones)
}

/// Cross-entropy where sample `i` counts `weights[i]` times: the loss equals
/// the plain loss on a multiset holding each sample `weights[i]` times, and
/// the gradient matches.
pub fn cross_entropy_weighted<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    weights: &[S],
) -> Result<(S, Tensor<S>)> {
    let n = logits.batch_size();
    if n == 0 {
        return Err(Error::Empty("cross_entropy"));
    }
    if logits.shape().len() != 2 {
        return Err(Error::InvalidShape(format!(
            "cross_entropy expects (batch, classes) logits, got {:?}",
            logits.shape()
        )));
    }
    let c = logits.shape()[1];
    if labels.len() != n || weights.len() != n {
        return Err(Error::InvalidShape(format!(
            "{} logit rows vs {} labels and {} weights",
            n,
            labels.len(),
            weights.len()
        )));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = S::zero();
    let mut total_weight = S::zero();
    for (i, (row, &label)) in logits.data().chunks_exact(c).zip(labels).enumerate() {
        if label >= c {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: c,
            });
        }
        let w = weights[i];
        total_weight += w;
        let mut max = row[0];
        for &v in &row[1..] {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        let grad_row = &mut grad.data_mut()[i * c..(i + 1) * c];
        for (g, &v) in grad_row.iter_mut().zip(row) {
            let e = (v - max).exp();
            *g = e;
            sum += e;
        }
        total += w * (sum.ln() + max - row[label]);
        for g in grad_row.iter_mut() {
            *g = w * (*g / sum);
        }
        grad_row[label] -= w;
    }
    if total_weight <= S::zero() {
        return Err(Error::InvalidConfig(
            "sample weights must sum to a positive value".into(),
        ));
    }
    for g in grad.data_mut() {
        *g /= total_weight;
    }
    Ok((total / total_weight, grad))
}
