//! SGD with momentum, decoupled-style weight decay mask, cosine decay.

/// Cosine-decayed learning rate at `step` of `total` steps.
pub(crate) fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step as f64 / total as f64).min(1.0);
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}

/// One SGD step on a parameter slot: v = m*v + g + wd*w; w -= lr*v.
pub(crate) fn sgd_slot(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(param.len(), grad.len());
    debug_assert_eq!(param.len(), velocity.len());
    for ((w, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *w;
        *w -= lr * *v;
    }
}

/// Mean cross-entropy of row-softmaxed logits against integer labels,
/// plus dL/dlogits (already divided by the batch size).
pub(crate) fn softmax_cross_entropy(
    logits: &crate::linalg::Matrix,
    labels: &[usize],
) -> (f64, crate::linalg::Matrix) {
    let n = logits.rows();
    debug_assert_eq!(n, labels.len());
    let mut grad = crate::linalg::Matrix::zeros(n, logits.cols());
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &x in row {
            denom += (x - mx).exp();
        }
        let log_denom = denom.ln() + mx;
        loss += log_denom - row[labels[i]];
        let grow = grad.row_mut(i);
        for (j, &x) in row.iter().enumerate() {
            let p = (x - log_denom).exp();
            grow[j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0.1, 0, 100) - 0.1).abs() < 1e-15);
        assert!(cosine_lr(0.1, 100, 100) < 1e-15);
        assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut w = vec![1.0, -1.0];
        let mut v = vec![0.0, 0.0];
        sgd_slot(&mut w, &[0.5, -0.5], &mut v, 0.1, 0.9, 0.0);
        assert!(w[0] < 1.0 && w[1] > -1.0);
    }

    #[test]
    fn cross_entropy_matches_direct_form() {
        // two classes, logits (0, 0): loss = ln 2, grads (p - y)/n
        let logits = crate::linalg::Matrix::zeros(1, 2);
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((grad.get(0, 1) + 0.5).abs() < 1e-12);
    }
}
