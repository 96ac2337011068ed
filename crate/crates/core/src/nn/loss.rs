use crate::error::{ensure, Result};

/// Two-class softmax cross-entropy with max-subtraction.
///
/// Returns the loss and its gradient with respect to the logits
/// (`softmax(logits) - onehot(label)`).
pub fn softmax_xent(logits: [f64; 2], label: u8) -> Result<(f64, [f64; 2])> {
    ensure!(
        logits.iter().all(|v| v.is_finite()),
        NonFinite,
        "non-finite logits {logits:?}"
    );
    ensure!(label <= 1, InvalidArgument, "label must be 0 or 1, got {label}");
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    let p = [e0 / z, e1 / z];
    let l = label as usize;
    let loss = z.ln() - (logits[l] - m);
    let mut grad = p;
    grad[l] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// Probability of the "match" class (channel 1).
pub fn match_probability(logits: [f64; 2]) -> f64 {
    let d = logits[0] - logits[1];
    // 1 / (1 + e^(l0 - l1)), safe in both tails.
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_logits_cost_ln2() {
        let (l, g) = softmax_xent([0.0, 0.0], 1).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, [0.5, -0.5]);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let (l, g) = softmax_xent([-50.0, 50.0], 1).unwrap();
        assert!(l.is_finite() && l < 1e-30);
        assert!((g[0] + g[1]).abs() < 1e-15);
        let (l, _) = softmax_xent([-1e4, 1e4], 0).unwrap();
        assert!((l - 2e4).abs() < 1e-6);
    }

    #[test]
    fn grad_sums_to_zero() {
        for &(a, b, y) in &[(0.3, -1.2, 0u8), (4.0, 2.0, 1), (-7.5, 0.1, 0)] {
            let (_, g) = softmax_xent([a, b], y).unwrap();
            assert!((g[0] + g[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(softmax_xent([f64::NAN, 0.0], 0).is_err());
        assert!(softmax_xent([0.0, f64::INFINITY], 1).is_err());
    }

    #[test]
    fn probability_is_shift_invariant() {
        let p = match_probability([0.2, 1.7]);
        let q = match_probability([100.2, 101.7]);
        assert!((p - q).abs() < 1e-12);
        assert!(match_probability([800.0, -800.0]) >= 0.0);
        assert!(match_probability([-800.0, 800.0]) <= 1.0);
    }
}
