//! Shared numerically stable scalar helpers.

/// Logistic function, stable for large |t|. The tanh form keeps the
/// complement identity exact: sigmoid(t) + sigmoid(-t) == 1.0 in floating
/// point, so opposing votes under equal weights mix to exactly one half.
pub fn sigmoid(t: f64) -> f64 {
    0.5 * (1.0 + (0.5 * t).tanh())
}

/// ln(1 + e^t) without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// ln(sigmoid(t)), stable for large negative t.
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

/// ln(sum of e^x) over the slice, max-shifted. Empty input gives -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Softmax by max-shift. The result sums to 1 for nonempty input.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_stays_finite() {
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
        assert!(log_sigmoid(1000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn sigmoid_complement_is_exact(t in -40.0f64..40.0) {
            prop_assert_eq!(sigmoid(t) + sigmoid(-t), 1.0);
        }

        #[test]
        fn log_sigmoid_agrees_with_sigmoid(t in -40.0f64..40.0) {
            prop_assert!((log_sigmoid(t).exp() - sigmoid(t)).abs() < 1e-12);
        }

        #[test]
        fn softmax_sums_to_one(xs in proptest::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&xs);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn log_sum_exp_matches_direct(xs in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
            prop_assert!((log_sum_exp(&xs) - direct).abs() < 1e-9);
        }
    }
}
