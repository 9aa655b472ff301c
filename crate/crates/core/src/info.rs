//! Entropy helpers. Everything is computed in nats and converted to base `q`
//! at the public boundary; `0 · log 0 = 0`.

/// `-Σ p ln p` over the entries of `p`.
pub fn entropy_nats<'a, I: IntoIterator<Item = &'a f64>>(p: I) -> f64 {
    p.into_iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum()
}

/// Entropy in base `q` units.
pub fn entropy_base<'a, I: IntoIterator<Item = &'a f64>>(p: I, q: usize) -> f64 {
    entropy_nats(p) / (q as f64).ln()
}

/// `Σ p ln(p/r)` with the convention `0 · ln(0/r) = 0`.
pub fn kl_nats(p: &[f64], r: &[f64]) -> f64 {
    p.iter()
        .zip(r)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Neumaier-compensated sum.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_entropy() {
        let h = entropy_base(&[0.5, 0.5], 2);
        assert!((h - 1.0).abs() < 1e-15);
        assert_eq!(entropy_nats(&[1.0, 0.0]), 0.0);
        let h3 = entropy_base(&[1.0 / 3.0; 3], 3);
        assert!((h3 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum() {
        let v = vec![1e16, 1.0, -1e16];
        assert_eq!(kahan_sum(v), 1.0);
    }
}
