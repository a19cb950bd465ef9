//! Small statistics helpers for curve aggregation and the acceptance
//! comparisons: means, trailing moving averages, and normal-approximation
//! confidence intervals across seeds.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Trailing moving average with the window truncated at the start, so the
/// output has the same length as the input.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

/// Two-sided 95% confidence half-width for a mean, by normal approximation.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::INFINITY;
    }
    1.96 * std_dev(values) / (values.len() as f64).sqrt()
}

/// 95% confidence interval for `mean(a) - mean(b)` over two independent
/// seed samples (Welch, normal approximation).
pub fn welch_ci95(a: &[f64], b: &[f64]) -> (f64, f64) {
    let diff = mean(a) - mean(b);
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    (diff - 1.96 * se, diff + 1.96 * se)
}

/// Whether the 95% CI of `mean(a) - mean(b)` lies strictly above zero.
pub fn significantly_above(a: &[f64], b: &[f64]) -> bool {
    welch_ci95(a, b).0 > 0.0
}

/// Chi-square upper critical value by the Wilson-Hilferty approximation.
pub fn chi_square_critical(df: usize, z: f64) -> f64 {
    let k = df as f64;
    let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
    k * t * t * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_truncates_the_leading_window() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ma = moving_average(&values, 5);
        assert_eq!(ma[0], 1.0);
        assert_eq!(ma[1], 1.5);
        assert_eq!(ma[4], 3.0);
        assert_eq!(ma[5], 4.0);
    }

    #[test]
    fn welch_interval_excludes_zero_for_separated_samples() {
        let a: Vec<f64> = (0..30).map(|i| 10.0 + 0.1 * (i % 5) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 5.0 + 0.1 * (i % 7) as f64).collect();
        assert!(significantly_above(&a, &b));
        assert!(!significantly_above(&b, &a));
    }

    #[test]
    fn chi_square_criticals_match_table_values() {
        // chi^2_{0.99} for 99 df is about 134.64; for 9 df about 21.67.
        assert!((chi_square_critical(99, 2.326) - 134.6).abs() < 1.0);
        assert!((chi_square_critical(9, 2.326) - 21.67).abs() < 0.3);
    }
}
