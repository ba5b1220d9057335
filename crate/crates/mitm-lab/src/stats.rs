//! Small statistics helpers: Wilson intervals, means with standard errors,
//! and order-stable pairwise summation.

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial rate at 95% confidence.
/// Returns `(lo, hi)`; degenerate `n = 0` yields `(0, 1)`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Half-width of the Wilson interval.
pub fn wilson_half_width(successes: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(successes, n);
    (hi - lo) / 2.0
}

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// far better conditioned than a running sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean. Returns `(mean, se)`;
/// `se` is 0 when fewer than two samples are present.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error from accumulated `sum`, `sum_sq`, `n`.
pub fn mean_se_from_moments(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let n_f = n as f64;
    let mean = sum / n_f;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - sum * sum / n_f) / (n_f - 1.0)).max(0.0);
    (mean, (var / n_f).sqrt())
}

/// Normal 95% confidence interval around a mean with standard error `se`.
pub fn normal_ci(mean: f64, se: f64) -> (f64, f64) {
    (mean - Z95 * se, mean + Z95 * se)
}

/// Two intervals overlap (closed).
pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_basic() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(hi - lo < 0.25);
        let (lo0, hi0) = wilson_interval(0, 100);
        assert!(lo0.abs() < 1e-12);
        assert!(hi0 > 0.0 && hi0 < 0.05);
    }

    #[test]
    fn pairwise_matches_naive_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn mean_se_agrees_with_moments() {
        let xs: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let (m1, s1) = mean_se(&xs);
        let sum = pairwise_sum(&xs);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m2, s2) = mean_se_from_moments(sum, pairwise_sum(&sq), xs.len());
        assert!((m1 - m2).abs() < 1e-12);
        assert!((s1 - s2).abs() < 1e-12);
    }
}
