use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of already sorted data (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn median_iqr(values: &[usize]) -> (f64, f64) {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    (quantile_sorted(&v, 0.5), q3 - q1)
}

/// Mass of a half-normal with scale `sigma` on `[0, x]`.
pub(crate) fn half_normal_cdf(x: f64, sigma: f64) -> f64 {
    erf(x / (sigma * std::f64::consts::SQRT_2))
}

pub(crate) fn half_normal_pdf(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    (2.0 / (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * u * u).exp() / sigma
}

pub(crate) fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
