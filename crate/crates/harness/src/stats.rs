//! Sample statistics and the one-sided comparisons used for trend checks.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for a single value.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return if x.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Welch's t statistic and degrees of freedom for mean(a) − mean(b).
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = std_dev(a).powi(2) / na;
    let vb = std_dev(b).powi(2) / nb;
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    (t, df)
}

/// One-sided test that mean(a) > mean(b) at the given confidence level.
pub fn significantly_greater(a: &[f64], b: &[f64], confidence: f64) -> bool {
    if a.len() < 2 || b.len() < 2 {
        return false;
    }
    let (t, df) = welch(a, b);
    if t.is_nan() {
        return false;
    }
    if t.is_infinite() {
        return t > 0.0;
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => t > dist.inverse_cdf(confidence),
        Err(_) => false,
    }
}
