//! Sample moments and central-limit acceptance bands.

/// Number of standard errors in the default acceptance band.
pub const BAND: f64 = 4.0;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Sample Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Outcome of comparing a sample mean against a prediction.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BandCheck {
    pub name: String,
    pub estimate: f64,
    pub expected: f64,
    pub std_error: f64,
    pub bands: f64,
    pub pass: bool,
}

impl BandCheck {
    /// Checks `|mean(x) − expected| ≤ bands · se(x)`.
    pub fn of_samples(name: impl Into<String>, x: &[f64], expected: f64, bands: f64) -> Self {
        let estimate = mean(x);
        let se = std_error(x);
        Self::new(name, estimate, expected, se, bands)
    }

    pub fn new(name: impl Into<String>, estimate: f64, expected: f64, std_error: f64, bands: f64) -> Self {
        let diff = (estimate - expected).abs();
        // A zero standard error only accepts an exact match (up to rounding).
        let pass = diff <= bands * std_error || diff <= 1e-12 * expected.abs().max(1.0);
        Self { name: name.into(), estimate, expected, std_error, bands, pass }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert!(skewness(&x).abs() < 1e-15);
        assert!((excess_kurtosis(&x) - (-1.36)).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
        assert!((correlation(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn band_check() {
        assert!(BandCheck::new("a", 1.0, 1.1, 0.03, 4.0).pass);
        assert!(!BandCheck::new("b", 1.0, 1.2, 0.03, 4.0).pass);
        assert!(BandCheck::new("c", 1.0, 1.0, 0.0, 4.0).pass);
    }
}
