//! Summary statistics for batch results.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample standard deviation over √n.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Empirical CDF as `(x, F(x))` at each distinct sample value.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in sorted.iter().enumerate() {
        let f = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// One-tailed p-value for mean(a) > mean(b).
    pub p_value: f64,
}

/// Welch's unequal-variance t-test, one-tailed with alternative mean(a) > mean(b).
///
/// Returns `None` if either sample has fewer than two points.
pub fn welch_one_tailed(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let diff = mean(a) - mean(b);
        let p_value = if diff > 0.0 {
            0.0
        } else if diff < 0.0 {
            1.0
        } else {
            0.5
        };
        return Some(TTest { t: 0.0, df: na + nb - 2.0, p_value });
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Some(TTest { t, df, p_value: 1.0 - dist.cdf(t) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_abs_diff_eq!(sample_variance(&xs), 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(std_error(&xs), (5.0 / 12.0f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn ecdf_is_a_distribution_function() {
        let pts = ecdf(&[0.3, 0.1, 0.3, 0.9]);
        assert_eq!(pts, vec![(0.1, 0.25), (0.3, 0.75), (0.9, 1.0)]);
    }

    #[test]
    fn identical_samples() {
        let r = welch_one_tailed(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.5, epsilon = 1e-12);
        assert!(welch_one_tailed(&[1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn welch_reference_value() {
        // a = {1..5}, b = {0,0,1,1,2}: se² = 0.5 + 0.14, t = 2.2/0.8.
        let r = welch_one_tailed(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0, 0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(r.t, 2.75, epsilon = 1e-12);
        assert_abs_diff_eq!(r.df, 0.4096 / 0.0674, epsilon = 1e-9);
        assert!(r.p_value > 0.01 && r.p_value < 0.03, "{}", r.p_value);
    }
}
