//! Small statistics toolkit: moments with standard errors, least-squares
//! line fits and the two-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.se
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample mean and its standard error.
pub fn mean_estimate(xs: &[f64]) -> Result<Estimate> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 2", xs.len())));
    }
    Ok(Estimate { value: mean(xs), se: (variance(xs) / xs.len() as f64).sqrt() })
}

/// Delete-one jackknife estimate of `stat` with its standard error.
pub fn jackknife(xs: &[f64], stat: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} samples, need at least 2")));
    }
    let full = stat(xs);
    let mut buf = Vec::with_capacity(n - 1);
    let leave_out: Vec<f64> = (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(xs[..i].iter().chain(&xs[i + 1..]));
            stat(&buf)
        })
        .collect();
    let avg = mean(&leave_out);
    let spread = leave_out.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>();
    Ok(Estimate { value: full, se: ((n as f64 - 1.0) / n as f64 * spread).sqrt() })
}

/// Raw moment E[x^k] with its standard error.
///
/// The jackknife error of a sample mean is the usual s / sqrt(n), so it is
/// computed in closed form rather than by n refits.
pub fn raw_moment(xs: &[f64], k: u32) -> Result<Estimate> {
    let powers: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
    mean_estimate(&powers)
}

/// Excess kurtosis m4 / m2^2 - 3 about the sample mean.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let (m2, m4) = xs.iter().fold((0.0, 0.0), |(a, b), x| {
        let d2 = (x - m) * (x - m);
        (a + d2, b + d2 * d2)
    });
    let n = xs.len() as f64;
    (m4 / n) / (m2 / n).powi(2) - 3.0
}

/// Least-squares line y = slope x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual scatter (0 for exact data).
    pub slope_se: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("x and y lengths differ".into()));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("a line fit needs at least 2 points".into()));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (xs.len() as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_se })
}

/// Fit of log y against log x.
pub fn fit_log_log(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParams("log-log fits need positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub critical: f64,
    pub alpha: f64,
}

impl KsTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// sup |F_a - F_b| over the pooled sample.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample test at significance `alpha` with the asymptotic critical
/// value sqrt(-ln(alpha / 2) / 2) sqrt((n + m) / (n m)).
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both samples must be non-empty".into()));
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let critical = (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt();
    Ok(KsTest { statistic: ks_statistic(a, b), critical, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn moments_of_constant_and_symmetric_data() {
        let v = vec![3.0; 10];
        for k in 1..=8 {
            let m = raw_moment(&v, k).unwrap();
            assert_eq!(m.value, 3f64.powi(k as i32));
            assert_eq!(m.se, 0.0);
        }
        let pm: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(raw_moment(&pm, 1).unwrap().value, 0.0);
        assert_eq!(raw_moment(&pm, 2).unwrap().value, 1.0);
        assert!(raw_moment(&[1.0], 2).is_err());
    }

    #[test]
    fn jackknife_of_the_mean_is_the_classical_error() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let jk = jackknife(&xs, mean).unwrap();
        let classical = mean_estimate(&xs).unwrap();
        assert_relative_eq!(jk.value, classical.value, epsilon = 1e-12);
        assert_relative_eq!(jk.se, classical.se, epsilon = 1e-12);
    }

    #[test]
    fn exact_power_laws_fit_exactly() {
        let c = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        for k in 1..=4 {
            let y: Vec<f64> = c.iter().map(|x: &f64| x.powi(k)).collect();
            let fit = fit_log_log(&c, &y).unwrap();
            assert_relative_eq!(fit.slope, k as f64, epsilon = 1e-12);
            assert!(fit.slope_se < 1e-6);
        }
        assert!(fit_log_log(&c, &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn ks_examples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 1000.0).collect();
        assert_eq!(ks_statistic(&a, &shifted), 1.0);
        let t = ks_two_sample(&a, &a, 1e-3).unwrap();
        assert!(t.passes());
        assert_relative_eq!(t.critical, 1.9495 * (2.0f64 / 100.0).sqrt(), epsilon = 1e-3);
    }

    proptest! {
        #[test]
        fn ks_statistic_is_symmetric_and_bounded(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            b in prop::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let d = ks_statistic(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_statistic(&b, &a));
        }

        #[test]
        fn kurtosis_is_shift_and_scale_invariant(
            xs in prop::collection::vec(-5.0f64..5.0, 4..50),
            shift in -3.0f64..3.0,
            scale in 0.5f64..4.0,
        ) {
            prop_assume!(variance(&xs) > 1e-3);
            let ys: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
            prop_assert!((excess_kurtosis(&xs) - excess_kurtosis(&ys)).abs() < 1e-8);
        }
    }
}
