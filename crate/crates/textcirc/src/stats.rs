//! Exact binomial confidence intervals and the width-trend test used by the
//! accuracy reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

/// Quantile of the Beta(a, b) distribution by bisection on the regularized
/// incomplete beta function (the generic distribution inverse is only
/// accurate to ~1e-5, which is not enough for the frozen interval values).
fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) two-sided confidence interval for a binomial
/// proportion. The k = 0 and k = n endpoints use the closed forms
/// 1 - (alpha/2)^(1/n) and (alpha/2)^(1/n).
pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> (f64, f64) {
    assert!(successes <= trials && trials > 0, "bad binomial counts");
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else if successes == trials {
        (alpha / 2.0).powf(1.0 / n)
    } else {
        beta_quantile(alpha / 2.0, k, n - k + 1.0)
    };
    let hi = if successes == trials {
        1.0
    } else if successes == 0 {
        1.0 - (alpha / 2.0).powf(1.0 / n)
    } else {
        beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k)
    };
    (lo, hi)
}

/// One stratum of an accuracy table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub stratum: usize,
    pub n: usize,
    pub successes: usize,
    pub accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn accuracy_cell(stratum: usize, successes: usize, n: usize) -> AccuracyCell {
    let (ci_lo, ci_hi) = clopper_pearson(successes, n, 0.95);
    AccuracyCell { stratum, n, successes, accuracy: successes as f64 / n as f64, ci_lo, ci_hi }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub intercept: f64,
}

impl SlopeFit {
    /// True when the data shows no statistically significant decay:
    /// the slope interval reaches zero or above.
    pub fn no_significant_decay(&self) -> bool {
        self.ci_hi >= 0.0
    }
}

/// Weighted least-squares line through (x, y) points with weights w
/// (typically stratum sizes); 95% confidence interval on the slope from the
/// t distribution. Returns None with fewer than three strata.
pub fn slope_ci(points: &[(f64, f64, f64)]) -> Option<SlopeFit> {
    let m = points.len();
    if m < 3 {
        return None;
    }
    let wsum: f64 = points.iter().map(|p| p.2).sum();
    let xbar = points.iter().map(|p| p.0 * p.2).sum::<f64>() / wsum;
    let ybar = points.iter().map(|p| p.1 * p.2).sum::<f64>() / wsum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = points
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    // weighted residual variance with the weights normalised to the stratum count
    let s2 = ss_res / (wsum * (m as f64 - 2.0) / m as f64);
    let se = (s2 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, m as f64 - 2.0)
        .expect("t params")
        .inverse_cdf(0.975);
    Some(SlopeFit { slope, ci_lo: slope - t * se, ci_hi: slope + t * se, intercept })
}
