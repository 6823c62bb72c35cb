//! Small statistics toolbox: estimates with standard errors, two-sample
//! Kolmogorov-Smirnov distance, weighted least squares, autocorrelation.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// Mean and jackknife standard error. For the sample mean the delete-one
/// jackknife reduces to `s / sqrt(n)`.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return Estimate { value: mean, stderr: 0.0 };
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Estimate {
        value: mean,
        stderr: (ss / ((n - 1) as f64 * n as f64)).sqrt(),
    }
}

/// Grouped delete-one jackknife of an arbitrary statistic.
pub fn jackknife<F>(xs: &[f64], groups: usize, stat: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let full = stat(xs);
    let g = groups.min(xs.len()).max(2);
    let size = xs.len() / g;
    if size == 0 {
        return Estimate { value: full, stderr: f64::NAN };
    }
    let mut reps = Vec::with_capacity(g);
    let mut buf = Vec::with_capacity(xs.len());
    for i in 0..g {
        buf.clear();
        buf.extend_from_slice(&xs[..i * size]);
        buf.extend_from_slice(&xs[(i + 1) * size..]);
        reps.push(stat(&buf));
    }
    let mean = reps.iter().sum::<f64>() / g as f64;
    let var = reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() * (g - 1) as f64 / g as f64;
    Estimate {
        value: full,
        stderr: var.sqrt(),
    }
}

/// Pairwise (cascade) summation with a fixed tree shape.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Two-sample KS statistic of already sorted samples.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_sorted(&a, &b)
}

/// Result of a straight-line weighted least-squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl LineFit {
    /// Two-sided 95% interval of the slope from Student's t with n-2 dof.
    pub fn slope_ci95(&self) -> (f64, f64) {
        let t = t_quantile_975(self.n.saturating_sub(2).max(1));
        (self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr)
    }
}

pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

/// Weighted least squares. The slope error uses the residual scatter, so
/// weights only need to be correct up to a common factor.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.len());
    let n = x.len();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - intercept - slope * x[i];
            w[i] * r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let sigma2 = if n > 2 { rss / (n - 2) as f64 } else { 0.0 };
    LineFit {
        intercept,
        slope,
        slope_stderr: (sigma2 / sxx).sqrt(),
        intercept_stderr: (sigma2 * (1.0 / sw + mx * mx / sxx)).sqrt(),
        r_squared,
        n,
    }
}

/// Mean of correlated snapshot estimates. The error is the larger of the
/// scatter-based error (inflated by the autocorrelation time) and the
/// pooled per-snapshot error.
pub fn combine_snapshots(values: &[Estimate]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.value).sum::<f64>() / n;
    let pooled = (values.iter().map(|v| v.stderr * v.stderr).sum::<f64>() / n / n).sqrt();
    if values.len() < 4 {
        return Estimate { value: mean, stderr: pooled };
    }
    let xs: Vec<f64> = values.iter().map(|v| v.value).collect();
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let tau = integrated_autocorrelation_time(&xs);
    Estimate {
        value: mean,
        stderr: (var * 2.0 * tau / n).sqrt().max(pooled),
    }
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 5).
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 0.5;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let mut c = 0.0;
        for i in 0..n - lag {
            c += (xs[i] - mean) * (xs[i + lag] - mean);
        }
        tau += c / ((n - lag) as f64 * var);
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}
