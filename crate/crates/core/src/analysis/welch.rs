use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::StudentT;

/// Running count, mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self { n: n as u64, mean, m2 }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Summary) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

pub fn welch_from_summaries(a: &Summary, b: &Summary) -> Result<WelchResult> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::Analysis(format!(
            "Welch's test needs at least 2 values per sample, got {} and {}",
            a.n, b.n
        )));
    }
    let va = a.variance() / a.n as f64;
    let vb = b.variance() / b.n as f64;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return Err(Error::Analysis("Welch's test is undefined when both variances are zero".into()));
    }
    let t = (a.mean - b.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    let p = StudentT::new(df).two_sided_tail(t);
    Ok(WelchResult { t, df, p })
}

/// Two-sample t-test without the equal-variance assumption.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    welch_from_summaries(&Summary::of(a), &Summary::of(b))
}
