//! Merge-friendly online moments for the Monte Carlo checks.

/// Running count, sum and sum of squares; enough for means, sample
/// variances and standard errors, and mergeable across workers.
#[derive(Debug, Clone, Copy, Default)]
pub struct OnlineStats {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl OnlineStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(&mut self, other: &OnlineStats) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// `(estimate - reference) / se`, with the convention that a zero standard
/// error yields 0 when the estimate matches the reference exactly (up to
/// rounding) and +-inf otherwise.
pub fn z_score(estimate: f64, se: f64, reference: f64) -> f64 {
    let diff = estimate - reference;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * (1.0 + reference.abs()) {
        0.0
    } else {
        f64::INFINITY * diff.signum()
    }
}
