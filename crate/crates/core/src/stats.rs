//! Summary statistics used by the reports.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsError {
    /// Fewer than three pairs, or unequal lengths.
    TooShort { xs: usize, ys: usize },
    /// One of the sequences has zero variance; the correlation is undefined.
    DegenerateInput,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::TooShort { xs, ys } => {
                write!(f, "need two equal-length sequences of at least 3 values, got {xs} and {ys}")
            }
            StatsError::DegenerateInput => f.write_str("constant sequence: correlation undefined"),
        }
    }
}

impl core::error::Error for StatsError {}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(StatsError::TooShort {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative threshold so that sequences equal up to rounding count as constant.
    let tiny = |s: f64, m: f64, n: usize| {
        let e = f64::EPSILON * m.abs().max(f64::MIN_POSITIVE);
        s <= 16.0 * n as f64 * e * e
    };
    if sxx == 0.0 || syy == 0.0 || tiny(sxx, mx, xs.len()) || tiny(syy, my, ys.len()) {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}
