use serde::{Deserialize, Serialize};

use super::{ensure_finite, sorted, StatsError};

/// Linearly interpolated quantile (Hyndman-Fan type 7, `h = (n - 1) q`).
pub fn quantile(samples: &[f64], q: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty("quantile"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    ensure_finite(samples, "quantile samples")?;
    Ok(quantile_sorted(&sorted(samples), q))
}

/// Type-7 quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        (sorted[lo] + frac * (sorted[hi] - sorted[lo])).clamp(sorted[lo], sorted[hi])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub iqr: f64,
    pub mad: f64,
}

pub fn summarize(samples: &[f64]) -> Result<Summary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty("summary"));
    }
    ensure_finite(samples, "summary samples")?;
    let s = sorted(samples);
    let median = quantile_sorted(&s, 0.5);
    let deviations = sorted(&s.iter().map(|x| (x - median).abs()).collect::<Vec<_>>());
    Ok(Summary {
        n: s.len(),
        median,
        p90: quantile_sorted(&s, 0.90),
        p95: quantile_sorted(&s, 0.95),
        p99: quantile_sorted(&s, 0.99),
        iqr: quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25),
        mad: quantile_sorted(&deviations, 0.5),
    })
}

/// One step of an empirical CDF: fraction of samples `<= value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub value: f64,
    pub fraction: f64,
}

/// Step points of the ECDF, one per distinct value, in increasing order.
pub fn ecdf(samples: &[f64]) -> Result<Vec<EcdfPoint>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty("ecdf"));
    }
    ensure_finite(samples, "ecdf samples")?;
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut out: Vec<EcdfPoint> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.value == v => last.fraction = fraction,
            _ => out.push(EcdfPoint { value: v, fraction }),
        }
    }
    Ok(out)
}
