use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{ensure_finite, quantile_sorted, sorted, StatsError};
use crate::seeding::{substream, Domain};

/// Two-group statistic `T = s(x) - s(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatistic {
    MedianDiff,
    P95Diff,
}

impl GroupStatistic {
    fn q(self) -> f64 {
        match self {
            GroupStatistic::MedianDiff => 0.5,
            GroupStatistic::P95Diff => 0.95,
        }
    }

    fn one(self, xs: &mut [f64]) -> f64 {
        xs.sort_unstable_by(f64::total_cmp);
        quantile_sorted(xs, self.q())
    }

    /// Evaluates the statistic. Inputs need not be sorted.
    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        self.one(&mut x.to_vec()) - self.one(&mut y.to_vec())
    }
}

fn check_groups(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::Empty("resampling group"));
    }
    ensure_finite(x, "resampling x")?;
    ensure_finite(y, "resampling y")
}

/// Two-sided permutation test with `p = (1 + #{|T*| >= |T_obs|}) / (B + 1)`.
///
/// Resample `i` shuffles the pooled sample with its own substream, so the
/// result is the same for any thread count.
pub fn permutation_test(
    x: &[f64],
    y: &[f64],
    stat: GroupStatistic,
    b: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    check_groups(x, y)?;
    if b == 0 {
        return Err(StatsError::InvalidArgument("permutation count B must be >= 1".into()));
    }
    let observed = stat.eval(x, y).abs();
    // Guards against float noise making an exact tie look smaller.
    let threshold = observed - 1e-12 * observed.max(1.0);
    let nx = x.len();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let extreme: usize = (0..b as u64)
        .into_par_iter()
        .map_init(
            || pooled.clone(),
            |buf, i| {
                buf.copy_from_slice(&pooled);
                let mut rng = substream(seed, Domain::Permutation, i);
                buf.shuffle(&mut rng);
                let (a, c) = buf.split_at_mut(nx);
                let t = stat.one(a) - stat.one(c);
                usize::from(t.abs() >= threshold)
            },
        )
        .sum();
    Ok((1 + extreme) as f64 / (b + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub z0: f64,
    pub acceleration: f64,
    /// The jackknife had zero spread, so `acceleration` was set to 0.
    pub degenerate_jackknife: bool,
}

/// Bias constant from the share of replicates below the estimate, counting
/// ties as half so that a distribution symmetric about the estimate gives 0.
pub fn bias_constant(estimate: f64, replicates: &[f64]) -> f64 {
    let b = replicates.len() as f64;
    let below = replicates.iter().filter(|&&t| t < estimate).count() as f64;
    let equal = replicates.iter().filter(|&&t| t == estimate).count() as f64;
    let frac = ((below + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    if frac == 0.5 {
        0.0
    } else {
        Normal::standard().inverse_cdf(frac)
    }
}

/// Adjusted percentile endpoints given replicates, `z0` and `a`.
pub fn bca_endpoints(replicates_sorted: &[f64], z0: f64, acceleration: f64, level: f64) -> (f64, f64) {
    let std = Normal::standard();
    let adjust = |alpha: f64| {
        if z0 == 0.0 && acceleration == 0.0 {
            return quantile_sorted(replicates_sorted, alpha);
        }
        let z = std.inverse_cdf(alpha);
        let w = z0 + z;
        let denom = 1.0 - acceleration * w;
        let p = if denom <= 0.0 {
            if w > 0.0 { 1.0 } else { 0.0 }
        } else {
            std.cdf(z0 + w / denom)
        };
        quantile_sorted(replicates_sorted, p.clamp(0.0, 1.0))
    };
    let tail = (1.0 - level) / 2.0;
    let (lo, hi) = (adjust(tail), adjust(1.0 - tail));
    (lo.min(hi), lo.max(hi))
}

/// Jackknife acceleration for a two-sample statistic. Returns `None` when
/// every leave-one-out value coincides.
pub fn jackknife_acceleration(x: &[f64], y: &[f64], stat: GroupStatistic) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (group, other, first) in [(x, y, true), (y, x, false)] {
        let n = group.len() as f64;
        let loo: Vec<f64> = (0..group.len())
            .map(|i| {
                let mut rest = group.to_vec();
                rest.remove(i);
                if first { stat.eval(&rest, other) } else { stat.eval(other, &rest) }
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / n;
        for t in loo {
            let u = (n - 1.0) * (mean - t);
            num += u.powi(3) / n.powi(3);
            den += u.powi(2) / n.powi(2);
        }
    }
    if den <= 0.0 || !den.is_finite() {
        None
    } else {
        Some(num / (6.0 * den.powf(1.5)))
    }
}

/// BCa bootstrap interval for `stat`, resampling each group independently.
pub fn bca_bootstrap_ci(
    x: &[f64],
    y: &[f64],
    stat: GroupStatistic,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BcaInterval, StatsError> {
    check_groups(x, y)?;
    if b < 100 {
        return Err(StatsError::TooFew { what: "bootstrap resamples", needed: 100, have: b });
    }
    for g in [x, y] {
        if g.len() < 2 {
            return Err(StatsError::TooFew { what: "bootstrap group", needed: 2, have: g.len() });
        }
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!("confidence level {level} is outside (0, 1)")));
    }
    let estimate = stat.eval(x, y);
    let replicates: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(x.len()), Vec::with_capacity(y.len())),
            |(bx, by), i| {
                let mut rng = substream(seed, Domain::Bootstrap, i);
                bx.clear();
                by.clear();
                bx.extend((0..x.len()).map(|_| x[rng.random_range(0..x.len())]));
                by.extend((0..y.len()).map(|_| y[rng.random_range(0..y.len())]));
                stat.one(bx) - stat.one(by)
            },
        )
        .collect();
    let z0 = bias_constant(estimate, &replicates);
    let (acceleration, degenerate_jackknife) = match jackknife_acceleration(x, y, stat) {
        Some(a) => (a, false),
        None => (0.0, true),
    };
    let (lo, hi) = bca_endpoints(&sorted(&replicates), z0, acceleration, level);
    Ok(BcaInterval { lo, hi, estimate, z0, acceleration, degenerate_jackknife })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_groups() {
        let x = [4.0; 8];
        let p = permutation_test(&x, &x, GroupStatistic::MedianDiff, 500, 1).unwrap();
        assert_eq!(p, 1.0);
        let ci = bca_bootstrap_ci(&x, &[4.0; 5], GroupStatistic::P95Diff, 200, 0.95, 1).unwrap();
        assert_eq!((ci.lo, ci.hi, ci.estimate), (0.0, 0.0, 0.0));
        assert!(ci.degenerate_jackknife);
        assert_eq!(ci.acceleration, 0.0);
    }

    #[test]
    fn argument_checks() {
        assert!(permutation_test(&[], &[1.0], GroupStatistic::MedianDiff, 10, 0).is_err());
        assert!(permutation_test(&[1.0], &[1.0], GroupStatistic::MedianDiff, 0, 0).is_err());
        assert!(bca_bootstrap_ci(&[1.0, 2.0], &[1.0, 2.0], GroupStatistic::MedianDiff, 99, 0.95, 0).is_err());
        assert!(bca_bootstrap_ci(&[1.0], &[1.0, 2.0], GroupStatistic::MedianDiff, 200, 0.95, 0).is_err());
    }

    #[test]
    fn small_groups_match_full_enumeration() {
        let x = [1.3, 2.9, 4.1];
        let y = [2.2, 5.0, 6.7];
        let pooled: Vec<f64> = x.iter().chain(&y).copied().collect();
        let obs = GroupStatistic::MedianDiff.eval(&x, &y).abs();
        let (mut hit, mut total) = (0, 0);
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let a: Vec<f64> = (0..6).filter(|i| mask & (1 << i) != 0).map(|i| pooled[i]).collect();
            let c: Vec<f64> = (0..6).filter(|i| mask & (1 << i) == 0).map(|i| pooled[i]).collect();
            total += 1;
            if GroupStatistic::MedianDiff.eval(&a, &c).abs() >= obs - 1e-12 {
                hit += 1;
            }
        }
        assert_eq!(total, 20);
        let exact = hit as f64 / total as f64;
        let p = permutation_test(&x, &y, GroupStatistic::MedianDiff, 20_000, 9).unwrap();
        assert!((p - exact).abs() < 0.03, "sampled {p} vs exact {exact}");
    }

    #[test]
    fn disjoint_groups_are_significant() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        for seed in 0..20 {
            let p = permutation_test(&x, &y, GroupStatistic::MedianDiff, 10_000, seed).unwrap();
            assert!(p <= 0.01, "seed {seed}: p={p}");
            assert!(p >= 1.0 / 10_001.0);
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 23) as f64).collect();
        let y: Vec<f64> = (0..35).map(|i| ((i * 11) % 19) as f64 + 0.5).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                (
                    permutation_test(&x, &y, GroupStatistic::P95Diff, 999, 5).unwrap(),
                    bca_bootstrap_ci(&x, &y, GroupStatistic::MedianDiff, 999, 0.95, 5).unwrap(),
                )
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn symmetric_replicates_give_percentile_interval() {
        let reps: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
        let z0 = bias_constant(0.0, &reps);
        assert_eq!(z0, 0.0);
        let (lo, hi) = bca_endpoints(&reps, z0, 0.0, 0.9);
        assert!((lo - quantile_sorted(&reps, 0.05)).abs() < 1e-12);
        assert!((hi - quantile_sorted(&reps, 0.95)).abs() < 1e-12);
    }

    #[test]
    fn interval_contains_estimate_for_shifted_groups() {
        let x: Vec<f64> = (0..60).map(|i| 10.0 + (i as f64 * 0.7).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 2.0).collect();
        let ci = bca_bootstrap_ci(&x, &y, GroupStatistic::MedianDiff, 1000, 0.95, 3).unwrap();
        assert!(ci.lo <= ci.estimate && ci.estimate <= ci.hi);
        assert!((ci.estimate + 2.0).abs() < 1e-12);
    }
}
