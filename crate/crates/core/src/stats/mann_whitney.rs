use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{ensure_finite, StatsError};

/// Largest `n_x * n_y` for which the exact null distribution is enumerated.
pub const EXACT_MAX_PRODUCT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first group.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: MwuMethod,
}

/// Pooled midranks, doubled so that tied ranks stay integral.
struct Ranked {
    doubled_ranks: Vec<u64>,
    tie_term: f64,
}

fn rank_pooled(x: &[f64], y: &[f64]) -> Ranked {
    let mut pooled: Vec<(f64, usize)> = x.iter().chain(y).copied().zip(0..).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut doubled_ranks = vec![0u64; pooled.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share (i+1 + j+1) / 2
        let doubled = (i + j + 2) as u64;
        for item in &pooled[i..=j] {
            doubled_ranks[item.1] = doubled;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    Ranked { doubled_ranks, tie_term }
}

fn validate(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::Empty("Mann-Whitney U group"));
    }
    ensure_finite(x, "Mann-Whitney x")?;
    ensure_finite(y, "Mann-Whitney y")
}

/// Twice `U_x`, exact in integers.
fn doubled_u(ranked: &Ranked, nx: usize) -> i64 {
    let r: u64 = ranked.doubled_ranks[..nx].iter().sum();
    r as i64 - (nx * (nx + 1)) as i64
}

/// Two-sided Mann-Whitney U test. Uses the exact permutation distribution of
/// the midrank statistic when `n_x * n_y <= 64`, otherwise the tie-corrected
/// normal approximation with continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney, StatsError> {
    validate(x, y)?;
    if x.len() * y.len() <= EXACT_MAX_PRODUCT {
        mwu_exact_p(x, y)
    } else {
        mwu_approx_p(x, y)
    }
}

/// Exact two-sided p: the share of all `C(n, n_x)` relabelings whose
/// `|U - n_x n_y / 2|` is at least the observed one.
pub fn mwu_exact_p(x: &[f64], y: &[f64]) -> Result<MannWhitney, StatsError> {
    validate(x, y)?;
    let (nx, ny) = (x.len(), y.len());
    let ranked = rank_pooled(x, y);
    let u2 = doubled_u(&ranked, nx);
    let centre2 = (nx * ny) as i64;
    let observed = (u2 - centre2).abs();

    // Enumerate subsets of the smaller group's size; |U - mean| is symmetric.
    let k = nx.min(ny);
    let n = nx + ny;
    let ranks = &ranked.doubled_ranks;
    let mut idx: Vec<usize> = (0..k).collect();
    let (mut extreme, mut total) = (0u64, 0u64);
    loop {
        let r: u64 = idx.iter().map(|&i| ranks[i]).sum();
        let u2k = r as i64 - (k * (k + 1)) as i64;
        if (u2k - centre2).abs() >= observed {
            extreme += 1;
        }
        total += 1;
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                let p = extreme as f64 / total as f64;
                return Ok(MannWhitney {
                    u: u2 as f64 / 2.0,
                    p_two_sided: p.min(1.0),
                    method: MwuMethod::Exact,
                });
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn mwu_approx_p(x: &[f64], y: &[f64]) -> Result<MannWhitney, StatsError> {
    validate(x, y)?;
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let n = nx + ny;
    let ranked = rank_pooled(x, y);
    let u = doubled_u(&ranked, x.len()) as f64 / 2.0;
    let mean = nx * ny / 2.0;
    let tie_adj = if n > 1.0 { ranked.tie_term / (n * (n - 1.0)) } else { 0.0 };
    let var = nx * ny / 12.0 * ((n + 1.0) - tie_adj);
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let std = Normal::standard();
        (2.0 * std.sf(z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_two_sided: p,
        method: MwuMethod::Normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over every relabeling, with U computed by pair counting.
    fn brute_force_p(x: &[f64], y: &[f64]) -> f64 {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let n = pooled.len();
        let nx = x.len();
        let pair_u = |a: &[f64], b: &[f64]| -> f64 {
            let mut u = 0.0;
            for &ai in a {
                for &bj in b {
                    u += if ai > bj { 1.0 } else if ai == bj { 0.5 } else { 0.0 };
                }
            }
            u
        };
        let mean = (nx * (n - nx)) as f64 / 2.0;
        let obs = (pair_u(x, y) - mean).abs();
        let (mut hit, mut total) = (0, 0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != nx {
                continue;
            }
            let (a, b): (Vec<f64>, Vec<f64>) = {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for (i, &v) in pooled.iter().enumerate() {
                    if mask & (1 << i) != 0 { a.push(v) } else { b.push(v) }
                }
                (a, b)
            };
            total += 1;
            if (pair_u(&a, &b) - mean).abs() >= obs - 1e-9 {
                hit += 1;
            }
        }
        hit as f64 / total as f64
    }

    #[test]
    fn separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, MwuMethod::Exact);
        // 2 of C(6,3) = 20 labelings are as extreme.
        assert!((r.p_two_sided - 0.1).abs() < 1e-12);
        assert!((brute_force_p(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.u, 12.5);
        assert_eq!(r.p_two_sided, 1.0);
        let big: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&big, &big).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        assert_eq!(r.u, 800.0);
        assert_eq!(r.p_two_sided, 1.0);
        let c = [2.0; 10];
        assert_eq!(mwu_approx_p(&c, &c).unwrap().p_two_sided, 1.0);
    }

    #[test]
    fn empty_group() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn approximation_tracks_exact_for_moderate_groups() {
        // Exhaustive over every attainable U for tie-free groups of size 3..=8.
        for nx in 3..=8usize {
            for ny in 3..=8usize {
                for shift in 0..=(nx + ny) {
                    let x: Vec<f64> = (0..nx).map(|i| i as f64 + shift as f64 * 0.5).collect();
                    let y: Vec<f64> = (0..ny).map(|j| j as f64 + 0.25).collect();
                    let e = mwu_exact_p(&x, &y).unwrap().p_two_sided;
                    let a = mwu_approx_p(&x, &y).unwrap().p_two_sided;
                    assert!((e - a).abs() <= 0.05, "nx={nx} ny={ny} shift={shift}: exact {e} approx {a}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn exact_matches_brute_force(
            x in proptest::collection::vec(0u8..6, 1..=6),
            y in proptest::collection::vec(0u8..6, 1..=6),
        ) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let e = mwu_exact_p(&x, &y).unwrap().p_two_sided;
            prop_assert!((e - brute_force_p(&x, &y)).abs() < 1e-12);
        }
    }
}
