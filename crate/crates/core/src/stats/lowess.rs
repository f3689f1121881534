use super::{ensure_finite, StatsError};

fn tricube(u: f64) -> f64 {
    if u < 1.0 {
        let t = 1.0 - u * u * u;
        t * t * t
    } else {
        0.0
    }
}

fn bisquare(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let t = 1.0 - u * u;
        t * t
    } else {
        0.0
    }
}

/// Weighted linear fit over `idx`, evaluated at `x0`. Falls back to the
/// weighted mean when the weighted x spread vanishes.
fn local_fit(x: &[f64], y: &[f64], w: &[f64], idx: &[usize], x0: f64) -> Option<f64> {
    let sw: f64 = idx.iter().map(|&j| w[j]).sum();
    if sw <= 0.0 {
        return None;
    }
    let xm = idx.iter().map(|&j| w[j] * x[j]).sum::<f64>() / sw;
    let ym = idx.iter().map(|&j| w[j] * y[j]).sum::<f64>() / sw;
    let sxx: f64 = idx.iter().map(|&j| w[j] * (x[j] - xm).powi(2)).sum();
    let sxy: f64 = idx.iter().map(|&j| w[j] * (x[j] - xm) * (y[j] - ym)).sum();
    let spread = idx.iter().map(|&j| (x[j] - xm).abs()).fold(0.0, f64::max);
    if sxx <= 1e-12 * sw * spread * spread || sxx == 0.0 {
        Some(ym)
    } else {
        Some(ym + sxy / sxx * (x0 - xm))
    }
}

/// LOWESS fitted values at each `x[i]`, in input order.
///
/// Each point gets a local linear fit with tricube weights over its
/// `ceil(frac * n)` nearest neighbours (the farthest of them has weight 0);
/// each robustifying pass multiplies in bisquare weights of the residuals
/// scaled by six times their median absolute value.
pub fn lowess(x: &[f64], y: &[f64], frac: f64, robust_iters: usize) -> Result<Vec<f64>, StatsError> {
    let n = x.len();
    if n != y.len() {
        return Err(StatsError::InvalidArgument(format!("x has {n} values, y has {}", y.len())));
    }
    if n < 2 {
        return Err(StatsError::TooFew { what: "LOWESS", needed: 2, have: n });
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(StatsError::InvalidArgument(format!("frac {frac} is outside (0, 1]")));
    }
    ensure_finite(x, "LOWESS x")?;
    ensure_finite(y, "LOWESS y")?;
    if x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::DegenerateX);
    }
    let k = ((frac * n as f64).ceil() as usize).clamp(2, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    // Nearest-k window [lo, lo + k) and bandwidth for each sorted position.
    let mut windows = Vec::with_capacity(n);
    let mut lo = 0usize;
    for i in 0..n {
        while lo + k < n && xs[i] - xs[lo] > xs[lo + k] - xs[i] {
            lo += 1;
        }
        let h = (xs[i] - xs[lo]).max(xs[lo + k - 1] - xs[i]);
        windows.push((lo, h));
    }

    let mut robust = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut idx = Vec::with_capacity(k);
    for pass in 0..=robust_iters {
        for (pos, &i) in order.iter().enumerate() {
            let (lo, h) = windows[pos];
            idx.clear();
            for &j in &order[lo..lo + k] {
                let d = (x[j] - x[i]).abs();
                weights[j] = if h > 0.0 { tricube(d / h) } else { 1.0 } * robust[j];
                idx.push(j);
            }
            fitted[i] = local_fit(x, y, &weights, &idx, x[i]).unwrap_or(if pass == 0 { y[i] } else { fitted[i] });
        }
        if pass == robust_iters {
            break;
        }
        let resid: Vec<f64> = (0..n).map(|i| (y[i] - fitted[i]).abs()).collect();
        let s = super::quantile(&resid, 0.5)?;
        if s == 0.0 {
            break;
        }
        for i in 0..n {
            robust[i] = bisquare(resid[i] / (6.0 * s));
        }
    }
    Ok(fitted)
}
