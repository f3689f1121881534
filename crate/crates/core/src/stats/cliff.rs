use serde::{Deserialize, Serialize};

use super::{ensure_finite, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Conventional bands on `|delta|`: 0.147, 0.33, 0.474.
    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffsDelta {
    pub delta: f64,
    pub magnitude: Magnitude,
}

/// `P(X > Y) - P(X < Y)` over all pairs, in `O((n_x + n_y) log n_y)`.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<CliffsDelta, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::Empty("Cliff's delta group"));
    }
    ensure_finite(x, "Cliff's delta x")?;
    ensure_finite(y, "Cliff's delta y")?;
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let (mut greater, mut less) = (0u64, 0u64);
    for &xi in x {
        let below = ys.partition_point(|&v| v < xi);
        let at_or_below = ys.partition_point(|&v| v <= xi);
        greater += below as u64;
        less += (ys.len() - at_or_below) as u64;
    }
    let pairs = (x.len() as u64 * y.len() as u64) as f64;
    let delta = (greater as i64 - less as i64) as f64 / pairs;
    Ok(CliffsDelta {
        delta,
        magnitude: Magnitude::of(delta),
    })
}
