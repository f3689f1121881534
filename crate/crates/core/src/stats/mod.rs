//! Robust summaries, nonparametric group tests, resampling inference,
//! quantile regression, and LOWESS smoothing.

mod cliff;
mod descriptive;
mod lowess;
mod mann_whitney;
mod quantreg;
mod resampling;

pub use cliff::{cliffs_delta, CliffsDelta, Magnitude};
pub use descriptive::{ecdf, quantile, quantile_sorted, summarize, EcdfPoint, Summary};
pub use lowess::lowess;
pub use mann_whitney::{mann_whitney_u, mwu_approx_p, mwu_exact_p, MannWhitney, MwuMethod, EXACT_MAX_PRODUCT};
pub use quantreg::{
    pinball_loss, quantile_regression, fit_quantile, DesignMatrix, QuantileFit, QuantileOptions, RegressionRow,
    SolverFit,
};
pub use resampling::{bca_bootstrap_ci, permutation_test, BcaInterval, GroupStatistic};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{0}: input is empty")]
    Empty(&'static str),
    #[error("{what}: need at least {needed} observations, have {have}")]
    TooFew { what: &'static str, needed: usize, have: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rank-deficient design: column {column} is collinear with {}", with.join(", "))]
    RankDeficient { column: String, with: Vec<String> },
    #[error("LOWESS: all x values are identical")]
    DegenerateX,
}

pub(crate) fn ensure_finite(xs: &[f64], what: &'static str) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite(what))
    }
}

pub(crate) fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
