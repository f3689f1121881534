use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ensure_finite, StatsError};
use crate::traffic::ClassKind;

fn rho(r: f64, tau: f64) -> f64 {
    if r < 0.0 { r * (tau - 1.0) } else { r * tau }
}

/// Mean check loss `rho_tau(r) = r (tau - 1[r < 0])`.
pub fn pinball_loss(residuals: &[f64], tau: f64) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    residuals.iter().map(|&r| rho(r, tau)).sum::<f64>() / residuals.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for QuantileOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-8 }
    }
}

/// Raw solver output in the caller's column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverFit {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loss: f64,
}

fn residuals(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> Vec<f64> {
    let fit = x * beta;
    y.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
}

fn weighted_solve(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for i in 0..n {
        let wi = w[i];
        for j in 0..p {
            let xij = x[(i, j)] * wi;
            b[j] += xij * y[i];
            for k in j..p {
                a[(j, k)] += xij * x[(i, k)];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[(j, k)] = a[(k, j)];
        }
    }
    if let Some(ch) = a.clone().cholesky() {
        let s = ch.solve(&b);
        if s.iter().all(|v| v.is_finite()) {
            return Some(s);
        }
    }
    let s = a.svd(true, true).solve(&b, 1e-14).ok()?;
    s.iter().all(|v| v.is_finite()).then_some(s)
}

/// Names the first column that is a linear combination of earlier ones.
fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), StatsError> {
    let gram = x.transpose() * x;
    let p = gram.nrows();
    let mut basis: Vec<usize> = Vec::new();
    for j in 0..p {
        let gjj = gram[(j, j)];
        let (resid, coef) = if basis.is_empty() {
            (gjj, DVector::zeros(0))
        } else {
            let m = basis.len();
            let gss = DMatrix::from_fn(m, m, |a, b| gram[(basis[a], basis[b])]);
            let gsj = DVector::from_fn(m, |a, _| gram[(basis[a], j)]);
            let coef = gss.lu().solve(&gsj).unwrap_or_else(|| DVector::zeros(m));
            (gjj - gsj.dot(&coef), coef)
        };
        if gjj == 0.0 || resid <= 1e-10 * gjj {
            let with = basis
                .iter()
                .zip(coef.iter())
                .filter(|(_, c)| c.abs() > 1e-8)
                .map(|(&b, _)| names[b].clone())
                .collect();
            return Err(StatsError::RankDeficient { column: names[j].clone(), with });
        }
        basis.push(j);
    }
    Ok(())
}

/// Exact fit through `p` linearly independent points with the smallest
/// absolute residuals, i.e. the basic solution nearest the current iterate.
fn polish(x: &DMatrix<f64>, y: &[f64], r: &[f64]) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let mut rows: Vec<usize> = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let row = x.row(i).transpose();
        let mut v = row.clone();
        for q in &ortho {
            v -= q * q.dot(&row);
        }
        let norm = v.norm();
        if norm > 1e-9 * row.norm().max(f64::MIN_POSITIVE) {
            ortho.push(v / norm);
            rows.push(i);
            if rows.len() == p {
                break;
            }
        }
    }
    if rows.len() < p {
        return None;
    }
    let a = DMatrix::from_fn(p, p, |i, j| x[(rows[i], j)]);
    let b = DVector::from_fn(p, |i, _| y[rows[i]]);
    a.lu().solve(&b)
}

/// Minimizes mean pinball loss by iteratively reweighted least squares with a
/// smoothing floor `eps` that shrinks geometrically to `tol`, then snaps to
/// the nearest exact-interpolation vertex when that lowers the loss.
pub fn fit_quantile(
    x: &DMatrix<f64>,
    names: &[String],
    y: &[f64],
    tau: f64,
    opts: &QuantileOptions,
) -> Result<SolverFit, StatsError> {
    let (n, p) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(StatsError::InvalidArgument(format!("tau {tau} is outside (0, 1)")));
    }
    if n == 0 {
        return Err(StatsError::Empty("quantile regression"));
    }
    if y.len() != n || names.len() != p {
        return Err(StatsError::InvalidArgument(format!(
            "design is {n}x{p}, response has {} values, {} names",
            y.len(),
            names.len()
        )));
    }
    if n < p {
        return Err(StatsError::TooFew { what: "quantile regression rows", needed: p, have: n });
    }
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(StatsError::InvalidArgument("max_iter must be >= 1 and tol > 0".into()));
    }
    ensure_finite(y, "quantile regression response")?;
    ensure_finite(x.as_slice(), "quantile regression design")?;
    check_rank(x, names)?;

    // Work on max-abs scaled columns for conditioning.
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let m = x.column(j).amax();
            if m > 0.0 { m } else { 1.0 }
        })
        .collect();
    let xs = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / scale[j]);

    // Smoothing floor relative to the robust spread of y.
    let med = super::quantile(y, 0.5)?;
    let spread = super::quantile(&y.iter().map(|v| (v - med).abs()).collect::<Vec<_>>(), 0.5)?;
    let eps_min = opts.tol * spread.max(1.0);
    let mut beta = weighted_solve(&xs, y, &vec![1.0; n]).unwrap_or_else(|| DVector::zeros(p));
    let r0 = residuals(&xs, y, &beta);
    let mut eps = (r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(eps_min);
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    for it in 1..=opts.max_iter {
        iterations = it;
        let r = residuals(&xs, y, &beta);
        for i in 0..n {
            let c = if r[i] < 0.0 { 1.0 - tau } else { tau };
            w[i] = c / r[i].abs().max(eps);
        }
        let Some(next) = weighted_solve(&xs, y, &w) else { break };
        let step = (&next - &beta).amax();
        let size = next.amax();
        beta = next;
        if eps <= eps_min && step <= opts.tol * (1.0 + size) {
            converged = true;
            break;
        }
        eps = (eps * 0.25).max(eps_min);
    }

    let irls_loss = pinball_loss(&residuals(&xs, y, &beta), tau);
    let zero = DVector::zeros(p);
    let mut best = (zero.clone(), pinball_loss(y, tau));
    if irls_loss <= best.1 {
        best = (beta.clone(), irls_loss);
    }
    if let Some(vertex) = polish(&xs, y, &residuals(&xs, y, &beta)) {
        let l = pinball_loss(&residuals(&xs, y, &vertex), tau);
        if l <= best.1 {
            best = (vertex, l);
        }
    }
    let beta: Vec<f64> = best.0.iter().zip(&scale).map(|(b, s)| b / s).collect();
    Ok(SolverFit { beta, converged, iterations, loss: best.1 })
}

/// One observation's covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub cpu: f64,
    pub pps: f64,
    pub qfi: u8,
    pub class: ClassKind,
}

/// One-hot design with an intercept, CPU and packet-rate columns, and dummies
/// for every non-reference QFI and traffic class present.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
    pub reference_qfi: u8,
    pub reference_class: ClassKind,
}

pub fn qfi_column(q: u8) -> String {
    format!("qfi_{q}")
}

pub fn class_column(c: ClassKind) -> String {
    format!("class_{}", c.label())
}

impl DesignMatrix {
    /// Reference levels: QFI 1 (or the smallest QFI present) and Baseline (or
    /// the first class present).
    pub fn from_rows(rows: &[RegressionRow]) -> Result<Self, StatsError> {
        if rows.is_empty() {
            return Err(StatsError::Empty("regression design"));
        }
        let qfis: BTreeSet<u8> = rows.iter().map(|r| r.qfi).collect();
        let classes: BTreeSet<ClassKind> = rows.iter().map(|r| r.class).collect();
        let reference_qfi = if qfis.contains(&1) { 1 } else { *qfis.first().expect("non-empty") };
        let reference_class = if classes.contains(&ClassKind::Baseline) {
            ClassKind::Baseline
        } else {
            *classes.first().expect("non-empty")
        };
        let qfi_levels: Vec<u8> = qfis.into_iter().filter(|&q| q != reference_qfi).collect();
        let class_levels: Vec<ClassKind> = classes.into_iter().filter(|&c| c != reference_class).collect();
        let mut columns = vec!["intercept".to_string(), "cpu".to_string(), "packets".to_string()];
        columns.extend(qfi_levels.iter().map(|&q| qfi_column(q)));
        columns.extend(class_levels.iter().map(|&c| class_column(c)));
        let p = columns.len();
        let data = DMatrix::from_fn(rows.len(), p, |i, j| {
            let r = &rows[i];
            match j {
                0 => 1.0,
                1 => r.cpu,
                2 => r.pps,
                j if j < 3 + qfi_levels.len() => f64::from(r.qfi == qfi_levels[j - 3]),
                j => f64::from(r.class == class_levels[j - 3 - qfi_levels.len()]),
            }
        });
        Ok(Self { columns, data, reference_qfi, reference_class })
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    /// Removes a column by name; returns whether it existed.
    pub fn drop_column(&mut self, name: &str) -> bool {
        match self.columns.iter().position(|c| c == name) {
            Some(j) => {
                self.columns.remove(j);
                self.data = self.data.clone().remove_column(j);
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub n: usize,
    pub intercept: f64,
    /// ns per CPU percentage point.
    pub cpu: Option<f64>,
    /// ns per packet/s.
    pub packets: Option<f64>,
    pub qfi: BTreeMap<u8, f64>,
    pub class: BTreeMap<String, f64>,
    pub reference_qfi: u8,
    pub reference_class: ClassKind,
    pub converged: bool,
    pub iterations: usize,
    pub loss: f64,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
}

pub fn quantile_regression(
    design: &DesignMatrix,
    y: &[f64],
    tau: f64,
    opts: &QuantileOptions,
) -> Result<QuantileFit, StatsError> {
    let fit = fit_quantile(&design.data, &design.columns, y, tau, opts)?;
    let mut out = QuantileFit {
        tau,
        n: y.len(),
        intercept: 0.0,
        cpu: None,
        packets: None,
        qfi: BTreeMap::new(),
        class: BTreeMap::new(),
        reference_qfi: design.reference_qfi,
        reference_class: design.reference_class,
        converged: fit.converged,
        iterations: fit.iterations,
        loss: fit.loss,
        columns: design.columns.clone(),
        beta: fit.beta.clone(),
    };
    for (name, &b) in design.columns.iter().zip(&fit.beta) {
        match name.as_str() {
            "intercept" => out.intercept = b,
            "cpu" => out.cpu = Some(b),
            "packets" => out.packets = Some(b),
            other => {
                if let Some(q) = other.strip_prefix("qfi_") {
                    out.qfi.insert(q.parse().expect("generated column name"), b);
                } else if let Some(c) = other.strip_prefix("class_") {
                    out.class.insert(c.to_string(), b);
                }
            }
        }
    }
    Ok(out)
}
