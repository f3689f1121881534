use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{read_trace, sha256_hex, trace_bytes, HarnessError};
use crate::probe::LatencySample;
use crate::seeding::{substream, Domain};
use crate::stats::{
    self, bca_bootstrap_ci, cliffs_delta, ecdf, lowess, mann_whitney_u, permutation_test, quantile, summarize,
    DesignMatrix, EcdfPoint, GroupStatistic, Magnitude, MwuMethod, QuantileFit, QuantileOptions, RegressionRow,
    StatsError, Summary,
};
use crate::traffic::ClassKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub b_perm: usize,
    pub b_boot: usize,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub level: f64,
    /// Aggregate samples to per-window medians of this width.
    pub window_agg_ms: Option<f64>,
    pub lowess_frac: f64,
    pub lowess_iters: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            b_perm: 10_000,
            b_boot: 2_000,
            taus: vec![0.5, 0.95, 0.99],
            seed: 0,
            level: 0.95,
            window_agg_ms: None,
            lowess_frac: 0.3,
            lowess_iters: 3,
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

/// One parsed trace.
#[derive(Debug, Clone)]
pub struct TraceInput {
    pub name: String,
    /// Every row of a Baseline trace joins the Baseline group.
    pub baseline: bool,
    pub samples: Vec<LatencySample>,
    pub sha256: String,
}

impl TraceInput {
    pub fn load(path: &Path, baseline: bool) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        let samples = read_trace(path)?;
        Ok(Self {
            name: path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
            baseline,
            samples,
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn from_samples(name: impl Into<String>, baseline: bool, samples: Vec<LatencySample>) -> Self {
        let sha256 = sha256_hex(&trace_bytes(&samples));
        Self { name: name.into(), baseline, samples, sha256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// A class compared against Baseline; deltas are class minus Baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub delta_median_ns: f64,
    pub p_perm_median: f64,
    pub delta_p95_ns: f64,
    pub p_perm_p95: f64,
    pub p_mwu: f64,
    pub mwu_u: f64,
    pub mwu_method: MwuMethod,
    pub cliffs_delta: f64,
    pub magnitude: Magnitude,
    pub ci_median: Interval,
    pub ci_p95: Interval,
    /// Intervals whose jackknife was degenerate (acceleration set to 0).
    pub ci_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: ClassKind,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfiRow {
    pub qfi: u8,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub class: ClassKind,
    pub n: usize,
    pub baseline_n: usize,
    pub result: Option<GroupComparison>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub tau: f64,
    pub fit: Option<QuantileFit>,
    pub dropped_columns: Vec<String>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfSeries {
    pub class: ClassKind,
    pub points: Vec<EcdfPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowessPoint {
    pub cpu_pct: f64,
    pub latency_ns: f64,
    pub fitted_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowessSeries {
    pub frac: f64,
    pub robust_iters: usize,
    pub points: Vec<LowessPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGroup {
    pub class: ClassKind,
    pub latencies_ns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMeta {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
    pub baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 over input digests and options.
    pub config_digest: String,
    pub inputs: Vec<InputMeta>,
    pub options: AnalyzeOptions,
    /// "packet" or "window(<ms> ms)".
    pub sample_unit: String,
    /// Covariate units of regression coefficients.
    pub units: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metadata: ReportMetadata,
    pub class_summary: Vec<ClassRow>,
    pub qfi_summary: Vec<QfiRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub quantile_fits: Vec<FitRow>,
    pub ecdf: Vec<EcdfSeries>,
    pub lowess: Option<LowessSeries>,
    pub groups: Vec<RawGroup>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse { path: origin.into(), message: e.to_string() })
    }
}

/// One analysis unit: a packet, or a window median.
#[derive(Debug, Clone, Copy)]
struct Obs {
    class: ClassKind,
    qfi: u8,
    latency: f64,
    cpu: f64,
    pps: f64,
}

fn observations(inputs: &[TraceInput], window_agg_ms: Option<f64>) -> Result<Vec<Obs>, HarnessError> {
    let class_of = |t: &TraceInput, s: &LatencySample| if t.baseline { ClassKind::Baseline } else { s.class };
    let Some(ms) = window_agg_ms else {
        return Ok(inputs
            .iter()
            .flat_map(|t| {
                t.samples.iter().map(move |s| Obs {
                    class: class_of(t, s),
                    qfi: s.qfi.value(),
                    latency: s.decap_latency_ns as f64,
                    cpu: s.cpu_percent,
                    pps: s.packet_rate_pps,
                })
            })
            .collect());
    };
    let width = (ms * 1e6).round() as u64;
    if width == 0 {
        return Err(HarnessError::Validation(vec![super::Issue {
            path: "--window-agg".into(),
            message: format!("window width must be > 0 ms, got {ms}"),
        }]));
    }
    let mut bins: BTreeMap<(usize, ClassKind, u8, u64), Vec<&LatencySample>> = BTreeMap::new();
    for (i, t) in inputs.iter().enumerate() {
        for s in &t.samples {
            bins.entry((i, class_of(t, s), s.qfi.value(), s.emit_time_ns / width)).or_default().push(s);
        }
    }
    bins.into_iter()
        .map(|((_, class, qfi, _), group)| {
            let lat: Vec<f64> = group.iter().map(|s| s.decap_latency_ns as f64).collect();
            let n = group.len() as f64;
            Ok(Obs {
                class,
                qfi,
                latency: quantile(&lat, 0.5)?,
                cpu: group.iter().map(|s| s.cpu_percent).sum::<f64>() / n,
                pps: group.iter().map(|s| s.packet_rate_pps).sum::<f64>() / n,
            })
        })
        .collect()
}

fn derived_seed(seed: u64, tag: u64) -> u64 {
    substream(seed, Domain::Harness, tag).random()
}

fn compare(x: &[f64], y: &[f64], opts: &AnalyzeOptions, tag: u64) -> Result<GroupComparison, StatsError> {
    let s = |k| derived_seed(opts.seed, tag * 8 + k);
    let mwu = mann_whitney_u(x, y)?;
    let cd = cliffs_delta(x, y)?;
    let ci_m = bca_bootstrap_ci(x, y, GroupStatistic::MedianDiff, opts.b_boot, opts.level, s(2))?;
    let ci_p = bca_bootstrap_ci(x, y, GroupStatistic::P95Diff, opts.b_boot, opts.level, s(3))?;
    let mut ci_notes = Vec::new();
    if ci_m.degenerate_jackknife {
        ci_notes.push("median: degenerate jackknife, acceleration set to 0".into());
    }
    if ci_p.degenerate_jackknife {
        ci_notes.push("p95: degenerate jackknife, acceleration set to 0".into());
    }
    Ok(GroupComparison {
        delta_median_ns: GroupStatistic::MedianDiff.eval(x, y),
        p_perm_median: permutation_test(x, y, GroupStatistic::MedianDiff, opts.b_perm, s(0))?,
        delta_p95_ns: GroupStatistic::P95Diff.eval(x, y),
        p_perm_p95: permutation_test(x, y, GroupStatistic::P95Diff, opts.b_perm, s(1))?,
        p_mwu: mwu.p_two_sided,
        mwu_u: mwu.u,
        mwu_method: mwu.method,
        cliffs_delta: cd.delta,
        magnitude: cd.magnitude,
        ci_median: Interval { lo: ci_m.lo, hi: ci_m.hi },
        ci_p95: Interval { lo: ci_p.lo, hi: ci_p.hi },
        ci_notes,
    })
}

/// Fits one quantile, dropping columns reported as collinear until the
/// design has full rank.
fn fit_tau(rows: &[RegressionRow], y: &[f64], tau: f64, opts: &QuantileOptions) -> FitRow {
    let mut design = match DesignMatrix::from_rows(rows) {
        Ok(d) => d,
        Err(e) => return FitRow { tau, fit: None, dropped_columns: vec![], warning: Some(e.to_string()) },
    };
    let mut dropped = Vec::new();
    let mut notes = Vec::new();
    loop {
        match stats::quantile_regression(&design, y, tau, opts) {
            Ok(fit) => {
                return FitRow {
                    tau,
                    fit: Some(fit),
                    dropped_columns: dropped,
                    warning: (!notes.is_empty()).then(|| notes.join("; ")),
                }
            }
            Err(StatsError::RankDeficient { column, with }) if column != "intercept" => {
                notes.push(if with.is_empty() {
                    format!("dropped {column} (constant zero)")
                } else {
                    format!("dropped {column} (collinear with {})", with.join(", "))
                });
                design.drop_column(&column);
                dropped.push(column);
            }
            Err(e) => return FitRow { tau, fit: None, dropped_columns: dropped, warning: Some(e.to_string()) },
        }
    }
}

/// Runs the full analysis. Baseline is the reference group for comparisons
/// and for the regression's class dummies.
pub fn analyze(inputs: &[TraceInput], opts: &AnalyzeOptions) -> Result<AnalysisReport, HarnessError> {
    if !inputs.iter().any(|t| t.baseline) {
        return Err(HarnessError::MissingBaseline);
    }
    for t in inputs {
        if t.samples.is_empty() {
            return Err(HarnessError::Trace { path: t.name.clone(), line: 1, message: "trace has no samples".into() });
        }
    }
    for &tau in &opts.taus {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(HarnessError::Validation(vec![super::Issue {
                path: "--taus".into(),
                message: format!("{tau} is outside (0, 1)"),
            }]));
        }
    }
    let obs = observations(inputs, opts.window_agg_ms)?;

    let mut by_class: BTreeMap<ClassKind, Vec<f64>> = BTreeMap::new();
    let mut by_qfi: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for o in &obs {
        by_class.entry(o.class).or_default().push(o.latency);
        by_qfi.entry(o.qfi).or_default().push(o.latency);
    }
    let baseline = by_class.get(&ClassKind::Baseline).ok_or(HarnessError::MissingBaseline)?;

    let class_summary = by_class
        .iter()
        .map(|(&class, v)| Ok(ClassRow { class, summary: summarize(v)? }))
        .collect::<Result<Vec<_>, StatsError>>()?;
    let qfi_summary = by_qfi
        .iter()
        .map(|(&qfi, v)| Ok(QfiRow { qfi, summary: summarize(v)? }))
        .collect::<Result<Vec<_>, StatsError>>()?;

    let mut warnings = Vec::new();
    let mut comparisons = Vec::new();
    for (&class, x) in by_class.iter().filter(|(c, _)| **c != ClassKind::Baseline) {
        let tag = class as u64;
        let mut row = ComparisonRow { class, n: x.len(), baseline_n: baseline.len(), result: None, warning: None };
        if x.len() < 2 || baseline.len() < 2 {
            let w = format!("{class}: comparison skipped, needs n >= 2 in both groups");
            warnings.push(w.clone());
            row.warning = Some(w);
        } else {
            row.result = Some(compare(x, baseline, opts, tag)?);
        }
        comparisons.push(row);
    }

    let rows: Vec<RegressionRow> =
        obs.iter().map(|o| RegressionRow { cpu: o.cpu, pps: o.pps, qfi: o.qfi, class: o.class }).collect();
    let y: Vec<f64> = obs.iter().map(|o| o.latency).collect();
    let qopts = QuantileOptions { max_iter: opts.max_iter, tol: opts.tol };
    let quantile_fits: Vec<FitRow> = opts.taus.iter().map(|&tau| fit_tau(&rows, &y, tau, &qopts)).collect();
    for f in &quantile_fits {
        if let Some(w) = &f.warning {
            warnings.push(format!("tau={}: {w}", f.tau));
        }
        if f.fit.as_ref().is_some_and(|q| !q.converged) {
            warnings.push(format!("tau={}: quantile regression hit max_iter={} before converging", f.tau, opts.max_iter));
        }
    }

    let ecdf = by_class
        .iter()
        .map(|(&class, v)| Ok(EcdfSeries { class, points: ecdf(v)? }))
        .collect::<Result<Vec<_>, StatsError>>()?;

    let lowess = {
        let mut pairs: Vec<(f64, f64)> = obs.iter().map(|o| (o.cpu, o.latency)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match lowess(&xs, &ys, opts.lowess_frac, opts.lowess_iters) {
            Ok(fitted) => Some(LowessSeries {
                frac: opts.lowess_frac,
                robust_iters: opts.lowess_iters,
                points: pairs
                    .iter()
                    .zip(fitted)
                    .map(|(&(cpu_pct, latency_ns), fitted_ns)| LowessPoint { cpu_pct, latency_ns, fitted_ns })
                    .collect(),
            }),
            Err(e) => {
                warnings.push(format!("LOWESS skipped: {e}"));
                None
            }
        }
    };

    let groups = by_class.into_iter().map(|(class, latencies_ns)| RawGroup { class, latencies_ns }).collect();

    let inputs_meta: Vec<InputMeta> = inputs
        .iter()
        .map(|t| InputMeta { name: t.name.clone(), sha256: t.sha256.clone(), rows: t.samples.len(), baseline: t.baseline })
        .collect();
    let digest_src = serde_json::to_string(&(&inputs_meta, opts)).expect("serializable");
    let units = [
        ("latency", "ns"),
        ("cpu", "ns per CPU percentage point"),
        ("packets", "ns per packet/s"),
        ("qfi", "ns shift relative to the reference QFI"),
        ("class", "ns shift relative to Baseline"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    Ok(AnalysisReport {
        metadata: ReportMetadata {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: opts.seed,
            config_digest: sha256_hex(digest_src.as_bytes()),
            inputs: inputs_meta,
            options: opts.clone(),
            sample_unit: opts.window_agg_ms.map_or_else(|| "packet".into(), |ms| format!("window({ms} ms)")),
            units,
        },
        class_summary,
        qfi_summary,
        comparisons,
        quantile_fits,
        ecdf,
        lowess,
        groups,
        warnings,
    })
}

/// Loads traces and analyzes them.
pub fn analyze_paths(
    baselines: &[PathBuf],
    others: &[PathBuf],
    opts: &AnalyzeOptions,
) -> Result<AnalysisReport, HarnessError> {
    if baselines.is_empty() {
        return Err(HarnessError::MissingBaseline);
    }
    let mut inputs = Vec::new();
    for p in baselines {
        inputs.push(TraceInput::load(p, true)?);
    }
    for p in others {
        inputs.push(TraceInput::load(p, false)?);
    }
    analyze(&inputs, opts)
}
