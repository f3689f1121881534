use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{write_atomic, AnalysisReport, HarnessError};
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Plain,
    Delimited,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Plain => "txt",
            ReportFormat::Delimited => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" | "text" => Ok(ReportFormat::Plain),
            "delimited" | "csv" => Ok(ReportFormat::Delimited),
            "markdown" | "markdown-table" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown format {s:?}; expected plain, delimited, or markdown")),
        }
    }
}

/// A rendered table: a file stem, a caption, and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub stem: &'static str,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Plain => self.plain(),
            ReportFormat::Delimited => self.delimited(),
            ReportFormat::Markdown => self.markdown(),
        }
    }

    fn plain(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| r[j].chars().count())
                    .chain([self.headers[j].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (j, c) in cells.iter().enumerate() {
                if j > 0 {
                    s.push_str("  ");
                }
                let pad = widths[j] - c.chars().count();
                if j == 0 {
                    s.push_str(c);
                    s.extend(std::iter::repeat_n(' ', pad));
                } else {
                    s.extend(std::iter::repeat_n(' ', pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.headers));
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    fn delimited(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("Vec sink");
        for r in &self.rows {
            w.write_record(r).expect("Vec sink");
        }
        String::from_utf8(w.into_inner().expect("Vec sink")).expect("utf-8 cells")
    }

    fn markdown(&self) -> String {
        let esc = |c: &String| c.replace('|', "\\|");
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.headers.iter().map(esc).collect::<Vec<_>>().join(" | "));
        let _ = writeln!(out, "|{}", self.headers.iter().enumerate().map(|(j, _)| if j == 0 { " --- |" } else { " ---: |" }).collect::<String>());
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.iter().map(esc).collect::<Vec<_>>().join(" | "));
        }
        out
    }
}

fn ns(v: f64) -> String {
    format!("{v:.2}")
}

fn pval(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

fn tau_label(tau: f64) -> String {
    let pct = tau * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("p{}", pct.round() as i64)
    } else {
        format!("p{}", format!("{pct:.3}").trim_end_matches('0'))
    }
}

fn summary_cells(first: String, s: &Summary) -> Vec<String> {
    vec![first, s.n.to_string(), ns(s.median), ns(s.p90), ns(s.p95), ns(s.p99), ns(s.iqr)]
}

/// Builds every table of the report, in a fixed order.
pub fn render_tables(r: &AnalysisReport) -> Vec<Table> {
    let summary_headers = |first: &str| {
        [first, "n", "Median", "p90", "p95", "p99", "IQR"].iter().map(|s| s.to_string()).collect::<Vec<_>>()
    };
    let by_class = Table {
        stem: "latency_by_class",
        title: "Latency summary by UE traffic class (ns)".into(),
        headers: summary_headers("UE Traffic"),
        rows: r.class_summary.iter().map(|c| summary_cells(c.class.label().into(), &c.summary)).collect(),
    };
    let by_qfi = Table {
        stem: "latency_by_qfi",
        title: "Latency summary by QFI (ns)".into(),
        headers: summary_headers("QFI"),
        rows: r.qfi_summary.iter().map(|q| summary_cells(q.qfi.to_string(), &q.summary)).collect(),
    };
    let dash = || "--".to_string();
    let tests = Table {
        stem: "group_tests",
        title: "Effect sizes and tests against Baseline".into(),
        headers: ["Comparison", "ΔMedian", "p_perm", "Δp95", "p_perm", "MW p", "δ", "Magnitude"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: r
            .comparisons
            .iter()
            .map(|c| match &c.result {
                Some(g) => vec![
                    c.class.label().into(),
                    ns(g.delta_median_ns),
                    pval(g.p_perm_median),
                    ns(g.delta_p95_ns),
                    pval(g.p_perm_p95),
                    pval(g.p_mwu),
                    format!("{:.3}", g.cliffs_delta),
                    g.magnitude.label().into(),
                ],
                None => {
                    let mut row = vec![c.class.label().to_string()];
                    row.extend(std::iter::repeat_with(dash).take(6));
                    row.push("skipped".into());
                    row
                }
            })
            .collect(),
    };
    let level = r.metadata.options.level * 100.0;
    let intervals = Table {
        stem: "group_intervals",
        title: format!("BCa {level}% intervals against Baseline (ns)"),
        headers: ["Comparison", "ΔMedian", "lo", "hi", "Δp95", "lo", "hi"].iter().map(|s| s.to_string()).collect(),
        rows: r
            .comparisons
            .iter()
            .filter_map(|c| {
                let g = c.result.as_ref()?;
                Some(vec![
                    c.class.label().into(),
                    format!("{:.3}", g.delta_median_ns),
                    format!("{:.3}", g.ci_median.lo),
                    format!("{:.3}", g.ci_median.hi),
                    format!("{:.3}", g.delta_p95_ns),
                    format!("{:.3}", g.ci_p95.lo),
                    format!("{:.3}", g.ci_p95.hi),
                ])
            })
            .collect(),
    };

    // Union of dummy columns across fits, in design order.
    let mut qfis = BTreeSet::new();
    let mut classes: Vec<String> = Vec::new();
    for f in r.quantile_fits.iter().filter_map(|f| f.fit.as_ref()) {
        qfis.extend(f.qfi.keys().copied());
        for c in f.columns.iter().filter_map(|c| c.strip_prefix("class_")) {
            if !classes.iter().any(|x| x == c) {
                classes.push(c.to_string());
            }
        }
    }
    let mut headers: Vec<String> = ["Quantile", "n", "CPU", "Packets"].iter().map(|s| s.to_string()).collect();
    headers.extend(qfis.iter().map(|q| format!("QFI_{q}")));
    headers.extend(classes.iter().cloned());
    let beta = |v: Option<f64>| v.map_or_else(dash, |b| format!("{b:.4}"));
    let regression = Table {
        stem: "quantile_regression",
        title: "Quantile regression coefficients (ns per covariate unit)".into(),
        headers,
        rows: r
            .quantile_fits
            .iter()
            .map(|f| {
                let mut row = vec![tau_label(f.tau)];
                match &f.fit {
                    Some(q) => {
                        row.push(q.n.to_string());
                        row.push(beta(q.cpu));
                        row.push(beta(q.packets));
                        row.extend(qfis.iter().map(|k| beta(q.qfi.get(k).copied())));
                        row.extend(classes.iter().map(|c| beta(q.class.get(c).copied())));
                    }
                    None => row.extend(std::iter::repeat_with(dash).take(3 + qfis.len() + classes.len())),
                }
                row
            })
            .collect(),
    };
    let convergence = Table {
        stem: "quantile_convergence",
        title: "Quantile regression solver status".into(),
        headers: ["Quantile", "Intercept", "Converged", "Iterations", "Pinball loss", "Dropped"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: r
            .quantile_fits
            .iter()
            .map(|f| match &f.fit {
                Some(q) => vec![
                    tau_label(f.tau),
                    format!("{:.4}", q.intercept),
                    if q.converged { "yes" } else { "no" }.into(),
                    q.iterations.to_string(),
                    format!("{:.6}", q.loss),
                    f.dropped_columns.join(" "),
                ],
                None => vec![tau_label(f.tau), dash(), "failed".into(), dash(), dash(), f.warning.clone().unwrap_or_default()],
            })
            .collect(),
    };
    vec![by_class, by_qfi, tests, intervals, regression, convergence]
}

fn slug(label: &str) -> String {
    label.to_lowercase().replace(|c: char| !c.is_ascii_alphanumeric(), "_")
}

/// Writes one file per table plus plot-data CSVs (ECDF per class, raw groups
/// for violins, LOWESS pairs). Returns the written paths in order.
pub fn render_report(r: &AnalysisReport, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), HarnessError> {
        let p = out_dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };
    for t in render_tables(r) {
        put(format!("{}.{}", t.stem, format.extension()), t.render(format))?;
    }
    for s in &r.ecdf {
        let mut body = String::from("decap_latency_ns,fraction\n");
        for p in &s.points {
            let _ = writeln!(body, "{},{}", p.value, p.fraction);
        }
        put(format!("ecdf_{}.csv", slug(s.class.label())), body)?;
    }
    let mut body = String::from("traffic_class,decap_latency_ns\n");
    for g in &r.groups {
        for v in &g.latencies_ns {
            let _ = writeln!(body, "{},{v}", g.class.label());
        }
    }
    put("violin_groups.csv".into(), body)?;
    if let Some(l) = &r.lowess {
        let mut body = String::from("cpu_pct,decap_latency_ns,lowess_ns\n");
        for p in &l.points {
            let _ = writeln!(body, "{},{},{}", p.cpu_pct, p.latency_ns, p.fitted_ns);
        }
        put("lowess_cpu_latency.csv".into(), body)?;
    }
    Ok(written)
}
