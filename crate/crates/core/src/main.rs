use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use upflab::harness::{
    analyze_paths, load_scenario, render_report, resolve_out_dir, simulate, write_atomic, AnalysisReport,
    AnalyzeOptions, HarnessError, ReportFormat,
};
use upflab::traffic::ProfileTable;

#[derive(Parser)]
#[command(name = "upflab", version, about = "Simulate and analyze GTP-U decapsulation latency under noisy neighbors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its latency trace.
    Simulate {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: scenario setting, then $UPFLAB_OUT_DIR, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-window telemetry.
        #[arg(long)]
        telemetry: bool,
        /// Also write the raw hook event dump.
        #[arg(long)]
        events: bool,
    },
    /// Compare traces against Baseline and write an analysis JSON.
    Analyze {
        /// Baseline trace (repeatable).
        #[arg(long, required = true)]
        baseline: Vec<PathBuf>,
        /// Traces to compare against Baseline.
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        b_perm: usize,
        #[arg(long, default_value_t = 2_000)]
        b_boot: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.95,0.99")]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Confidence level of the BCa intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Analyze per-window medians of this width (ms) instead of packets.
        #[arg(long, value_name = "MS")]
        window_agg: Option<f64>,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        /// Output file (default: <out dir>/analysis.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render tables and plot data from an analysis JSON.
    Report {
        analysis: PathBuf,
        /// plain, delimited, or markdown.
        #[arg(long, default_value = "plain")]
        format: ReportFormat,
        /// Output directory (default: the analysis file's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the built-in multimedia replay profiles.
    Profiles {
        #[command(subcommand)]
        action: ProfilesAction,
    },
}

#[derive(Subcommand)]
enum ProfilesAction {
    List,
    Show { app: String },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { scenario, seed, out, telemetry, events } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.output.telemetry |= telemetry;
            cfg.output.events |= events;
            let dir = resolve_out_dir(out.as_deref(), cfg.output.dir.as_deref());
            let res = simulate(&cfg, &dir)?;
            println!("scenario       {}", cfg.name);
            println!("seed           {}", cfg.seed);
            println!("packets        {}", res.packets);
            for (name, n) in &res.packets_per_flow {
                println!("  {name:<12} {n}");
            }
            println!("samples        {}", res.samples);
            println!("wall time      {:.3} s", res.wall_time.as_secs_f64());
            println!("trace          {}", res.trace_path.display());
            for p in res.telemetry_path.iter().chain(&res.events_path) {
                println!("               {}", p.display());
            }
        }
        Command::Analyze { baseline, traces, b_perm, b_boot, taus, seed, level, window_agg, max_iter, out } => {
            let opts = AnalyzeOptions {
                b_perm,
                b_boot,
                taus,
                seed,
                level,
                window_agg_ms: window_agg,
                max_iter,
                ..AnalyzeOptions::default()
            };
            let report = analyze_paths(&baseline, &traces, &opts)?;
            let path = out.unwrap_or_else(|| resolve_out_dir(None, None).join("analysis.json"));
            write_atomic(&path, report.to_json().as_bytes())?;
            for row in &report.class_summary {
                println!(
                    "{:<14} n={:<6} median={:.2} p95={:.2} iqr={:.2}",
                    row.class.label(),
                    row.summary.n,
                    row.summary.median,
                    row.summary.p95,
                    row.summary.iqr
                );
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("analysis       {}", path.display());
        }
        Command::Report { analysis, format, out } => {
            let text = std::fs::read_to_string(&analysis).map_err(|e| HarnessError::Io { path: analysis.clone(), source: e })?;
            let report = AnalysisReport::from_json(&text, &analysis.display().to_string())?;
            let dir = out.unwrap_or_else(|| analysis.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            for p in render_report(&report, format, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Profiles { action } => {
            let table = ProfileTable::builtin();
            match action {
                ProfilesAction::List => {
                    println!("{:<10} {:>8} {:>8} {:>9}", "app", "dur_s", "pps", "mean_B");
                    for p in table.entries() {
                        println!("{:<10} {:>8.1} {:>8.1} {:>9}", p.app, p.duration_s, p.pps, p.mean_bytes);
                    }
                    println!("(table {})", table.version);
                }
                ProfilesAction::Show { app } => {
                    let p = table.lookup(&app)?;
                    println!("app          {}", p.app);
                    println!("duration_s   {}", p.duration_s);
                    println!("pps          {}", p.pps);
                    println!("mean_bytes   {}", p.mean_bytes);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
