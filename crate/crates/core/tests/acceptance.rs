//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};

use upflab::datapath::{self, EventDumpWriter};
use upflab::gtpu::{self, GtpuPacket, Qfi, Teid, UeAddress};
use upflab::harness::{self, load_scenario, run_scenario};
use upflab::probe::{FlowContext, FlowRegistry, Probe};
use upflab::stats::{self, GroupStatistic, Magnitude, QuantileOptions};
use upflab::traffic::{self, ClassKind, FlowSpec, TrafficClass};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[acceptance] criterion {id:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn q(v: &[f64], p: f64) -> f64 {
    stats::quantile(v, p).unwrap()
}

#[test]
fn criterion_01_codec_roundtrip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    let mut failures = 0;
    for _ in 0..10_000 {
        let src = UeAddress(rng.random());
        let dst = UeAddress(rng.random());
        let proto = if rng.random_bool(0.5) { gtpu::IPPROTO_ICMP } else { gtpu::IPPROTO_UDP };
        let inner = gtpu::ipv4_datagram(src, dst, proto, rng.random_range(28..=1500));
        let qfi = rng.random_bool(0.8).then(|| Qfi::new(rng.random_range(0..=63)).unwrap());
        let p = GtpuPacket::new(Teid(rng.random()), qfi, inner).unwrap();
        let bytes = gtpu::encode(&p).unwrap();
        if gtpu::decode(&bytes).as_ref() != Ok(&p) {
            failures += 1;
        }
    }

    // TEID 1, QFI 9, uplink PDU Session Container, 28-byte ICMP inner packet.
    let inner = gtpu::ipv4_datagram(UeAddress::new(10, 60, 0, 1), UeAddress::new(8, 8, 8, 8), gtpu::IPPROTO_ICMP, 28);
    let mut hand = vec![
        0x34, 0xFF, 0x00, 0x24, // flags (v1, PT, E), G-PDU, length 8 + 28
        0x00, 0x00, 0x00, 0x01, // TEID
        0x00, 0x00, 0x00, 0x85, // sequence, N-PDU, next extension: PDU Session Container
        0x01, 0x10, 0x09, 0x00, // length 1 word, UL, QFI 9, no further extension
    ];
    hand.extend_from_slice(&inner);
    let decoded = gtpu::decode(&hand).unwrap();
    let hand_ok = decoded.teid() == Teid(1)
        && decoded.qfi() == Some(Qfi::new(9).unwrap())
        && decoded.inner() == &inner[..]
        && gtpu::encode(&decoded).unwrap() == hand;
    let secs = started.elapsed().as_secs_f64();
    let pass = failures == 0 && hand_ok && secs < 5.0;
    report(1, "codec", pass, &format!("10000 packets, {failures} mismatches, hand vector ok={hand_ok}, {secs:.2} s"));
    assert!(pass);
}

/// Pairs `gtp_entry` and `netif_rx` rows of an event dump in one pass.
fn pairing_oracle(dump: &str, target: &str) -> Vec<(u64, u64)> {
    let mut open: HashMap<&str, u64> = HashMap::new();
    let mut out = Vec::new();
    for line in dump.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let ts: u64 = f[2].parse().unwrap();
        match f[1] {
            "gtp_entry" if f[3] == target => {
                assert!(open.insert(f[0], ts).is_none(), "handle reused");
            }
            "netif_rx" => {
                if let Some(start) = open.remove(f[0]) {
                    out.push((ts, ts - start));
                }
            }
            _ => {}
        }
    }
    assert!(open.is_empty());
    out
}

#[test]
fn criterion_02_probe_fidelity() {
    let started = Instant::now();
    let sensor_ue = UeAddress::new(10, 60, 0, 1);
    let sensor = traffic::sensor_flow(sensor_ue, Teid(1), Qfi::new(1).unwrap(), 100.0, 10.0).unwrap();
    let mut bursty = FlowSpec::new(TrafficClass::Anomaly, 6000.0, 900, 10.0);
    bursty = bursty.with_identity(UeAddress::new(10, 60, 0, 2), Teid(2), Qfi::new(9).unwrap());
    let cbr = FlowSpec::new(TrafficClass::ConstantRate, 3900.0, 400, 10.0).with_identity(
        UeAddress::new(10, 60, 0, 3),
        Teid(3),
        Qfi::new(5).unwrap(),
    );
    let schedules: Vec<_> = [sensor, bursty, cbr].iter().map(|s| traffic::schedule(s, 77).unwrap()).collect();
    let total: usize = schedules.iter().map(|s| s.len()).sum();
    let config = datapath::DatapathConfig {
        base_decap_cost_ns: 20_000,
        per_byte_cost_ns: 20.0,
        window_ms: 100.0,
        discipline: datapath::Discipline::StrictPriority,
        priority: datapath::PriorityMap::new([(Qfi::new(5).unwrap(), 0), (Qfi::new(1).unwrap(), 1)]),
        ..Default::default()
    };
    let (events, telemetry) = datapath::run(&config, &schedules, 10_000_000_000, 77).unwrap();
    let mut dump = EventDumpWriter::new(Vec::new()).unwrap();
    for e in &events {
        dump.write(e).unwrap();
    }
    let dump = String::from_utf8(dump.into_inner()).unwrap();

    let mut registry = FlowRegistry::new();
    registry.register(sensor_ue, FlowContext { teid: Teid(1), qfi: Qfi::new(1).unwrap(), class: ClassKind::Anomaly });
    let mut probe = Probe::new([sensor_ue], gtpu::Direction::Uplink);
    let samples = probe.attach(&events, &telemetry, &registry).unwrap();
    let oracle = pairing_oracle(&dump, &sensor_ue.to_string());
    let got: Vec<(u64, u64)> = samples.iter().map(|s| (s.emit_time_ns, s.decap_latency_ns)).collect();
    let secs = started.elapsed().as_secs_f64();
    let pass = total >= 100_000 && got == oracle && probe.state.is_empty() && secs < 10.0;
    report(
        2,
        "probe fidelity",
        pass,
        &format!(
            "{total} packets, {} samples vs {} oracle pairs, maps empty={}, {secs:.2} s",
            got.len(),
            oracle.len(),
            probe.state.is_empty()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_cliffs_magnitude_labels() {
    let cases = [(0.043, Magnitude::Negligible), (-0.484, Magnitude::Large), (-0.269, Magnitude::Small)];
    let got: Vec<Magnitude> = cases.iter().map(|(d, _)| Magnitude::of(*d)).collect();
    let pass = cases.iter().zip(&got).all(|((_, want), g)| want == g);
    report(3, "Cliff's delta labels", pass, &format!("{got:?}"));
    assert!(pass);
}

#[test]
fn criterion_04_mwu_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = (0.0f64, 0, 0);
    for _ in 0..200 {
        let nx = rng.random_range(1..=6);
        let ny = rng.random_range(1..=6);
        let x: Vec<f64> = (0..nx).map(|_| rng.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = (0..ny).map(|_| rng.random_range(0.0..100.0)).collect();
        let exact = brute_force_mwu_p(&x, &y);
        let approx = stats::mwu_approx_p(&x, &y).unwrap().p_two_sided;
        let d = (approx - exact).abs();
        if d > worst.0 {
            worst = (d, nx, ny);
        }
    }
    let triple = stats::mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap().p_two_sided;
    let pass = worst.0 <= 0.05 && (triple - 0.1).abs() < 1e-12;
    report(
        4,
        "MWU exactness",
        pass,
        &format!("max |p_approx - p_exact| = {:.4} at nx={}, ny={}; [1,2,3] vs [4,5,6] p = {triple}", worst.0, worst.1, worst.2),
    );
    assert!(pass);
}

/// Two-sided exact p by enumerating every relabeling, U by pair counting.
fn brute_force_mwu_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (n, nx) = (pooled.len(), x.len());
    let u = |a: &[f64], b: &[f64]| {
        a.iter().map(|ai| b.iter().map(|bj| if ai > bj { 1.0 } else if ai == bj { 0.5 } else { 0.0 }).sum::<f64>()).sum::<f64>()
    };
    let mean = (nx * (n - nx)) as f64 / 2.0;
    let obs = (u(x, y) - mean).abs();
    let (mut hit, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != nx {
            continue;
        }
        let a: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| pooled[i]).collect();
        let b: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| pooled[i]).collect();
        total += 1;
        if (u(&a, &b) - mean).abs() >= obs - 1e-9 {
            hit += 1;
        }
    }
    f64::from(hit) / f64::from(total)
}

#[test]
fn criterion_05_permutation_calibration() {
    let started = Instant::now();
    let law = LogNormal::new(3.0, 0.6).unwrap();
    let mut ps: Vec<f64> = (0..200u64)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
            let x: Vec<f64> = (0..60).map(|_| law.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..60).map(|_| law.sample(&mut rng)).collect();
            stats::permutation_test(&x, &y, GroupStatistic::MedianDiff, 2000, trial).unwrap()
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    let ks = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    let pass = ks <= 0.1 && secs < 120.0;
    report(5, "permutation calibration", pass, &format!("KS distance {ks:.4} over 200 trials, B=2000, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_06_bca_coverage() {
    let started = Instant::now();
    let law = LogNormal::new(0.0, 0.5).unwrap();
    let shift = 1.0;
    let covered = (0..500u64)
        .filter(|&trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(6000 + trial);
            let x: Vec<f64> = (0..60).map(|_| law.sample(&mut rng) + shift).collect();
            let y: Vec<f64> = (0..60).map(|_| law.sample(&mut rng)).collect();
            let ci = stats::bca_bootstrap_ci(&x, &y, GroupStatistic::MedianDiff, 1000, 0.95, trial).unwrap();
            ci.lo <= shift && shift <= ci.hi
        })
        .count();
    let rate = covered as f64 / 500.0;
    let secs = started.elapsed().as_secs_f64();
    let pass = (0.90..=0.98).contains(&rate) && secs < 300.0;
    report(6, "BCa coverage", pass, &format!("{covered}/500 = {rate:.3} covered the true shift, {secs:.1} s"));
    assert!(pass);
}

fn sign_condition(r: &[f64], tau: f64, p: usize) -> bool {
    let n = r.len() as f64;
    let neg = r.iter().filter(|&&v| v < 0.0).count() as f64 / n;
    let pos = r.iter().filter(|&&v| v > 0.0).count() as f64 / n;
    neg <= tau + p as f64 / n + 1e-12 && pos <= 1.0 - tau + p as f64 / n + 1e-12
}

#[test]
fn criterion_07_quantile_regression() {
    let opts = QuantileOptions::default();
    let names = ["intercept".to_string()];
    let ones = |n| nalgebra::DMatrix::from_element(n, 1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut converged_checks = Vec::new();

    let y: Vec<f64> = (0..151).map(|_| rng.random_range(10.0..40.0f64).powf(1.3)).collect();
    let med = stats::fit_quantile(&ones(y.len()), &names, &y, 0.5, &opts).unwrap();
    let median_err = (med.beta[0] - q(&y, 0.5)).abs();
    if med.converged {
        converged_checks.push(sign_condition(&y.iter().map(|v| v - med.beta[0]).collect::<Vec<_>>(), 0.5, 1));
    }

    let y95: Vec<f64> = (0..300).map(|_| LogNormal::new(9.0, 0.7).unwrap().sample(&mut rng)).collect();
    let f95 = stats::fit_quantile(&ones(y95.len()), &names, &y95, 0.95, &opts).unwrap();
    let (lo, hi) = y95.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let grid_min = (0..10_000)
        .map(|k| {
            let b = lo + (hi - lo) * k as f64 / 9_999.0;
            stats::pinball_loss(&y95.iter().map(|v| v - b).collect::<Vec<_>>(), 0.95)
        })
        .fold(f64::MAX, f64::min);
    let grid_ok = f95.loss <= grid_min + 1e-9;
    if f95.converged {
        converged_checks.push(sign_condition(&y95.iter().map(|v| v - f95.beta[0]).collect::<Vec<_>>(), 0.95, 1));
    }

    // Multi-covariate fits on synthetic telemetry-like rows.
    for (k, &tau) in [0.5, 0.95, 0.99].iter().enumerate() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let class = [ClassKind::Baseline, ClassKind::Anomaly, ClassKind::ConstantRate][(i + k) % 3];
            let cpu = rng.random_range(5.0..80.0);
            let pps = rng.random_range(100.0..20_000.0);
            let noise = Pareto::new(1.0, 2.5).unwrap().sample(&mut rng) * 500.0;
            rows.push(stats::RegressionRow { cpu, pps, qfi: if i % 2 == 0 { 1 } else { 9 }, class });
            y.push(20_000.0 + 50.0 * cpu + 0.2 * pps + noise);
        }
        let design = stats::DesignMatrix::from_rows(&rows).unwrap();
        let fit = stats::quantile_regression(&design, &y, tau, &opts).unwrap();
        if fit.converged {
            let beta = nalgebra::DVector::from_vec(fit.beta.clone());
            let pred = &design.data * beta;
            let r: Vec<f64> = y.iter().zip(pred.iter()).map(|(a, b)| a - b).collect();
            converged_checks.push(sign_condition(&r, tau, design.columns.len()));
        }
    }

    let tail: Vec<f64> = (0..40).map(|_| Pareto::new(1000.0, 1.1).unwrap().sample(&mut rng)).collect();
    let short = stats::fit_quantile(&ones(40), &names, &tail, 0.99, &QuantileOptions { max_iter: 10, tol: 1e-8 }).unwrap();

    let optimality = !converged_checks.is_empty() && converged_checks.iter().all(|&b| b);
    let pass = median_err < 1e-6 && grid_ok && optimality && !short.converged;
    report(
        7,
        "quantile regression",
        pass,
        &format!(
            "median err {median_err:.2e}; p95 loss {:.6} vs grid {grid_min:.6}; sign condition {}/{} converged fits; tau=0.99 max_iter=10 converged={}",
            f95.loss,
            converged_checks.iter().filter(|&&b| b).count(),
            converged_checks.len(),
            short.converged
        ),
    );
    assert!(pass);
}

fn sensor_latencies(name: &str) -> Vec<f64> {
    let cfg = load_scenario(&scenario_dir().join(format!("{name}.toml"))).unwrap();
    run_scenario(&cfg, false).unwrap().samples.iter().map(|s| s.decap_latency_ns as f64).collect()
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_08_directional_reproduction() {
    let pooled = |class: &str| {
        let mut v = sensor_latencies(&format!("scenario-i-{class}"));
        v.extend(sensor_latencies(&format!("scenario-ii-{class}")));
        v
    };
    let anomaly = pooled("anomaly");
    let cbr = pooled("constant-rate");
    let (med_a, med_c) = (q(&anomaly, 0.5), q(&cbr, 0.5));
    let iqr = |v: &[f64]| q(v, 0.75) - q(v, 0.25);
    let (iqr_a, iqr_c) = (iqr(&anomaly), iqr(&cbr));
    let p99: Vec<f64> = (1..=5).map(|l| q(&sensor_latencies(&format!("load-{l}")), 0.99)).collect();
    let rho = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &p99);
    let pass = med_c < med_a && iqr_a > iqr_c && rho >= 0.9;
    report(
        8,
        "directional reproduction",
        pass,
        &format!(
            "median CR {med_c:.0} < Anomaly {med_a:.0} ns; IQR Anomaly {iqr_a:.0} > CR {iqr_c:.0} ns; sweep p99 {:?} rho={rho:.2}",
            p99.iter().map(|v| v.round()).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

fn upflab(args: &[&str], out_dir: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_upflab"))
        .args(args)
        .env(harness::OUT_DIR_ENV, out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "upflab {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path) -> (Vec<(String, Vec<u8>)>, u64) {
    let scen = scenario_dir();
    let mut packets = 0;
    for name in ["scenario-ii-baseline", "scenario-ii-anomaly"] {
        let path = scen.join(format!("{name}.toml"));
        let stdout = upflab(&["simulate", path.to_str().unwrap(), "--seed", "2024", "--out", dir.to_str().unwrap()], dir);
        packets += stdout
            .lines()
            .find_map(|l| l.strip_prefix("packets").map(|v| v.trim().parse::<u64>().unwrap()))
            .unwrap();
    }
    let base = dir.join("scenario-ii-baseline.trace.csv");
    let other = dir.join("scenario-ii-anomaly.trace.csv");
    let analysis = dir.join("analysis.json");
    upflab(
        &["analyze", "--baseline", base.to_str().unwrap(), other.to_str().unwrap(), "--seed", "7", "--out", analysis.to_str().unwrap()],
        dir,
    );
    upflab(&["report", analysis.to_str().unwrap(), "--format", "markdown"], dir);
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    (files, packets)
}

#[test]
fn criterion_09_end_to_end_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let (first, packets) = pipeline(a.path());
    let secs = started.elapsed().as_secs_f64();
    let (second, _) = pipeline(b.path());
    let identical = first == second;
    let pass = identical && first.len() >= 8 && packets <= 500_000 && secs <= 60.0;
    report(
        9,
        "end-to-end determinism",
        pass,
        &format!("{} files byte-identical={identical}; {packets} packets; one pipeline {secs:.1} s", first.len()),
    );
    assert!(pass);
}

/// Per-point weighted least squares with tricube weights over the
/// ceil(frac * n) nearest neighbours, solved from the 2x2 normal equations.
fn lowess_oracle(x: &[f64], y: &[f64], frac: f64) -> Vec<f64> {
    let n = x.len();
    let k = ((frac * n as f64).ceil() as usize).clamp(2, n);
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = x.iter().map(|v| (v - x[i]).abs()).collect();
            d.sort_by(f64::total_cmp);
            let h = d[k - 1];
            let (mut a, mut b) = (Matrix2::zeros(), Vector2::zeros());
            for j in 0..n {
                let u = (x[j] - x[i]).abs() / h;
                let w = if u < 1.0 { (1.0 - u.powi(3)).powi(3) } else { 0.0 };
                a += w * Matrix2::new(1.0, x[j], x[j], x[j] * x[j]);
                b += w * Vector2::new(y[j], x[j] * y[j]);
            }
            let beta = a.lu().solve(&b).unwrap();
            beta[0] + beta[1] * x[i]
        })
        .collect()
}

#[test]
fn criterion_10_lowess() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let x: Vec<f64> = (0..200).map(|_| rng.random_range(-50.0..50.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let line_err = stats::lowess(&x, &y, 1.0, 0)
        .unwrap()
        .iter()
        .zip(&x)
        .map(|(f, v)| (f - (2.0 * v + 1.0)).abs())
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(20..150);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sqrt() * 3.0 + rng.random_range(-2.0..2.0)).collect();
        let frac = rng.random_range(0.15..1.0);
        let got = stats::lowess(&x, &y, frac, 0).unwrap();
        for (a, b) in got.iter().zip(lowess_oracle(&x, &y, frac)) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = line_err <= 1e-9 && worst <= 1e-6;
    report(10, "LOWESS", pass, &format!("line error {line_err:.2e}; max deviation from direct solve {worst:.2e} over 100 datasets"));
    assert!(pass);
}
