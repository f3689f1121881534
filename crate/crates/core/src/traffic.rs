//! Per-flow packet schedules for the four traffic classes and the built-in
//! multimedia replay profiles.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gtpu::{self, GtpuPacket, Qfi, Teid, UeAddress};
use crate::seeding::{self, Domain};

pub const MIN_PACKET_BYTES: u16 = 64;
pub const MAX_PACKET_BYTES: u16 = 1500;
/// Inner size of the sensor's ICMP echo probes.
pub const PROBE_PACKET_BYTES: u16 = 98;
pub const DEFAULT_SIZE_CV: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("unknown application profile {name:?}; valid names: {}", valid.join(", "))]
    UnknownApp { name: String, valid: Vec<String> },
    #[error("unknown traffic class {0:?}")]
    UnknownClass(String),
    #[error("invalid flow spec: {0}")]
    Invalid(String),
    #[error("profile table line {line}: {msg}")]
    Table { line: usize, msg: String },
}

/// The four traffic patterns compared by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassKind {
    Baseline,
    Anomaly,
    ConstantRate,
    Multimedia,
}

impl ClassKind {
    pub const ALL: [ClassKind; 4] = [
        ClassKind::Baseline,
        ClassKind::Anomaly,
        ClassKind::ConstantRate,
        ClassKind::Multimedia,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ClassKind::Baseline => "Baseline",
            ClassKind::Anomaly => "Anomaly",
            ClassKind::ConstantRate => "Constant-Rate",
            ClassKind::Multimedia => "Multimedia",
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ClassKind {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' ' | '.'))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "baseline" => Ok(ClassKind::Baseline),
            "anomaly" => Ok(ClassKind::Anomaly),
            "constantrate" | "constrate" | "cbr" => Ok(ClassKind::ConstantRate),
            "multimedia" => Ok(ClassKind::Multimedia),
            _ => Err(TrafficError::UnknownClass(s.to_string())),
        }
    }
}

/// Traffic class of one flow. Multimedia flows name their replay profile.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TrafficClass {
    Baseline,
    Anomaly,
    ConstantRate,
    Multimedia(String),
}

impl TrafficClass {
    pub fn kind(&self) -> ClassKind {
        match self {
            TrafficClass::Baseline => ClassKind::Baseline,
            TrafficClass::Anomaly => ClassKind::Anomaly,
            TrafficClass::ConstantRate => ClassKind::ConstantRate,
            TrafficClass::Multimedia(_) => ClassKind::Multimedia,
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrafficClass::Multimedia(app) => write!(f, "Multimedia({app})"),
            other => f.write_str(other.kind().label()),
        }
    }
}

/// One row of the replay-profile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    pub app: String,
    pub duration_s: f64,
    pub pps: f64,
    pub mean_bytes: u16,
}

/// Multimedia replay profiles (duration, packet rate, mean packet size).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub version: String,
    entries: Vec<AppProfile>,
}

const BUILTIN_PROFILES: &[(&str, f64, f64, u16)] = &[
    ("Facebook", 43.8, 300.5, 1171),
    ("Instagram", 66.1, 410.8, 1193),
    ("LinkedIn", 70.1, 178.1, 929),
    ("PS Now", 59.4, 294.2, 906),
    ("Spotify", 146.3, 238.8, 842),
    ("TikTok", 63.9, 638.0, 974),
    ("Twitter", 68.9, 188.4, 967),
    ("Wikipedia", 77.4, 62.3, 883),
    ("YouTube", 63.4, 224.0, 1226),
];

impl ProfileTable {
    pub const BUILTIN_VERSION: &'static str = "multimedia-replay/1";

    pub fn builtin() -> Self {
        Self {
            version: Self::BUILTIN_VERSION.to_string(),
            entries: BUILTIN_PROFILES
                .iter()
                .map(|&(app, duration_s, pps, mean_bytes)| AppProfile {
                    app: app.to_string(),
                    duration_s,
                    pps,
                    mean_bytes,
                })
                .collect(),
        }
    }

    /// Parses `app,duration_s,pps,mean_bytes` rows. A header row is required;
    /// lines starting with `#` are ignored.
    pub fn from_delimited(text: &str, version: impl Into<String>) -> Result<Self, TrafficError> {
        let mut rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = rows.next().ok_or(TrafficError::Table {
            line: 1,
            msg: "empty table".into(),
        })?;
        let cols: Vec<String> = header.split(',').map(|c| c.trim().to_lowercase()).collect();
        if cols != ["app", "duration_s", "pps", "mean_bytes"] {
            return Err(TrafficError::Table {
                line: hline + 1,
                msg: format!("expected header app,duration_s,pps,mean_bytes, found {header:?}"),
            });
        }
        let mut entries = Vec::new();
        for (i, line) in rows {
            let err = |msg: String| TrafficError::Table { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", f.len())));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(format!("bad {what} {s:?}")));
            let profile = AppProfile {
                app: f[0].to_string(),
                duration_s: num(f[1], "duration_s")?,
                pps: num(f[2], "pps")?,
                mean_bytes: f[3].parse().map_err(|_| err(format!("bad mean_bytes {:?}", f[3])))?,
            };
            if !(profile.duration_s > 0.0 && profile.pps > 0.0)
                || !(MIN_PACKET_BYTES..=MAX_PACKET_BYTES).contains(&profile.mean_bytes)
            {
                return Err(err(format!("out-of-range values for {}", profile.app)));
            }
            entries.push(profile);
        }
        Ok(Self {
            version: version.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[AppProfile] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.app.clone()).collect()
    }

    pub fn lookup(&self, app: &str) -> Result<&AppProfile, TrafficError> {
        self.entries
            .iter()
            .find(|e| e.app.eq_ignore_ascii_case(app.trim()))
            .ok_or_else(|| TrafficError::UnknownApp {
                name: app.to_string(),
                valid: self.names(),
            })
    }
}

impl Default for ProfileTable {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Two-state on/off modulation used by the Anomaly class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub on_mean_ms: f64,
    pub off_mean_ms: f64,
    /// Intensity ratio between "on" and "off" periods.
    pub multiplier: f64,
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            on_mean_ms: 50.0,
            off_mean_ms: 50.0,
            multiplier: 10.0,
        }
    }
}

/// Traffic description of one PDU session.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub class: TrafficClass,
    pub ue: UeAddress,
    /// Data-network side of the inner datagrams.
    pub peer: UeAddress,
    pub teid: Teid,
    pub qfi: Qfi,
    pub rate_pps: f64,
    pub mean_size_bytes: u16,
    /// Coefficient of variation of Multimedia packet sizes.
    pub size_cv: f64,
    pub burst: BurstParams,
    pub duration_s: f64,
    /// Time of the first arrival.
    pub start_offset_ns: u64,
}

pub const DEFAULT_PEER: UeAddress = UeAddress::new(10, 100, 200, 1);

impl FlowSpec {
    pub fn new(class: TrafficClass, rate_pps: f64, mean_size_bytes: u16, duration_s: f64) -> Self {
        Self {
            class,
            ue: UeAddress::new(0, 0, 0, 0),
            peer: DEFAULT_PEER,
            teid: Teid(0),
            qfi: Qfi::new(9).expect("9 < 64"),
            rate_pps,
            mean_size_bytes,
            size_cv: DEFAULT_SIZE_CV,
            burst: BurstParams::default(),
            duration_s,
            start_offset_ns: 0,
        }
    }

    pub fn with_identity(mut self, ue: UeAddress, teid: Teid, qfi: Qfi) -> Self {
        self.ue = ue;
        self.teid = teid;
        self.qfi = qfi;
        self
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: String| Err(TrafficError::Invalid(m));
        if !(self.rate_pps.is_finite() && self.rate_pps > 0.0) {
            return bad(format!("rate_pps must be > 0, got {}", self.rate_pps));
        }
        if !(MIN_PACKET_BYTES..=MAX_PACKET_BYTES).contains(&self.mean_size_bytes) {
            return bad(format!(
                "mean_size_bytes must be in [{MIN_PACKET_BYTES}, {MAX_PACKET_BYTES}], got {}",
                self.mean_size_bytes
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if !(self.size_cv.is_finite() && self.size_cv >= 0.0) {
            return bad(format!("size_cv must be >= 0, got {}", self.size_cv));
        }
        let b = self.burst;
        if !(b.on_mean_ms > 0.0 && b.off_mean_ms > 0.0 && b.multiplier >= 1.0) {
            return bad(format!("burst parameters out of range: {b:?}"));
        }
        Ok(())
    }

    /// Number of packets the flow emits: `floor(rate * duration)`.
    pub fn packet_count(&self) -> usize {
        (self.rate_pps * self.duration_s + 1e-9).floor() as usize
    }

    fn duration_ns(&self) -> f64 {
        self.duration_s * 1e9
    }
}

/// Replay profile `app` from the built-in table.
pub fn profile_from_table(app: &str) -> Result<FlowSpec, TrafficError> {
    profile_from(&ProfileTable::builtin(), app)
}

pub fn profile_from(table: &ProfileTable, app: &str) -> Result<FlowSpec, TrafficError> {
    let p = table.lookup(app)?;
    Ok(FlowSpec::new(
        TrafficClass::Multimedia(p.app.clone()),
        p.pps,
        p.mean_bytes,
        p.duration_s,
    ))
}

/// Fixed-rate ICMP echo probes from the sensor UE.
pub fn sensor_flow(ue: UeAddress, teid: Teid, qfi: Qfi, rate_pps: f64, duration_s: f64) -> Result<FlowSpec, TrafficError> {
    let spec = FlowSpec::new(TrafficClass::Baseline, rate_pps, PROBE_PACKET_BYTES, duration_s).with_identity(ue, teid, qfi);
    spec.validate()?;
    Ok(spec)
}

/// Arrival-ordered packets of one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSchedule {
    pub spec: FlowSpec,
    entries: Vec<(u64, GtpuPacket)>,
}

impl PacketSchedule {
    pub fn entries(&self) -> &[(u64, GtpuPacket)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn arrivals(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn last_arrival_ns(&self) -> Option<u64> {
        self.entries.last().map(|(t, _)| *t)
    }
}

/// Builds packets of a flow, sharing one inner buffer per distinct size.
struct PacketFactory<'a> {
    spec: &'a FlowSpec,
    protocol: u8,
    cache: HashMap<u16, Arc<[u8]>>,
}

impl<'a> PacketFactory<'a> {
    fn new(spec: &'a FlowSpec) -> Self {
        let protocol = match spec.class {
            TrafficClass::Baseline => gtpu::IPPROTO_ICMP,
            _ => gtpu::IPPROTO_UDP,
        };
        Self {
            spec,
            protocol,
            cache: HashMap::new(),
        }
    }

    fn packet(&mut self, size: u16) -> GtpuPacket {
        let spec = self.spec;
        let protocol = self.protocol;
        let inner = self
            .cache
            .entry(size)
            .or_insert_with(|| gtpu::ipv4_datagram(spec.ue, spec.peer, protocol, size).into())
            .clone();
        GtpuPacket::new(spec.teid, Some(spec.qfi), inner).expect("sizes are clipped to >= 64 bytes")
    }
}

/// Generates the packet schedule of `spec`. Identical `(spec, seed)` pairs
/// give identical schedules; flows with different TEIDs draw from different
/// streams under the same seed.
pub fn schedule(spec: &FlowSpec, seed: u64) -> Result<PacketSchedule, TrafficError> {
    spec.validate()?;
    let mut rng = seeding::substream(seed, Domain::Schedule, u64::from(spec.teid.0));
    let n = spec.packet_count();
    let offset = spec.start_offset_ns;

    let times: Vec<u64> = match spec.class {
        TrafficClass::Anomaly => on_off_arrivals(spec, n, &mut rng)
            .into_iter()
            .map(|t| offset + t)
            .collect(),
        _ => {
            let period = 1e9 / spec.rate_pps;
            (0..n).map(|k| offset + (k as f64 * period).round() as u64).collect()
        }
    };

    let sizes: Vec<u16> = match spec.class {
        TrafficClass::Multimedia(_) if spec.size_cv > 0.0 => {
            let sigma2 = (1.0 + spec.size_cv * spec.size_cv).ln();
            let mu = f64::from(spec.mean_size_bytes).ln() - sigma2 / 2.0;
            let law = LogNormal::new(mu, sigma2.sqrt()).map_err(|e| TrafficError::Invalid(e.to_string()))?;
            (0..n)
                .map(|_| {
                    let s: f64 = law.sample(&mut rng);
                    s.round().clamp(f64::from(MIN_PACKET_BYTES), f64::from(MAX_PACKET_BYTES)) as u16
                })
                .collect()
        }
        _ => vec![spec.mean_size_bytes; n],
    };

    let mut factory = PacketFactory::new(spec);
    let entries = times
        .into_iter()
        .zip(sizes)
        .map(|(t, size)| (t, factory.packet(size)))
        .collect();
    Ok(PacketSchedule {
        spec: spec.clone(),
        entries,
    })
}

/// Arrival times (relative to flow start) of an on/off modulated flow.
///
/// The state path alternates exponentially distributed on and off periods;
/// the "on" intensity is `multiplier` times the "off" intensity. Given the
/// path, the `n` arrivals are i.i.d. draws from the normalized intensity,
/// i.e. a modulated Poisson process conditioned on its count, so the realized
/// mean rate is exact while arrivals keep their burstiness.
fn on_off_arrivals(spec: &FlowSpec, n: usize, rng: &mut impl Rng) -> Vec<u64> {
    let horizon = spec.duration_ns();
    let b = spec.burst;
    let on_law = Exp::new(1.0 / (b.on_mean_ms * 1e6)).expect("positive mean");
    let off_law = Exp::new(1.0 / (b.off_mean_ms * 1e6)).expect("positive mean");

    // (segment start, segment end, intensity)
    let mut segments: Vec<(f64, f64, f64)> = Vec::new();
    let mut on = rng.random::<f64>() < b.on_mean_ms / (b.on_mean_ms + b.off_mean_ms);
    let mut t = 0.0;
    while t < horizon {
        let dwell = if on { on_law.sample(rng) } else { off_law.sample(rng) };
        let end = (t + dwell).min(horizon);
        segments.push((t, end, if on { b.multiplier } else { 1.0 }));
        t = end;
        on = !on;
    }

    let mut cumulative = Vec::with_capacity(segments.len());
    let mut total = 0.0;
    for &(s, e, w) in &segments {
        total += (e - s) * w;
        cumulative.push(total);
    }

    let mut marks: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * total).collect();
    marks.sort_by(f64::total_cmp);
    let mut seg = 0;
    let mut out = Vec::with_capacity(n);
    for m in marks {
        while seg + 1 < segments.len() && cumulative[seg] <= m {
            seg += 1;
        }
        let (s, e, w) = segments[seg];
        let before = if seg == 0 { 0.0 } else { cumulative[seg - 1] };
        let at = (s + (m - before) / w).min(e);
        out.push((at.floor() as u64).min(horizon as u64 - 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ue(last: u8) -> UeAddress {
        UeAddress::new(10, 60, 0, last)
    }

    fn qfi(v: u8) -> Qfi {
        Qfi::new(v).unwrap()
    }

    #[test]
    fn table_lookups() {
        let tiktok = profile_from_table("TikTok").unwrap();
        assert_eq!(tiktok.duration_s, 63.9);
        assert_eq!(tiktok.rate_pps, 638.0);
        assert_eq!(tiktok.mean_size_bytes, 974);
        let wiki = profile_from_table("Wikipedia").unwrap();
        assert_eq!((wiki.duration_s, wiki.rate_pps, wiki.mean_size_bytes), (77.4, 62.3, 883));
        match profile_from_table("Netflix") {
            Err(TrafficError::UnknownApp { valid, .. }) => {
                assert_eq!(valid.len(), 9);
                assert!(valid.contains(&"PS Now".to_string()));
            }
            other => panic!("expected lookup error, got {other:?}"),
        }
    }

    #[test]
    fn delimited_table_loads() {
        let text = "app,duration_s,pps,mean_bytes\n# local capture\nNetflix,60,500.5,1300\n";
        let t = ProfileTable::from_delimited(text, "local/1").unwrap();
        assert_eq!(t.lookup("netflix").unwrap().pps, 500.5);
        assert!(ProfileTable::from_delimited("app,pps\n", "x").is_err());
        assert!(ProfileTable::from_delimited("app,duration_s,pps,mean_bytes\nX,1,1,20\n", "x").is_err());
    }

    #[test]
    fn sensor_schedule_is_exact() {
        let spec = sensor_flow(ue(1), Teid(1), qfi(1), 10.0, 6.0).unwrap();
        let s = schedule(&spec, 3).unwrap();
        assert_eq!(s.len(), 60);
        let t: Vec<u64> = s.arrivals().collect();
        assert!(t.windows(2).all(|w| w[1] - w[0] == 100_000_000));
        for (_, p) in s.entries() {
            assert_eq!(p.teid(), Teid(1));
            assert_eq!(gtpu::inner_ue_address(p, gtpu::Direction::Uplink).unwrap(), ue(1));
            assert_eq!(p.inner().len(), usize::from(PROBE_PACKET_BYTES));
        }
        assert!(sensor_flow(ue(1), Teid(1), qfi(1), 0.0, 6.0).is_err());
        assert!(sensor_flow(ue(1), Teid(1), qfi(1), -3.0, 6.0).is_err());
    }

    #[test]
    fn constant_rate_gaps() {
        let spec = FlowSpec::new(TrafficClass::ConstantRate, 100.0, 512, 1.0);
        let s = schedule(&spec, 0).unwrap();
        assert_eq!(s.len(), 100);
        let t: Vec<u64> = s.arrivals().collect();
        assert!(t.windows(2).all(|w| w[1] - w[0] == 10_000_000));
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = FlowSpec::new(TrafficClass::Anomaly, 500.0, 700, 2.0).with_identity(ue(3), Teid(3), qfi(9));
        let a = schedule(&spec, 11).unwrap();
        let b = schedule(&spec, 11).unwrap();
        let bytes = |s: &PacketSchedule| -> Vec<(u64, Vec<u8>)> {
            s.entries().iter().map(|(t, p)| (*t, gtpu::encode(p).unwrap())).collect()
        };
        assert_eq!(bytes(&a), bytes(&b));
        let c = schedule(&spec, 12).unwrap();
        assert_ne!(a.arrivals().collect::<Vec<_>>(), c.arrivals().collect::<Vec<_>>());
    }

    #[test]
    fn anomaly_is_bursty() {
        // 10 ms windows; peak window rate over mean rate.
        for seed in 0..20 {
            let spec = FlowSpec::new(TrafficClass::Anomaly, 2000.0, 800, 2.0);
            let s = schedule(&spec, seed).unwrap();
            let windows = (spec.duration_s * 100.0) as usize;
            let mut counts = vec![0usize; windows];
            for t in s.arrivals() {
                counts[(t / 10_000_000) as usize] += 1;
            }
            let mean = s.len() as f64 / windows as f64;
            let peak = *counts.iter().max().unwrap() as f64;
            assert!(peak / mean > 2.0, "seed {seed}: peak/mean {}", peak / mean);
        }
    }

    #[test]
    fn realized_rate_and_sizes() {
        let table = ProfileTable::builtin();
        let classes = [
            FlowSpec::new(TrafficClass::Baseline, 50.0, 98, 4.0),
            FlowSpec::new(TrafficClass::ConstantRate, 1234.5, 1000, 4.0),
            FlowSpec::new(TrafficClass::Anomaly, 800.0, 900, 4.0),
            profile_from(&table, "YouTube").unwrap(),
            profile_from(&table, "Wikipedia").unwrap(),
        ];
        for spec in &classes {
            for seed in 0..20 {
                let s = schedule(spec, seed).unwrap();
                let realized = s.len() as f64 / spec.duration_s;
                assert!(
                    (realized - spec.rate_pps).abs() <= 0.05 * spec.rate_pps,
                    "{} seed {seed}: {realized} vs {}",
                    spec.class,
                    spec.rate_pps
                );
                let t: Vec<u64> = s.arrivals().collect();
                assert!(t.windows(2).all(|w| w[0] <= w[1]));
                assert!(t.iter().all(|&x| (x as f64) < spec.duration_s * 1e9));
                for (_, p) in s.entries() {
                    let len = p.inner().len() as u16;
                    assert!((MIN_PACKET_BYTES..=MAX_PACKET_BYTES).contains(&len));
                }
            }
        }
    }

    #[test]
    fn multimedia_sizes_vary_around_mean() {
        let spec = profile_from_table("TikTok").unwrap();
        let s = schedule(&spec, 5).unwrap();
        let sizes: Vec<f64> = s.entries().iter().map(|(_, p)| p.inner().len() as f64).collect();
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        assert!((mean - 974.0).abs() < 30.0, "mean {mean}");
        let sd = (sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / sizes.len() as f64).sqrt();
        assert!(sd / mean > 0.2 && sd / mean < 0.35, "cv {}", sd / mean);
    }

    #[test]
    fn class_labels_parse() {
        for k in ClassKind::ALL {
            assert_eq!(k.label().parse::<ClassKind>().unwrap(), k);
        }
        assert_eq!("ConstantRate".parse::<ClassKind>().unwrap(), ClassKind::ConstantRate);
        assert!("Streaming".parse::<ClassKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(FlowSpec::new(TrafficClass::ConstantRate, 10.0, 63, 1.0).validate().is_err());
        assert!(FlowSpec::new(TrafficClass::ConstantRate, 10.0, 1501, 1.0).validate().is_err());
        assert!(FlowSpec::new(TrafficClass::ConstantRate, 10.0, 64, 0.0).validate().is_err());
    }
}
