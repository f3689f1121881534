use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer};

use super::{sha256_hex, HarnessError};
use crate::datapath::{DatapathConfig, Discipline, PriorityMap, TimerStart};
use crate::gtpu::{Direction, Qfi, Teid, UeAddress};
use crate::traffic::{self, BurstParams, ClassKind, FlowSpec, ProfileTable, TrafficClass, PROBE_PACKET_BYTES};

pub const SCHEMA_VERSION: i64 = 1;

const DEFAULT_SENSOR_PPS: f64 = 10.0;
const DEFAULT_NEIGHBOR_BYTES: u16 = 1000;

/// One validation problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Accepts TOML integers and floats alike.
#[derive(Debug, Clone, Copy)]
struct Num(f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: Option<i64>,
    name: Option<String>,
    duration_s: Option<Num>,
    seed: Option<i64>,
    condition: Option<String>,
    direction: Option<String>,
    datapath: Option<RawDatapath>,
    qfi_priority: Option<BTreeMap<String, i64>>,
    output: Option<RawOutput>,
    #[serde(default)]
    flows: Vec<RawFlow>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatapath {
    base_decap_cost_ns: Option<i64>,
    per_byte_cost_ns: Option<Num>,
    jitter_sigma: Option<Num>,
    discipline: Option<String>,
    core_count: Option<i64>,
    window_ms: Option<Num>,
    timer: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    telemetry: Option<bool>,
    events: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBurst {
    on_mean_ms: Option<Num>,
    off_mean_ms: Option<Num>,
    multiplier: Option<Num>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    name: Option<String>,
    #[serde(default)]
    sensor: bool,
    class: Option<String>,
    app: Option<String>,
    ue: Option<String>,
    teid: Option<i64>,
    qfi: Option<i64>,
    rate_pps: Option<Num>,
    mean_size_bytes: Option<i64>,
    size_cv: Option<Num>,
    burst: Option<RawBurst>,
    duration_s: Option<Num>,
    start_offset_ms: Option<Num>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedFlow {
    pub name: String,
    pub spec: FlowSpec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub telemetry: bool,
    pub events: bool,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    /// Label written to the trace's `traffic_class` column.
    pub condition: ClassKind,
    pub direction: Direction,
    pub sensor: NamedFlow,
    pub neighbors: Vec<NamedFlow>,
    pub datapath: DatapathConfig,
    pub output: OutputConfig,
    /// SHA-256 of the scenario source text.
    pub digest: String,
}

impl ScenarioConfig {
    pub fn flows(&self) -> impl Iterator<Item = &NamedFlow> {
        std::iter::once(&self.sensor).chain(&self.neighbors)
    }

    /// End of the latest flow.
    pub fn horizon_ns(&self) -> u64 {
        self.flows()
            .map(|f| f.spec.start_offset_ns + (f.spec.duration_s * 1e9).ceil() as u64)
            .max()
            .unwrap_or(0)
    }

    pub fn packet_estimate(&self) -> usize {
        self.flows().map(|f| f.spec.packet_count()).sum()
    }
}

struct Checker {
    issues: Vec<Issue>,
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { path: path.into(), message: message.into() });
    }

    fn positive(&mut self, path: &str, v: Option<Num>, default: Option<f64>) -> Option<f64> {
        match v.map(|n| n.0).or(default) {
            Some(x) if x.is_finite() && x > 0.0 => Some(x),
            Some(x) => {
                self.push(path, format!("must be a positive number, got {x}"));
                None
            }
            None => {
                self.push(path, "is required");
                None
            }
        }
    }

    fn non_negative(&mut self, path: &str, v: Option<Num>, default: f64) -> Option<f64> {
        let x = v.map_or(default, |n| n.0);
        if x.is_finite() && x >= 0.0 {
            Some(x)
        } else {
            self.push(path, format!("must be >= 0, got {x}"));
            None
        }
    }
}

/// Parses and validates scenario text. `origin` names the source in messages
/// and provides the default scenario name.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioConfig, HarnessError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| HarnessError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut c = Checker { issues: Vec::new() };

    match raw.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(v) => c.push("schema_version", format!("unsupported version {v}; this build reads {SCHEMA_VERSION}")),
        None => c.push("schema_version", "is required"),
    }
    let name = raw.name.clone().unwrap_or_else(|| {
        Path::new(origin).file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    });
    if name.is_empty() || name.contains(['/', '\\']) {
        c.push("name", format!("{name:?} is not usable as a file name"));
    }
    let duration_s = c.positive("duration_s", raw.duration_s, None);
    let seed = match raw.seed {
        Some(s) if s >= 0 => s as u64,
        Some(s) => {
            c.push("seed", format!("must be >= 0, got {s}"));
            0
        }
        None => 0,
    };
    let direction = match raw.direction.as_deref() {
        None | Some("uplink") => Direction::Uplink,
        Some("downlink") => Direction::Downlink,
        Some(other) => {
            c.push("direction", format!("expected \"uplink\" or \"downlink\", got {other:?}"));
            Direction::Uplink
        }
    };
    let datapath = datapath_config(&mut c, raw.datapath.unwrap_or_default(), raw.qfi_priority.unwrap_or_default());
    let output = raw.output.unwrap_or_default();
    let output = OutputConfig {
        dir: output.dir.map(PathBuf::from),
        telemetry: output.telemetry.unwrap_or(false),
        events: output.events.unwrap_or(false),
    };

    let table = ProfileTable::builtin();
    let mut flows: Vec<(bool, NamedFlow)> = Vec::new();
    for (i, f) in raw.flows.into_iter().enumerate() {
        if let Some(flow) = flow_spec(&mut c, i, f, duration_s.unwrap_or(1.0), &table) {
            flows.push(flow);
        }
    }

    // Cross-flow invariants.
    let sensors: Vec<&NamedFlow> = flows.iter().filter(|(s, _)| *s).map(|(_, f)| f).collect();
    match sensors.len() {
        0 => c.push("flows", "no flow has sensor = true"),
        1 => {}
        _ => c.push(
            "flows",
            format!(
                "exactly one sensor flow is allowed, found {}: {}",
                sensors.len(),
                sensors.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", ")
            ),
        ),
    }
    let mut teids: HashMap<u32, &str> = HashMap::new();
    let mut ues: HashMap<UeAddress, &str> = HashMap::new();
    let mut names: HashMap<&str, usize> = HashMap::new();
    for (i, (_, f)) in flows.iter().enumerate() {
        if let Some(prev) = teids.insert(f.spec.teid.0, &f.name) {
            c.push(
                format!("flows[{i}].teid"),
                format!("TEID {} is used by both {prev:?} and {:?}", f.spec.teid, f.name),
            );
        }
        if let Some(prev) = ues.insert(f.spec.ue, &f.name) {
            c.push(
                format!("flows[{i}].ue"),
                format!("UE address {} is used by both {prev:?} and {:?}", f.spec.ue, f.name),
            );
        }
        if let Some(j) = names.insert(&f.name, i) {
            c.push(format!("flows[{i}].name"), format!("name {:?} repeats flows[{j}]", f.name));
        }
    }

    let neighbor_kinds: Vec<ClassKind> = {
        let mut k: Vec<ClassKind> = flows.iter().filter(|(s, _)| !*s).map(|(_, f)| f.spec.class.kind()).collect();
        k.sort();
        k.dedup();
        k
    };
    let condition = match raw.condition.as_deref() {
        Some(s) => s.parse::<ClassKind>().unwrap_or_else(|_| {
            c.push("condition", format!("unknown traffic class {s:?}"));
            ClassKind::Baseline
        }),
        None => match neighbor_kinds.as_slice() {
            [] => ClassKind::Baseline,
            [one] => *one,
            _ => {
                c.push("condition", "neighbors mix traffic classes; set condition explicitly");
                ClassKind::Baseline
            }
        },
    };

    if !c.issues.is_empty() {
        return Err(HarnessError::Validation(c.issues));
    }
    let mut sensor = None;
    let mut neighbors = Vec::new();
    for (is_sensor, f) in flows {
        if is_sensor {
            sensor = Some(f);
        } else {
            neighbors.push(f);
        }
    }
    Ok(ScenarioConfig {
        name,
        duration_s: duration_s.expect("validated"),
        seed,
        condition,
        direction,
        sensor: sensor.expect("validated"),
        neighbors,
        datapath,
        output,
        digest: sha256_hex(text.as_bytes()),
    })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_scenario(&text, &path.display().to_string())
}

fn datapath_config(c: &mut Checker, raw: RawDatapath, priority: BTreeMap<String, i64>) -> DatapathConfig {
    let mut d = DatapathConfig::default();
    if let Some(v) = raw.base_decap_cost_ns {
        match u64::try_from(v) {
            Ok(v) => d.base_decap_cost_ns = v,
            Err(_) => c.push("datapath.base_decap_cost_ns", format!("must be >= 0, got {v}")),
        }
    }
    if let Some(v) = c.non_negative("datapath.per_byte_cost_ns", raw.per_byte_cost_ns, d.per_byte_cost_ns) {
        d.per_byte_cost_ns = v;
    }
    if let Some(v) = c.non_negative("datapath.jitter_sigma", raw.jitter_sigma, d.jitter_sigma) {
        d.jitter_sigma = v;
    }
    if let Some(v) = c.positive("datapath.window_ms", raw.window_ms, Some(d.window_ms)) {
        d.window_ms = v;
    }
    match raw.core_count {
        None => {}
        Some(v) if v >= 1 => d.core_count = v as usize,
        Some(v) => c.push("datapath.core_count", format!("must be >= 1, got {v}")),
    }
    match raw.discipline.as_deref() {
        None => {}
        Some("fifo") => d.discipline = Discipline::Fifo,
        Some("strict-priority") => d.discipline = Discipline::StrictPriority,
        Some(o) => c.push("datapath.discipline", format!("expected \"fifo\" or \"strict-priority\", got {o:?}")),
    }
    match raw.timer.as_deref() {
        None => {}
        Some("service-start") => d.timer = TimerStart::ServiceStart,
        Some("enqueue") => d.timer = TimerStart::Enqueue,
        Some(o) => c.push("datapath.timer", format!("expected \"service-start\" or \"enqueue\", got {o:?}")),
    }
    let mut entries = Vec::new();
    for (k, rank) in priority {
        let path = format!("qfi_priority.{k}");
        let qfi = k.parse::<u8>().ok().and_then(|q| Qfi::new(q).ok());
        match (qfi, u32::try_from(rank)) {
            (Some(q), Ok(r)) => entries.push((q, r)),
            (None, _) => c.push(path, "key must be a QFI in 0..=63"),
            (_, Err(_)) => c.push(path, format!("rank must be >= 0, got {rank}")),
        }
    }
    d.priority = PriorityMap::new(entries);
    d
}

fn flow_spec(
    c: &mut Checker,
    i: usize,
    f: RawFlow,
    scenario_duration: f64,
    table: &ProfileTable,
) -> Option<(bool, NamedFlow)> {
    let at = |field: &str| format!("flows[{i}].{field}");
    let before = c.issues.len();
    let name = f.name.clone().unwrap_or_else(|| if f.sensor { "sensor".into() } else { format!("flow{i}") });

    let class = match (f.class.as_deref(), f.sensor) {
        (None, true) => Some(ClassKind::Baseline),
        (None, false) => {
            c.push(at("class"), "is required for non-sensor flows");
            None
        }
        (Some(s), _) => match s.parse::<ClassKind>() {
            Ok(k) => Some(k),
            Err(e) => {
                c.push(at("class"), e.to_string());
                None
            }
        },
    };
    if f.sensor && class.is_some_and(|k| k != ClassKind::Baseline) {
        c.push(at("class"), "the sensor sends Baseline probes; omit class or set it to \"Baseline\"");
    }
    let profile = match (class, f.app.as_deref()) {
        (Some(ClassKind::Multimedia), Some(app)) => match table.lookup(app) {
            Ok(p) => Some(p.clone()),
            Err(e) => {
                c.push(at("app"), e.to_string());
                None
            }
        },
        (Some(ClassKind::Multimedia), None) => {
            c.push(at("app"), "Multimedia flows must name a replay profile");
            None
        }
        (_, Some(_)) => {
            c.push(at("app"), "only Multimedia flows take an app");
            None
        }
        _ => None,
    };

    let ue = match f.ue.as_deref().map(str::parse::<UeAddress>) {
        Some(Ok(a)) => Some(a),
        Some(Err(e)) => {
            c.push(at("ue"), e.to_string());
            None
        }
        None => {
            c.push(at("ue"), "is required");
            None
        }
    };
    let teid = match f.teid {
        Some(t) => u32::try_from(t).map(Teid).map_err(|_| c.push(at("teid"), format!("must fit in 32 bits, got {t}"))).ok(),
        None => {
            c.push(at("teid"), "is required");
            None
        }
    };
    let qfi = match f.qfi {
        Some(q) => u8::try_from(q)
            .ok()
            .and_then(|q| Qfi::new(q).ok())
            .or_else(|| {
                c.push(at("qfi"), format!("must be in 0..=63, got {q}"));
                None
            }),
        None => Qfi::new(9).ok(),
    };
    let default_rate = if f.sensor { Some(DEFAULT_SENSOR_PPS) } else { profile.as_ref().map(|p| p.pps) };
    let rate = c.positive(&at("rate_pps"), f.rate_pps, default_rate);
    let default_size = if f.sensor {
        PROBE_PACKET_BYTES
    } else {
        profile.as_ref().map_or(DEFAULT_NEIGHBOR_BYTES, |p| p.mean_bytes)
    };
    let size = match f.mean_size_bytes {
        None => Some(default_size),
        Some(v) => match u16::try_from(v) {
            Ok(s) if (traffic::MIN_PACKET_BYTES..=traffic::MAX_PACKET_BYTES).contains(&s) => Some(s),
            _ => {
                c.push(
                    at("mean_size_bytes"),
                    format!("must be in {}..={}, got {v}", traffic::MIN_PACKET_BYTES, traffic::MAX_PACKET_BYTES),
                );
                None
            }
        },
    };
    let duration = c.positive(&at("duration_s"), f.duration_s, Some(scenario_duration));
    let offset_ms = c.non_negative(&at("start_offset_ms"), f.start_offset_ms, 0.0);
    let size_cv = c.non_negative(&at("size_cv"), f.size_cv, traffic::DEFAULT_SIZE_CV);
    let burst = f.burst.map(|b| {
        let d = BurstParams::default();
        let on = c.positive(&at("burst.on_mean_ms"), b.on_mean_ms, Some(d.on_mean_ms));
        let off = c.positive(&at("burst.off_mean_ms"), b.off_mean_ms, Some(d.off_mean_ms));
        let mult = b.multiplier.map_or(d.multiplier, |m| m.0);
        if !(mult.is_finite() && mult >= 1.0) {
            c.push(at("burst.multiplier"), format!("must be >= 1, got {mult}"));
        }
        BurstParams { on_mean_ms: on.unwrap_or(d.on_mean_ms), off_mean_ms: off.unwrap_or(d.off_mean_ms), multiplier: mult }
    });

    if c.issues.len() > before {
        return None;
    }
    let class = match class.expect("checked") {
        ClassKind::Baseline => TrafficClass::Baseline,
        ClassKind::Anomaly => TrafficClass::Anomaly,
        ClassKind::ConstantRate => TrafficClass::ConstantRate,
        ClassKind::Multimedia => TrafficClass::Multimedia(profile.expect("checked").app),
    };
    let mut spec = FlowSpec::new(class, rate?, size?, duration?).with_identity(ue?, teid?, qfi?);
    spec.size_cv = size_cv?;
    spec.start_offset_ns = (offset_ms? * 1e6).round() as u64;
    if let Some(b) = burst {
        spec.burst = b;
    }
    if let Err(e) = spec.validate() {
        c.push(format!("flows[{i}]"), e.to_string());
        return None;
    }
    Some((f.sensor, NamedFlow { name, spec }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
duration_s = 6

[[flows]]
sensor = true
ue = "10.60.0.1"
teid = 1
"#;

    fn issues(text: &str) -> Vec<Issue> {
        match parse_scenario(text, "test.toml") {
            Err(HarnessError::Validation(v)) => v,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let s = parse_scenario(MINIMAL, "dir/minimal.toml").unwrap();
        assert_eq!(s.name, "minimal");
        assert_eq!(s.seed, 0);
        assert_eq!(s.condition, ClassKind::Baseline);
        assert_eq!(s.sensor.spec.rate_pps, 10.0);
        assert_eq!(s.sensor.spec.mean_size_bytes, PROBE_PACKET_BYTES);
        assert_eq!(s.sensor.spec.qfi.value(), 9);
        assert_eq!(s.datapath, DatapathConfig::default());
        assert!(s.neighbors.is_empty());
        assert_eq!(s.horizon_ns(), 6_000_000_000);
        assert_eq!(s.digest.len(), 64);
    }

    #[test]
    fn duplicate_teid_names_both_flows() {
        let text = r#"
schema_version = 1
duration_s = 1
[[flows]]
name = "probe"
sensor = true
ue = "10.60.0.1"
teid = 7
[[flows]]
name = "noisy"
class = "Anomaly"
ue = "10.60.0.2"
teid = 7
rate_pps = 100
"#;
        let v = issues(text);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "flows[1].teid");
        assert!(v[0].message.contains("\"probe\"") && v[0].message.contains("\"noisy\""));
    }

    #[test]
    fn all_problems_reported_together() {
        let text = r#"
duration_s = -1
[datapath]
discipline = "lottery"
[qfi_priority]
99 = 0
[[flows]]
class = "Bursty"
ue = "10.60.0.300"
teid = 3
"#;
        let paths: Vec<String> = issues(text).into_iter().map(|i| i.path).collect();
        for p in ["schema_version", "duration_s", "datapath.discipline", "qfi_priority.99", "flows[0].class", "flows[0].ue", "flows"] {
            assert!(paths.iter().any(|x| x == p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn multimedia_profile_defaults() {
        let text = r#"
schema_version = 1
duration_s = 2
[[flows]]
sensor = true
ue = "10.60.0.1"
teid = 1
[[flows]]
class = "Multimedia"
app = "tiktok"
ue = "10.60.0.2"
teid = 2
"#;
        let s = parse_scenario(text, "mm.toml").unwrap();
        assert_eq!(s.condition, ClassKind::Multimedia);
        let n = &s.neighbors[0].spec;
        assert_eq!((n.rate_pps, n.mean_size_bytes), (638.0, 974));
        assert_eq!(n.duration_s, 2.0);
    }

    #[test]
    fn unknown_app_lists_profiles() {
        let text = MINIMAL.to_string() + "[[flows]]\nclass = \"Multimedia\"\napp = \"Myspace\"\nue = \"10.60.0.2\"\nteid = 2\n";
        let v = issues(&text);
        assert_eq!(v[0].path, "flows[1].app");
        assert!(v[0].message.contains("YouTube"));
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(parse_scenario("schema_version = ", "x.toml"), Err(HarnessError::Parse { .. })));
        assert!(matches!(parse_scenario("bogus_key = 1", "x.toml"), Err(HarnessError::Parse { .. })));
    }

    #[test]
    fn mixed_neighbors_need_condition() {
        let text = MINIMAL.to_string()
            + "[[flows]]\nclass = \"Anomaly\"\nue = \"10.60.0.2\"\nteid = 2\nrate_pps = 5\n"
            + "[[flows]]\nclass = \"cbr\"\nue = \"10.60.0.3\"\nteid = 3\nrate_pps = 5\n";
        assert_eq!(issues(&text)[0].path, "condition");
        let with = text.replace("duration_s = 6", "duration_s = 6\ncondition = \"Anomaly\"");
        assert_eq!(parse_scenario(&with, "x.toml").unwrap().condition, ClassKind::Anomaly);
    }
}
