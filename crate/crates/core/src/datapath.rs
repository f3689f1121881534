//! Discrete-event model of a UPF data path pinned to a fixed set of cores.
//!
//! Packets from every flow enter one shared decapsulation stage (N3 ingress),
//! wait under the configured queue discipline, receive service on a free core
//! and leave at the `netif_rx` handoff towards N6. Two hook events are emitted
//! per packet, `gtp_entry` and `netif_rx`, in non-decreasing time order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gtpu::{GtpuPacket, Qfi, Teid, UeAddress};
use crate::seeding::{self, Domain};
use crate::traffic::{ClassKind, PacketSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatapathError {
    #[error("no packet schedules given")]
    NoSchedules,
    #[error("flow with TEID {teid} has an arrival at {arrival_ns} ns, beyond the horizon of {horizon_ns} ns")]
    ArrivalBeyondHorizon { teid: Teid, arrival_ns: u64, horizon_ns: u64 },
    #[error("invalid datapath config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discipline {
    #[default]
    Fifo,
    StrictPriority,
}

/// Where the `gtp_entry` hook fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimerStart {
    /// When a core starts decapsulating the packet.
    #[default]
    ServiceStart,
    /// When the packet enters the decapsulation queue at N3.
    Enqueue,
}

/// QFI to priority rank; a lower rank is served first. Unmapped QFIs rank last.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityMap {
    ranks: BTreeMap<u8, u32>,
}

impl PriorityMap {
    pub fn new(entries: impl IntoIterator<Item = (Qfi, u32)>) -> Self {
        Self {
            ranks: entries.into_iter().map(|(q, r)| (q.value(), r)).collect(),
        }
    }

    pub fn rank(&self, qfi: Qfi) -> u32 {
        self.ranks.get(&qfi.value()).copied().unwrap_or(u32::MAX)
    }

    pub fn is_mapped(&self, qfi: Qfi) -> bool {
        self.ranks.contains_key(&qfi.value())
    }

    /// The best (lowest) rank present in the map.
    pub fn top_rank(&self) -> Option<u32> {
        self.ranks.values().copied().min()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u8, u32)> + '_ {
        self.ranks.iter().map(|(q, r)| (*q, *r))
    }

    /// Dequeue order of two QFIs alone: `Less` means `a` goes first.
    pub fn order(&self, a: Qfi, b: Qfi) -> Ordering {
        self.rank(a).cmp(&self.rank(b))
    }

    /// Full dequeue order: rank, then arrival time, then flow identity.
    pub fn compare(&self, a: &QueueKey, b: &QueueKey) -> Ordering {
        self.order(a.qfi, b.qfi).then_with(|| a.fifo_cmp(b))
    }
}

/// Ordering fields of a queued packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueKey {
    pub qfi: Qfi,
    pub arrival_ns: u64,
    pub teid: Teid,
    pub handle: u64,
}

impl QueueKey {
    fn fifo_cmp(&self, other: &Self) -> Ordering {
        (self.arrival_ns, self.teid, self.handle).cmp(&(other.arrival_ns, other.teid, other.handle))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatapathConfig {
    /// Per-packet service floor.
    pub base_decap_cost_ns: u64,
    pub per_byte_cost_ns: f64,
    /// Log-space sigma of the multiplicative jitter on the size-dependent cost.
    pub jitter_sigma: f64,
    pub discipline: Discipline,
    pub priority: PriorityMap,
    pub core_count: usize,
    pub window_ms: f64,
    pub timer: TimerStart,
}

impl Default for DatapathConfig {
    fn default() -> Self {
        Self {
            base_decap_cost_ns: 800,
            per_byte_cost_ns: 0.5,
            jitter_sigma: 0.35,
            discipline: Discipline::Fifo,
            priority: PriorityMap::default(),
            core_count: 1,
            window_ms: 1000.0,
            timer: TimerStart::ServiceStart,
        }
    }
}

impl DatapathConfig {
    pub fn validate(&self) -> Result<(), DatapathError> {
        let bad = |m: String| Err(DatapathError::InvalidConfig(m));
        if !(self.per_byte_cost_ns.is_finite() && self.per_byte_cost_ns >= 0.0) {
            return bad(format!("per_byte_cost_ns must be >= 0, got {}", self.per_byte_cost_ns));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return bad(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        if self.core_count == 0 {
            return bad("core_count must be >= 1".into());
        }
        if !(self.window_ms.is_finite() && self.window_ms > 0.0) || self.window_ns() == 0 {
            return bad(format!("window_ms must be > 0, got {}", self.window_ms));
        }
        Ok(())
    }

    pub fn window_ns(&self) -> u64 {
        (self.window_ms * 1e6).round() as u64
    }
}

/// Service time of one packet: the floor plus the size-dependent cost scaled by
/// a lognormal factor with median 1. Never below the floor.
pub fn decap_service_time(config: &DatapathConfig, size_bytes: usize, rng: &mut impl Rng) -> u64 {
    let variable = config.per_byte_cost_ns * size_bytes as f64;
    let factor = if config.jitter_sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        (config.jitter_sigma * z).exp()
    } else {
        1.0
    };
    config.base_decap_cost_ns + (variable * factor).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hook {
    GtpEntry,
    NetifRx,
}

impl fmt::Display for Hook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hook::GtpEntry => "gtp_entry",
            Hook::NetifRx => "netif_rx",
        })
    }
}

/// Identity of the flow a packet belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowTag {
    pub ue: UeAddress,
    pub teid: Teid,
    pub qfi: Qfi,
    pub class: ClassKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// Unique per packet for the whole run.
    pub handle: u64,
    pub hook: Hook,
    pub timestamp_ns: u64,
    pub arrival_ns: u64,
    pub flow: FlowTag,
    pub packet: GtpuPacket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryWindow {
    pub start_ns: u64,
    pub len_ns: u64,
    pub busy_ns: u64,
    pub completed: u64,
    pub cpu_percent: f64,
    pub packet_rate_pps: f64,
}

impl TelemetryWindow {
    pub fn contains(&self, t: u64) -> bool {
        t >= self.start_ns && t < self.start_ns + self.len_ns
    }
}

/// Contiguous telemetry windows starting at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySeries {
    pub window_ns: u64,
    pub core_count: usize,
    pub windows: Vec<TelemetryWindow>,
}

impl TelemetrySeries {
    /// Window containing `t` (left-closed, right-open).
    pub fn window_for(&self, t: u64) -> Option<&TelemetryWindow> {
        let idx = usize::try_from(t / self.window_ns).ok()?;
        self.windows.get(idx).filter(|w| w.contains(t))
    }

    pub fn end_ns(&self) -> u64 {
        self.windows.last().map_or(0, |w| w.start_ns + w.len_ns)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "window_start_ns,window_len_ns,cpu_pct,pkt_rate_pps")?;
        for win in &self.windows {
            writeln!(
                w,
                "{},{},{:.6},{:.3}",
                win.start_ns, win.len_ns, win.cpu_percent, win.packet_rate_pps
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub telemetry: TelemetrySeries,
    pub packets: u64,
    pub packets_per_flow: Vec<u64>,
    pub last_completion_ns: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    arrival_ns: u64,
    flow: usize,
    seq: usize,
}

struct Queued {
    key: QueueKey,
    flow: usize,
    seq: usize,
}

struct PrioQueued<'a> {
    item: Queued,
    map: &'a PriorityMap,
}

impl PartialEq for PrioQueued<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for PrioQueued<'_> {}
impl PartialOrd for PrioQueued<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PrioQueued<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; the packet to serve first must compare greatest.
        self.map.compare(&other.item.key, &self.item.key)
    }
}

enum DecapQueue<'a> {
    Fifo(VecDeque<Queued>),
    Priority(BinaryHeap<PrioQueued<'a>>, &'a PriorityMap),
}

impl<'a> DecapQueue<'a> {
    fn push(&mut self, q: Queued) {
        match self {
            DecapQueue::Fifo(d) => d.push_back(q),
            DecapQueue::Priority(h, map) => h.push(PrioQueued { item: q, map }),
        }
    }

    fn pop(&mut self) -> Option<Queued> {
        match self {
            DecapQueue::Fifo(d) => d.pop_front(),
            DecapQueue::Priority(h, _) => h.pop().map(|p| p.item),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            DecapQueue::Fifo(d) => d.is_empty(),
            DecapQueue::Priority(h, _) => h.is_empty(),
        }
    }
}

struct InService {
    handle: u64,
    arrival_ns: u64,
    flow: usize,
    seq: usize,
}

/// Busy time and completions accumulated per window.
struct TelemetryAccumulator {
    window_ns: u64,
    busy: Vec<u64>,
    completed: Vec<u64>,
}

impl TelemetryAccumulator {
    fn grow(&mut self, idx: usize) {
        if self.busy.len() <= idx {
            self.busy.resize(idx + 1, 0);
            self.completed.resize(idx + 1, 0);
        }
    }

    fn add_busy(&mut self, start: u64, end: u64) {
        let mut t = start;
        while t < end {
            let idx = (t / self.window_ns) as usize;
            let boundary = (idx as u64 + 1) * self.window_ns;
            let chunk_end = boundary.min(end);
            self.grow(idx);
            self.busy[idx] += chunk_end - t;
            t = chunk_end;
        }
    }

    fn add_completion(&mut self, t: u64) {
        let idx = (t / self.window_ns) as usize;
        self.grow(idx);
        self.completed[idx] += 1;
    }

    fn finish(mut self, end_ns: u64, core_count: usize) -> TelemetrySeries {
        let count = end_ns.div_ceil(self.window_ns).max(1) as usize;
        self.grow(count - 1);
        let windows = (0..count)
            .map(|i| {
                let start_ns = i as u64 * self.window_ns;
                let len_ns = self.window_ns.min(end_ns.max(1) - start_ns);
                let secs = len_ns as f64 / 1e9;
                TelemetryWindow {
                    start_ns,
                    len_ns,
                    busy_ns: self.busy[i],
                    completed: self.completed[i],
                    cpu_percent: self.busy[i] as f64 / len_ns as f64 * 100.0,
                    packet_rate_pps: self.completed[i] as f64 / secs,
                }
            })
            .collect();
        TelemetrySeries {
            window_ns: self.window_ns,
            core_count,
            windows,
        }
    }
}

fn flow_tag(s: &PacketSchedule) -> FlowTag {
    FlowTag {
        ue: s.spec.ue,
        teid: s.spec.teid,
        qfi: s.spec.qfi,
        class: s.spec.class.kind(),
    }
}

/// Runs the simulation and collects every trace event.
pub fn run(
    config: &DatapathConfig,
    schedules: &[PacketSchedule],
    horizon_ns: u64,
    seed: u64,
) -> Result<(Vec<TraceEvent>, TelemetrySeries), DatapathError> {
    let mut events = Vec::new();
    let summary = run_with(config, schedules, horizon_ns, seed, |e| events.push(e))?;
    Ok((events, summary.telemetry))
}

/// Runs the simulation, handing each trace event to `sink` in emission order.
pub fn run_with(
    config: &DatapathConfig,
    schedules: &[PacketSchedule],
    horizon_ns: u64,
    seed: u64,
    mut sink: impl FnMut(TraceEvent),
) -> Result<RunSummary, DatapathError> {
    config.validate()?;
    if schedules.is_empty() {
        return Err(DatapathError::NoSchedules);
    }
    for s in schedules {
        if let Some(last) = s.last_arrival_ns() {
            if last > horizon_ns {
                return Err(DatapathError::ArrivalBeyondHorizon {
                    teid: s.spec.teid,
                    arrival_ns: last,
                    horizon_ns,
                });
            }
        }
    }

    let tags: Vec<FlowTag> = schedules.iter().map(flow_tag).collect();
    let mut pending: Vec<Pending> = schedules
        .iter()
        .enumerate()
        .flat_map(|(flow, s)| {
            s.arrivals()
                .enumerate()
                .map(move |(seq, arrival_ns)| Pending { arrival_ns, flow, seq })
        })
        .collect();
    pending.sort_unstable_by_key(|p| (p.arrival_ns, tags[p.flow].teid, p.flow, p.seq));

    let mut queue = match config.discipline {
        Discipline::Fifo => DecapQueue::Fifo(VecDeque::new()),
        Discipline::StrictPriority => DecapQueue::Priority(BinaryHeap::new(), &config.priority),
    };
    let mut cores: Vec<Option<InService>> = (0..config.core_count).map(|_| None).collect();
    let mut completions: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut telemetry = TelemetryAccumulator {
        window_ns: config.window_ns(),
        busy: Vec::new(),
        completed: Vec::new(),
    };
    let mut per_flow = vec![0u64; schedules.len()];
    let mut last_completion = 0u64;
    let mut next = 0usize;

    let event = |hook, timestamp_ns, handle, arrival_ns, flow: usize, seq: usize| TraceEvent {
        handle,
        hook,
        timestamp_ns,
        arrival_ns,
        flow: tags[flow],
        packet: schedules[flow].entries()[seq].1.clone(),
    };

    loop {
        let next_arrival = pending.get(next).map(|p| p.arrival_ns);
        let next_done = completions.peek().map(|Reverse((t, _))| *t);
        let now = match (next_arrival, next_done) {
            (None, None) => break,
            (Some(a), None) => a,
            (None, Some(d)) => d,
            (Some(a), Some(d)) => a.min(d),
        };

        while let Some(&Reverse((t, core))) = completions.peek() {
            if t != now {
                break;
            }
            completions.pop();
            let done = cores[core].take().expect("completion for an idle core");
            telemetry.add_completion(now);
            last_completion = last_completion.max(now);
            per_flow[done.flow] += 1;
            sink(event(Hook::NetifRx, now, done.handle, done.arrival_ns, done.flow, done.seq));
        }

        while let Some(p) = pending.get(next).copied() {
            if p.arrival_ns != now {
                break;
            }
            let handle = next as u64;
            next += 1;
            let key = QueueKey {
                qfi: tags[p.flow].qfi,
                arrival_ns: p.arrival_ns,
                teid: tags[p.flow].teid,
                handle,
            };
            if config.timer == TimerStart::Enqueue {
                sink(event(Hook::GtpEntry, now, handle, p.arrival_ns, p.flow, p.seq));
            }
            queue.push(Queued {
                key,
                flow: p.flow,
                seq: p.seq,
            });
        }

        while !queue.is_empty() {
            let Some(core) = cores.iter().position(Option::is_none) else {
                break;
            };
            let q = queue.pop().expect("queue not empty");
            let packet = &schedules[q.flow].entries()[q.seq].1;
            let mut rng = seeding::substream2(seed, Domain::ServiceJitter, q.flow as u64, q.seq as u64);
            let service = decap_service_time(config, packet.inner().len(), &mut rng);
            if config.timer == TimerStart::ServiceStart {
                sink(event(Hook::GtpEntry, now, q.key.handle, q.key.arrival_ns, q.flow, q.seq));
            }
            telemetry.add_busy(now, now + service);
            completions.push(Reverse((now + service, core)));
            cores[core] = Some(InService {
                handle: q.key.handle,
                arrival_ns: q.key.arrival_ns,
                flow: q.flow,
                seq: q.seq,
            });
        }
    }

    let window = config.window_ns();
    let end_ns = if pending.is_empty() || last_completion < horizon_ns {
        horizon_ns
    } else {
        (last_completion + 1).div_ceil(window) * window
    };
    Ok(RunSummary {
        telemetry: telemetry.finish(end_ns, config.core_count),
        packets: pending.len() as u64,
        packets_per_flow: per_flow,
        last_completion_ns: last_completion,
    })
}

/// Writes trace events as `handle,hook,timestamp_ns,ue,teid,qfi,class` rows.
pub struct EventDumpWriter<W: Write> {
    out: W,
}

impl<W: Write> EventDumpWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "handle,hook,timestamp_ns,ue,teid,qfi,class")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, e: &TraceEvent) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            e.handle, e.hook, e.timestamp_ns, e.flow.ue, e.flow.teid, e.flow.qfi, e.flow.class
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
