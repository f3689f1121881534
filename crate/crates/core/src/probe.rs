//! Two-hook decapsulation probe.
//!
//! At `gtp_entry` the probe reads the inner UE address; if it belongs to the
//! target set it records the entry timestamp and the address, keyed by packet
//! handle. At `netif_rx` a recorded handle yields one sample
//! `(ue, now - start)` and both entries are deleted.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapath::{Hook, TelemetrySeries, TraceEvent};
use crate::gtpu::{self, Direction, GtpuError, GtpuPacket, Qfi, Teid, UeAddress};
use crate::traffic::ClassKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("handle {0} is already in flight")]
    DuplicateHandle(u64),
    #[error("handle {handle}: netif_rx at {at_ns} ns precedes entry at {start_ns} ns")]
    NegativeDelta { handle: u64, start_ns: u64, at_ns: u64 },
    #[error("inner packet: {0}")]
    Packet(#[from] GtpuError),
    #[error("UE {0} is not in the flow registry")]
    Unregistered(UeAddress),
    #[error("sample at {0} ns falls outside every telemetry window")]
    TelemetryJoin(u64),
}

/// Per-packet maps of the probe plus its target set.
#[derive(Debug, Clone, Default)]
pub struct ProbeState {
    start: HashMap<u64, u64>,
    ip: HashMap<u64, UeAddress>,
    targets: HashSet<UeAddress>,
}

/// Raw probe output: the UE address and its decapsulation latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeEmission {
    pub handle: u64,
    pub emit_time_ns: u64,
    pub ue: UeAddress,
    pub delta_ns: u64,
}

impl ProbeState {
    pub fn new(targets: impl IntoIterator<Item = UeAddress>) -> Self {
        Self {
            targets: targets.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn targets(&self) -> &HashSet<UeAddress> {
        &self.targets
    }

    pub fn in_flight(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty() && self.ip.is_empty()
    }

    /// Both maps hold exactly the same handles.
    pub fn keys_consistent(&self) -> bool {
        self.start.len() == self.ip.len() && self.start.keys().all(|k| self.ip.contains_key(k))
    }

    pub fn on_gtp_entry(
        &mut self,
        handle: u64,
        ts_ns: u64,
        packet: &GtpuPacket,
        direction: Direction,
    ) -> Result<(), ProbeError> {
        if self.start.contains_key(&handle) {
            return Err(ProbeError::DuplicateHandle(handle));
        }
        let ue = gtpu::inner_ue_address(packet, direction)?;
        if self.targets.contains(&ue) {
            self.start.insert(handle, ts_ns);
            self.ip.insert(handle, ue);
        }
        Ok(())
    }

    pub fn on_netif_rx(&mut self, handle: u64, ts_ns: u64) -> Result<Option<ProbeEmission>, ProbeError> {
        let Some(&start_ns) = self.start.get(&handle) else {
            return Ok(None);
        };
        if ts_ns < start_ns {
            return Err(ProbeError::NegativeDelta {
                handle,
                start_ns,
                at_ns: ts_ns,
            });
        }
        self.start.remove(&handle);
        let ue = self.ip.remove(&handle).expect("maps share keys");
        Ok(Some(ProbeEmission {
            handle,
            emit_time_ns: ts_ns,
            ue,
            delta_ns: ts_ns - start_ns,
        }))
    }
}

/// Tunnel context of a UE, used to tag samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowContext {
    pub teid: Teid,
    pub qfi: Qfi,
    pub class: ClassKind,
}

#[derive(Debug, Clone, Default)]
pub struct FlowRegistry {
    flows: HashMap<UeAddress, FlowContext>,
}

impl FlowRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, ue: UeAddress, ctx: FlowContext) {
        self.flows.insert(ue, ctx);
    }

    pub fn get(&self, ue: UeAddress) -> Option<&FlowContext> {
        self.flows.get(&ue)
    }
}

/// One probe sample tagged with tunnel context and concurrent telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub emit_time_ns: u64,
    pub ue: UeAddress,
    pub teid: Teid,
    pub qfi: Qfi,
    pub class: ClassKind,
    pub decap_latency_ns: u64,
    pub cpu_percent: f64,
    pub packet_rate_pps: f64,
}

/// A probe attached to a data-path event stream.
#[derive(Debug, Clone)]
pub struct Probe {
    pub state: ProbeState,
    pub direction: Direction,
}

impl Probe {
    pub fn new(targets: impl IntoIterator<Item = UeAddress>, direction: Direction) -> Self {
        Self {
            state: ProbeState::new(targets),
            direction,
        }
    }

    /// Feeds one event to the matching hook.
    pub fn observe(&mut self, e: &TraceEvent) -> Result<Option<ProbeEmission>, ProbeError> {
        match e.hook {
            Hook::GtpEntry => {
                self.state.on_gtp_entry(e.handle, e.timestamp_ns, &e.packet, self.direction)?;
                Ok(None)
            }
            Hook::NetifRx => self.state.on_netif_rx(e.handle, e.timestamp_ns),
        }
    }

    /// Drives both hooks over `events` in order, then tags and joins the
    /// emissions. Output order is emission order.
    pub fn attach<'a>(
        &mut self,
        events: impl IntoIterator<Item = &'a TraceEvent>,
        telemetry: &TelemetrySeries,
        registry: &FlowRegistry,
    ) -> Result<Vec<LatencySample>, ProbeError> {
        let mut emissions = Vec::new();
        for e in events {
            if let Some(em) = self.observe(e)? {
                emissions.push(em);
            }
        }
        join_samples(&emissions, telemetry, registry)
    }
}

/// Tags emissions with registry context and the telemetry window covering
/// their emit time.
pub fn join_samples(
    emissions: &[ProbeEmission],
    telemetry: &TelemetrySeries,
    registry: &FlowRegistry,
) -> Result<Vec<LatencySample>, ProbeError> {
    emissions
        .iter()
        .map(|em| {
            let ctx = registry.get(em.ue).ok_or(ProbeError::Unregistered(em.ue))?;
            let win = telemetry
                .window_for(em.emit_time_ns)
                .ok_or(ProbeError::TelemetryJoin(em.emit_time_ns))?;
            Ok(LatencySample {
                emit_time_ns: em.emit_time_ns,
                ue: em.ue,
                teid: ctx.teid,
                qfi: ctx.qfi,
                class: ctx.class,
                decap_latency_ns: em.delta_ns,
                cpu_percent: win.cpu_percent,
                packet_rate_pps: win.packet_rate_pps,
            })
        })
        .collect()
}
