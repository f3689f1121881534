use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::{trace_bytes, write_atomic, HarnessError, ScenarioConfig};
use crate::datapath::{self, EventDumpWriter, RunSummary};
use crate::probe::{join_samples, FlowContext, FlowRegistry, LatencySample, Probe};
use crate::traffic::{self, PacketSchedule};

/// In-memory result of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub samples: Vec<LatencySample>,
    pub summary: RunSummary,
    /// Raw hook events as CSV, when requested.
    pub events_csv: Option<Vec<u8>>,
}

/// Builds schedules, runs the data path with the probe attached to the
/// sensor UE, and joins samples with telemetry.
pub fn run_scenario(config: &ScenarioConfig, keep_events: bool) -> Result<ScenarioRun, HarnessError> {
    let schedules: Vec<PacketSchedule> = config
        .flows()
        .map(|f| traffic::schedule(&f.spec, config.seed))
        .collect::<Result<_, _>>()?;

    let mut registry = FlowRegistry::new();
    for f in config.flows() {
        let class = if f.name == config.sensor.name { config.condition } else { f.spec.class.kind() };
        registry.register(f.spec.ue, FlowContext { teid: f.spec.teid, qfi: f.spec.qfi, class });
    }
    let mut probe = Probe::new([config.sensor.spec.ue], config.direction);
    let mut emissions = Vec::new();
    let mut probe_error = None;
    let mut dump = keep_events.then(|| EventDumpWriter::new(Vec::new()).expect("Vec sink"));
    let summary = datapath::run_with(&config.datapath, &schedules, config.horizon_ns(), config.seed, |e| {
        if let Some(d) = dump.as_mut() {
            d.write(&e).expect("Vec sink");
        }
        if probe_error.is_some() {
            return;
        }
        match probe.observe(&e) {
            Ok(Some(em)) => emissions.push(em),
            Ok(None) => {}
            Err(err) => probe_error = Some(err),
        }
    })?;
    if let Some(e) = probe_error {
        return Err(e.into());
    }
    let samples = join_samples(&emissions, &summary.telemetry, &registry)?;
    Ok(ScenarioRun { samples, summary, events_csv: dump.map(EventDumpWriter::into_inner) })
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trace_path: PathBuf,
    pub telemetry_path: Option<PathBuf>,
    pub events_path: Option<PathBuf>,
    pub packets: u64,
    pub packets_per_flow: Vec<(String, u64)>,
    pub samples: usize,
    pub wall_time: Duration,
}

/// Runs `config` and writes `<name>.trace.csv` (plus telemetry and event
/// dumps when enabled) under `out_dir`.
pub fn simulate(config: &ScenarioConfig, out_dir: &Path) -> Result<SimulationOutput, HarnessError> {
    let started = Instant::now();
    let run = run_scenario(config, config.output.events)?;
    let trace_path = out_dir.join(format!("{}.trace.csv", config.name));
    write_atomic(&trace_path, &trace_bytes(&run.samples))?;
    let telemetry_path = if config.output.telemetry {
        let p = out_dir.join(format!("{}.telemetry.csv", config.name));
        let mut buf = Vec::new();
        run.summary.telemetry.write_csv(&mut buf).expect("Vec sink");
        write_atomic(&p, &buf)?;
        Some(p)
    } else {
        None
    };
    let events_path = match &run.events_csv {
        Some(bytes) => {
            let p = out_dir.join(format!("{}.events.csv", config.name));
            write_atomic(&p, bytes)?;
            Some(p)
        }
        None => None,
    };
    Ok(SimulationOutput {
        trace_path,
        telemetry_path,
        events_path,
        packets: run.summary.packets,
        packets_per_flow: config.flows().map(|f| f.name.clone()).zip(run.summary.packets_per_flow.iter().copied()).collect(),
        samples: run.samples.len(),
        wall_time: started.elapsed(),
    })
}
