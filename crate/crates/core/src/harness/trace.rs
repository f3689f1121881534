use std::io::{self, Read, Write};
use std::path::Path;

use super::HarnessError;
use crate::gtpu::{Qfi, Teid, UeAddress};
use crate::probe::LatencySample;
use crate::traffic::ClassKind;

pub const TRACE_HEADER: &str = "emit_time_ns,ue_ip,teid,qfi,traffic_class,decap_latency_ns,cpu_pct,pkt_rate_pps";

pub fn write_trace<W: Write>(samples: &[LatencySample], mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6},{:.3}",
            s.emit_time_ns,
            s.ue,
            s.teid,
            s.qfi,
            s.class.label(),
            s.decap_latency_ns,
            s.cpu_percent,
            s.packet_rate_pps
        )?;
    }
    Ok(())
}

pub fn trace_bytes(samples: &[LatencySample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 * (samples.len() + 1));
    write_trace(samples, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Parses trace CSV; `origin` labels error messages.
pub fn parse_trace<R: Read>(input: R, origin: &str) -> Result<Vec<LatencySample>, HarnessError> {
    let err = |line: u64, message: String| HarnessError::Trace { path: origin.to_string(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = TRACE_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(err(1, format!("header must be `{TRACE_HEADER}`")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64, HarnessError> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("{}: expected a number, got {:?}", expected[i], field(i))))
        };
        let int = |i: usize| -> Result<u64, HarnessError> {
            field(i)
                .parse::<u64>()
                .map_err(|_| err(line, format!("{}: expected an unsigned integer, got {:?}", expected[i], field(i))))
        };
        let ue: UeAddress = field(1).parse().map_err(|e| err(line, format!("ue_ip: {e}")))?;
        let teid = u32::try_from(int(2)?).map_err(|_| err(line, "teid: out of range".into()))?;
        let qfi = u8::try_from(int(3)?)
            .ok()
            .and_then(|q| Qfi::new(q).ok())
            .ok_or_else(|| err(line, format!("qfi: {:?} is not in 0..=63", field(3))))?;
        let class: ClassKind = field(4).parse().map_err(|e| err(line, format!("traffic_class: {e}")))?;
        out.push(LatencySample {
            emit_time_ns: int(0)?,
            ue,
            teid: Teid(teid),
            qfi,
            class,
            decap_latency_ns: int(5)?,
            cpu_percent: num(6)?,
            packet_rate_pps: num(7)?,
        });
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<LatencySample>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_trace(io::BufReader::new(file), &path.display().to_string())
}
