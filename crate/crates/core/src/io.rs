//! CSV readers and writers for traces, particle snapshots and BER sweeps.
//!
//! Floats are written in shortest round-trip form, so a trace read back
//! compares equal to the one written.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::devices::RxSample;
use crate::error::{Error, Result};
use crate::kinetics::MoleculeState;
use crate::link::SweepRow;
use crate::trace::RxTrace;
use crate::transport::Particle;

pub const TRACE_HEADER: [&str; 4] = ["t_s", "raw_count", "detected_count", "intensity"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        kind => Error::Parse { path: path.to_path_buf(), message: format!("{kind:?}") },
    }
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    t_s: f64,
    raw_count: u64,
    detected_count: u64,
    intensity: f64,
}

pub fn write_trace<W: Write>(out: W, trace: &RxTrace) -> Result<()> {
    let p = Path::new("<trace>");
    let mut w = csv::Writer::from_writer(out);
    for s in &trace.samples {
        w.serialize(TraceRow { t_s: s.t, raw_count: s.raw_count, detected_count: s.detected_count, intensity: s.intensity })
            .map_err(|e| csv_err(p, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: p.to_path_buf(), source })
}

pub fn read_trace<R: Read>(input: R) -> Result<RxTrace> {
    read_trace_named(input, Path::new("<trace>"))
}

fn read_trace_named<R: Read>(input: R, path: &Path) -> Result<RxTrace> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected header {}, got {}", TRACE_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples = Vec::new();
    for row in r.deserialize::<TraceRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        samples.push(RxSample { t: row.t_s, raw_count: row.raw_count, detected_count: row.detected_count, intensity: row.intensity });
    }
    if samples.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::Parse { path: path.to_path_buf(), message: "sample times must increase".into() });
    }
    Ok(RxTrace::new(samples))
}

pub fn write_trace_file(path: &Path, trace: &RxTrace) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_trace(std::io::BufWriter::new(f), trace)
}

pub fn read_trace_file(path: &Path) -> Result<RxTrace> {
    let f = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_trace_named(std::io::BufReader::new(f), path)
}

#[derive(Serialize)]
struct SnapshotRow {
    step: u64,
    id: u64,
    x: f64,
    y: f64,
    z: f64,
    state: MoleculeState,
}

pub type SnapshotWriter<W> = csv::Writer<W>;

pub fn snapshot_writer<W: Write>(out: W) -> SnapshotWriter<W> {
    csv::Writer::from_writer(out)
}

/// Appends one snapshot to `w`; the header is written on the first call.
pub fn write_snapshot<W: Write>(w: &mut SnapshotWriter<W>, step: u64, particles: &[Particle]) -> Result<()> {
    let p = Path::new("<snapshot>");
    for q in particles {
        w.serialize(SnapshotRow { step, id: q.id, x: q.pos.x, y: q.pos.y, z: q.pos.z, state: q.state })
            .map_err(|e| csv_err(p, e))?;
    }
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let p = Path::new("<sweep>");
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(p, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: p.to_path_buf(), source })
}
