//! Per-step episode traces as CSV, one row per control step.
//!
//! Columns: `scenario_seed,t,x,y,v,heading,steer,accel,steer_rate,reward,termination`.
//! Row `t` holds the state reached after step `t` and the action that led
//! there; the row with `t = 0` is the start state with a zero action.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub scenario_seed: u64,
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub heading: f64,
    pub steer: f64,
    pub accel: f64,
    pub steer_rate: f64,
    pub reward: f64,
    pub termination: String,
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TraceRecord>().enumerate() {
        let rec = row.map_err(|e| Error::TraceCorrupt(format!("row {i}: {e}")))?;
        if super::Termination::parse(&rec.termination).is_none() {
            return Err(Error::TraceCorrupt(format!("row {i}: unknown termination {:?}", rec.termination)));
        }
        if rec.t != i {
            return Err(Error::TraceCorrupt(format!("row {i}: step index {} out of sequence", rec.t)));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::TraceCorrupt("trace is empty".into()));
    }
    Ok(out)
}
