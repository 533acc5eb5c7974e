//! Serialized run outputs.

use std::io::{self, Write};

use super::{HoRecord, TraceRow};
use crate::perception::Frame;

/// Columns `t_s,x_m,serving_id,rssi_dbm,rssi_norm,mos,state`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_events_jsonl<W: Write>(events: &[HoRecord], mut w: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_frames_jsonl<W: Write>(frames: &[Frame], mut w: W) -> io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
