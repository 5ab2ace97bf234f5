//! File formats for monitor output.
//!
//! Signals are CSV with header `chunk_index,score,lower,upper,shift`, where
//! `shift` is `0` or `1` and unbounded limits are written as `inf`/`-inf`.
//! Events are JSON lines carrying `chunk_index`, `score`, `lower`, `upper`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::detector::{MonitorSignal, ShiftEvent, SignalPoint};
use crate::embedding::MomentVector;
use crate::error::{Error, Result};

pub const SIGNAL_HEADER: &str = "chunk_index,score,lower,upper,shift";
pub const MOMENTS_HEADER: &str = "chunk_index,m1,m2,m3,m4";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub chunk_index: usize,
    pub score: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&ShiftEvent> for EventRecord {
    fn from(e: &ShiftEvent) -> Self {
        EventRecord {
            chunk_index: e.chunk_index,
            score: e.score,
            lower: e.lower,
            upper: e.upper,
        }
    }
}

pub fn write_signal<W: Write>(mut w: W, signal: &MonitorSignal) -> std::io::Result<()> {
    writeln!(w, "{SIGNAL_HEADER}")?;
    for p in &signal.points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.chunk_index,
            p.score,
            p.lower,
            p.upper,
            u8::from(p.shift)
        )?;
    }
    w.flush()
}

pub fn read_signal<R: Read>(r: R) -> Result<MonitorSignal> {
    let mut points = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::io("signal", e))?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line == SIGNAL_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::RaggedRows {
                row: n,
                expected: 5,
                actual: fields.len(),
            });
        }
        let num = |column: usize| -> Result<f64> {
            fields[column].trim().parse().map_err(|_| Error::NonNumeric {
                line: n as u64 + 1,
                column,
                value: fields[column].to_string(),
            })
        };
        let chunk_index = fields[0].trim().parse().map_err(|_| Error::NonNumeric {
            line: n as u64 + 1,
            column: 0,
            value: fields[0].to_string(),
        })?;
        let shift = match fields[4].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::NonNumeric {
                    line: n as u64 + 1,
                    column: 4,
                    value: other.to_string(),
                })
            }
        };
        points.push(SignalPoint {
            chunk_index,
            score: num(1)?,
            lower: num(2)?,
            upper: num(3)?,
            shift,
        });
    }
    Ok(MonitorSignal { points })
}

pub fn write_events<W: Write>(mut w: W, events: &[ShiftEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &EventRecord::from(e))?;
        w.write_all(b"\n").map_err(|e| Error::io("events", e))?;
    }
    w.flush().map_err(|e| Error::io("events", e))
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line.map_err(|e| Error::io("events", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_moments<W: Write>(mut w: W, rows: &[(usize, MomentVector)]) -> std::io::Result<()> {
    writeln!(w, "{MOMENTS_HEADER}")?;
    for (index, m) in rows {
        writeln!(w, "{},{},{},{},{}", index, m.m1, m.m2, m.m3, m.m4)?;
    }
    w.flush()
}
