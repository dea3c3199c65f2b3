//! CSV encoding of simulator traces.
//!
//! One row per arrival event; floats are written with 17 significant digits
//! so a trace round-trips exactly and repeated runs are byte-identical.

use std::fmt::Write as _;
use std::io;

use crate::error::{Error, Result};
use crate::sim::TraceRow;

pub const CSV_HEADER: &str = "sim_time_s,event,worker,delay,accepted,iteration,loss,grad_dual_norm,rejected_total";

fn push_row(out: &mut String, r: &TraceRow) {
    // writing into a String cannot fail
    let _ = writeln!(
        out,
        "{:.16e},{},{},{},{},{},{:.16e},{:.16e},{}",
        r.sim_time_s,
        r.event_index,
        r.worker,
        r.delay,
        u8::from(r.accepted),
        r.iteration,
        r.loss,
        r.grad_dual_norm,
        r.rejected_total
    );
}

pub fn to_csv_string(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        push_row(&mut out, r);
    }
    out
}

pub fn write_csv<W: io::Write>(rows: &[TraceRow], mut w: W) -> io::Result<()> {
    w.write_all(to_csv_string(rows).as_bytes())?;
    w.flush()
}

fn field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| Error::invalid(format!("line {line}: cannot parse {name} from {value:?}")))
}

/// Parses a CSV produced by [`to_csv_string`]. Errors name the offending line
/// (1-based, header is line 1).
pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::invalid(format!("line 1: expected header {CSV_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::invalid(format!("line {n}: expected 9 fields, found {}", f.len())));
        }
        let accepted = match f[4].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::invalid(format!("line {n}: bad accepted flag {other:?}"))),
        };
        rows.push(TraceRow {
            sim_time_s: field(f[0], "sim_time_s", n)?,
            event_index: field(f[1], "event", n)?,
            worker: field(f[2], "worker", n)?,
            delay: field(f[3], "delay", n)?,
            accepted,
            iteration: field(f[5], "iteration", n)?,
            loss: field(f[6], "loss", n)?,
            grad_dual_norm: field(f[7], "grad_dual_norm", n)?,
            rejected_total: field(f[8], "rejected_total", n)?,
        });
    }
    Ok(rows)
}
