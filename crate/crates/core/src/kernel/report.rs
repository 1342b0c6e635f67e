use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CounterTriple {
    pub num_delt_ints: u64,
    pub num_delt_exts: u64,
    pub num_events: u64,
}

impl std::ops::Add for CounterTriple {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            num_delt_ints: self.num_delt_ints + rhs.num_delt_ints,
            num_delt_exts: self.num_delt_exts + rhs.num_delt_exts,
            num_events: self.num_events + rhs.num_events,
        }
    }
}

/// CPU seconds an atomic spent inside its transition functions.
///
/// Confluent transitions are timed as a unit and kept apart; for the
/// benchmark atomic they are an internal plus an external transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicProfile {
    pub name: String,
    pub cpu_seconds_int: f64,
    pub cpu_seconds_ext: f64,
    pub cpu_seconds_con: f64,
}

impl AtomicProfile {
    pub fn total(&self) -> f64 {
        self.cpu_seconds_int + self.cpu_seconds_ext + self.cpu_seconds_con
    }
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub model: String,
    pub backend: String,
    /// Resource label: `1` for sequential, `n` for one pool, `ixj` for two.
    pub workers: String,
    pub cycles: u64,
    pub wall_seconds: f64,
    pub counters: CounterTriple,
    pub final_time: f64,
    /// Values emitted on ports that no coupling delivers to an atomic.
    pub unrouted_values: u64,
    pub traces: Option<BTreeMap<String, Vec<String>>>,
    pub clock_trail: Option<Vec<f64>>,
    pub profiles: Option<Vec<AtomicProfile>>,
    pub final_states: BTreeMap<String, String>,
}

impl RunReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            model: self.model.clone(),
            backend: self.backend.clone(),
            workers: self.workers.clone(),
            cycles: self.cycles,
            wall_seconds: self.wall_seconds,
            num_delt_ints: self.counters.num_delt_ints,
            num_delt_exts: self.counters.num_delt_exts,
            num_events: self.counters.num_events,
        }
    }

    /// One atomic's trace as a single newline-terminated text block.
    pub fn trace_text(&self, atomic: &str) -> Option<String> {
        self.traces.as_ref()?.get(atomic).map(|lines| {
            let mut s = lines.join("\n");
            s.push('\n');
            s
        })
    }
}

/// CSV form of a [`RunReport`]:
/// `model,backend,workers,cycles,wall_seconds,num_delt_ints,num_delt_exts,num_events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub backend: String,
    pub workers: String,
    pub cycles: u64,
    pub wall_seconds: f64,
    pub num_delt_ints: u64,
    pub num_delt_exts: u64,
    pub num_events: u64,
}

pub fn write_report_rows<W: Write>(out: W, rows: &[ReportRow], header: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_rows<R: Read>(input: R) -> csv::Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        write_report_rows(&mut buf, &[], true).unwrap();
        // csv writes headers lazily; serialize one row to see them
        let row = ReportRow {
            model: "ho-5-5".into(),
            backend: "sequential".into(),
            workers: "1".into(),
            cycles: 6,
            wall_seconds: 0.25,
            num_delt_ints: 41,
            num_delt_exts: 41,
            num_events: 41,
        };
        write_report_rows(&mut buf, &[row.clone()], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "model,backend,workers,cycles,wall_seconds,num_delt_ints,num_delt_exts,num_events"
        );
        assert_eq!(read_report_rows(text.as_bytes()).unwrap(), vec![row]);
    }
}
