//! Abstract simulator protocol and the sequential root coordinator.
//!
//! One cycle of the protocol: `t = ta()` (minimum next-event time), `lambda`
//! on every imminent simulator, propagation of output bags along couplings,
//! then `deltfcn` on every simulator that is imminent or has input. The
//! sequential coordinator here is the reference semantics; the parallel and
//! distributed backends must reproduce its traces exactly.

mod flat;
mod hierarchical;
mod report;
mod sequential;
mod simulator;

use std::sync::atomic::{AtomicU64, Ordering};

pub use flat::FlatModel;
pub use hierarchical::HierarchicalCoordinator;
pub use report::{read_report_rows, write_report_rows, AtomicProfile, CounterTriple, ReportRow, RunReport};
pub use sequential::SequentialCoordinator;
pub use simulator::{Simulator, Transition};

use crate::model::{ModelError, TransitionError};

/// Global benchmark counters: internal transitions, external transitions and
/// events received. Increments are atomic so concurrent transitions never
/// lose updates.
#[derive(Debug, Default)]
pub struct Counters {
    delt_ints: AtomicU64,
    delt_exts: AtomicU64,
    events: AtomicU64,
}

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_delt_int(&self) {
        self.delt_ints.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_delt_ext(&self) {
        self.delt_exts.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add_events(&self, n: u64) {
        self.events.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterTriple {
        CounterTriple {
            num_delt_ints: self.delt_ints.load(Ordering::Relaxed),
            num_delt_exts: self.delt_exts.load(Ordering::Relaxed),
            num_events: self.events.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.delt_ints.store(0, Ordering::Relaxed);
        self.delt_exts.store(0, Ordering::Relaxed);
        self.events.store(0, Ordering::Relaxed);
    }
}

/// Virtual time plus the number of completed cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationClock {
    pub t: f64,
    pub iteration: u64,
}

impl Default for SimulationClock {
    fn default() -> Self {
        Self { t: 0.0, iteration: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Record per-atomic event traces and the clock trail.
    pub trace: bool,
    /// Measure CPU time spent inside each atomic's transitions.
    pub profile: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("atomic {atomic:?} failed at t={time}: {source}")]
    Transition {
        atomic: String,
        time: f64,
        #[source]
        source: TransitionError,
    },
    #[error("atomic {atomic:?} panicked: {message}")]
    Panic { atomic: String, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("deployment plan: {0}")]
    Plan(String),
}
