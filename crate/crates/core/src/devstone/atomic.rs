use std::sync::Arc;

use super::busy::busy_cpu;
use crate::kernel::Counters;
use crate::model::{Atomic, EventValue, PortBags, TransitionError};

/// The DEVStone benchmark atomic.
///
/// Accumulates every received value and re-emits the whole list on `out`
/// in the next instant. Each transition burns its configured CPU delay and
/// bumps the shared counters.
pub struct DevstoneAtomic {
    list: Vec<EventValue>,
    active: bool,
    sigma: f64,
    delay_int: f64,
    delay_ext: f64,
    counters: Arc<Counters>,
}

impl DevstoneAtomic {
    pub fn new(delay_int: f64, delay_ext: f64, counters: Arc<Counters>) -> Self {
        Self {
            list: Vec::new(),
            active: false,
            sigma: f64::INFINITY,
            delay_int,
            delay_ext,
            counters,
        }
    }

    pub fn list(&self) -> &[EventValue] {
        &self.list
    }
}

impl Atomic for DevstoneAtomic {
    fn initialize(&mut self) {
        self.list.clear();
        self.active = false;
        self.sigma = f64::INFINITY;
    }

    fn time_advance(&self) -> f64 {
        self.sigma
    }

    fn delta_int(&mut self) -> Result<(), TransitionError> {
        self.counters.add_delt_int();
        busy_cpu(self.delay_int);
        self.list.clear();
        self.active = false;
        self.sigma = f64::INFINITY;
        Ok(())
    }

    fn delta_ext(&mut self, _elapsed: f64, inputs: &PortBags) -> Result<(), TransitionError> {
        self.counters.add_delt_ext();
        busy_cpu(self.delay_ext);
        let values = inputs.values("in");
        self.counters.add_events(values.len() as u64);
        self.list.extend_from_slice(values);
        self.active = true;
        self.sigma = 0.0;
        Ok(())
    }

    fn lambda(&self, outputs: &mut PortBags) {
        if let Some(bag) = outputs.bag_mut("out") {
            bag.extend_from_slice(&self.list);
        }
    }

    fn phase(&self) -> &str {
        if self.active {
            "active"
        } else {
            "passive"
        }
    }

    fn state_summary(&self) -> String {
        format!("{} sigma={} list={}", self.phase(), self.sigma, self.list.len())
    }
}

/// Injects one seed value at t=0, then passivates.
#[derive(Debug, Default)]
pub struct SeedGenerator {
    fired: bool,
}

impl Atomic for SeedGenerator {
    fn initialize(&mut self) {
        self.fired = false;
    }

    fn time_advance(&self) -> f64 {
        if self.fired {
            f64::INFINITY
        } else {
            0.0
        }
    }

    fn delta_int(&mut self) -> Result<(), TransitionError> {
        self.fired = true;
        Ok(())
    }

    fn delta_ext(&mut self, _: f64, _: &PortBags) -> Result<(), TransitionError> {
        Ok(())
    }

    fn lambda(&self, outputs: &mut PortBags) {
        outputs.push("out", 0i64);
    }

    fn phase(&self) -> &str {
        if self.fired {
            "passive"
        } else {
            "active"
        }
    }
}
