use std::time::Duration;

use crate::cpu;
use crate::model::{Atomic, AtomicSpec, BuildContext, ModelError, ModelRegistry, PortBags, TransitionError};

use super::{AtomicProfile, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Internal,
    External,
    Confluent,
}

#[derive(Debug, Default, Clone, Copy)]
struct CpuTimes {
    int: Duration,
    ext: Duration,
    con: Duration,
}

/// Drives one atomic model through the abstract simulator protocol.
///
/// Holds the live behavior, its port bags and the `tL`/`tN` bookkeeping.
/// Every backend (sequential, parallel, distributed) uses this type, which is
/// what makes their traces comparable byte for byte.
pub struct Simulator {
    name: String,
    behavior: Box<dyn Atomic>,
    inputs: PortBags,
    outputs: PortBags,
    tl: f64,
    tn: f64,
    trace: Option<Vec<String>>,
    cpu: Option<CpuTimes>,
    last_transition_cycle: Option<u64>,
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("name", &self.name)
            .field("tl", &self.tl)
            .field("tn", &self.tn)
            .finish_non_exhaustive()
    }
}

impl Simulator {
    pub fn new(behavior: Box<dyn Atomic>, spec: &AtomicSpec) -> Self {
        Self {
            name: spec.name.clone(),
            behavior,
            inputs: PortBags::with_ports(spec.inputs.iter().cloned()),
            outputs: PortBags::with_ports(spec.outputs.iter().cloned()),
            tl: 0.0,
            tn: f64::INFINITY,
            trace: None,
            cpu: None,
            last_transition_cycle: None,
        }
    }

    pub fn build(spec: &AtomicSpec, registry: &ModelRegistry, ctx: &BuildContext) -> Result<Self, ModelError> {
        Ok(Self::new(registry.build(spec, ctx)?, spec))
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn enable_profile(&mut self) {
        self.cpu = Some(CpuTimes::default());
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tl(&self) -> f64 {
        self.tl
    }

    pub fn tn(&self) -> f64 {
        self.tn
    }

    pub fn inputs(&self) -> &PortBags {
        &self.inputs
    }

    pub fn inputs_mut(&mut self) -> &mut PortBags {
        &mut self.inputs
    }

    pub fn outputs(&self) -> &PortBags {
        &self.outputs
    }

    pub fn is_imminent(&self, t: f64) -> bool {
        self.tn == t
    }

    /// Whether the simulator has work in the delta phase at time `t`.
    pub fn is_active(&self, t: f64) -> bool {
        self.tn == t || !self.inputs.is_empty()
    }

    pub fn initialize(&mut self) {
        self.behavior.initialize();
        self.tl = 0.0;
        self.tn = self.tl + self.behavior.time_advance();
    }

    /// Runs the output function when imminent at `t`.
    pub fn lambda(&mut self, cycle: u64, t: f64) {
        if self.tn != t {
            return;
        }
        self.behavior.lambda(&mut self.outputs);
        if let Some(trace) = &mut self.trace {
            if !self.outputs.is_empty() {
                trace.push(format!("{cycle} {t} out {}", self.outputs.describe()));
            }
        }
    }

    /// Chooses and runs the internal, external or confluent transition, then
    /// updates `tL`/`tN` and clears both sides' bags.
    pub fn deltfcn(&mut self, cycle: u64, t: f64) -> Result<Option<Transition>, SimError> {
        let imminent = self.tn == t;
        let has_input = !self.inputs.is_empty();
        let kind = match (imminent, has_input) {
            (true, false) => Transition::Internal,
            (false, true) => Transition::External,
            (true, true) => Transition::Confluent,
            (false, false) => {
                self.outputs.clear();
                return Ok(None);
            }
        };
        if self.last_transition_cycle == Some(cycle) {
            return Err(SimError::Protocol(format!(
                "atomic {:?} asked to transition twice in cycle {cycle}",
                self.name
            )));
        }
        self.last_transition_cycle = Some(cycle);

        if let Some(trace) = &mut self.trace {
            let line = match kind {
                Transition::Internal => format!("{cycle} {t} int"),
                Transition::External => format!("{cycle} {t} ext e={} {}", t - self.tl, self.inputs.describe()),
                Transition::Confluent => format!("{cycle} {t} con {}", self.inputs.describe()),
            };
            trace.push(line);
        }

        let started = self.cpu.map(|_| cpu::thread_time());
        let result = match kind {
            Transition::Internal => self.behavior.delta_int(),
            Transition::External => self.behavior.delta_ext(t - self.tl, &self.inputs),
            Transition::Confluent => self.behavior.delta_con(&self.inputs),
        };
        if let (Some(times), Some(started)) = (&mut self.cpu, started) {
            let spent = cpu::thread_time().saturating_sub(started);
            match kind {
                Transition::Internal => times.int += spent,
                Transition::External => times.ext += spent,
                Transition::Confluent => times.con += spent,
            }
        }
        result.map_err(|source: TransitionError| SimError::Transition {
            atomic: self.name.clone(),
            time: t,
            source,
        })?;

        self.tl = t;
        self.tn = self.tl + self.behavior.time_advance();
        self.inputs.clear();
        self.outputs.clear();
        Ok(Some(kind))
    }

    pub fn take_trace(&mut self) -> Option<Vec<String>> {
        self.trace.take()
    }

    pub fn profile(&self) -> Option<AtomicProfile> {
        self.cpu.map(|c| AtomicProfile {
            name: self.name.clone(),
            cpu_seconds_int: c.int.as_secs_f64(),
            cpu_seconds_ext: c.ext.as_secs_f64(),
            cpu_seconds_con: c.con.as_secs_f64(),
        })
    }

    pub fn state_summary(&self) -> String {
        self.behavior.state_summary()
    }
}
