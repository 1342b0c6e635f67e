//! The generator/processor/transducer example, in its hierarchical (EF-P)
//! and flat (GPT) forms.

use crate::model::{Atomic, AtomicSpec, EventValue, ModelGraph, ModelRegistry, PortBags, TransitionError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GptParams {
    /// Time between generated jobs.
    pub period: f64,
    /// Number of jobs before the generator passivates.
    pub count: u64,
    /// Service time of one job.
    pub processing_time: f64,
}

impl Default for GptParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            count: 6,
            processing_time: 1.5,
        }
    }
}

/// Emits job ids 0, 1, ... every `period`, starting at t=0.
pub struct Generator {
    period: f64,
    count: u64,
    next: u64,
    sigma: f64,
}

impl Atomic for Generator {
    fn initialize(&mut self) {
        self.next = 0;
        self.sigma = if self.count == 0 { f64::INFINITY } else { 0.0 };
    }

    fn time_advance(&self) -> f64 {
        self.sigma
    }

    fn delta_int(&mut self) -> Result<(), TransitionError> {
        self.next += 1;
        self.sigma = if self.next >= self.count { f64::INFINITY } else { self.period };
        Ok(())
    }

    fn delta_ext(&mut self, elapsed: f64, _: &PortBags) -> Result<(), TransitionError> {
        self.sigma -= elapsed;
        Ok(())
    }

    fn lambda(&self, outputs: &mut PortBags) {
        outputs.push("out", self.next as i64);
    }

    fn phase(&self) -> &str {
        if self.sigma.is_finite() {
            "active"
        } else {
            "passive"
        }
    }
}

/// Serves one job at a time; jobs arriving while busy are dropped.
pub struct Processor {
    processing_time: f64,
    job: Option<EventValue>,
    sigma: f64,
}

impl Atomic for Processor {
    fn initialize(&mut self) {
        self.job = None;
        self.sigma = f64::INFINITY;
    }

    fn time_advance(&self) -> f64 {
        self.sigma
    }

    fn delta_int(&mut self) -> Result<(), TransitionError> {
        self.job = None;
        self.sigma = f64::INFINITY;
        Ok(())
    }

    fn delta_ext(&mut self, elapsed: f64, inputs: &PortBags) -> Result<(), TransitionError> {
        if self.job.is_some() {
            self.sigma -= elapsed;
        } else if let Some(job) = inputs.values("in").first() {
            self.job = Some(job.clone());
            self.sigma = self.processing_time;
        }
        Ok(())
    }

    fn lambda(&self, outputs: &mut PortBags) {
        if let Some(job) = &self.job {
            outputs.push("out", job.clone());
        }
    }

    fn phase(&self) -> &str {
        if self.job.is_some() {
            "busy"
        } else {
            "passive"
        }
    }

    fn state_summary(&self) -> String {
        match &self.job {
            Some(job) => format!("busy job={job} sigma={}", self.sigma),
            None => "passive".into(),
        }
    }
}

/// Records arrivals and completions with their times; never schedules itself.
#[derive(Default)]
pub struct Transducer {
    clock: f64,
    arrived: Vec<(f64, EventValue)>,
    solved: Vec<(f64, EventValue)>,
}

impl Transducer {
    pub fn arrived(&self) -> usize {
        self.arrived.len()
    }

    pub fn solved(&self) -> usize {
        self.solved.len()
    }
}

impl Atomic for Transducer {
    fn initialize(&mut self) {
        self.clock = 0.0;
        self.arrived.clear();
        self.solved.clear();
    }

    fn time_advance(&self) -> f64 {
        f64::INFINITY
    }

    fn delta_int(&mut self) -> Result<(), TransitionError> {
        Ok(())
    }

    fn delta_ext(&mut self, elapsed: f64, inputs: &PortBags) -> Result<(), TransitionError> {
        self.clock += elapsed;
        let t = self.clock;
        self.arrived.extend(inputs.values("arrived").iter().map(|v| (t, v.clone())));
        self.solved.extend(inputs.values("solved").iter().map(|v| (t, v.clone())));
        Ok(())
    }

    fn lambda(&self, _: &mut PortBags) {}

    fn phase(&self) -> &str {
        "passive"
    }

    fn state_summary(&self) -> String {
        let list = |xs: &[(f64, EventValue)]| xs.iter().map(|(t, v)| format!("{v}@{t}")).collect::<Vec<_>>().join(",");
        format!("arrived=[{}] solved=[{}]", list(&self.arrived), list(&self.solved))
    }
}

pub fn generator_spec(name: &str, period: f64, count: u64) -> AtomicSpec {
    AtomicSpec::new(name, "generator")
        .output("out")
        .param("period", period)
        .param("count", count)
}

pub fn processor_spec(name: &str, processing_time: f64) -> AtomicSpec {
    AtomicSpec::new(name, "processor")
        .input("in")
        .output("out")
        .param("processingTime", processing_time)
}

pub fn transducer_spec(name: &str) -> AtomicSpec {
    AtomicSpec::new(name, "transducer").input("arrived").input("solved")
}

/// Flat model: generator feeds processor and transducer, processor reports
/// to transducer.
pub fn gpt(p: GptParams) -> ModelGraph {
    let mut g = ModelGraph::new("gpt");
    g.add_component(generator_spec("generator", p.period, p.count)).unwrap();
    g.add_component(processor_spec("processor", p.processing_time)).unwrap();
    g.add_component(transducer_spec("transducer")).unwrap();
    g.connect("generator", "out", "processor", "in").unwrap();
    g.connect("generator", "out", "transducer", "arrived").unwrap();
    g.connect("processor", "out", "transducer", "solved").unwrap();
    g
}

/// Hierarchical model: an experimental frame `ef` (generator and
/// transducer) coupled in a loop with the processor.
pub fn efp(p: GptParams) -> ModelGraph {
    let mut ef = ModelGraph::new("ef").with_input("in").with_output("out");
    ef.add_component(generator_spec("generator", p.period, p.count)).unwrap();
    ef.add_component(transducer_spec("transducer")).unwrap();
    ef.connect("ef", "in", "transducer", "solved").unwrap();
    ef.connect("generator", "out", "ef", "out").unwrap();
    ef.connect("generator", "out", "transducer", "arrived").unwrap();

    let mut g = ModelGraph::new("efp");
    g.add_component(ef).unwrap();
    g.add_component(processor_spec("processor", p.processing_time)).unwrap();
    g.connect("ef", "out", "processor", "in").unwrap();
    g.connect("processor", "out", "ef", "in").unwrap();
    g
}

fn required_f64(spec: &AtomicSpec, key: &str, default: f64) -> Result<f64, TransitionError> {
    Ok(spec.param_f64(key)?.unwrap_or(default))
}

/// Adds the `generator`, `processor` and `transducer` kinds.
pub fn register(registry: &mut ModelRegistry) {
    use crate::model::ModelError;
    let build_err = |spec: &AtomicSpec, e: TransitionError| ModelError::Build {
        atomic: spec.name.clone(),
        reason: e.0,
    };
    registry.register("generator", &[], &["out"], move |spec, _| {
        let period = required_f64(spec, "period", 1.0).map_err(|e| build_err(spec, e))?;
        let count = spec.param_u64("count").map_err(|e| build_err(spec, e))?.unwrap_or(1);
        Ok(Box::new(Generator {
            period,
            count,
            next: 0,
            sigma: 0.0,
        }))
    });
    registry.register("processor", &["in"], &["out"], move |spec, _| {
        let processing_time = required_f64(spec, "processingTime", 1.0).map_err(|e| build_err(spec, e))?;
        Ok(Box::new(Processor {
            processing_time,
            job: None,
            sigma: f64::INFINITY,
        }))
    });
    registry.register("transducer", &["arrived", "solved"], &[], |_, _| Ok(Box::new(Transducer::default())));
}
