use std::sync::Arc;
use std::time::Instant;

use crate::model::{ModelGraph, ModelRegistry};

use super::{Counters, FlatModel, RunReport, SimError, SimOptions, SimulationClock};

/// Single-threaded root coordinator over the flattened model.
#[derive(Debug)]
pub struct SequentialCoordinator {
    model: FlatModel,
    imminent: Option<Vec<usize>>,
}

impl SequentialCoordinator {
    pub fn new(graph: &ModelGraph, registry: &ModelRegistry, options: SimOptions) -> Result<Self, SimError> {
        Self::with_counters(graph, registry, Arc::new(Counters::new()), options)
    }

    pub fn with_counters(
        graph: &ModelGraph,
        registry: &ModelRegistry,
        counters: Arc<Counters>,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        Ok(Self {
            model: FlatModel::build(graph, registry, counters, options)?,
            imminent: None,
        })
    }

    pub fn model(&self) -> &FlatModel {
        &self.model
    }

    pub fn clock(&self) -> SimulationClock {
        self.model.clock
    }

    /// Global next-event time; does not mutate anything.
    pub fn ta(&self) -> f64 {
        self.model.ta()
    }

    /// Output phase at the current clock plus output propagation.
    pub fn lambda(&mut self) {
        let (cycle, t) = (self.model.cycle(), self.model.clock.t);
        let imminent = self.model.imminent();
        for &i in &imminent {
            self.model.sims[i].lambda(cycle, t);
        }
        self.model.propagate(&imminent);
        self.imminent = Some(imminent);
    }

    /// Transition phase; must follow [`lambda`](Self::lambda) in the same cycle.
    pub fn deltfcn(&mut self) -> Result<(), SimError> {
        if self.imminent.take().is_none() {
            return Err(SimError::Protocol("deltfcn called before lambda".into()));
        }
        let (cycle, t) = (self.model.cycle(), self.model.clock.t);
        for sim in &mut self.model.sims {
            if sim.is_active(t) {
                sim.deltfcn(cycle, t)?;
            }
        }
        Ok(())
    }

    /// Runs cycles until every model is passive or `max_iterations` cycles
    /// have executed in this call.
    pub fn simulate(&mut self, max_iterations: u64) -> Result<RunReport, SimError> {
        let started = Instant::now();
        let mut done = 0;
        while done < max_iterations {
            let t = self.ta();
            if t == f64::INFINITY {
                break;
            }
            self.model.begin_cycle(t);
            self.lambda();
            self.deltfcn()?;
            self.model.end_cycle();
            done += 1;
        }
        let wall = started.elapsed().as_secs_f64();
        Ok(self.model.finish("sequential", "1".into(), wall))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpt::{self, GptParams};
    use crate::model::{Atomic, AtomicSpec, PortBags, TransitionError};

    /// Emits `value` once at t=`at`, then passivates.
    struct Once {
        at: f64,
        value: i64,
        fired: bool,
    }

    impl Atomic for Once {
        fn time_advance(&self) -> f64 {
            if self.fired {
                f64::INFINITY
            } else {
                self.at
            }
        }
        fn delta_int(&mut self) -> Result<(), TransitionError> {
            self.fired = true;
            Ok(())
        }
        fn delta_ext(&mut self, _: f64, _: &PortBags) -> Result<(), TransitionError> {
            Ok(())
        }
        fn lambda(&self, out: &mut PortBags) {
            out.push("out", self.value);
        }
        fn phase(&self) -> &str {
            if self.fired {
                "passive"
            } else {
                "armed"
            }
        }
    }

    /// Keeps every received value, never schedules itself.
    struct Sink {
        got: Vec<String>,
    }

    impl Atomic for Sink {
        fn time_advance(&self) -> f64 {
            f64::INFINITY
        }
        fn delta_int(&mut self) -> Result<(), TransitionError> {
            Ok(())
        }
        fn delta_ext(&mut self, _: f64, inputs: &PortBags) -> Result<(), TransitionError> {
            self.got.extend(inputs.values("in").iter().map(ToString::to_string));
            Ok(())
        }
        fn lambda(&self, _: &mut PortBags) {}
        fn phase(&self) -> &str {
            "passive"
        }
        fn state_summary(&self) -> String {
            self.got.join(",")
        }
    }

    fn toy_registry() -> ModelRegistry {
        let mut r = ModelRegistry::empty();
        r.register("once", &[], &["out"], |spec, _| {
            Ok(Box::new(Once {
                at: spec.param_f64("at").unwrap().unwrap_or(0.0),
                value: spec.param_u64("value").unwrap().unwrap_or(0) as i64,
                fired: false,
            }))
        });
        r.register("sink", &["in"], &[], |_, _| Ok(Box::new(Sink { got: Vec::new() })));
        r
    }

    fn traced() -> SimOptions {
        SimOptions {
            trace: true,
            profile: false,
        }
    }

    #[test]
    fn initial_clock_is_first_event() {
        let c = SequentialCoordinator::new(&gpt::gpt(GptParams::default()), &ModelRegistry::standard(), traced()).unwrap();
        assert_eq!(c.clock().t, 0.0);
    }

    #[test]
    fn all_passive_model_runs_zero_cycles() {
        let r = toy_registry();
        let mut g = ModelGraph::new("quiet");
        g.add_component(r.spec("s", "sink").unwrap()).unwrap();
        let mut c = SequentialCoordinator::new(&g, &r, traced()).unwrap();
        assert_eq!(c.clock().t, f64::INFINITY);
        let report = c.simulate(u64::MAX).unwrap();
        assert_eq!(report.cycles, 0);
    }

    #[test]
    fn ta_is_min_of_next_events() {
        let r = toy_registry();
        let mut g = ModelGraph::new("m");
        for (name, at) in [("a", 3.0), ("b", 5.0)] {
            g.add_component(r.spec(name, "once").unwrap().param("at", at)).unwrap();
        }
        g.add_component(r.spec("s", "sink").unwrap()).unwrap();
        let c = SequentialCoordinator::new(&g, &r, traced()).unwrap();
        assert_eq!(c.ta(), 3.0);
        assert_eq!(c.ta(), 3.0, "ta must not mutate");

        let mut single = ModelGraph::new("m");
        single.add_component(r.spec("a", "once").unwrap().param("at", 7)).unwrap();
        assert_eq!(SequentialCoordinator::new(&single, &r, traced()).unwrap().ta(), 7.0);
    }

    #[test]
    fn fan_out_and_fan_in() {
        let r = toy_registry();
        let mut g = ModelGraph::new("m");
        g.add_component(r.spec("a", "once").unwrap().param("value", 5)).unwrap();
        g.add_component(r.spec("b", "once").unwrap().param("value", 6)).unwrap();
        g.add_component(r.spec("s1", "sink").unwrap()).unwrap();
        g.add_component(r.spec("s2", "sink").unwrap()).unwrap();
        g.connect("a", "out", "s1", "in").unwrap();
        g.connect("a", "out", "s2", "in").unwrap();
        // fan-in on s2: b's coupling was inserted after a's
        g.connect("b", "out", "s2", "in").unwrap();
        let mut c = SequentialCoordinator::new(&g, &r, traced()).unwrap();
        c.model.begin_cycle(c.ta());
        c.lambda();
        let sims = c.model().simulators();
        assert_eq!(sims[2].inputs().get("in").unwrap().to_string(), "[5]");
        assert_eq!(sims[3].inputs().get("in").unwrap().to_string(), "[5,6]");
        c.deltfcn().unwrap();
        let report = c.simulate(u64::MAX).unwrap();
        assert_eq!(report.final_states["s2"], "5,6");
    }

    #[test]
    fn no_imminent_means_no_output() {
        let r = toy_registry();
        let mut g = ModelGraph::new("m");
        g.add_component(r.spec("a", "once").unwrap().param("at", 4)).unwrap();
        g.add_component(r.spec("s", "sink").unwrap()).unwrap();
        g.connect("a", "out", "s", "in").unwrap();
        let mut c = SequentialCoordinator::new(&g, &r, traced()).unwrap();
        // force the clock below every tN
        c.model.begin_cycle(1.0);
        c.lambda();
        assert!(c.model().simulators().iter().all(|s| s.inputs().is_empty() && s.outputs().is_empty()));
    }

    #[test]
    fn deltfcn_requires_lambda_first() {
        let mut c = SequentialCoordinator::new(&gpt::gpt(GptParams::default()), &ModelRegistry::standard(), traced()).unwrap();
        assert!(matches!(c.deltfcn(), Err(SimError::Protocol(_))));
    }

    #[test]
    fn zero_iterations_do_nothing() {
        let mut c = SequentialCoordinator::new(&gpt::gpt(GptParams::default()), &ModelRegistry::standard(), traced()).unwrap();
        assert_eq!(c.simulate(0).unwrap().cycles, 0);
    }

    #[test]
    fn unconnected_outputs_are_counted_not_fatal() {
        let r = toy_registry();
        let mut g = ModelGraph::new("m");
        g.add_component(r.spec("a", "once").unwrap().param("value", 1)).unwrap();
        let report = SequentialCoordinator::new(&g, &r, traced())
            .unwrap()
            .simulate(u64::MAX)
            .unwrap();
        assert_eq!(report.unrouted_values, 1);
        assert_eq!(report.cycles, 1);
    }

    #[test]
    fn user_failure_aborts_with_name() {
        let mut r = toy_registry();
        r.register("fragile", &["in"], &[], |_, _| Ok(Box::new(Fragile)));
        struct Fragile;
        impl Atomic for Fragile {
            fn time_advance(&self) -> f64 {
                f64::INFINITY
            }
            fn delta_int(&mut self) -> Result<(), TransitionError> {
                Ok(())
            }
            fn delta_ext(&mut self, _: f64, _: &PortBags) -> Result<(), TransitionError> {
                Err(TransitionError::new("bad input"))
            }
            fn lambda(&self, _: &mut PortBags) {}
            fn phase(&self) -> &str {
                "x"
            }
        }
        let mut g = ModelGraph::new("m");
        g.add_component(r.spec("a", "once").unwrap()).unwrap();
        g.add_component(AtomicSpec::new("victim", "fragile").input("in")).unwrap();
        g.connect("a", "out", "victim", "in").unwrap();
        let err = SequentialCoordinator::new(&g, &r, traced())
            .unwrap()
            .simulate(u64::MAX)
            .unwrap_err();
        assert!(err.to_string().contains("victim"), "{err}");
    }
}
