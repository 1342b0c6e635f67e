use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::model::{flatten, BuildContext, CouplingKind, ModelGraph, ModelRegistry};

use super::{Counters, RunReport, SimError, SimOptions, SimulationClock, Simulator};

#[derive(Debug, Clone, Copy)]
struct Route {
    order: usize,
    src_port: usize,
    dst: usize,
    dst_port: usize,
}

/// A flattened model ready to execute: one simulator per atomic plus the
/// routing table derived from the flat couplings.
///
/// Shared by the sequential and parallel coordinators; they differ only in
/// how the lambda and delta phases are dispatched.
#[derive(Debug)]
pub struct FlatModel {
    name: String,
    pub(crate) sims: Vec<Simulator>,
    routes: Vec<Vec<Route>>,
    dead_ports: Vec<Vec<usize>>,
    counters: Arc<Counters>,
    pub(crate) clock: SimulationClock,
    unrouted: u64,
    clock_trail: Option<Vec<f64>>,
    options: SimOptions,
}

impl FlatModel {
    /// Validates and flattens `graph`, instantiates every atomic and runs
    /// its initialization; `clock.t` starts at the first next-event time.
    pub fn build(
        graph: &ModelGraph,
        registry: &ModelRegistry,
        counters: Arc<Counters>,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        let flat = flatten(graph)?;
        let ctx = BuildContext {
            counters: Arc::clone(&counters),
        };
        let mut sims = Vec::new();
        let mut index = HashMap::new();
        for spec in flat.atomics() {
            let mut sim = Simulator::build(spec, registry, &ctx)?;
            if options.trace {
                sim.enable_trace();
            }
            if options.profile {
                sim.enable_profile();
            }
            index.insert(spec.name.as_str(), sims.len());
            sims.push(sim);
        }

        let mut routes: Vec<Vec<Route>> = vec![Vec::new(); sims.len()];
        for (order, c) in flat.couplings().iter().enumerate() {
            if c.kind != CouplingKind::Ic {
                continue;
            }
            let src = index[c.from.component.as_str()];
            let dst = index[c.to.component.as_str()];
            routes[src].push(Route {
                order,
                src_port: sims[src].outputs().index_of(&c.from.port).expect("validated port"),
                dst,
                dst_port: sims[dst].inputs().index_of(&c.to.port).expect("validated port"),
            });
        }
        let dead_ports = sims
            .iter()
            .zip(&routes)
            .map(|(sim, rs)| {
                (0..sim.outputs().names().count())
                    .filter(|p| !rs.iter().any(|r| r.src_port == *p))
                    .collect()
            })
            .collect();

        let mut model = Self {
            name: graph.name.clone(),
            sims,
            routes,
            dead_ports,
            counters,
            clock: SimulationClock::default(),
            unrouted: 0,
            clock_trail: options.trace.then(Vec::new),
            options,
        };
        for sim in &mut model.sims {
            sim.initialize();
        }
        model.clock.t = model.ta();
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn simulators(&self) -> &[Simulator] {
        &self.sims
    }

    pub fn counters(&self) -> &Arc<Counters> {
        &self.counters
    }

    /// Minimum next-event time over all simulators.
    pub fn ta(&self) -> f64 {
        self.sims.iter().map(Simulator::tn).fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn begin_cycle(&mut self, t: f64) {
        self.clock.t = t;
        if let Some(trail) = &mut self.clock_trail {
            trail.push(t);
        }
    }

    pub(crate) fn end_cycle(&mut self) {
        self.clock.iteration += 1;
    }

    pub(crate) fn cycle(&self) -> u64 {
        self.clock.iteration + 1
    }

    pub(crate) fn imminent(&self) -> Vec<usize> {
        let t = self.clock.t;
        (0..self.sims.len()).filter(|&i| self.sims[i].is_imminent(t)).collect()
    }

    /// Copies the output bags of `imminent` simulators along every internal
    /// coupling. Fan-out duplicates; fan-in concatenates in coupling order.
    pub(crate) fn propagate(&mut self, imminent: &[usize]) {
        let mut pending: Vec<(usize, Route)> = imminent
            .iter()
            .flat_map(|&src| self.routes[src].iter().map(move |r| (src, *r)))
            .collect();
        pending.sort_by_key(|(_, r)| r.order);
        for (src, r) in pending {
            let values = self.sims[src].outputs().bag_at(r.src_port);
            if values.is_empty() {
                continue;
            }
            let values = values.values().to_vec();
            self.sims[r.dst].inputs_mut().bag_at_mut(r.dst_port).extend_from_slice(&values);
        }
        for &src in imminent {
            for &p in &self.dead_ports[src] {
                self.unrouted += self.sims[src].outputs().bag_at(p).len() as u64;
            }
        }
    }

    pub(crate) fn finish(&mut self, backend: &str, workers: String, wall_seconds: f64) -> RunReport {
        let traces = self.options.trace.then(|| {
            self.sims
                .iter_mut()
                .map(|s| (s.name().to_owned(), s.take_trace().unwrap_or_default()))
                .collect::<BTreeMap<_, _>>()
        });
        if self.options.trace {
            for s in &mut self.sims {
                s.enable_trace();
            }
        }
        RunReport {
            model: self.name.clone(),
            backend: backend.to_owned(),
            workers,
            cycles: self.clock.iteration,
            wall_seconds,
            counters: self.counters.snapshot(),
            final_time: self.clock.t,
            unrouted_values: self.unrouted,
            traces,
            clock_trail: self.clock_trail.clone(),
            profiles: self
                .options
                .profile
                .then(|| self.sims.iter().filter_map(Simulator::profile).collect()),
            final_states: self
                .sims
                .iter()
                .map(|s| (s.name().to_owned(), s.state_summary()))
                .collect(),
        }
    }
}
