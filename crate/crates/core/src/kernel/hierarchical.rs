use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use crate::model::{flatten, BuildContext, Component, CouplingKind, ModelGraph, ModelRegistry, PortBags};

use super::{Counters, RunReport, SimError, SimOptions, SimulationClock, Simulator};

enum Node {
    Sim(Box<Simulator>),
    Coupled(Box<CoupledNode>),
}

struct CoupledNode {
    children: Vec<Node>,
    inputs: PortBags,
    outputs: PortBags,
    /// own input port -> (child, child input port)
    eic: Vec<(usize, usize, usize)>,
    /// (child, output port) -> (child, input port)
    ic: Vec<(usize, usize, usize, usize)>,
    /// (child, output port) -> own output port
    eoc: Vec<(usize, usize, usize)>,
}

impl Node {
    fn tn(&self) -> f64 {
        match self {
            Node::Sim(s) => s.tn(),
            Node::Coupled(c) => c.children.iter().map(Node::tn).fold(f64::INFINITY, f64::min),
        }
    }

    fn outputs(&self) -> &PortBags {
        match self {
            Node::Sim(s) => s.outputs(),
            Node::Coupled(c) => &c.outputs,
        }
    }

    fn inputs_mut(&mut self) -> &mut PortBags {
        match self {
            Node::Sim(s) => s.inputs_mut(),
            Node::Coupled(c) => &mut c.inputs,
        }
    }

    fn has_input(&self) -> bool {
        match self {
            Node::Sim(s) => !s.inputs().is_empty(),
            Node::Coupled(c) => !c.inputs.is_empty(),
        }
    }

    fn lambda(&mut self, cycle: u64, t: f64) {
        match self {
            Node::Sim(s) => s.lambda(cycle, t),
            Node::Coupled(c) => {
                for child in &mut c.children {
                    if child.tn() == t {
                        child.lambda(cycle, t);
                    }
                }
                for &(src, sp, dst, dp) in &c.ic {
                    let values = c.children[src].outputs().bag_at(sp).values().to_vec();
                    c.children[dst].inputs_mut().bag_at_mut(dp).extend_from_slice(&values);
                }
                for &(src, sp, own) in &c.eoc {
                    let values = c.children[src].outputs().bag_at(sp).values().to_vec();
                    c.outputs.bag_at_mut(own).extend_from_slice(&values);
                }
            }
        }
    }

    fn deltfcn(&mut self, cycle: u64, t: f64) -> Result<(), SimError> {
        match self {
            Node::Sim(s) => {
                if s.is_active(t) {
                    s.deltfcn(cycle, t)?;
                }
            }
            Node::Coupled(c) => {
                for &(own, dst, dp) in &c.eic {
                    let values = c.inputs.bag_at(own).values().to_vec();
                    c.children[dst].inputs_mut().bag_at_mut(dp).extend_from_slice(&values);
                }
                for child in &mut c.children {
                    if child.tn() == t || child.has_input() {
                        child.deltfcn(cycle, t)?;
                    } else if let Node::Coupled(_) = child {
                        // stale outputs of an idle subtree
                        child.clear_outputs();
                    }
                }
                c.inputs.clear();
                c.outputs.clear();
            }
        }
        Ok(())
    }

    fn clear_outputs(&mut self) {
        if let Node::Coupled(c) = self {
            c.outputs.clear();
        }
    }

    fn simulators<'a>(&'a self, out: &mut Vec<&'a Simulator>) {
        match self {
            Node::Sim(s) => out.push(s),
            Node::Coupled(c) => c.children.iter().for_each(|n| n.simulators(out)),
        }
    }

    fn simulators_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Simulator>) {
        match self {
            Node::Sim(s) => out.push(s),
            Node::Coupled(c) => c.children.iter_mut().for_each(|n| n.simulators_mut(out)),
        }
    }
}

/// Sequential coordinator that keeps the coupled hierarchy: one coordinator
/// per coupled model, values routed level by level.
///
/// Exists to check closure under coupling against the flattened default.
pub struct HierarchicalCoordinator {
    name: String,
    root: Node,
    counters: Arc<Counters>,
    clock: SimulationClock,
    options: SimOptions,
    clock_trail: Option<Vec<f64>>,
    /// Per simulator (depth-first order), output ports no path delivers from.
    dead_ports: Vec<Vec<usize>>,
    unrouted: u64,
}

impl HierarchicalCoordinator {
    pub fn new(graph: &ModelGraph, registry: &ModelRegistry, options: SimOptions) -> Result<Self, SimError> {
        let counters = Arc::new(Counters::new());
        // Validation plus the flat names (qualified on collisions) and the
        // dead output ports, both in depth-first atomic order.
        let flat = flatten(graph)?;
        let flat_names: Vec<String> = flat.atomics().map(|a| a.name.clone()).collect();
        let dead_ports = flat
            .atomics()
            .map(|a| {
                a.outputs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| {
                        !flat.couplings().iter().any(|c| {
                            c.kind == CouplingKind::Ic && c.from.component == a.name && c.from.port == **p
                        })
                    })
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();

        let ctx = BuildContext {
            counters: Arc::clone(&counters),
        };
        let mut next = 0;
        let root = build(graph, registry, &ctx, options, &flat_names, &mut next)?;
        let mut c = Self {
            name: graph.name.clone(),
            root: Node::Coupled(Box::new(root)),
            counters,
            clock: SimulationClock::default(),
            options,
            clock_trail: options.trace.then(Vec::new),
            dead_ports,
            unrouted: 0,
        };
        let mut sims = Vec::new();
        c.root.simulators_mut(&mut sims);
        for s in sims {
            s.initialize();
        }
        c.clock.t = c.ta();
        Ok(c)
    }

    pub fn clock(&self) -> SimulationClock {
        self.clock
    }

    pub fn ta(&self) -> f64 {
        self.root.tn()
    }

    pub fn simulate(&mut self, max_iterations: u64) -> Result<RunReport, SimError> {
        let started = Instant::now();
        let mut done = 0;
        while done < max_iterations {
            let t = self.ta();
            if t == f64::INFINITY {
                break;
            }
            self.clock.t = t;
            if let Some(trail) = &mut self.clock_trail {
                trail.push(t);
            }
            let cycle = self.clock.iteration + 1;
            self.root.lambda(cycle, t);
            let mut sims = Vec::new();
            self.root.simulators(&mut sims);
            for (sim, dead) in sims.iter().zip(&self.dead_ports) {
                if sim.is_imminent(t) {
                    self.unrouted += dead.iter().map(|&p| sim.outputs().bag_at(p).len() as u64).sum::<u64>();
                }
            }
            self.root.deltfcn(cycle, t)?;
            self.clock.iteration += 1;
            done += 1;
        }
        let wall = started.elapsed().as_secs_f64();

        let mut sims = Vec::new();
        self.root.simulators_mut(&mut sims);
        let traces = self.options.trace.then(|| {
            sims.iter_mut()
                .map(|s| (s.name().to_owned(), s.take_trace().unwrap_or_default()))
                .collect::<BTreeMap<_, _>>()
        });
        if self.options.trace {
            sims.iter_mut().for_each(|s| s.enable_trace());
        }
        Ok(RunReport {
            model: self.name.clone(),
            backend: "hierarchical".into(),
            workers: "1".into(),
            cycles: self.clock.iteration,
            wall_seconds: wall,
            counters: self.counters.snapshot(),
            final_time: self.clock.t,
            unrouted_values: self.unrouted,
            traces,
            clock_trail: self.clock_trail.clone(),
            profiles: self
                .options
                .profile
                .then(|| sims.iter().filter_map(|s| s.profile()).collect()),
            final_states: sims.iter().map(|s| (s.name().to_owned(), s.state_summary())).collect(),
        })
    }
}

fn build(
    graph: &ModelGraph,
    registry: &ModelRegistry,
    ctx: &BuildContext,
    options: SimOptions,
    flat_names: &[String],
    next: &mut usize,
) -> Result<CoupledNode, SimError> {
    let mut children = Vec::new();
    for c in graph.components() {
        children.push(match c {
            Component::Atomic(spec) => {
                let mut spec = spec.clone();
                spec.name = flat_names[*next].clone();
                *next += 1;
                let mut sim = Simulator::build(&spec, registry, ctx)?;
                if options.trace {
                    sim.enable_trace();
                }
                if options.profile {
                    sim.enable_profile();
                }
                Node::Sim(Box::new(sim))
            }
            Component::Coupled(g) => Node::Coupled(Box::new(build(g, registry, ctx, options, flat_names, next)?)),
        });
    }
    let child_idx = |name: &str| graph.components().iter().position(|c| c.name() == name).expect("validated");
    let in_port = |child: usize, port: &str| match &graph.components()[child] {
        Component::Atomic(a) => a.inputs.iter().position(|p| p == port),
        Component::Coupled(g) => g.inputs.iter().position(|p| p == port),
    }
    .expect("validated");
    let out_port = |child: usize, port: &str| match &graph.components()[child] {
        Component::Atomic(a) => a.outputs.iter().position(|p| p == port),
        Component::Coupled(g) => g.outputs.iter().position(|p| p == port),
    }
    .expect("validated");
    let own_in = |port: &str| graph.inputs.iter().position(|p| p == port).expect("validated");
    let own_out = |port: &str| graph.outputs.iter().position(|p| p == port).expect("validated");

    let mut node = CoupledNode {
        children,
        inputs: PortBags::with_ports(graph.inputs.iter().cloned()),
        outputs: PortBags::with_ports(graph.outputs.iter().cloned()),
        eic: Vec::new(),
        ic: Vec::new(),
        eoc: Vec::new(),
    };
    for c in graph.couplings() {
        match c.kind {
            CouplingKind::Eic => {
                let dst = child_idx(&c.to.component);
                node.eic.push((own_in(&c.from.port), dst, in_port(dst, &c.to.port)));
            }
            CouplingKind::Ic => {
                let src = child_idx(&c.from.component);
                let dst = child_idx(&c.to.component);
                node.ic
                    .push((src, out_port(src, &c.from.port), dst, in_port(dst, &c.to.port)));
            }
            CouplingKind::Eoc => {
                let src = child_idx(&c.from.component);
                node.eoc.push((src, out_port(src, &c.from.port), own_out(&c.to.port)));
            }
        }
    }
    Ok(node)
}
