//! Reduces a hierarchy to one coupled level holding only atomics.
//!
//! Every event path atomic-output -> ... -> atomic-input that crosses any
//! number of coupled boundaries becomes one direct coupling. Couplings in the
//! result are grouped by destination (atomics in depth-first order, then the
//! root outputs) and, per destination, ordered the way a hierarchical
//! coordinator would fill the destination's bag: internal couplings before
//! boundary inputs at each level, each in insertion order. Executing the flat
//! graph with insertion-order fan-in therefore reproduces the hierarchical
//! bag contents exactly.

use std::collections::HashMap;

use super::validate::structural_errors;
use super::{AtomicSpec, Component, Coupling, CouplingKind, ModelError, ModelGraph, PortRef};

/// Flattens `graph`. Atomic names are kept when unique across the whole
/// hierarchy; colliding names are qualified with their coupled path
/// (`level.sub.name`).
pub fn flatten(graph: &ModelGraph) -> Result<ModelGraph, ModelError> {
    let errors = structural_errors(graph);
    if !errors.is_empty() {
        return Err(ModelError::Invalid(errors));
    }
    Ok(flatten_unchecked(graph))
}

#[derive(Clone)]
enum Source<'a> {
    Atomic(&'a AtomicSpec, &'a str),
    RootInput(&'a str),
}

struct Flattener<'a> {
    root: &'a ModelGraph,
    names: HashMap<*const AtomicSpec, String>,
}

pub(crate) fn flatten_unchecked(graph: &ModelGraph) -> ModelGraph {
    let mut placed: Vec<(&AtomicSpec, Vec<&ModelGraph>)> = Vec::new();
    collect(graph, &mut vec![graph], &mut placed);

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (a, _) in &placed {
        *counts.entry(a.name.as_str()).or_default() += 1;
    }
    let names: HashMap<*const AtomicSpec, String> = placed
        .iter()
        .map(|(a, chain)| {
            let name = if counts[a.name.as_str()] == 1 {
                a.name.clone()
            } else {
                chain[1..]
                    .iter()
                    .map(|g| g.name.as_str())
                    .chain(std::iter::once(a.name.as_str()))
                    .collect::<Vec<_>>()
                    .join(".")
            };
            (*a as *const AtomicSpec, name)
        })
        .collect();

    let fl = Flattener { root: graph, names };
    let mut couplings = Vec::new();
    for (atomic, chain) in &placed {
        let dst = fl.name_of(atomic);
        for port in &atomic.inputs {
            let sources = fl.in_sources(chain, &atomic.name, port);
            let (internal, boundary): (Vec<_>, Vec<_>) =
                sources.into_iter().partition(|s| matches!(s, Source::Atomic(..)));
            for src in internal.into_iter().chain(boundary) {
                let (from, kind) = match src {
                    Source::Atomic(a, p) => (PortRef::output(fl.name_of(a), p), CouplingKind::Ic),
                    Source::RootInput(p) => (PortRef::input(&graph.name, p), CouplingKind::Eic),
                };
                couplings.push(Coupling {
                    from,
                    to: PortRef::input(dst.clone(), port.clone()),
                    kind,
                });
            }
        }
    }
    for port in &graph.outputs {
        for c in graph.couplings() {
            if c.kind == CouplingKind::Eoc && c.to.port == *port {
                for src in fl.out_sources(graph, &c.from.component, &c.from.port) {
                    if let Source::Atomic(a, p) = src {
                        couplings.push(Coupling {
                            from: PortRef::output(fl.name_of(a), p),
                            to: PortRef::output(&graph.name, port.clone()),
                            kind: CouplingKind::Eoc,
                        });
                    }
                }
            }
        }
    }

    let components = placed
        .iter()
        .map(|(a, _)| {
            let mut spec = (*a).clone();
            spec.name = fl.name_of(a);
            Component::Atomic(spec)
        })
        .collect();
    ModelGraph::from_parts(
        graph.name.clone(),
        graph.inputs.clone(),
        graph.outputs.clone(),
        components,
        couplings,
    )
}

fn collect<'a>(
    graph: &'a ModelGraph,
    chain: &mut Vec<&'a ModelGraph>,
    out: &mut Vec<(&'a AtomicSpec, Vec<&'a ModelGraph>)>,
) {
    for c in graph.components() {
        match c {
            Component::Atomic(a) => out.push((a, chain.clone())),
            Component::Coupled(g) => {
                chain.push(g);
                collect(g, chain, out);
                chain.pop();
            }
        }
    }
}

impl<'a> Flattener<'a> {
    fn name_of(&self, atomic: &AtomicSpec) -> String {
        self.names[&(atomic as *const AtomicSpec)].clone()
    }

    /// Sources feeding input `port` of child `component` of `chain.last()`.
    fn in_sources(&self, chain: &[&'a ModelGraph], component: &str, port: &str) -> Vec<Source<'a>> {
        let parent = chain[chain.len() - 1];
        let mut internal = Vec::new();
        let mut boundary = Vec::new();
        for c in parent.couplings() {
            if c.to.component != component || c.to.port != port {
                continue;
            }
            match c.kind {
                CouplingKind::Ic => internal.extend(self.out_sources(parent, &c.from.component, &c.from.port)),
                CouplingKind::Eic => boundary.extend(self.boundary_sources(chain, &c.from.port)),
                CouplingKind::Eoc => {}
            }
        }
        internal.extend(boundary);
        internal
    }

    /// Sources feeding input `port` of `chain.last()` from outside it.
    fn boundary_sources(&self, chain: &[&'a ModelGraph], port: &'a str) -> Vec<Source<'a>> {
        if chain.len() == 1 {
            debug_assert!(std::ptr::eq(chain[0], self.root));
            return vec![Source::RootInput(port)];
        }
        let this = chain[chain.len() - 1];
        self.in_sources(&chain[..chain.len() - 1], &this.name, port)
    }

    /// Atomic outputs reaching output `port` of child `component` of `level`.
    fn out_sources(&self, level: &'a ModelGraph, component: &str, port: &'a str) -> Vec<Source<'a>> {
        match level.component(component) {
            Some(Component::Atomic(a)) => vec![Source::Atomic(a, port)],
            Some(Component::Coupled(g)) => g
                .couplings()
                .iter()
                .filter(|c| c.kind == CouplingKind::Eoc && c.to.port == port)
                .flat_map(|c| self.out_sources(g, &c.from.component, &c.from.port))
                .collect(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{devstone, gpt};

    fn devs(name: &str) -> AtomicSpec {
        AtomicSpec::new(name, "devstone").input("in").output("out")
    }

    fn edges(g: &ModelGraph) -> Vec<String> {
        g.couplings()
            .iter()
            .map(|c| format!("{} {} -> {}", c.kind, c.from, c.to))
            .collect()
    }

    #[test]
    fn efp_flattens_to_gpt() {
        let p = gpt::GptParams::default();
        let flat = flatten(&gpt::efp(p)).unwrap();
        assert!(flat.is_flat());
        let names: Vec<_> = flat.atomics().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["generator", "transducer", "processor"]);
        let mut got = edges(&flat);
        got.sort();
        assert_eq!(
            got,
            [
                "IC generator.out -> processor.in",
                "IC generator.out -> transducer.arrived",
                "IC processor.out -> transducer.solved",
            ]
        );
        let mut want = edges(&gpt::gpt(p));
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn flat_graph_is_a_fixed_point() {
        let g = gpt::gpt(gpt::GptParams::default());
        assert_eq!(flatten(&g).unwrap(), g);
        let f = flatten(&gpt::efp(gpt::GptParams::default())).unwrap();
        assert_eq!(flatten(&f).unwrap(), f);
    }

    #[test]
    fn colliding_names_are_qualified() {
        let mut inner = ModelGraph::new("inner").with_input("in");
        inner.add_component(devs("a")).unwrap();
        inner.connect("inner", "in", "a", "in").unwrap();
        let mut top = ModelGraph::new("top");
        top.add_component(devs("a")).unwrap();
        top.add_component(inner).unwrap();
        top.connect("a", "out", "inner", "in").unwrap();
        let flat = flatten(&top).unwrap();
        let names: Vec<_> = flat.atomics().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["a", "inner.a"]);
        assert_eq!(edges(&flat), ["IC a.out -> inner.a.in"]);
    }

    #[test]
    fn dangling_paths_disappear_and_root_ports_remain() {
        let mut inner = ModelGraph::new("inner").with_input("in").with_output("out").with_output("spare");
        inner.add_component(devs("x")).unwrap();
        inner.connect("inner", "in", "x", "in").unwrap();
        inner.connect("x", "out", "inner", "spare").unwrap();
        let mut top = ModelGraph::new("top").with_input("in").with_output("out");
        top.add_component(inner).unwrap();
        top.add_component(devs("y")).unwrap();
        top.connect("top", "in", "inner", "in").unwrap();
        top.connect("inner", "out", "y", "in").unwrap();
        top.connect("y", "out", "top", "out").unwrap();
        let flat = flatten(&top).unwrap();
        assert_eq!(edges(&flat), ["EIC top.in -> x.in", "EOC y.out -> top.out"]);
    }

    #[test]
    fn fan_in_order_follows_hierarchy() {
        // b receives from a1 via IC and from the boundary via EIC; the
        // boundary in turn is fed by a0 at the top level.
        let mut inner = ModelGraph::new("inner").with_input("in");
        inner.add_component(devs("a1")).unwrap();
        inner.add_component(devs("b")).unwrap();
        inner.connect("inner", "in", "b", "in").unwrap();
        inner.connect("a1", "out", "b", "in").unwrap();
        let mut top = ModelGraph::new("top");
        top.add_component(devs("a0")).unwrap();
        top.add_component(inner).unwrap();
        top.connect("a0", "out", "inner", "in").unwrap();
        let flat = flatten(&top).unwrap();
        assert_eq!(edges(&flat), ["IC a1.out -> b.in", "IC a0.out -> b.in"]);
    }

    #[test]
    fn ho_keeps_every_atomic_once() {
        let model = devstone::generate(&devstone::DevstoneConfig::ho(15, 15)).unwrap();
        let flat = flatten(&model.graph).unwrap();
        assert!(flat.is_flat());
        // 197 benchmark atomics plus the seed generator
        assert_eq!(flat.atomics().count(), 198);
        let original: Vec<_> = model.graph.all_atomics().iter().map(|a| a.name.clone()).collect();
        let flat_names: Vec<_> = flat.atomics().map(|a| a.name.clone()).collect();
        assert_eq!(original, flat_names);
    }

    #[test]
    fn invalid_graph_is_rejected() {
        let mut g = ModelGraph::new("top");
        g.add_component(devs("a")).unwrap();
        g.push_coupling_unchecked(Coupling {
            from: PortRef::output("a", "nope"),
            to: PortRef::input("a", "in"),
            kind: CouplingKind::Ic,
        });
        assert!(matches!(flatten(&g), Err(ModelError::Invalid(_))));
    }
}
