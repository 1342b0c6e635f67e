//! The DEVS modeling layer.
//!
//! A [`ModelGraph`] is a coupled model: a named set of child components
//! (atomic specs or nested graphs) plus the couplings between their ports.
//! Graphs are plain immutable data once built; coordinators instantiate live
//! [`Atomic`] behaviors from the specs through a [`ModelRegistry`] and never
//! touch the graph itself.

mod atomic;
mod flatten;
mod registry;
mod validate;
pub mod value;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

pub use atomic::{parse_seconds, Atomic, AtomicSpec, TransitionError};
pub use flatten::flatten;
pub use registry::{AtomicFactory, BuildContext, ModelKind, ModelRegistry};
pub use validate::{validate, Severity, Violation};
pub use value::{EventValue, MessageBag, PortBags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

/// A port addressed by owning component and name.
///
/// When `component` equals the name of the graph holding the coupling, the
/// reference points at that graph's own boundary port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub component: String,
    pub port: String,
    pub direction: Direction,
}

impl PortRef {
    pub fn input(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            port: port.into(),
            direction: Direction::Input,
        }
    }

    pub fn output(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            port: port.into(),
            direction: Direction::Output,
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    /// Graph input to child input.
    Eic,
    /// Child output to child input.
    Ic,
    /// Child output to graph output.
    Eoc,
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Eic => "EIC",
            Self::Ic => "IC",
            Self::Eoc => "EOC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coupling {
    pub from: PortRef,
    pub to: PortRef,
    pub kind: CouplingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Component {
    Atomic(AtomicSpec),
    Coupled(ModelGraph),
}

impl Component {
    pub fn name(&self) -> &str {
        match self {
            Self::Atomic(a) => &a.name,
            Self::Coupled(g) => &g.name,
        }
    }

    fn has_port(&self, port: &str, direction: Direction) -> bool {
        let ports = match (self, direction) {
            (Self::Atomic(a), Direction::Input) => &a.inputs,
            (Self::Atomic(a), Direction::Output) => &a.outputs,
            (Self::Coupled(g), Direction::Input) => &g.inputs,
            (Self::Coupled(g), Direction::Output) => &g.outputs,
        };
        ports.iter().any(|p| p == port)
    }
}

impl From<AtomicSpec> for Component {
    fn from(spec: AtomicSpec) -> Self {
        Self::Atomic(spec)
    }
}

impl From<ModelGraph> for Component {
    fn from(graph: ModelGraph) -> Self {
        Self::Coupled(graph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("component {name:?} already exists in {graph:?}")]
    DuplicateName { graph: String, name: String },
    #[error("port {port} does not exist in {graph:?}")]
    NoSuchPort { graph: String, port: PortRef },
    #[error("illegal coupling {from} -> {to} in {graph:?}: {reason}")]
    IllegalCoupling {
        graph: String,
        from: PortRef,
        to: PortRef,
        reason: String,
    },
    #[error("coupling {from} -> {to} already present in {graph:?}")]
    DuplicateCoupling { graph: String, from: PortRef, to: PortRef },
    #[error("invalid model: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown model kind {kind:?} for atomic {atomic:?}")]
    UnknownKind { atomic: String, kind: String },
    #[error("cannot build atomic {atomic:?}: {reason}")]
    Build { atomic: String, reason: String },
}

/// A coupled model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelGraph {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    components: Vec<Component>,
    couplings: Vec<Coupling>,
}

impl ModelGraph {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            components: Vec::new(),
            couplings: Vec::new(),
        }
    }

    pub fn with_input(mut self, port: impl Into<String>) -> Self {
        self.inputs.push(port.into());
        self
    }

    pub fn with_output(mut self, port: impl Into<String>) -> Self {
        self.outputs.push(port.into());
        self
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name() == name)
    }

    /// Atomic children at this level, in insertion order.
    pub fn atomics(&self) -> impl Iterator<Item = &AtomicSpec> {
        self.components.iter().filter_map(|c| match c {
            Component::Atomic(a) => Some(a),
            Component::Coupled(_) => None,
        })
    }

    pub fn coupleds(&self) -> impl Iterator<Item = &ModelGraph> {
        self.components.iter().filter_map(|c| match c {
            Component::Coupled(g) => Some(g),
            Component::Atomic(_) => None,
        })
    }

    /// Every atomic in the hierarchy, depth first in insertion order.
    pub fn all_atomics(&self) -> Vec<&AtomicSpec> {
        let mut out = Vec::new();
        self.collect_atomics(&mut out);
        out
    }

    fn collect_atomics<'a>(&'a self, out: &mut Vec<&'a AtomicSpec>) {
        for c in &self.components {
            match c {
                Component::Atomic(a) => out.push(a),
                Component::Coupled(g) => g.collect_atomics(out),
            }
        }
    }

    /// True when the graph holds atomics only.
    pub fn is_flat(&self) -> bool {
        self.components.iter().all(|c| matches!(c, Component::Atomic(_)))
    }

    /// Number of nested coupled levels, counting this one.
    pub fn depth(&self) -> usize {
        1 + self.coupleds().map(ModelGraph::depth).max().unwrap_or(0)
    }

    pub fn add_component(&mut self, child: impl Into<Component>) -> Result<&mut Self, ModelError> {
        let child = child.into();
        let name = child.name();
        if name == self.name || self.component(name).is_some() {
            return Err(ModelError::DuplicateName {
                graph: self.name.clone(),
                name: name.to_owned(),
            });
        }
        self.components.push(child);
        Ok(self)
    }

    /// Couples two ports, classifying the coupling from endpoint ownership.
    pub fn couple(&mut self, from: PortRef, to: PortRef) -> Result<CouplingKind, ModelError> {
        for port in [&from, &to] {
            if !self.port_exists(port) {
                return Err(ModelError::NoSuchPort {
                    graph: self.name.clone(),
                    port: port.clone(),
                });
            }
        }
        let kind = self
            .classify(&from, &to)
            .map_err(|reason| ModelError::IllegalCoupling {
                graph: self.name.clone(),
                from: from.clone(),
                to: to.clone(),
                reason,
            })?;
        if self.couplings.iter().any(|c| c.from == from && c.to == to) {
            return Err(ModelError::DuplicateCoupling {
                graph: self.name.clone(),
                from,
                to,
            });
        }
        self.couplings.push(Coupling { from, to, kind });
        Ok(kind)
    }

    /// Couples `from_component.from_port` to `to_component.to_port`, inferring
    /// the port directions: the graph's own name selects its boundary ports.
    pub fn connect(
        &mut self,
        from_component: &str,
        from_port: &str,
        to_component: &str,
        to_port: &str,
    ) -> Result<CouplingKind, ModelError> {
        let from = if from_component == self.name {
            PortRef::input(from_component, from_port)
        } else {
            PortRef::output(from_component, from_port)
        };
        let to = if to_component == self.name {
            PortRef::output(to_component, to_port)
        } else {
            PortRef::input(to_component, to_port)
        };
        self.couple(from, to)
    }

    #[cfg(test)]
    pub(crate) fn push_coupling_unchecked(&mut self, coupling: Coupling) {
        self.couplings.push(coupling);
    }

    fn port_exists(&self, port: &PortRef) -> bool {
        if port.component == self.name {
            let ports = match port.direction {
                Direction::Input => &self.inputs,
                Direction::Output => &self.outputs,
            };
            return ports.iter().any(|p| *p == port.port);
        }
        self.component(&port.component)
            .is_some_and(|c| c.has_port(&port.port, port.direction))
    }

    /// Pure function of endpoint ownership and direction.
    pub fn classify(&self, from: &PortRef, to: &PortRef) -> Result<CouplingKind, String> {
        let from_self = from.component == self.name;
        let to_self = to.component == self.name;
        match (from_self, from.direction, to_self, to.direction) {
            (true, Direction::Input, false, Direction::Input) => Ok(CouplingKind::Eic),
            (false, Direction::Output, false, Direction::Input) => Ok(CouplingKind::Ic),
            (false, Direction::Output, true, Direction::Output) => Ok(CouplingKind::Eoc),
            (true, Direction::Output, true, Direction::Input) => {
                Err("graph output feeds its own input without a component in between".into())
            }
            (true, Direction::Input, true, Direction::Output) => Err("graph input wired straight to graph output".into()),
            _ => Err(format!(
                "{:?} port cannot feed {:?} port here",
                from.direction, to.direction
            )),
        }
    }

    /// Hash over the full structure; equal graphs hash equal.
    pub fn structural_hash(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.hash(&mut hasher);
        hasher.finish()
    }

    pub(crate) fn from_parts(
        name: String,
        inputs: Vec<String>,
        outputs: Vec<String>,
        components: Vec<Component>,
        couplings: Vec<Coupling>,
    ) -> Self {
        Self {
            name,
            inputs,
            outputs,
            components,
            couplings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpt;

    fn devs(name: &str) -> AtomicSpec {
        AtomicSpec::new(name, "devstone").input("in").output("out")
    }

    #[test]
    fn add_component_rejects_duplicates() {
        let mut g = ModelGraph::new("gpt");
        g.add_component(gpt::processor_spec("processor", 1.0)).unwrap();
        assert_eq!(g.components().len(), 1);
        let err = g.add_component(gpt::processor_spec("processor", 1.0)).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateName { ref name, .. } if name == "processor"));
        assert!(err.to_string().contains("processor"));
        let err = g.add_component(devs("gpt")).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateName { .. }));
    }

    #[test]
    fn nested_hierarchy_depth() {
        let efp = gpt::efp(gpt::GptParams::default());
        assert_eq!(efp.depth(), 2);
        let ef = efp.coupleds().next().unwrap();
        let names: Vec<_> = ef.components().iter().map(Component::name).collect();
        assert_eq!(names, ["generator", "transducer"]);
    }

    #[test]
    fn couple_classifies_kinds() {
        let mut g = ModelGraph::new("top").with_input("in").with_output("out");
        g.add_component(devs("a")).unwrap();
        g.add_component(devs("b")).unwrap();
        assert_eq!(g.connect("top", "in", "a", "in").unwrap(), CouplingKind::Eic);
        assert_eq!(g.connect("a", "out", "b", "in").unwrap(), CouplingKind::Ic);
        assert_eq!(g.connect("b", "out", "top", "out").unwrap(), CouplingKind::Eoc);
        // self loop on one atomic is a plain IC
        assert_eq!(g.connect("a", "out", "a", "in").unwrap(), CouplingKind::Ic);
        for c in g.couplings() {
            assert_eq!(g.classify(&c.from, &c.to).unwrap(), c.kind);
        }
    }

    #[test]
    fn couple_rejects_bad_endpoints() {
        let mut g = ModelGraph::new("top").with_input("in").with_output("out");
        g.add_component(devs("a")).unwrap();
        g.add_component(devs("b")).unwrap();
        let err = g.couple(PortRef::input("a", "in"), PortRef::input("b", "in")).unwrap_err();
        assert!(matches!(err, ModelError::IllegalCoupling { .. }), "{err}");
        let err = g.connect("a", "missing", "b", "in").unwrap_err();
        assert!(matches!(err, ModelError::NoSuchPort { .. }));
        let err = g.couple(PortRef::output("top", "out"), PortRef::input("top", "in")).unwrap_err();
        assert!(matches!(err, ModelError::IllegalCoupling { .. }));
        g.connect("a", "out", "b", "in").unwrap();
        assert!(matches!(
            g.connect("a", "out", "b", "in").unwrap_err(),
            ModelError::DuplicateCoupling { .. }
        ));
    }

    #[test]
    fn efp_feedback_is_internal() {
        let efp = gpt::efp(gpt::GptParams::default());
        let kinds: Vec<_> = efp
            .couplings()
            .iter()
            .map(|c| (c.from.to_string(), c.to.to_string(), c.kind))
            .collect();
        assert!(kinds.contains(&("ef.out".into(), "processor.in".into(), CouplingKind::Ic)));
        assert!(kinds.contains(&("processor.out".into(), "ef.in".into(), CouplingKind::Ic)));
    }

    #[test]
    fn structural_hash_tracks_changes() {
        let a = gpt::gpt(gpt::GptParams::default());
        let b = a.clone();
        assert_eq!(a.structural_hash(), b.structural_hash());
        let mut c = a.clone();
        c.add_component(devs("extra")).unwrap();
        assert_ne!(a.structural_hash(), c.structural_hash());
    }
}
