use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::flatten::flatten_unchecked;
use super::{Component, ModelGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    /// Dotted path of the graph where the problem sits.
    pub path: String,
    pub message: String,
}

impl Violation {
    fn error(path: &str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            path: path.to_owned(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} in {}: {}", self.path, self.message)
    }
}

/// Checks every structural invariant of `graph`, recursively.
///
/// Errors make the graph unusable by any coordinator. Zero-delay coupling
/// cycles between atomics are reported as warnings only: whether they
/// terminate depends on model behavior.
pub fn validate(graph: &ModelGraph) -> Vec<Violation> {
    let mut out = structural_errors(graph);
    if out.is_empty() {
        report_cycles(&flatten_unchecked(graph), &mut out);
    }
    out
}

/// The error-severity subset of [`validate`], without the cycle scan.
pub(crate) fn structural_errors(graph: &ModelGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    check_level(graph, &graph.name, &mut out);
    out
}

fn check_level(graph: &ModelGraph, path: &str, out: &mut Vec<Violation>) {
    check_unique(&graph.inputs, path, "input port", out);
    check_unique(&graph.outputs, path, "output port", out);

    let mut seen = HashSet::new();
    for c in graph.components() {
        let name = c.name();
        if name == graph.name {
            out.push(Violation::error(path, format!("child {name:?} shadows its parent's name")));
        }
        if !seen.insert(name) {
            out.push(Violation::error(path, format!("duplicate component name {name:?}")));
        }
        match c {
            Component::Atomic(a) => {
                let here = format!("{path}.{}", a.name);
                check_unique(&a.inputs, &here, "input port", out);
                check_unique(&a.outputs, &here, "output port", out);
                if !(a.delay_int >= 0.0 && a.delay_ext >= 0.0) {
                    out.push(Violation::error(&here, "transition delays must be non-negative"));
                }
            }
            Component::Coupled(g) => check_level(g, &format!("{path}.{}", g.name), out),
        }
    }

    for c in graph.couplings() {
        let mut missing = false;
        for port in [&c.from, &c.to] {
            if !graph.port_exists(port) {
                missing = true;
                out.push(Violation::error(
                    path,
                    format!("coupling {} -> {} references missing port {port}", c.from, c.to),
                ));
            }
        }
        if missing {
            continue;
        }
        match graph.classify(&c.from, &c.to) {
            Ok(kind) if kind == c.kind => {}
            Ok(kind) => out.push(Violation::error(
                path,
                format!("coupling {} -> {} stored as {} but endpoints make it {kind}", c.from, c.to, c.kind),
            )),
            Err(reason) => out.push(Violation::error(path, format!("coupling {} -> {}: {reason}", c.from, c.to))),
        }
    }
}

fn check_unique(ports: &[String], path: &str, what: &str, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for p in ports {
        if !seen.insert(p) {
            out.push(Violation::error(path, format!("duplicate {what} {p:?}")));
        }
    }
}

fn report_cycles(flat: &ModelGraph, out: &mut Vec<Violation>) {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for c in flat.couplings() {
        if c.from.component != c.to.component && c.from.component != flat.name && c.to.component != flat.name {
            succ.entry(&c.from.component).or_default().push(&c.to.component);
        }
    }
    // Iterative three-color DFS; report each back edge once.
    let mut color: BTreeMap<&str, u8> = BTreeMap::new();
    let names: Vec<&str> = flat.atomics().map(|a| a.name.as_str()).collect();
    for &start in &names {
        if color.get(start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        color.insert(start, 1);
        while let Some((node, idx)) = stack.pop() {
            let next = succ.get(node).and_then(|s| s.get(idx)).copied();
            match next {
                Some(n) => {
                    stack.push((node, idx + 1));
                    match color.get(n).copied().unwrap_or(0) {
                        0 => {
                            color.insert(n, 1);
                            stack.push((n, 0));
                        }
                        1 => out.push(Violation {
                            severity: Severity::Warning,
                            path: flat.name.clone(),
                            message: format!("coupling cycle through {node} -> {n}; zero-delay loops may not terminate"),
                        }),
                        _ => {}
                    }
                }
                None => {
                    color.insert(node, 2);
                }
            }
        }
    }
}
