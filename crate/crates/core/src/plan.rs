//! Deployment plans: the flattened model plus where each atomic runs,
//! either in a named worker pool or behind a network endpoint.
//!
//! The XML form is
//!
//! ```text
//! <coupled name="gpt">
//!   <pool name="L1" workers="4"/>
//!   <atomic name="generator" model="generator" delayInt="0" delayExt="0" pool="L1" period="1"/>
//!   <connection componentFrom="generator" portFrom="out" componentTo="processor" portTo="in"/>
//! </coupled>
//! ```
//!
//! Network placement replaces `pool` with `host`, `mainPort` and `auxPort`.
//! An optional `group` attribute names the container group of an atomic,
//! and an optional `<coordinator host="..."/>` element the coordinator host.
//! Attributes not listed above become model parameters.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use crate::model::{flatten, parse_seconds, AtomicSpec, ModelError, ModelGraph, ModelRegistry};
use crate::parallel::{default_workers, PoolPlan};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub host: String,
    pub main_port: u16,
    pub aux_port: u16,
}

impl Endpoint {
    pub fn main_addr(&self) -> String {
        format!("{}:{}", self.host, self.main_port)
    }

    pub fn aux_addr(&self) -> String {
        format!("{}:{}", self.host, self.aux_port)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}/{}", self.host, self.main_port, self.aux_port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Pool(String),
    Endpoint(Endpoint),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolDecl {
    pub name: String,
    /// `None` means one worker per logical CPU.
    pub workers: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("malformed plan file: {0}")]
    Xml(String),
    #[error("plan schema violation: {0}")]
    Schema(String),
    #[error("plan mixes pool and network addressing: {0}")]
    Mixed(String),
    #[error("dangling connection: {0}")]
    Dangling(String),
    #[error("wrong plan kind: {0}")]
    Kind(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A parsed or generated plan file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDocument {
    /// Flat graph; atomics in document order.
    pub graph: ModelGraph,
    pub pools: Vec<PoolDecl>,
    pub placement: BTreeMap<String, Placement>,
    /// Container group per atomic; only used for manifests.
    pub groups: BTreeMap<String, String>,
    pub coordinator: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressingMode {
    Pools,
    Network,
}

/// Default placement applied to every atomic by [`emit_plan_xml`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanDefaults {
    /// Every atomic in one pool.
    Pool { name: String, workers: Option<usize> },
    /// Every atomic on one host; atomic `k` (document order) listens on
    /// `base_port + 2k` (main) and `base_port + 2k + 1` (aux).
    Network { host: String, base_port: u16 },
}

/// Flattened model and per-atomic endpoints for the distributed backend.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedPlan {
    pub graph: ModelGraph,
    pub endpoints: BTreeMap<String, Endpoint>,
    pub coordinator_host: String,
}

impl DistributedPlan {
    /// Checks that every atomic has an endpoint and no two services share a
    /// socket address.
    pub fn new(graph: ModelGraph, endpoints: BTreeMap<String, Endpoint>) -> Result<Self, PlanError> {
        let graph = flatten(&graph)?;
        let mut used = HashSet::new();
        for a in graph.atomics() {
            let ep = endpoints
                .get(&a.name)
                .ok_or_else(|| PlanError::Schema(format!("atomic {:?} has no endpoint", a.name)))?;
            for port in [ep.main_port, ep.aux_port] {
                if port == 0 {
                    return Err(PlanError::Schema(format!("atomic {:?}: port 0 is not usable", a.name)));
                }
                if !used.insert((ep.host.clone(), port)) {
                    return Err(PlanError::Schema(format!("address {}:{port} is used twice", ep.host)));
                }
            }
        }
        if let Some(extra) = endpoints.keys().find(|n| graph.atomics().all(|a| &a.name != *n)) {
            return Err(PlanError::Schema(format!("endpoint for unknown atomic {extra:?}")));
        }
        Ok(Self {
            graph,
            endpoints,
            coordinator_host: "127.0.0.1".into(),
        })
    }

    pub fn endpoint(&self, atomic: &str) -> Option<&Endpoint> {
        self.endpoints.get(atomic)
    }
}

impl PlanDocument {
    /// A plan over `graph` (flattened) with `defaults` applied everywhere.
    pub fn with_defaults(graph: &ModelGraph, defaults: &PlanDefaults) -> Result<Self, PlanError> {
        let graph = flatten(graph)?;
        let mut pools = Vec::new();
        let mut placement = BTreeMap::new();
        match defaults {
            PlanDefaults::Pool { name, workers } => {
                pools.push(PoolDecl {
                    name: name.clone(),
                    workers: *workers,
                });
                for a in graph.atomics() {
                    placement.insert(a.name.clone(), Placement::Pool(name.clone()));
                }
            }
            PlanDefaults::Network { host, base_port } => {
                for (k, a) in graph.atomics().enumerate() {
                    let main = u32::from(*base_port) + 2 * k as u32;
                    let (main_port, aux_port) = match (u16::try_from(main), u16::try_from(main + 1)) {
                        (Ok(m), Ok(x)) => (m, x),
                        _ => return Err(PlanError::Schema(format!("base port {base_port} leaves no room for atomic {k}"))),
                    };
                    placement.insert(
                        a.name.clone(),
                        Placement::Endpoint(Endpoint {
                            host: host.clone(),
                            main_port,
                            aux_port,
                        }),
                    );
                }
            }
        }
        Ok(Self {
            graph,
            pools,
            placement,
            groups: BTreeMap::new(),
            coordinator: None,
        })
    }

    pub fn mode(&self) -> Option<AddressingMode> {
        self.placement.values().next().map(|p| match p {
            Placement::Pool(_) => AddressingMode::Pools,
            Placement::Endpoint(_) => AddressingMode::Network,
        })
    }

    pub fn pool_plan(&self) -> Result<PoolPlan, PlanError> {
        let mut plan = PoolPlan::new();
        for p in &self.pools {
            plan.add_pool(&p.name, p.workers.unwrap_or_else(default_workers))
                .map_err(|e| PlanError::Schema(e.to_string()))?;
        }
        for a in self.graph.atomics() {
            match self.placement.get(&a.name) {
                Some(Placement::Pool(pool)) => {
                    plan.assign(a.name.clone(), pool)
                        .map_err(|e| PlanError::Schema(e.to_string()))?;
                }
                Some(Placement::Endpoint(_)) => {
                    return Err(PlanError::Kind(format!("atomic {:?} has a network endpoint, not a pool", a.name)))
                }
                None => return Err(PlanError::Schema(format!("atomic {:?} has no placement", a.name))),
            }
        }
        Ok(plan)
    }

    pub fn distributed_plan(&self) -> Result<DistributedPlan, PlanError> {
        let mut endpoints = BTreeMap::new();
        for a in self.graph.atomics() {
            match self.placement.get(&a.name) {
                Some(Placement::Endpoint(ep)) => {
                    endpoints.insert(a.name.clone(), ep.clone());
                }
                Some(Placement::Pool(_)) => {
                    return Err(PlanError::Kind(format!("atomic {:?} is placed in a pool, not on an endpoint", a.name)))
                }
                None => return Err(PlanError::Schema(format!("atomic {:?} has no placement", a.name))),
            }
        }
        let mut plan = DistributedPlan::new(self.graph.clone(), endpoints)?;
        if let Some(host) = &self.coordinator {
            plan.coordinator_host = host.clone();
        }
        Ok(plan)
    }

    /// Serializes the plan; the output is stable under parse and re-emit.
    pub fn to_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(out, "<coupled name=\"{}\">", escape(&self.graph.name));
        if let Some(host) = &self.coordinator {
            let _ = writeln!(out, "  <coordinator host=\"{}\"/>", escape(host));
        }
        for p in &self.pools {
            match p.workers {
                Some(w) => {
                    let _ = writeln!(out, "  <pool name=\"{}\" workers=\"{w}\"/>", escape(&p.name));
                }
                None => {
                    let _ = writeln!(out, "  <pool name=\"{}\"/>", escape(&p.name));
                }
            }
        }
        for a in self.graph.atomics() {
            let _ = write!(
                out,
                "  <atomic name=\"{}\" model=\"{}\" delayInt=\"{}\" delayExt=\"{}\"",
                escape(&a.name),
                escape(&a.model),
                a.delay_int,
                a.delay_ext
            );
            match self.placement.get(&a.name) {
                Some(Placement::Pool(pool)) => {
                    let _ = write!(out, " pool=\"{}\"", escape(pool));
                }
                Some(Placement::Endpoint(ep)) => {
                    let _ = write!(
                        out,
                        " host=\"{}\" mainPort=\"{}\" auxPort=\"{}\"",
                        escape(&ep.host),
                        ep.main_port,
                        ep.aux_port
                    );
                }
                None => {}
            }
            if let Some(group) = self.groups.get(&a.name) {
                let _ = write!(out, " group=\"{}\"", escape(group));
            }
            for (k, v) in &a.params {
                let _ = write!(out, " {k}=\"{}\"", escape(v));
            }
            out.push_str("/>\n");
        }
        for c in self.graph.couplings() {
            let _ = writeln!(
                out,
                "  <connection componentFrom=\"{}\" portFrom=\"{}\" componentTo=\"{}\" portTo=\"{}\"/>",
                escape(&c.from.component),
                escape(&c.from.port),
                escape(&c.to.component),
                escape(&c.to.port)
            );
        }
        out.push_str("</coupled>\n");
        out
    }
}

fn escape(raw: &str) -> String {
    let mut s = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '&' => s.push_str("&amp;"),
            '<' => s.push_str("&lt;"),
            '>' => s.push_str("&gt;"),
            '"' => s.push_str("&quot;"),
            '\'' => s.push_str("&apos;"),
            _ => s.push(ch),
        }
    }
    s
}

/// Flattens `graph` and writes it with `defaults` applied to every atomic.
pub fn emit_plan_xml(graph: &ModelGraph, defaults: &PlanDefaults) -> Result<String, PlanError> {
    Ok(PlanDocument::with_defaults(graph, defaults)?.to_xml())
}

const RESERVED: &[&str] = &[
    "name", "model", "delayInt", "delayExt", "host", "mainPort", "auxPort", "pool", "group",
];

fn attr<'a>(node: roxmltree::Node<'a, '_>, key: &str) -> Result<&'a str, PlanError> {
    node.attribute(key).ok_or_else(|| {
        PlanError::Schema(format!(
            "<{}> on line {} lacks attribute {key:?}",
            node.tag_name().name(),
            node.document().text_pos_at(node.range().start).row
        ))
    })
}

fn parse_port(node: roxmltree::Node<'_, '_>, key: &str) -> Result<u16, PlanError> {
    let raw = attr(node, key)?;
    match raw.parse::<u16>() {
        Ok(p) if p > 0 => Ok(p),
        _ => Err(PlanError::Schema(format!("{key}={raw:?} is not a port in 1..65535"))),
    }
}

fn parse_delay(node: roxmltree::Node<'_, '_>, key: &str) -> Result<f64, PlanError> {
    match node.attribute(key) {
        None => Ok(0.0),
        Some(raw) => parse_seconds(raw)
            .filter(|d| *d >= 0.0)
            .ok_or_else(|| PlanError::Schema(format!("{key}={raw:?} is not a non-negative number of seconds"))),
    }
}

/// Parses a plan file. Model kinds resolve through `registry`, which also
/// supplies each atomic's ports.
pub fn parse_plan_xml(text: &str, registry: &ModelRegistry) -> Result<PlanDocument, PlanError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| PlanError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "coupled" {
        return Err(PlanError::Schema(format!(
            "root element must be <coupled>, found <{}>",
            root.tag_name().name()
        )));
    }
    let name = attr(root, "name")?.to_owned();

    let mut pools: Vec<PoolDecl> = Vec::new();
    let mut atomics: Vec<AtomicSpec> = Vec::new();
    let mut placement = BTreeMap::new();
    let mut groups = BTreeMap::new();
    let mut connections = Vec::new();
    let mut coordinator = None;
    let mut mode: Option<(AddressingMode, String)> = None;

    for node in root.children().filter(roxmltree::Node::is_element) {
        match node.tag_name().name() {
            "pool" => {
                let pool = attr(node, "name")?.to_owned();
                if pools.iter().any(|p| p.name == pool) {
                    return Err(PlanError::Schema(format!("duplicate pool {pool:?}")));
                }
                let workers = match node.attribute("workers") {
                    None => None,
                    Some(raw) => match raw.parse::<usize>() {
                        Ok(w) if w >= 1 => Some(w),
                        _ => return Err(PlanError::Schema(format!("pool {pool:?}: workers={raw:?} must be >= 1"))),
                    },
                };
                pools.push(PoolDecl { name: pool, workers });
            }
            "coordinator" => coordinator = Some(attr(node, "host")?.to_owned()),
            "atomic" => {
                let atomic = attr(node, "name")?;
                let mut spec = registry.spec(atomic, attr(node, "model")?)?;
                spec.delay_int = parse_delay(node, "delayInt")?;
                spec.delay_ext = parse_delay(node, "delayExt")?;
                for a in node.attributes() {
                    if !RESERVED.contains(&a.name()) {
                        spec.params.insert(a.name().to_owned(), a.value().to_owned());
                    }
                }
                let has_net = ["host", "mainPort", "auxPort"].iter().any(|k| node.attribute(*k).is_some());
                let here = match (node.attribute("pool"), has_net) {
                    (Some(_), true) => {
                        return Err(PlanError::Mixed(format!("atomic {atomic:?} has both pool and host attributes")))
                    }
                    (Some(pool), false) => Placement::Pool(pool.to_owned()),
                    (None, true) => Placement::Endpoint(Endpoint {
                        host: attr(node, "host")?.to_owned(),
                        main_port: parse_port(node, "mainPort")?,
                        aux_port: parse_port(node, "auxPort")?,
                    }),
                    (None, false) => {
                        return Err(PlanError::Schema(format!("atomic {atomic:?} has neither a pool nor an endpoint")))
                    }
                };
                let here_mode = match here {
                    Placement::Pool(_) => AddressingMode::Pools,
                    Placement::Endpoint(_) => AddressingMode::Network,
                };
                match &mode {
                    None => mode = Some((here_mode, atomic.to_owned())),
                    Some((m, first)) if *m != here_mode => {
                        return Err(PlanError::Mixed(format!(
                            "atomic {first:?} uses {m:?} addressing but {atomic:?} uses {here_mode:?}"
                        )))
                    }
                    Some(_) => {}
                }
                if let Some(group) = node.attribute("group") {
                    groups.insert(atomic.to_owned(), group.to_owned());
                }
                placement.insert(atomic.to_owned(), here);
                atomics.push(spec);
            }
            "connection" => connections.push((
                attr(node, "componentFrom")?.to_owned(),
                attr(node, "portFrom")?.to_owned(),
                attr(node, "componentTo")?.to_owned(),
                attr(node, "portTo")?.to_owned(),
            )),
            other => return Err(PlanError::Schema(format!("unexpected element <{other}>"))),
        }
    }

    for (atomic, p) in &placement {
        if let Placement::Pool(pool) = p {
            if !pools.iter().any(|d| &d.name == pool) {
                return Err(PlanError::Schema(format!("atomic {atomic:?} names undeclared pool {pool:?}")));
            }
        }
    }

    let mut graph = ModelGraph::new(&name);
    for (from, fp, to, tp) in &connections {
        for comp in [from, to] {
            if comp != &name && !atomics.iter().any(|a| &a.name == comp) {
                return Err(PlanError::Dangling(format!("{from}.{fp} -> {to}.{tp} names absent component {comp:?}")));
            }
        }
        if from == &name && !graph.inputs.contains(fp) {
            graph.inputs.push(fp.clone());
        }
        if to == &name && !graph.outputs.contains(tp) {
            graph.outputs.push(tp.clone());
        }
    }
    for spec in atomics {
        graph.add_component(spec)?;
    }
    for (from, fp, to, tp) in &connections {
        graph.connect(from, fp, to, tp)?;
    }

    Ok(PlanDocument {
        graph,
        pools,
        placement,
        groups,
        coordinator,
    })
}

/// Reads a pool-addressed plan file into its graph and [`PoolPlan`].
pub fn load_pool_plan(text: &str, registry: &ModelRegistry) -> Result<(ModelGraph, PoolPlan), PlanError> {
    let doc = parse_plan_xml(text, registry)?;
    let plan = doc.pool_plan()?;
    Ok((doc.graph, plan))
}
