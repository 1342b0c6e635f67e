//! Experiment pipeline: profile atomics, split them into two resource
//! levels or balance them over one, run a plan on any backend, and turn
//! run rows into speedup tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::devstone::SEED_KIND;
use crate::distributed::{run_local, CoordinatorOptions, DistributedError, Launcher};
use crate::kernel::{AtomicProfile, ReportRow, RunReport, SequentialCoordinator, SimError, SimOptions};
use crate::model::{flatten, ModelGraph, ModelRegistry};
use crate::parallel::ParallelCoordinator;
use crate::plan::{AddressingMode, Placement, PlanDocument, PlanError, PoolDecl};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Distributed(#[from] DistributedError),
    #[error("allocation: {0}")]
    Allocation(String),
    #[error("report: {0}")]
    Report(String),
    #[error("backend {backend} cannot run this plan: {reason}")]
    Mismatch { backend: Backend, reason: String },
}

/// Orders profiles by descending total time, ties by name.
pub fn rank_profiles(profiles: &mut [AtomicProfile]) {
    profiles.sort_by(|a, b| {
        b.total()
            .partial_cmp(&a.total())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
}

/// Mean per-atomic transition CPU time over `runs` sequential runs, ranked.
pub fn profile_atomics(
    graph: &ModelGraph,
    registry: &ModelRegistry,
    runs: usize,
) -> Result<Vec<AtomicProfile>, HarnessError> {
    let runs = runs.max(1);
    let mut sums: BTreeMap<String, [f64; 3]> = BTreeMap::new();
    let options = SimOptions {
        trace: false,
        profile: true,
    };
    for _ in 0..runs {
        let report = SequentialCoordinator::new(graph, registry, options)?.simulate(u64::MAX)?;
        for p in report.profiles.unwrap_or_default() {
            let s = sums.entry(p.name).or_default();
            s[0] += p.cpu_seconds_int;
            s[1] += p.cpu_seconds_ext;
            s[2] += p.cpu_seconds_con;
        }
    }
    let n = runs as f64;
    let mut profiles: Vec<AtomicProfile> = sums
        .into_iter()
        .map(|(name, [i, e, c])| AtomicProfile {
            name,
            cpu_seconds_int: i / n,
            cpu_seconds_ext: e / n,
            cpu_seconds_con: c / n,
        })
        .collect();
    rank_profiles(&mut profiles);
    Ok(profiles)
}

/// CSV columns: `name,cpu_seconds_int,cpu_seconds_ext,cpu_seconds_con`.
pub fn write_profiles<W: Write>(out: W, profiles: &[AtomicProfile]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in profiles {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles<R: Read>(input: R) -> csv::Result<Vec<AtomicProfile>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// The slow level L1 and the fast level L2 with their resource counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation2Level {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub n: usize,
    pub m: usize,
}

pub const L1_POOL: &str = "L1";
pub const L2_POOL: &str = "L2";
pub const BALANCED_POOL: &str = "balanced";

fn check_coverage(graph: &ModelGraph, profiles: &[AtomicProfile]) -> Result<ModelGraph, HarnessError> {
    let flat = flatten(graph).map_err(SimError::from)?;
    for a in flat.atomics() {
        if !profiles.iter().any(|p| p.name == a.name) {
            return Err(HarnessError::Allocation(format!("profile has no entry for atomic {:?}", a.name)));
        }
    }
    Ok(flat)
}

fn ranked(profiles: &[AtomicProfile]) -> Vec<AtomicProfile> {
    let mut v = profiles.to_vec();
    rank_profiles(&mut v);
    v
}

/// Puts the slowest `fraction` of the non-trigger atomics in L1 and the
/// rest, trigger included, in L2. Both lists come out in rank order.
pub fn allocate_two_level(
    graph: &ModelGraph,
    profiles: &[AtomicProfile],
    fraction: f64,
    n: usize,
    m: usize,
) -> Result<Allocation2Level, HarnessError> {
    if n < 1 || m < 1 {
        return Err(HarnessError::Allocation(format!("resource counts must be at least 1, got {n} and {m}")));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarnessError::Allocation(format!("fraction {fraction} is outside [0, 1]")));
    }
    let flat = check_coverage(graph, profiles)?;
    let triggers: Vec<&str> = flat
        .atomics()
        .filter(|a| a.model == SEED_KIND)
        .map(|a| a.name.as_str())
        .collect();
    let order: Vec<String> = ranked(profiles)
        .into_iter()
        .map(|p| p.name)
        .filter(|name| flat.atomics().any(|a| &a.name == name))
        .collect();
    let candidates: Vec<&String> = order.iter().filter(|a| !triggers.contains(&a.as_str())).collect();
    let size = (fraction * candidates.len() as f64 + 1e-9).floor() as usize;
    let l1: Vec<String> = candidates[..size].iter().map(|s| s.to_string()).collect();
    let l2 = order.iter().filter(|a| !l1.contains(a)).cloned().collect();
    Ok(Allocation2Level { l1, l2, n, m })
}

/// Deals ranked atomics round-robin over `m` resources, so no two of the
/// `m` heaviest share one.
pub fn allocate_balanced(
    graph: &ModelGraph,
    profiles: &[AtomicProfile],
    m: usize,
) -> Result<Vec<Vec<String>>, HarnessError> {
    if m < 1 {
        return Err(HarnessError::Allocation("resource count must be at least 1".into()));
    }
    let flat = check_coverage(graph, profiles)?;
    let mut groups = vec![Vec::new(); m];
    let members = ranked(profiles)
        .into_iter()
        .filter(|p| flat.atomics().any(|a| a.name == p.name));
    for (k, p) in members.enumerate() {
        groups[k % m].push(p.name);
    }
    Ok(groups)
}

fn deal(names: &[String], count: usize, prefix: &str, groups: &mut BTreeMap<String, String>) {
    for (k, name) in names.iter().enumerate() {
        groups.insert(name.clone(), format!("{prefix}-{}", k % count));
    }
}

impl Allocation2Level {
    /// Rewrites pools (pool plans) and container groups (both modes).
    pub fn apply(&self, doc: &mut PlanDocument) {
        if doc.mode() == Some(AddressingMode::Pools) {
            doc.pools = vec![
                PoolDecl {
                    name: L1_POOL.into(),
                    workers: Some(self.n),
                },
                PoolDecl {
                    name: L2_POOL.into(),
                    workers: Some(self.m),
                },
            ];
            for a in &self.l1 {
                doc.placement.insert(a.clone(), Placement::Pool(L1_POOL.into()));
            }
            for a in &self.l2 {
                doc.placement.insert(a.clone(), Placement::Pool(L2_POOL.into()));
            }
        }
        doc.groups.clear();
        deal(&self.l1, self.n, "l1", &mut doc.groups);
        deal(&self.l2, self.m, "l2", &mut doc.groups);
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.n, self.m)
    }
}

/// Single pool of `groups.len()` workers; one container group per entry.
pub fn apply_balanced(groups: &[Vec<String>], doc: &mut PlanDocument) {
    if doc.mode() == Some(AddressingMode::Pools) {
        doc.pools = vec![PoolDecl {
            name: BALANCED_POOL.into(),
            workers: Some(groups.len()),
        }];
        for a in groups.iter().flatten() {
            doc.placement.insert(a.clone(), Placement::Pool(BALANCED_POOL.into()));
        }
    }
    doc.groups.clear();
    for (k, g) in groups.iter().enumerate() {
        for a in g {
            doc.groups.insert(a.clone(), format!("b-{k}"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    Parallel,
    DistributedLocal,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Sequential => "sequential",
            Backend::Parallel => "parallel",
            Backend::DistributedLocal => "distributed-local",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Backend::Sequential),
            "parallel" => Ok(Backend::Parallel),
            "distributed-local" => Ok(Backend::DistributedLocal),
            other => Err(format!(
                "unknown backend {other:?} (expected sequential, parallel or distributed-local)"
            )),
        }
    }
}

fn is_loopback(host: &str) -> bool {
    host == "localhost" || host.parse::<IpAddr>().is_ok_and(|ip| ip.is_loopback())
}

/// Runs `doc` on `backend`. The parallel backend needs a pool plan; the
/// distributed one needs a network plan on loopback addresses.
pub fn run_document(
    doc: &PlanDocument,
    backend: Backend,
    registry: &ModelRegistry,
    max_iterations: u64,
    options: SimOptions,
    launcher: &dyn Launcher,
) -> Result<RunReport, HarnessError> {
    let mismatch = |reason: String| HarnessError::Mismatch { backend, reason };
    match backend {
        Backend::Sequential => Ok(SequentialCoordinator::new(&doc.graph, registry, options)?.simulate(max_iterations)?),
        Backend::Parallel => {
            if doc.mode() != Some(AddressingMode::Pools) {
                return Err(mismatch("atomics are not assigned to pools".into()));
            }
            let plan = doc.pool_plan()?;
            Ok(ParallelCoordinator::new(&doc.graph, registry, &plan, options)?.simulate(max_iterations)?)
        }
        Backend::DistributedLocal => {
            if doc.mode() != Some(AddressingMode::Network) {
                return Err(mismatch("atomics have no network endpoints".into()));
            }
            let plan = doc.distributed_plan()?;
            if let Some((a, ep)) = plan.endpoints.iter().find(|(_, ep)| !is_loopback(&ep.host)) {
                return Err(mismatch(format!("atomic {a:?} is on non-loopback host {}", ep.host)));
            }
            let options = CoordinatorOptions {
                sim: options,
                ..Default::default()
            };
            Ok(run_local(&plan, launcher, max_iterations, options)?.report)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Panel {
    Baseline,
    VaryL1,
    VaryL2,
    SubOptimal,
    Balanced,
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Panel::Baseline => "baseline",
            Panel::VaryL1 => "vary-l1",
            Panel::VaryL2 => "vary-l2",
            Panel::SubOptimal => "sub-optimal",
            Panel::Balanced => "balanced",
        })
    }
}

/// Panels a resource label belongs to, each with the varied count.
///
/// `ix1` varies L1; `1xj` varies L2; `ixj` with both above one is the
/// sub-optimal sweep (L1 fixed, L2 varied); a bare count is one balanced
/// level.
pub fn panels_for(label: &str) -> Vec<(Panel, usize)> {
    match label.split_once('x') {
        Some((i, j)) => match (i.parse::<usize>(), j.parse::<usize>()) {
            (Ok(i), Ok(j)) => {
                let mut out = Vec::new();
                if j == 1 {
                    out.push((Panel::VaryL1, i));
                }
                if i == 1 {
                    out.push((Panel::VaryL2, j));
                }
                if i > 1 && j > 1 {
                    out.push((Panel::SubOptimal, j));
                }
                out
            }
            _ => Vec::new(),
        },
        None => label.parse().map(|n| vec![(Panel::Balanced, n)]).unwrap_or_default(),
    }
}

/// CSV columns: `model,panel,x,label,backend,wall_seconds,speedup`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub model: String,
    pub panel: Panel,
    /// The resource count varied along the panel.
    pub x: usize,
    pub label: String,
    pub backend: String,
    pub wall_seconds: f64,
    pub speedup: f64,
}

/// Speedup of every run against its model's single sequential row. Runs
/// appear once per panel they belong to, panels in order and each sorted
/// by `x`.
pub fn speedup_table(rows: &[ReportRow]) -> Result<Vec<SpeedupRow>, HarnessError> {
    let mut baselines: BTreeMap<&str, &ReportRow> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.backend == "sequential") {
        if baselines.insert(&r.model, r).is_some() {
            return Err(HarnessError::Report(format!("model {:?} has more than one sequential baseline", r.model)));
        }
    }
    let mut out = Vec::new();
    for r in rows {
        let base = baselines
            .get(r.model.as_str())
            .ok_or_else(|| HarnessError::Report(format!("model {:?} has no sequential baseline", r.model)))?;
        let speedup = if r.wall_seconds > 0.0 {
            base.wall_seconds / r.wall_seconds
        } else {
            f64::INFINITY
        };
        let row = |panel, x| SpeedupRow {
            model: r.model.clone(),
            panel,
            x,
            label: r.workers.clone(),
            backend: r.backend.clone(),
            wall_seconds: r.wall_seconds,
            speedup,
        };
        if r.backend == "sequential" {
            out.push(row(Panel::Baseline, 1));
        } else {
            out.extend(panels_for(&r.workers).into_iter().map(|(p, x)| row(p, x)));
        }
    }
    out.sort_by(|a, b| (&a.model, a.panel, a.x).cmp(&(&b.model, b.panel, b.x)));
    Ok(out)
}

pub fn write_speedup_rows<W: Write>(out: W, rows: &[SpeedupRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_speedup_rows<R: Read>(input: R) -> csv::Result<Vec<SpeedupRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Plot data: one row per `x` value with a speedup column per panel and
/// an empty cell where a panel has no run at that `x`. Columns:
/// `model,x,vary-l1,vary-l2,sub-optimal,balanced`.
pub fn write_plot_data<W: Write>(out: W, rows: &[SpeedupRow]) -> csv::Result<()> {
    const PANELS: [Panel; 4] = [Panel::VaryL1, Panel::VaryL2, Panel::SubOptimal, Panel::Balanced];
    let mut grid: BTreeMap<(&str, usize), [Option<f64>; 4]> = BTreeMap::new();
    for r in rows {
        if let Some(k) = PANELS.iter().position(|p| *p == r.panel) {
            grid.entry((&r.model, r.x)).or_default()[k] = Some(r.speedup);
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "x", "vary-l1", "vary-l2", "sub-optimal", "balanced"])?;
    for ((model, x), cells) in grid {
        let mut record = vec![model.to_owned(), x.to_string()];
        record.extend(cells.iter().map(|c| c.map(|v| format!("{v:.6}")).unwrap_or_default()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
