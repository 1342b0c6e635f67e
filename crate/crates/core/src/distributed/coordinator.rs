use std::collections::BTreeMap;
use std::io;
use std::net::TcpStream;
use std::time::Instant;

use super::frame::{read_frame, Command, FrameError, WireFrame};
use super::service::check_reply;
use super::{connect_with_retry, CoordinatorOptions, DistributedError, ExitStats};
use crate::kernel::{CounterTriple, RunReport};
use crate::model::EventValue;
use crate::plan::DistributedPlan;

const SENDER: &str = "coordinator";

/// Frames that crossed the coordinator's own sockets, by command.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub sent: BTreeMap<Command, u64>,
    pub received: BTreeMap<Command, u64>,
}

impl FrameStats {
    pub fn count(&self, command: Command) -> u64 {
        self.sent.get(&command).copied().unwrap_or(0) + self.received.get(&command).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub report: RunReport,
    pub frames: FrameStats,
}

struct Link {
    atomic: String,
    addr: String,
    stream: TcpStream,
}

struct Session {
    links: Vec<Link>,
    frames: FrameStats,
}

impl Session {
    /// Writes `frame` to every service, then reads every reply.
    fn broadcast(&mut self, frame: &WireFrame, expect: Command) -> Result<Vec<WireFrame>, DistributedError> {
        let bytes = frame.encode();
        for link in &mut self.links {
            io::Write::write_all(&mut link.stream, &bytes).map_err(|e| DistributedError::Unreachable {
                atomic: link.atomic.clone(),
                addr: link.addr.clone(),
                reason: e.to_string(),
            })?;
        }
        *self.frames.sent.entry(frame.command).or_default() += self.links.len() as u64;
        let mut replies = Vec::with_capacity(self.links.len());
        for link in &mut self.links {
            let reply = read_frame(&mut link.stream).map_err(|e| match e {
                FrameError::Io(ref io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    DistributedError::Timeout {
                        atomic: link.atomic.clone(),
                        addr: link.addr.clone(),
                    }
                }
                source => DistributedError::Frame {
                    peer: format!("{} at {}", link.atomic, link.addr),
                    source,
                },
            })?;
            *self.frames.received.entry(reply.command).or_default() += 1;
            check_reply(&reply, &link.atomic, expect)?;
            replies.push(reply);
        }
        Ok(replies)
    }
}

/// Runs the plan's services through at most `max_iterations` cycles and
/// collects their counters, traces and final states.
pub fn run_coordinator(
    plan: &DistributedPlan,
    max_iterations: u64,
    options: CoordinatorOptions,
) -> Result<DistributedRun, DistributedError> {
    let mut links = Vec::new();
    for a in plan.graph.atomics() {
        let addr = plan.endpoint(&a.name).expect("validated plan").main_addr();
        let stream = connect_with_retry(&a.name, &addr, &options.timeouts)?;
        links.push(Link {
            atomic: a.name.clone(),
            addr,
            stream,
        });
    }
    let mut s = Session {
        links,
        frames: FrameStats::default(),
    };

    let mut flags = Vec::new();
    if options.sim.trace {
        flags.push(EventValue::from("trace"));
    }
    if options.sim.profile {
        flags.push(EventValue::from("profile"));
    }
    s.broadcast(&WireFrame::new(Command::Init, SENDER).with_values(flags), Command::Ack)?;

    let started = Instant::now();
    let mut clock_trail = options.sim.trace.then(Vec::new);
    let (mut cycles, mut t) = (0u64, 0.0_f64);
    loop {
        let replies = s.broadcast(&WireFrame::new(Command::GetTn, SENDER), Command::TnReply)?;
        let tn = replies
            .iter()
            .map(|r| r.time.unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        if cycles == 0 || tn.is_finite() {
            t = tn;
        }
        if tn == f64::INFINITY || cycles >= max_iterations {
            break;
        }
        if let Some(trail) = &mut clock_trail {
            trail.push(tn);
        }
        s.broadcast(&WireFrame::new(Command::Clock, SENDER).with_time(tn), Command::Ack)?;
        s.broadcast(&WireFrame::new(Command::Lambda, SENDER), Command::Ack)?;
        s.broadcast(&WireFrame::new(Command::Deltfcn, SENDER), Command::Ack)?;
        cycles += 1;
    }
    let wall = started.elapsed().as_secs_f64();

    let replies = s.broadcast(&WireFrame::new(Command::Exit, SENDER), Command::Ack)?;
    let mut counters = CounterTriple::default();
    let mut unrouted = 0;
    let mut traces = BTreeMap::new();
    let mut final_states = BTreeMap::new();
    let mut profiles = Vec::new();
    for (link, reply) in s.links.iter().zip(&replies) {
        let stats = ExitStats::from_values(&link.atomic, &reply.values)?;
        counters = counters + stats.counters;
        unrouted += stats.unrouted;
        traces.insert(link.atomic.clone(), stats.trace);
        final_states.insert(link.atomic.clone(), stats.state);
        profiles.extend(stats.profile);
    }
    Ok(DistributedRun {
        report: RunReport {
            model: plan.graph.name.clone(),
            backend: "distributed".into(),
            workers: s.links.len().to_string(),
            cycles,
            wall_seconds: wall,
            counters,
            final_time: t,
            unrouted_values: unrouted,
            traces: options.sim.trace.then_some(traces),
            clock_trail,
            profiles: options.sim.profile.then_some(profiles),
            final_states,
        },
        frames: s.frames,
    })
}
