use std::collections::HashMap;
use std::io;
use std::net::{IpAddr, Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use super::frame::{read_frame, write_frame, Command, FrameError, WireFrame};
use super::{connect_with_retry, DistributedError, ExitStats, Timeouts, ERROR_PORT};
use crate::kernel::{Counters, Simulator};
use crate::model::{AtomicSpec, BuildContext, CouplingKind, EventValue, ModelRegistry};
use crate::plan::{DistributedPlan, Endpoint};

#[derive(Debug, Clone)]
struct OutRoute {
    src_port: usize,
    dst: String,
    dst_port: String,
    addr: String,
}

type Inbox = Arc<Mutex<Vec<(String, String, Vec<EventValue>)>>>;

/// One atomic behind two sockets: `main_port` takes coordinator commands,
/// `aux_port` takes PROPAGATE frames pushed by peer services.
pub struct SimulatorService {
    name: String,
    spec: AtomicSpec,
    registry: ModelRegistry,
    endpoint: Endpoint,
    main: TcpListener,
    aux: TcpListener,
    routes: Vec<OutRoute>,
    /// (sender, input port) in coupling order: the fan-in order of bags.
    incoming: Vec<(String, String)>,
    dead_ports: Vec<usize>,
    timeouts: Timeouts,
}

fn bind(host: &str, port: u16) -> io::Result<TcpListener> {
    // Loopback hosts bind as given; anything else (pod or host names)
    // listens on all interfaces.
    let local = match host.parse::<IpAddr>() {
        Ok(ip) => ip.is_loopback() || ip.is_unspecified(),
        Err(_) => host == "localhost",
    };
    if local {
        TcpListener::bind((host, port))
    } else {
        TcpListener::bind(("0.0.0.0", port))
    }
}

impl SimulatorService {
    /// Binds both ports of `atomic` as listed in `plan`.
    pub fn bind(
        plan: &DistributedPlan,
        atomic: &str,
        registry: ModelRegistry,
        timeouts: Timeouts,
    ) -> Result<Self, DistributedError> {
        let spec = plan
            .graph
            .atomics()
            .find(|a| a.name == atomic)
            .cloned()
            .ok_or_else(|| DistributedError::UnknownAtomic(atomic.to_owned()))?;
        registry.kind(&spec.model).ok_or_else(|| {
            DistributedError::Model(crate::model::ModelError::UnknownKind {
                atomic: spec.name.clone(),
                kind: spec.model.clone(),
            })
        })?;
        let endpoint = plan.endpoint(atomic).expect("plan covers every atomic").clone();
        let host = endpoint.host.clone();
        let bind_err = |port: u16| {
            let host = host.clone();
            move |source: io::Error| DistributedError::Bind {
                atomic: atomic.to_owned(),
                addr: format!("{host}:{port}"),
                source,
            }
        };
        let main = bind(&endpoint.host, endpoint.main_port).map_err(bind_err(endpoint.main_port))?;
        let aux = bind(&endpoint.host, endpoint.aux_port).map_err(bind_err(endpoint.aux_port))?;

        let mut routes = Vec::new();
        let mut incoming: Vec<(String, String)> = Vec::new();
        for c in plan.graph.couplings() {
            if c.kind != CouplingKind::Ic {
                continue;
            }
            if c.from.component == atomic {
                routes.push(OutRoute {
                    src_port: spec.outputs.iter().position(|p| *p == c.from.port).expect("validated"),
                    dst: c.to.component.clone(),
                    dst_port: c.to.port.clone(),
                    addr: plan.endpoint(&c.to.component).expect("validated").aux_addr(),
                });
            }
            if c.to.component == atomic {
                let key = (c.from.component.clone(), c.to.port.clone());
                if !incoming.contains(&key) {
                    incoming.push(key);
                }
            }
        }
        let dead_ports = (0..spec.outputs.len())
            .filter(|p| !routes.iter().any(|r| r.src_port == *p))
            .collect();

        Ok(Self {
            name: atomic.to_owned(),
            spec,
            registry,
            endpoint,
            main,
            aux,
            routes,
            incoming,
            dead_ports,
            timeouts,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Serves one coordinator session and returns after EXIT (or when the
    /// coordinator hangs up).
    pub fn run(self) -> Result<(), DistributedError> {
        let inbox: Inbox = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let aux_addr = self.aux.local_addr().ok();
        let aux_thread = {
            let listener = self.aux.try_clone().map_err(|e| self.io_err("aux listener", e))?;
            let inbox = Arc::clone(&inbox);
            let stop = Arc::clone(&stop);
            let name = self.name.clone();
            thread::Builder::new()
                .name(format!("{name}-aux"))
                .spawn(move || accept_peers(listener, inbox, stop, name))
                .map_err(|e| self.io_err("aux thread", e))?
        };

        let result = self.session(&inbox);

        stop.store(true, Ordering::SeqCst);
        if let Some(addr) = aux_addr {
            // wake the blocked accept
            let _ = TcpStream::connect(addr);
        }
        let _ = aux_thread.join();
        result
    }

    fn io_err(&self, what: &str, source: io::Error) -> DistributedError {
        DistributedError::Io {
            context: format!("{} {what}", self.name),
            source,
        }
    }

    fn session(&self, inbox: &Inbox) -> Result<(), DistributedError> {
        let (mut conn, _) = self.main.accept().map_err(|e| self.io_err("accept", e))?;
        conn.set_nodelay(true).ok();
        let mut reader = conn.try_clone().map_err(|e| self.io_err("clone", e))?;

        let mut sim: Option<Simulator> = None;
        let mut counters = Arc::new(Counters::new());
        let mut peers: HashMap<String, TcpStream> = HashMap::new();
        let (mut t, mut cycle, mut unrouted) = (0.0_f64, 0u64, 0u64);

        loop {
            let frame = match read_frame(&mut reader) {
                Ok(f) => f,
                Err(FrameError::Closed) => return Ok(()),
                Err(source) => {
                    return Err(DistributedError::Frame {
                        peer: "coordinator".into(),
                        source,
                    })
                }
            };
            let ack = WireFrame::new(Command::Ack, &self.name);
            let reply = match frame.command {
                Command::Init => {
                    counters = Arc::new(Counters::new());
                    let ctx = BuildContext {
                        counters: Arc::clone(&counters),
                    };
                    match Simulator::build(&self.spec, &self.registry, &ctx) {
                        Ok(mut s) => {
                            let flag = |f: &str| frame.values.contains(&EventValue::from(f));
                            if flag("trace") {
                                s.enable_trace();
                            }
                            if flag("profile") {
                                s.enable_profile();
                            }
                            s.initialize();
                            sim = Some(s);
                            (t, cycle, unrouted) = (0.0, 0, 0);
                            peers.clear();
                            inbox.lock().unwrap().clear();
                            ack
                        }
                        Err(e) => error_ack(&self.name, e.to_string()),
                    }
                }
                Command::GetTn => match &sim {
                    Some(s) => WireFrame::new(Command::TnReply, &self.name).with_time(s.tn()),
                    None => error_ack(&self.name, "GET_TN before INIT"),
                },
                Command::Clock => match frame.time {
                    Some(time) => {
                        t = time;
                        cycle += 1;
                        ack
                    }
                    None => error_ack(&self.name, "CLOCK without time"),
                },
                Command::Lambda => match &mut sim {
                    Some(s) if s.is_imminent(t) => {
                        s.lambda(cycle, t);
                        unrouted += self.dead_ports.iter().map(|&p| s.outputs().bag_at(p).len() as u64).sum::<u64>();
                        match self.push_outputs(s, &mut peers) {
                            Ok(()) => ack,
                            Err(e) => error_ack(&self.name, e.to_string()),
                        }
                    }
                    Some(_) => ack,
                    None => error_ack(&self.name, "LAMBDA before INIT"),
                },
                Command::Deltfcn => match &mut sim {
                    Some(s) => {
                        self.collect_inputs(s, inbox);
                        match s.deltfcn(cycle, t) {
                            Ok(_) => ack,
                            Err(e) => error_ack(&self.name, e.to_string()),
                        }
                    }
                    None => error_ack(&self.name, "DELTFCN before INIT"),
                },
                Command::Exit => {
                    let stats = match &mut sim {
                        Some(s) => ExitStats {
                            counters: counters.snapshot(),
                            unrouted,
                            state: s.state_summary(),
                            trace: s.take_trace().unwrap_or_default(),
                            profile: s.profile(),
                        },
                        None => ExitStats::default(),
                    };
                    write_frame(&mut conn, &ack.with_values(stats.to_values())).map_err(|e| self.io_err("reply", e))?;
                    for (_, p) in peers.drain() {
                        let _ = p.shutdown(Shutdown::Both);
                    }
                    return Ok(());
                }
                Command::Propagate | Command::Ack | Command::TnReply => {
                    error_ack(&self.name, format!("unexpected {} on the command port", frame.command))
                }
            };
            write_frame(&mut conn, &reply).map_err(|e| self.io_err("reply", e))?;
        }
    }

    /// Pushes every non-empty output bag to its destinations in coupling
    /// order, waiting for each ACK.
    fn push_outputs(&self, sim: &Simulator, peers: &mut HashMap<String, TcpStream>) -> Result<(), DistributedError> {
        for r in &self.routes {
            let values = sim.outputs().bag_at(r.src_port).values();
            if values.is_empty() {
                continue;
            }
            if !peers.contains_key(&r.dst) {
                let stream = connect_with_retry(&r.dst, &r.addr, &self.timeouts)?;
                peers.insert(r.dst.clone(), stream);
            }
            let stream = peers.get_mut(&r.dst).unwrap();
            let frame = WireFrame::new(Command::Propagate, &self.name)
                .with_port(&r.dst_port)
                .with_values(values.to_vec());
            write_frame(stream, &frame).map_err(|e| DistributedError::Io {
                context: format!("push to {} at {}", r.dst, r.addr),
                source: e,
            })?;
            let reply = read_frame(stream).map_err(|source| DistributedError::Frame {
                peer: format!("{} at {}", r.dst, r.addr),
                source,
            })?;
            check_reply(&reply, &r.dst, Command::Ack)?;
        }
        Ok(())
    }

    fn collect_inputs(&self, sim: &mut Simulator, inbox: &Inbox) {
        let mut pending = std::mem::take(&mut *inbox.lock().unwrap());
        for (sender, port) in &self.incoming {
            let Some(idx) = sim.inputs().index_of(port) else { continue };
            for (_, _, values) in pending.iter().filter(|(s, p, _)| s == sender && p == port) {
                sim.inputs_mut().bag_at_mut(idx).extend_from_slice(values);
            }
            pending.retain(|(s, p, _)| !(s == sender && p == port));
        }
        // pushes from senders the plan does not list still count
        for (_, port, values) in pending {
            if let Some(bag) = sim.inputs_mut().bag_mut(&port) {
                bag.extend_from_slice(&values);
            }
        }
    }
}

fn error_ack(sender: &str, message: impl Into<String>) -> WireFrame {
    WireFrame::new(Command::Ack, sender)
        .with_port(ERROR_PORT)
        .with_values(vec![EventValue::Text(message.into())])
}

pub(super) fn check_reply(reply: &WireFrame, peer: &str, expected: Command) -> Result<(), DistributedError> {
    if reply.command == Command::Ack && reply.port.as_deref() == Some(ERROR_PORT) {
        let message = match reply.values.first() {
            Some(EventValue::Text(m)) => m.clone(),
            _ => "unspecified failure".into(),
        };
        return Err(DistributedError::Remote {
            atomic: peer.to_owned(),
            message,
        });
    }
    if reply.command != expected {
        return Err(DistributedError::Protocol(format!(
            "{peer} replied {} where {expected} was expected",
            reply.command
        )));
    }
    Ok(())
}

fn accept_peers(listener: TcpListener, inbox: Inbox, stop: Arc<AtomicBool>, name: String) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(mut conn) = conn else { continue };
        conn.set_nodelay(true).ok();
        let inbox = Arc::clone(&inbox);
        let name = name.clone();
        let _ = thread::Builder::new().name(format!("{name}-peer")).spawn(move || loop {
            let frame = match read_frame(&mut conn) {
                Ok(f) => f,
                Err(_) => break,
            };
            let reply = match (frame.command, frame.port) {
                (Command::Propagate, Some(port)) => {
                    // one frame is appended under one lock: no interleaving
                    inbox.lock().unwrap().push((frame.sender, port, frame.values));
                    WireFrame::new(Command::Ack, &name)
                }
                (cmd, _) => error_ack(&name, format!("unexpected {cmd} on the propagation port")),
            };
            if write_frame(&mut conn, &reply).is_err() {
                break;
            }
        });
    }
}

/// Binds and serves `atomic` from `plan` until the coordinator sends EXIT.
pub fn serve_simulator(plan: &DistributedPlan, atomic: &str, registry: ModelRegistry) -> Result<(), DistributedError> {
    SimulatorService::bind(plan, atomic, registry, Timeouts::default())?.run()
}
