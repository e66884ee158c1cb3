//! Newline-delimited JSON protocol that lets an external simulator take the
//! place of the built-in one.
//!
//! Every message is one JSON object on one line with a mandatory `version`
//! and a `type`. Roads are named by their `[from, to]` intersection ids and
//! signals by the intersection id.
//!
//! Simulator to controller:
//!
//! ```text
//! {"version":1,"type":"routes","routes":[[0,1,2],[5,4]]}
//! {"version":1,"type":"counts","t":60,"q":[[0,1,3],[1,2,0]],"exits":[[0,1,7]],"turns":[[0,1,2,4]]}
//! {"version":1,"type":"end"}
//! ```
//!
//! `routes` (node sequences, optional, before the first `counts`) supplies
//! turning probabilities; without it they are learned from `turns`
//! (`[from, via, to, vehicles]`). `q` holds the vehicles per road at `t`,
//! `exits` the vehicles that left each road through its stop line since the
//! previous `counts`. Timestamps must strictly increase.
//!
//! Controller to simulator:
//!
//! ```text
//! {"version":1,"type":"signals","t":60,"sigma":[[1,1],[2,-1]]}
//! {"version":1,"type":"error","message":"..."}
//! ```
//!
//! After an `error` reply the controller closes the session.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::flowstats::{FlowStats, TurningProbabilities};
use crate::mesosim::{SimConfig, Simulation, StepMetrics, TrafficSnapshot};
use crate::network::RoadNetwork;

pub const PROTOCOL_VERSION: u32 = 1;

/// Longest accepted line, bytes.
pub const MAX_LINE: usize = 16 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PeerMessage {
    Routes {
        routes: Vec<Vec<u32>>,
    },
    Counts {
        t: u64,
        q: Vec<(u32, u32, u32)>,
        #[serde(default)]
        exits: Vec<(u32, u32, u32)>,
        #[serde(default)]
        turns: Vec<(u32, u32, u32, u32)>,
    },
    End {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerMessage {
    Signals { t: u64, sigma: Vec<(u32, i8)> },
    Error { message: String },
}

fn parse_versioned<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T> {
    let mut value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
    let obj = value.as_object_mut().ok_or_else(|| Error::Protocol("message is not a JSON object".into()))?;
    match obj.remove("version") {
        None => return Err(Error::Protocol("missing version field".into())),
        Some(v) if v.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(v) => return Err(Error::Protocol(format!("unsupported protocol version {v}"))),
    }
    serde_json::from_value(value).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
}

fn encode_versioned<T: Serialize>(message: &T) -> Result<String> {
    let mut value = serde_json::to_value(message)?;
    if let Some(obj) = value.as_object_mut() {
        obj.insert("version".into(), PROTOCOL_VERSION.into());
    }
    Ok(value.to_string())
}

pub fn parse_peer_message(line: &str) -> Result<PeerMessage> {
    parse_versioned(line)
}

pub fn parse_controller_message(line: &str) -> Result<ControllerMessage> {
    parse_versioned(line)
}

pub fn encode_peer_message(message: &PeerMessage) -> Result<String> {
    encode_versioned(message)
}

pub fn encode_controller_message(message: &ControllerMessage) -> Result<String> {
    encode_versioned(message)
}

#[derive(Clone, Debug)]
pub struct CouplingOptions {
    /// Longest wait for the next peer message; `None` waits forever.
    pub timeout: Option<Duration>,
    /// Outflow rate assumed before any green time has been reported, veh/s.
    pub prior_outflow: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { timeout: Some(Duration::from_secs(30)), prior_outflow: SimConfig::default().saturation_flow }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CouplingReport {
    pub cycles: u64,
    pub last_t: Option<u64>,
    /// `counts` messages that left out at least one road.
    pub incomplete_counts: u64,
    /// The peer sent `end` (as opposed to closing the stream).
    pub ended: bool,
}

/// Reads lines on a helper thread so that waits can time out.
struct LineReader {
    rx: mpsc::Receiver<std::io::Result<String>>,
}

impl LineReader {
    fn spawn<R: Read + Send + 'static>(input: R) -> Self {
        let (tx, rx) = mpsc::sync_channel(16);
        std::thread::spawn(move || {
            let mut reader = BufReader::new(input);
            loop {
                let mut line = String::new();
                let res = (&mut reader).take(MAX_LINE as u64 + 1).read_line(&mut line);
                let done = matches!(res, Ok(0) | Err(_));
                let item = match res {
                    Ok(n) if n > MAX_LINE => Err(std::io::Error::other("line too long")),
                    Ok(_) => Ok(line),
                    Err(e) => Err(e),
                };
                if tx.send(item).is_err() || done {
                    break;
                }
            }
        });
        LineReader { rx }
    }

    /// `Ok(None)` at end of stream.
    fn next(&self, timeout: Option<Duration>) -> Result<Option<String>> {
        let item = match timeout {
            Some(d) => self.rx.recv_timeout(d).map_err(|e| match e {
                mpsc::RecvTimeoutError::Timeout => Error::Protocol(format!("no message within {d:?}")),
                mpsc::RecvTimeoutError::Disconnected => Error::Protocol("reader stopped".into()),
            })?,
            None => self.rx.recv().map_err(|_| Error::Protocol("reader stopped".into()))?,
        };
        let line = item?;
        if line.is_empty() {
            return Ok(None);
        }
        Ok(Some(line))
    }
}

struct Session {
    net: Arc<RoadNetwork>,
    roads: HashMap<(u32, u32), usize>,
    stats: FlowStats,
    controller: Box<dyn crate::control::Controller>,
    sigma: Vec<i8>,
    last_t: Option<u64>,
    routes_seen: bool,
    report: CouplingReport,
}

impl Session {
    fn road(&self, from: u32, to: u32) -> Result<usize> {
        self.roads.get(&(from, to)).copied().ok_or_else(|| Error::Protocol(format!("unknown road {from}->{to}")))
    }

    fn node(&self, id: u32) -> Result<usize> {
        self.net.index_of_id(id).ok_or_else(|| Error::Protocol(format!("unknown intersection {id}")))
    }

    fn routes(&mut self, routes: &[Vec<u32>]) -> Result<()> {
        if self.last_t.is_some() {
            return Err(Error::Protocol("routes must precede the first counts message".into()));
        }
        let mut as_roads = Vec::with_capacity(routes.len());
        for route in routes {
            let nodes = route.iter().map(|&id| self.node(id)).collect::<Result<Vec<_>>>()?;
            let roads = nodes
                .windows(2)
                .map(|w| self.net.road_between(w[0], w[1]).ok_or_else(|| Error::Protocol(format!("route {route:?} leaves the network"))))
                .collect::<Result<Vec<_>>>()?;
            as_roads.push(roads);
        }
        self.stats.set_turning(TurningProbabilities::from_routes(
            self.net.roads().len(),
            as_roads.iter().map(Vec::as_slice),
        ));
        self.routes_seen = true;
        Ok(())
    }

    fn counts(
        &mut self,
        t: u64,
        q: &[(u32, u32, u32)],
        exits: &[(u32, u32, u32)],
        turns: &[(u32, u32, u32, u32)],
    ) -> Result<ControllerMessage> {
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(Error::Protocol(format!("timestamp {t} does not follow {last}")));
            }
        } else if !self.routes_seen {
            self.stats.enable_online_turning();
        }
        let n_roads = self.net.roads().len();
        let mut counts = vec![0u32; n_roads];
        let mut seen = vec![false; n_roads];
        for &(from, to, count) in q {
            let r = self.road(from, to)?;
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::Protocol(format!("road {from}->{to} listed twice")));
            }
            counts[r] = count;
        }
        let missing = seen.iter().filter(|s| !**s).count();
        if missing > 0 {
            log::warn!("counts at t={t} omit {missing} roads; treating them as empty");
            self.report.incomplete_counts += 1;
        }
        let mut departures = vec![0u32; n_roads];
        for &(from, to, n) in exits {
            let r = self.road(from, to)?;
            departures[r] = departures[r].saturating_add(n);
        }
        let mut moves = Vec::new();
        for &(a, b, c, n) in turns {
            let from = self.road(a, b)?;
            let to = self.road(b, c)?;
            moves.extend(std::iter::repeat_n((from, to), n as usize));
        }
        self.stats.record_turns(&moves);
        let elapsed = self.last_t.map_or(0, |last| t - last);
        let green: Vec<bool> = (0..n_roads).map(|r| self.net.is_green(r, &self.sigma)).collect();
        self.stats.accumulate(&self.net, &green, &departures, elapsed);
        self.last_t = Some(t);

        let snapshot = TrafficSnapshot { time: t, counts, sigma: self.sigma.clone() };
        let plan = self.controller.decide(&snapshot, &mut self.stats)?;
        self.sigma = plan.sigma;
        self.report.cycles += 1;
        self.report.last_t = Some(t);
        let sigma = self.net.controlled().iter().zip(&self.sigma).map(|(&node, &s)| (self.net.intersections()[node].id, s)).collect();
        Ok(ControllerMessage::Signals { t, sigma })
    }
}

/// Serves one peer: answers every `counts` with `signals` until `end` or end
/// of stream. A bad message gets an `error` reply and ends the session with
/// `Error::Protocol`.
pub fn serve<R: Read + Send + 'static, W: Write>(
    net: Arc<RoadNetwork>,
    controller: &ControllerConfig,
    options: &CouplingOptions,
    input: R,
    mut output: W,
) -> Result<CouplingReport> {
    let mut session = Session {
        roads: net
            .roads()
            .iter()
            .map(|r| (net.intersections()[r.from].id, net.intersections()[r.to].id))
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect(),
        stats: FlowStats::new(&net, options.prior_outflow),
        controller: controller.build(Arc::clone(&net))?,
        sigma: vec![1; net.num_controlled()],
        last_t: None,
        routes_seen: false,
        report: CouplingReport::default(),
        net,
    };
    let reader = LineReader::spawn(input);
    loop {
        let line = match reader.next(options.timeout) {
            Ok(Some(line)) => line,
            Ok(None) => {
                log::warn!("peer closed the stream without an end message");
                return Ok(session.report);
            }
            Err(e) => return fail(&mut output, e),
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match parse_peer_message(&line) {
            Ok(PeerMessage::End {}) => {
                session.report.ended = true;
                return Ok(session.report);
            }
            Ok(PeerMessage::Routes { routes }) => session.routes(&routes).map(|()| None),
            Ok(PeerMessage::Counts { t, q, exits, turns }) => session.counts(t, &q, &exits, &turns).map(Some),
            Err(e) => Err(e),
        };
        match reply {
            Ok(Some(msg)) => {
                writeln!(output, "{}", encode_controller_message(&msg)?)?;
                output.flush()?;
            }
            Ok(None) => {}
            Err(e) => return fail(&mut output, e),
        }
    }
}

fn fail<W: Write>(output: &mut W, err: Error) -> Result<CouplingReport> {
    let message = match &err {
        Error::Protocol(m) => m.clone(),
        other => other.to_string(),
    };
    if let Ok(line) = encode_controller_message(&ControllerMessage::Error { message: message.clone() }) {
        let _ = writeln!(output, "{line}").and_then(|()| output.flush());
    }
    Err(Error::Protocol(message))
}

/// Accepts a single connection and serves it.
pub fn serve_listener(
    listener: &TcpListener,
    net: Arc<RoadNetwork>,
    controller: &ControllerConfig,
    options: &CouplingOptions,
) -> Result<CouplingReport> {
    let (stream, peer) = listener.accept()?;
    log::info!("coupling peer connected from {peer}");
    stream.set_nodelay(true)?;
    serve(net, controller, options, stream.try_clone()?, stream)
}

/// Drives the built-in simulator as a protocol peer and returns its trace.
/// Sends every planned route up front, then one `counts` per `tau` seconds.
pub fn run_sim_peer<R: BufRead, W: Write>(
    net: Arc<RoadNetwork>,
    sim_config: &SimConfig,
    bias_weights: Option<Vec<f64>>,
    tau: u64,
    mut input: R,
    mut output: W,
) -> Result<Vec<StepMetrics>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1 s".into()));
    }
    let mut sim = Simulation::new(Arc::clone(&net), sim_config.clone())?;
    if let Some(w) = bias_weights {
        sim.set_bias_weights(w)?;
    }
    let ids: Vec<u32> = net.intersections().iter().map(|n| n.id).collect();
    let road_ids: Vec<(u32, u32)> = net.roads().iter().map(|r| (ids[r.from], ids[r.to])).collect();
    let routes = sim
        .trips()
        .iter()
        .filter_map(|trip| {
            let mut nodes = vec![ids[net.roads()[*trip.route.first()?].from]];
            nodes.extend(trip.route.iter().map(|&r| ids[net.roads()[r].to]));
            Some(nodes)
        })
        .collect();
    let send = |msg: &PeerMessage, out: &mut W| -> Result<()> {
        writeln!(out, "{}", encode_peer_message(msg)?)?;
        out.flush()?;
        Ok(())
    };
    send(&PeerMessage::Routes { routes }, &mut output)?;

    let mut sigma = vec![1i8; net.num_controlled()];
    let mut exits = vec![0u32; net.roads().len()];
    let mut trace = Vec::with_capacity(sim_config.duration as usize);
    let mut line = String::new();
    for t in 0..sim_config.duration {
        if t % tau == 0 {
            let snap = sim.observe();
            let q = road_ids.iter().zip(&snap.counts).map(|(&(a, b), &c)| (a, b, c)).collect();
            let ex = road_ids.iter().zip(&exits).filter(|(_, &n)| n > 0).map(|(&(a, b), &n)| (a, b, n)).collect();
            send(&PeerMessage::Counts { t, q, exits: ex, turns: Vec::new() }, &mut output)?;
            exits.iter_mut().for_each(|e| *e = 0);
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::Protocol("controller closed the stream".into()));
            }
            match parse_controller_message(&line)? {
                ControllerMessage::Signals { t: reply_t, sigma: pairs } => {
                    if reply_t != t {
                        return Err(Error::Protocol(format!("signals for t={reply_t}, expected {t}")));
                    }
                    for (id, s) in pairs {
                        let c = net
                            .index_of_id(id)
                            .and_then(|node| net.control_index(node))
                            .ok_or_else(|| Error::Protocol(format!("intersection {id} has no signal")))?;
                        sigma[c] = s;
                    }
                }
                ControllerMessage::Error { message } => return Err(Error::Protocol(message)),
            }
        }
        let report = sim.step(&sigma)?;
        for (e, d) in exits.iter_mut().zip(&report.departures) {
            *e += d;
        }
        trace.push(report.metrics);
    }
    send(&PeerMessage::End {}, &mut output)?;
    Ok(trace)
}

/// Connects to a listening controller and runs `run_sim_peer` over TCP.
pub fn run_sim_peer_tcp(
    addr: impl std::net::ToSocketAddrs,
    net: Arc<RoadNetwork>,
    sim_config: &SimConfig,
    bias_weights: Option<Vec<f64>>,
    tau: u64,
) -> Result<Vec<StepMetrics>> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let reader = std::io::BufReader::new(stream.try_clone()?);
    run_sim_peer(net, sim_config, bias_weights, tau, reader, stream)
}
