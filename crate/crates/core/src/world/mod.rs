//! The full network simulation: nodes sharing one radio channel, each
//! running the MAC, AODV, TCP endpoints and the sensing application.
//!
//! Handlers are grouped by layer in the submodules; they all operate on
//! [`Simulation`].

mod app;
mod link;
mod net;
mod tcp;

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use crate::app::{AppError, Message, MessageId, ProxyMode, ProxyRelay, SectionMap};
use crate::metrics::{Collector, MetricsError};
use crate::phy_mac::{MacConfig, MacState, MobilityParams, NodeId, NodeState, Point, Role};
use crate::routing::{AodvConfig, AodvState, Packet, RouteTable};
use crate::sim::{EventHandle, RngStream, Scheduler, SimError, SimTime, StreamKind};
use crate::transport::{
    ConnId, CwndSample, SegmentKind, TcpConfig, TcpReceiver, TcpSender, TransportError, Variant,
};

pub use link::Transmission;

/// Node 0 is always the sink.
pub const SINK: NodeId = NodeId(0);

/// Everything a run needs besides the node placement.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub radio_range: f64,
    /// `None` keeps every node where it was placed.
    pub mobility: Option<MobilityParams>,
    pub mobility_tick: Duration,
    pub mac: MacConfig,
    pub aodv: AodvConfig,
    pub tcp: TcpConfig,
    pub variant: Variant,
    pub proxy_mode: ProxyMode,
    pub reporting_interval: Duration,
    pub message_size: u32,
    pub batch_interval: Duration,
    pub batch_bytes: u64,
    /// Send buffer of a proxy's onward connection.
    pub proxy_send_buffer: u64,
    pub warmup: Duration,
    pub duration: Duration,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            radio_range: 100.0,
            mobility: Some(MobilityParams::default()),
            mobility_tick: Duration::from_millis(500),
            mac: MacConfig::default(),
            aodv: AodvConfig::default(),
            tcp: TcpConfig::default(),
            variant: Variant::Reno,
            proxy_mode: ProxyMode::None,
            reporting_interval: Duration::from_secs(2),
            message_size: 512,
            batch_interval: Duration::from_secs(1),
            batch_bytes: 4096,
            proxy_send_buffer: 8192,
            warmup: Duration::from_secs(20),
            duration: Duration::from_secs(200),
            seed: 1,
        }
    }
}

/// Initial placement plus the frozen section map (with proxies in proxy
/// mode).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub positions: Vec<Point>,
    pub sections: SectionMap,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Counters for everything that can go wrong or be dropped along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldStats {
    pub events: u64,
    pub frames_sent: u64,
    pub frames_corrupted: u64,
    pub mac_retries: u64,
    pub mac_drops: u64,
    pub ifq_drops: u64,
    pub link_break_drops: u64,
    /// Route discoveries started, counting each retry.
    pub rreq_floods: u64,
    pub rreq_sent: u64,
    pub rrep_sent: u64,
    pub rerr_sent: u64,
    pub discovery_failures: u64,
    pub route_drops: u64,
    pub pending_overflow: u64,
    pub no_route_forward_drops: u64,
    pub blocked_ticks: u64,
    pub messages_generated: u64,
    pub connection_resets: u64,
    pub reset_lost_messages: u64,
    pub foreign_dropped: u64,
    pub segments_sent: u64,
    pub retransmits: u64,
    pub fast_recovery_entries: u64,
    pub timeouts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentDirection {
    Sent,
    Received,
}

/// One transport segment leaving or reaching an endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEvent {
    pub t: SimTime,
    pub node: NodeId,
    pub conn: ConnId,
    pub kind: SegmentKind,
    pub seq: u64,
    pub payload_bytes: u32,
    pub direction: SegmentDirection,
}

#[derive(Debug, Clone)]
pub(crate) enum Event {
    MobilityTick,
    MacAttempt(NodeId),
    TxEnd(u64),
    MacOutcome { node: NodeId, success: bool },
    RreqForward { node: NodeId, packet: Packet },
    DiscoveryTimeout { node: NodeId, dest: NodeId },
    TcpRto { node: NodeId, peer: NodeId },
    AppGenerate(NodeId),
    ProxyFlush(NodeId),
}

pub(crate) struct SenderSlot {
    pub sender: TcpSender,
    pub timer: Option<(SimTime, EventHandle)>,
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub collector: Collector,
    pub stats: WorldStats,
    pub segment_log: Vec<SegmentEvent>,
    pub cwnd_trace: Vec<CwndSample>,
}

pub struct Simulation {
    pub(crate) params: WorldParams,
    pub(crate) sched: Scheduler<Event>,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) sections: SectionMap,
    pub(crate) macs: Vec<MacState>,
    pub(crate) aodv: Vec<AodvState>,
    pub(crate) mobility_rng: RngStream,
    pub(crate) backoff_rng: RngStream,
    pub(crate) traffic_rng: RngStream,
    pub(crate) routing_rng: RngStream,
    pub(crate) active: BTreeMap<u64, Transmission>,
    pub(crate) next_tx: u64,
    /// Keyed by (local node, peer).
    pub(crate) senders: BTreeMap<(NodeId, NodeId), SenderSlot>,
    pub(crate) receivers: BTreeMap<(NodeId, NodeId), TcpReceiver>,
    pub(crate) incarnations: BTreeMap<(NodeId, NodeId), u32>,
    pub(crate) relays: BTreeMap<NodeId, ProxyRelay>,
    pub(crate) relay_timers: BTreeMap<NodeId, EventHandle>,
    pub(crate) collector: Collector,
    pub(crate) stats: WorldStats,
    pub(crate) next_msg: u64,
    pub(crate) segment_log: Option<Vec<SegmentEvent>>,
    pub(crate) trace_node: Option<NodeId>,
    pub(crate) cwnd_trace: Vec<CwndSample>,
    pub(crate) error: Option<SimulationError>,
    pub(crate) started: bool,
}

impl Simulation {
    pub fn new(params: WorldParams, topology: Topology) -> Result<Self, SimulationError> {
        let n = topology.positions.len();
        if n < 2 {
            return Err(SimulationError::Invalid(
                "need a sink and one sensor".into(),
            ));
        }
        if topology.sections.section_of.len() != n {
            return Err(SimulationError::Invalid("section map size mismatch".into()));
        }
        if (params.proxy_mode == ProxyMode::None) != topology.sections.proxies.is_none() {
            return Err(SimulationError::Invalid(
                "proxies must be set exactly in proxy mode".into(),
            ));
        }
        let nodes: Vec<NodeState> = topology
            .positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let id = NodeId(i as u32);
                let role = if id == SINK {
                    Role::Sink
                } else if topology.sections.is_proxy(id) {
                    Role::Proxy
                } else {
                    Role::Sensor
                };
                NodeState {
                    section: topology.sections.section_of[i],
                    mobile: id != SINK && params.mobility.is_some(),
                    ..NodeState::stationary(id, p, role)
                }
            })
            .collect();
        let relays = match topology.sections.proxies {
            Some(proxies) => proxies
                .iter()
                .enumerate()
                .map(|(q, &p)| {
                    (
                        p,
                        ProxyRelay::new(q, params.batch_interval, params.batch_bytes),
                    )
                })
                .collect(),
            None => BTreeMap::new(),
        };
        let warmup = SimTime::ZERO + params.warmup;
        let end = SimTime::ZERO + params.duration;
        if end <= warmup {
            return Err(SimulationError::Invalid(
                "duration must exceed warm-up".into(),
            ));
        }
        let seed = params.seed;
        Ok(Simulation {
            macs: (0..n).map(|_| MacState::new(&params.mac)).collect(),
            aodv: (0..n).map(|_| AodvState::default()).collect(),
            sched: Scheduler::new(),
            nodes,
            sections: topology.sections,
            mobility_rng: RngStream::new(seed, StreamKind::Mobility),
            backoff_rng: RngStream::new(seed, StreamKind::MacBackoff),
            traffic_rng: RngStream::new(seed, StreamKind::Traffic),
            routing_rng: RngStream::new(seed, StreamKind::Routing),
            active: BTreeMap::new(),
            next_tx: 0,
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            incarnations: BTreeMap::new(),
            relays,
            relay_timers: BTreeMap::new(),
            collector: Collector::new(warmup, end),
            stats: WorldStats::default(),
            next_msg: 0,
            segment_log: None,
            trace_node: None,
            cwnd_trace: Vec::new(),
            error: None,
            started: false,
            params,
        })
    }

    /// Records every segment sent or received by an endpoint.
    pub fn enable_segment_log(&mut self) {
        self.segment_log = Some(Vec::new());
    }

    /// Records the cwnd trajectory of the connection opened by `node`.
    pub fn trace_connection_from(&mut self, node: NodeId) {
        self.trace_node = Some(node);
    }

    /// Keeps per-leg proxy timestamps for delay decomposition.
    pub fn instrument_relay_legs(&mut self) {
        self.collector.instrument_legs();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, node: NodeId) -> Point {
        self.nodes[node.index()].position
    }

    pub fn role(&self, node: NodeId) -> Role {
        self.nodes[node.index()].role
    }

    /// Sensing destinations: the sink, or the node's proxy in proxy mode.
    pub fn destination_of(&self, node: NodeId) -> Option<NodeId> {
        match self.nodes[node.index()].role {
            Role::Sensor => Some(self.sections.proxy_of(node).unwrap_or(SINK)),
            Role::Proxy | Role::Sink => None,
        }
    }

    pub(crate) fn fail(&mut self, e: impl Into<SimulationError>) {
        if self.error.is_none() {
            self.error = Some(e.into());
        }
    }

    fn bootstrap(&mut self) {
        if self.params.mobility.is_some() {
            self.sched.schedule_in(Duration::ZERO, Event::MobilityTick);
        }
        let interval = self.params.reporting_interval.as_secs_f64();
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            if self.destination_of(id).is_some() {
                let first = self.traffic_rng.uniform(0.0, interval);
                self.sched
                    .schedule_in(Duration::from_secs_f64(first), Event::AppGenerate(id));
            }
        }
    }

    /// Processes every event due at or before `until`, capped at the
    /// configured duration.
    pub fn advance_to(&mut self, until: SimTime) -> Result<(), SimulationError> {
        if !self.started {
            self.started = true;
            self.bootstrap();
        }
        let until = until.min(SimTime::ZERO + self.params.duration);
        while let Some((_, ev)) = self.sched.pop_due(until) {
            self.stats.events += 1;
            self.dispatch(ev);
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        Ok(())
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Route table of every node, indexed by node id.
    pub fn route_tables(&self) -> Vec<&RouteTable> {
        self.aodv.iter().map(|a| &a.table).collect()
    }

    /// Counters so far. Transport totals are only filled in by `run`.
    pub fn stats(&self) -> &WorldStats {
        &self.stats
    }

    /// Runs to the configured duration and closes the measurement window.
    pub fn run(mut self) -> Result<RunOutcome, SimulationError> {
        self.advance_to(SimTime::ZERO + self.params.duration)?;
        self.finish_stats();
        Ok(RunOutcome {
            collector: self.collector,
            stats: self.stats,
            segment_log: self.segment_log.unwrap_or_default(),
            cwnd_trace: self.cwnd_trace,
        })
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::MobilityTick => self.on_mobility_tick(),
            Event::MacAttempt(node) => self.on_mac_attempt(node),
            Event::TxEnd(tx) => self.on_tx_end(tx),
            Event::MacOutcome { node, success } => self.on_mac_outcome(node, success),
            Event::RreqForward { node, packet } => self.on_rreq_forward(node, packet),
            Event::DiscoveryTimeout { node, dest } => self.on_discovery_timeout(node, dest),
            Event::TcpRto { node, peer } => self.on_tcp_rto(node, peer),
            Event::AppGenerate(node) => self.on_app_generate(node),
            Event::ProxyFlush(node) => self.on_proxy_flush(node),
        }
    }

    fn on_mobility_tick(&mut self) {
        let Some(params) = self.params.mobility.clone() else {
            return;
        };
        let now = self.sched.now();
        let dt = self.params.mobility_tick;
        for i in 0..self.nodes.len() {
            let next = crate::phy_mac::mobility_step(
                &self.nodes[i],
                now,
                dt,
                &params,
                &mut self.mobility_rng,
            );
            self.nodes[i] = next;
        }
        self.sched.schedule_in(dt, Event::MobilityTick);
    }

    fn finish_stats(&mut self) {
        for slot in self.senders.values() {
            let s = slot.sender.stats();
            self.stats.segments_sent += s.segments_sent;
            self.stats.retransmits += s.retransmits;
            self.stats.fast_recovery_entries += s.fast_recovery_entries;
            self.stats.timeouts += s.timeouts;
        }
        if let Some(node) = self.trace_node {
            if let Some(slot) = self
                .senders
                .iter_mut()
                .find(|((n, _), _)| *n == node)
                .map(|(_, s)| s)
            {
                self.cwnd_trace.extend(slot.sender.take_trace());
            }
        }
        self.stats.foreign_dropped = self.relays.values().map(|r| r.foreign_dropped).sum();
    }

    pub(crate) fn new_message(&mut self, origin: NodeId) -> Message {
        let id = MessageId(self.next_msg);
        self.next_msg += 1;
        Message {
            id,
            origin,
            created_at: self.sched.now(),
            size_bytes: self.params.message_size,
        }
    }
}
