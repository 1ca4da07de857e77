//! Simplified 802.11 DCF: carrier sense, slotted binary-exponential backoff,
//! no-capture collisions and a bounded number of link-layer retries.
//!
//! Link-layer ACKs are not put on the air. A sender learns the outcome of a
//! unicast attempt `ack_delay` after its transmission ends (SIFS plus ACK
//! airtime), so a decoded frame is always acknowledged.

use std::collections::VecDeque;
use std::time::Duration;

use crate::phy_mac::NodeId;
use crate::routing::Packet;
use crate::sim::{EventHandle, RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkAddr {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Data,
    MacAck,
    RoutingCtl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackoffPolicy {
    /// Uniform slot count in `[0, cw]` drawn from the MAC backoff stream.
    Random,
    /// Every backoff lasts exactly this many slots.
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig {
    pub data_rate_bps: f64,
    pub difs: Duration,
    pub slot: Duration,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub frame_overhead_bytes: u32,
    pub ack_delay: Duration,
    pub queue_limit: usize,
    pub backoff: BackoffPolicy,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            data_rate_bps: 2_000_000.0,
            difs: Duration::from_micros(50),
            slot: Duration::from_micros(20),
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 7,
            frame_overhead_bytes: 58,
            // SIFS 10 us + 14-byte ACK at 2 Mb/s.
            ack_delay: Duration::from_micros(66),
            queue_limit: 50,
            backoff: BackoffPolicy::Random,
        }
    }
}

impl MacConfig {
    /// Time on air for a frame carrying `payload_bytes`, overhead included.
    pub fn airtime(&self, payload_bytes: u32) -> Duration {
        let bits = (payload_bytes + self.frame_overhead_bytes) as f64 * 8.0;
        Duration::from_nanos((bits / self.data_rate_bps * 1e9).round() as u64)
    }

    pub fn draw_backoff(&self, cw: u32, rng: &mut RngStream) -> Duration {
        let slots = match self.backoff {
            BackoffPolicy::Random => rng.uniform_int(0, cw),
            BackoffPolicy::Fixed(k) => k,
        };
        self.slot * slots
    }

    pub fn next_cw(&self, cw: u32) -> u32 {
        (cw * 2 + 1).min(self.cw_max)
    }
}

/// A transmission on the shared medium.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub src: NodeId,
    pub dst: LinkAddr,
    pub kind: FrameKind,
    pub payload_bytes: u32,
    pub tx_start: SimTime,
    pub tx_end: SimTime,
    pub retry_count: u32,
    pub packet: Packet,
}

impl Frame {
    pub fn overlaps(&self, other: &Frame) -> bool {
        intervals_overlap((self.tx_start, self.tx_end), (other.tx_start, other.tx_end))
    }
}

/// Half-open interval overlap: `[a0, a1)` and `[b0, b1)` share an instant.
pub fn intervals_overlap(a: (SimTime, SimTime), b: (SimTime, SimTime)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Resolves a set of mutually overlapping frames heard by one receiver.
/// Without capture, only a lone frame survives.
pub fn resolve_reception(overlapping: &[Frame]) -> Option<&Frame> {
    match overlapping {
        [only] => Some(only),
        _ => None,
    }
}

/// Frames in `heard` that the receiver decodes: those that overlap no other
/// frame it heard.
pub fn decodable(heard: &[Frame]) -> Vec<&Frame> {
    heard
        .iter()
        .enumerate()
        .filter(|(i, f)| {
            heard
                .iter()
                .enumerate()
                .all(|(j, g)| *i == j || !f.overlaps(g))
        })
        .map(|(_, f)| f)
        .collect()
}

/// A packet waiting in (or at the head of) a node's interface queue.
#[derive(Debug, Clone, PartialEq)]
pub struct MacSdu {
    pub dst: LinkAddr,
    pub packet: Packet,
    pub retries: u32,
}

impl MacSdu {
    pub fn kind(&self) -> FrameKind {
        if self.packet.is_control() {
            FrameKind::RoutingCtl
        } else {
            FrameKind::Data
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacStatus {
    Idle,
    /// Waiting out DIFS + backoff; the handle fires the attempt.
    Contending(EventHandle),
    Transmitting,
    AwaitingAck,
}

/// An on-air frame as seen by one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Incoming {
    pub tx: u64,
    pub end: SimTime,
    pub corrupted: bool,
}

#[derive(Debug, Clone)]
pub struct MacState {
    pub queue: VecDeque<MacSdu>,
    pub current: Option<MacSdu>,
    pub status: MacStatus,
    pub cw: u32,
    pub transmitting: Option<u64>,
    pub incoming: Vec<Incoming>,
}

impl MacState {
    pub fn new(cfg: &MacConfig) -> Self {
        MacState {
            queue: VecDeque::new(),
            current: None,
            status: MacStatus::Idle,
            cw: cfg.cw_min,
            transmitting: None,
            incoming: Vec::new(),
        }
    }

    /// Queues a packet. Routing control jumps ahead of data. Returns the
    /// packet back if the queue is full.
    pub fn enqueue(&mut self, sdu: MacSdu, limit: usize) -> Result<(), MacSdu> {
        if self.queue.len() >= limit {
            return Err(sdu);
        }
        if sdu.packet.is_control() {
            let pos = self
                .queue
                .iter()
                .position(|q| !q.packet.is_control())
                .unwrap_or(self.queue.len());
            self.queue.insert(pos, sdu);
        } else {
            self.queue.push_back(sdu);
        }
        Ok(())
    }
}
