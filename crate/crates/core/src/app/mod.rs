//! Sensor traffic, field sectioning, proxy selection and proxy relaying.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::phy_mac::{NodeId, Point};
use crate::sim::SimTime;

/// Number of sections (and proxies) the field is split into.
pub const SECTION_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// One sensed datum. Survives proxy relaying unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub origin: NodeId,
    pub created_at: SimTime,
    pub size_bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TrafficState {
    Low,
    #[default]
    Medium,
    High,
}

impl TrafficState {
    pub fn reporting_interval(self) -> Duration {
        match self {
            TrafficState::Low => Duration::from_secs(4),
            TrafficState::Medium => Duration::from_secs(2),
            TrafficState::High => Duration::from_secs(1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficState::Low => "low",
            TrafficState::Medium => "medium",
            TrafficState::High => "high",
        }
    }
}

impl fmt::Display for TrafficState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(TrafficState::Low),
            "medium" => Ok(TrafficState::Medium),
            "high" => Ok(TrafficState::High),
            other => Err(format!("unknown traffic state '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ProxyMode {
    #[default]
    None,
    Middle,
    SinkNeighbor,
}

impl ProxyMode {
    pub const ALL: [ProxyMode; 3] = [ProxyMode::None, ProxyMode::Middle, ProxyMode::SinkNeighbor];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyMode::None => "none",
            ProxyMode::Middle => "middle",
            ProxyMode::SinkNeighbor => "sink_neighbor",
        }
    }
}

impl fmt::Display for ProxyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProxyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(ProxyMode::None),
            "middle" => Ok(ProxyMode::Middle),
            "sink_neighbor" | "sinkneighbor" => Ok(ProxyMode::SinkNeighbor),
            other => Err(format!("unknown proxy mode '{other}'")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AppError {
    #[error("section {0} has no eligible node")]
    EmptySection(usize),
    #[error("proxy selection requested in non-proxy mode")]
    NoProxyMode,
}

/// Quadrant index of `p` in a square field of side `side`. Points on a
/// split line belong to the lower-index quadrant.
pub fn quadrant_of(p: Point, side: f64) -> usize {
    let half = side / 2.0;
    let east = (p.x > half) as usize;
    let north = (p.y > half) as usize;
    east + 2 * north
}

pub fn quadrant_centroid(q: usize, side: f64) -> Point {
    let quarter = side / 4.0;
    let cx = if q % 2 == 0 { quarter } else { 3.0 * quarter };
    let cy = if q < 2 { quarter } else { 3.0 * quarter };
    Point::new(cx, cy)
}

/// Section of every node, fixed at t = 0, plus the per-section proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionMap {
    pub side: f64,
    pub section_of: Vec<usize>,
    pub proxies: Option<[NodeId; SECTION_COUNT]>,
}

impl SectionMap {
    pub fn members(&self, section: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.section_of
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s == section)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn proxy_of(&self, node: NodeId) -> Option<NodeId> {
        self.proxies.map(|p| p[self.section_of[node.index()]])
    }

    pub fn is_proxy(&self, node: NodeId) -> bool {
        self.proxies.is_some_and(|p| p.contains(&node))
    }
}

pub fn assign_sections(positions: &[Point], side: f64) -> SectionMap {
    SectionMap {
        side,
        section_of: positions.iter().map(|&p| quadrant_of(p, side)).collect(),
        proxies: None,
    }
}

/// Picks one proxy per section: the member nearest the section centroid
/// (`Middle`) or nearest the sink (`SinkNeighbor`). The sink itself is
/// never a candidate. Ties go to the lower node id.
pub fn select_proxies(
    mode: ProxyMode,
    map: &SectionMap,
    positions: &[Point],
    sink: NodeId,
) -> Result<[NodeId; SECTION_COUNT], AppError> {
    let sink_pos = positions[sink.index()];
    let mut out = [NodeId(0); SECTION_COUNT];
    for (q, slot) in out.iter_mut().enumerate() {
        let target = match mode {
            ProxyMode::None => return Err(AppError::NoProxyMode),
            ProxyMode::Middle => quadrant_centroid(q, map.side),
            ProxyMode::SinkNeighbor => sink_pos,
        };
        let best = map
            .members(q)
            .filter(|&n| n != sink)
            .map(|n| (positions[n.index()].distance(&target), n))
            // Members come in id order; keeping the incumbent on ties keeps the lowest id.
            .fold(None, |best: Option<(f64, NodeId)>, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            });
        *slot = best.ok_or(AppError::EmptySection(q))?.1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayAccept {
    /// Message from another section; discarded.
    Foreign,
    /// First message of a new batch: arm the batch timer.
    StartBatch,
    Buffered,
    /// Size threshold reached: flush now.
    Full,
}

/// Batches messages arriving at a proxy for the onward leg to the sink.
#[derive(Debug, Clone)]
pub struct ProxyRelay {
    pub section: usize,
    pub batch_interval: Duration,
    pub batch_bytes: u64,
    buffered: Vec<Message>,
    bytes: u64,
    /// Messages taken from the batch but not yet accepted by transport.
    backlog: Vec<Message>,
    pub foreign_dropped: u64,
    pub relayed: u64,
}

impl ProxyRelay {
    pub fn new(section: usize, batch_interval: Duration, batch_bytes: u64) -> Self {
        ProxyRelay {
            section,
            batch_interval,
            batch_bytes,
            buffered: Vec::new(),
            bytes: 0,
            backlog: Vec::new(),
            foreign_dropped: 0,
            relayed: 0,
        }
    }

    pub fn accept(&mut self, message: Message, origin_section: usize) -> RelayAccept {
        if origin_section != self.section {
            self.foreign_dropped += 1;
            return RelayAccept::Foreign;
        }
        let first = self.buffered.is_empty();
        self.bytes += message.size_bytes as u64;
        self.buffered.push(message);
        if self.bytes >= self.batch_bytes {
            RelayAccept::Full
        } else if first {
            RelayAccept::StartBatch
        } else {
            RelayAccept::Buffered
        }
    }

    pub fn buffered(&self) -> &[Message] {
        &self.buffered
    }

    /// Closes the current batch and moves it, in creation order, behind any
    /// messages still waiting for transport.
    pub fn close_batch(&mut self) {
        let mut batch = std::mem::take(&mut self.buffered);
        batch.sort_by_key(|m| (m.created_at, m.id));
        self.bytes = 0;
        self.backlog.extend(batch);
    }

    /// Next message waiting to enter the onward connection.
    pub fn next_outbound(&self) -> Option<&Message> {
        self.backlog.first()
    }

    pub fn pop_outbound(&mut self) -> Option<Message> {
        if self.backlog.is_empty() {
            return None;
        }
        self.relayed += 1;
        Some(self.backlog.remove(0))
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.len()
    }

    /// Everything the relay still holds, buffered or waiting for transport.
    pub fn held_messages(&self) -> impl Iterator<Item = &Message> {
        self.buffered.iter().chain(self.backlog.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_examples() {
        assert_eq!(quadrant_of(Point::new(10.0, 10.0), 1000.0), 0);
        assert_eq!(quadrant_of(Point::new(750.0, 250.0), 1000.0), 1);
        assert_eq!(quadrant_of(Point::new(250.0, 750.0), 1000.0), 2);
        assert_eq!(quadrant_of(Point::new(750.0, 750.0), 1000.0), 3);
        assert_eq!(quadrant_of(Point::new(500.0, 500.0), 1000.0), 0);
        assert_eq!(quadrant_of(Point::new(500.0, 600.0), 1000.0), 2);
    }

    #[test]
    fn centroids() {
        assert_eq!(quadrant_centroid(0, 1000.0), Point::new(250.0, 250.0));
        assert_eq!(quadrant_centroid(3, 1000.0), Point::new(750.0, 750.0));
    }

    fn grid() -> Vec<Point> {
        vec![
            Point::new(500.0, 500.0),
            // q0
            Point::new(240.0, 250.0),
            Point::new(260.0, 250.0),
            Point::new(480.0, 480.0),
            // q1
            Point::new(750.0, 250.0),
            Point::new(510.0, 490.0),
            // q2
            Point::new(250.0, 760.0),
            Point::new(490.0, 510.0),
            // q3
            Point::new(760.0, 760.0),
            Point::new(520.0, 520.0),
        ]
    }

    #[test]
    fn middle_placement_with_tie() {
        let pos = grid();
        let map = assign_sections(&pos, 1000.0);
        let p = select_proxies(ProxyMode::Middle, &map, &pos, NodeId(0)).unwrap();
        // Nodes 1 and 2 are both 10 m from (250, 250).
        assert_eq!(p, [NodeId(1), NodeId(4), NodeId(6), NodeId(8)]);
    }

    #[test]
    fn sink_neighbor_placement_skips_sink() {
        let pos = grid();
        let map = assign_sections(&pos, 1000.0);
        let p = select_proxies(ProxyMode::SinkNeighbor, &map, &pos, NodeId(0)).unwrap();
        assert_eq!(p, [NodeId(3), NodeId(5), NodeId(7), NodeId(9)]);
    }

    #[test]
    fn empty_section_is_an_error() {
        let pos = vec![Point::new(500.0, 500.0), Point::new(10.0, 10.0)];
        let map = assign_sections(&pos, 1000.0);
        let err = select_proxies(ProxyMode::Middle, &map, &pos, NodeId(0)).unwrap_err();
        assert_eq!(err, AppError::EmptySection(1));
    }

    fn m(id: u64, t_ms: u64) -> Message {
        Message {
            id: MessageId(id),
            origin: NodeId(1),
            created_at: SimTime::from_millis(t_ms),
            size_bytes: 512,
        }
    }

    #[test]
    fn relay_flushes_in_creation_order() {
        let mut r = ProxyRelay::new(0, Duration::from_secs(1), 4096);
        assert_eq!(r.accept(m(3, 300), 0), RelayAccept::StartBatch);
        assert_eq!(r.accept(m(1, 100), 0), RelayAccept::Buffered);
        assert_eq!(r.accept(m(2, 200), 0), RelayAccept::Buffered);
        assert_eq!(r.accept(m(9, 50), 2), RelayAccept::Foreign);
        r.close_batch();
        let ids: Vec<u64> = std::iter::from_fn(|| r.pop_outbound())
            .map(|m| m.id.0)
            .collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(r.relayed, 3);
        assert_eq!(r.foreign_dropped, 1);
    }

    #[test]
    fn relay_signals_full_batch() {
        let mut r = ProxyRelay::new(1, Duration::from_secs(1), 4096);
        for i in 0..7 {
            assert_ne!(r.accept(m(i, i), 1), RelayAccept::Full);
        }
        assert_eq!(r.accept(m(7, 7), 1), RelayAccept::Full);
    }

    #[test]
    fn names_round_trip() {
        for mode in ProxyMode::ALL {
            assert_eq!(mode.as_str().parse::<ProxyMode>().unwrap(), mode);
        }
        for t in [TrafficState::Low, TrafficState::Medium, TrafficState::High] {
            assert_eq!(t.as_str().parse::<TrafficState>().unwrap(), t);
        }
    }
}
