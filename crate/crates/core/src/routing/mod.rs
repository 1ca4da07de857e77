//! Simplified AODV: on-demand discovery by flooded route requests, replies
//! along the reverse path, and route invalidation on link breaks.
//!
//! This module holds the per-node routing state and packet formats; the
//! event-driven handlers live in `world::routing`.

mod table;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::time::Duration;

use crate::phy_mac::NodeId;
use crate::sim::EventHandle;
use crate::transport::Segment;

pub use table::{RouteEntry, RouteTable};

/// IP + TCP header bytes carried by every transport segment.
pub const TCP_IP_HEADER_BYTES: u32 = 40;
const RREQ_BYTES: u32 = 24;
const RREP_BYTES: u32 = 20;
const RERR_BASE_BYTES: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub origin: NodeId,
    pub origin_seq: u32,
    pub rreq_id: u32,
    pub dest: NodeId,
    /// Last destination sequence number known to the origin, if any.
    pub dest_seq: Option<u32>,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    /// The node that asked for the route.
    pub origin: NodeId,
    pub dest: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    pub unreachable: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tcp(Segment),
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
}

/// Network-layer packet. `src`/`dst` are end points; the MAC carries the
/// next hop separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
}

impl Packet {
    pub fn new(src: NodeId, dst: NodeId, payload: Payload) -> Self {
        Packet { src, dst, payload }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self.payload, Payload::Tcp(_))
    }

    pub fn size_bytes(&self) -> u32 {
        match &self.payload {
            Payload::Tcp(seg) => seg.payload_bytes + TCP_IP_HEADER_BYTES,
            Payload::Rreq(_) => RREQ_BYTES,
            Payload::Rrep(_) => RREP_BYTES,
            Payload::Rerr(e) => RERR_BASE_BYTES + 4 * e.unreachable.len() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodvConfig {
    pub route_lifetime: Duration,
    pub discovery_timeout: Duration,
    /// Extra discovery rounds after the first one.
    pub discovery_retries: u32,
    pub buffer_limit: usize,
    pub rreq_jitter_max: Duration,
}

impl Default for AodvConfig {
    fn default() -> Self {
        AodvConfig {
            route_lifetime: Duration::from_secs(10),
            discovery_timeout: Duration::from_secs(1),
            discovery_retries: 2,
            buffer_limit: 64,
            rreq_jitter_max: Duration::from_millis(10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discovery {
    /// 0 for the first flood.
    pub attempt: u32,
    pub timer: EventHandle,
}

/// Per-node AODV state.
#[derive(Debug, Clone, Default)]
pub struct AodvState {
    pub seq: u32,
    pub next_rreq_id: u32,
    pub seen: HashSet<(NodeId, u32)>,
    pub table: RouteTable,
    pub discoveries: BTreeMap<NodeId, Discovery>,
    pub pending: BTreeMap<NodeId, VecDeque<Packet>>,
}

impl AodvState {
    /// Records an RREQ as processed; returns false if it was seen before.
    pub fn first_sighting(&mut self, origin: NodeId, rreq_id: u32) -> bool {
        self.seen.insert((origin, rreq_id))
    }

    /// Buffers a packet awaiting a route, dropping the oldest one on overflow.
    pub fn buffer(&mut self, dest: NodeId, packet: Packet, limit: usize) -> Option<Packet> {
        let q = self.pending.entry(dest).or_default();
        let dropped = if q.len() >= limit {
            q.pop_front()
        } else {
            None
        };
        q.push_back(packet);
        dropped
    }

    pub fn take_pending(&mut self, dest: NodeId) -> VecDeque<Packet> {
        self.pending.remove(&dest).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rerr_packet(n: u32) -> Packet {
        Packet::new(
            NodeId(0),
            NodeId(n),
            Payload::Rerr(Rerr {
                unreachable: vec![],
            }),
        )
    }

    #[test]
    fn duplicate_rreq_is_detected() {
        let mut st = AodvState::default();
        assert!(st.first_sighting(NodeId(3), 1));
        assert!(!st.first_sighting(NodeId(3), 1));
        assert!(st.first_sighting(NodeId(3), 2));
    }

    #[test]
    fn pending_buffer_drops_oldest() {
        let mut st = AodvState::default();
        for i in 0..3 {
            assert!(st.buffer(NodeId(9), rerr_packet(i), 3).is_none());
        }
        let dropped = st.buffer(NodeId(9), rerr_packet(3), 3).unwrap();
        assert_eq!(dropped.dst, NodeId(0));
        let q = st.take_pending(NodeId(9));
        let dsts: Vec<_> = q.iter().map(|p| p.dst.0).collect();
        assert_eq!(dsts, vec![1, 2, 3]);
        assert!(st.take_pending(NodeId(9)).is_empty());
    }
}
