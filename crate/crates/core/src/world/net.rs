//! AODV handlers: forwarding, discovery, replies and error propagation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use crate::phy_mac::{LinkAddr, NodeId};
use crate::routing::{Discovery, Packet, Payload, Rerr, RouteEntry, Rrep, Rreq};

use super::{Event, Simulation};

impl Simulation {
    fn lifetime_from_now(&self) -> crate::sim::SimTime {
        self.sched.now() + self.params.aodv.route_lifetime
    }

    fn learn_neighbor(&mut self, node: NodeId, nb: NodeId) {
        let now = self.sched.now();
        let entry = RouteEntry::new(nb, nb, 1, None, self.lifetime_from_now());
        self.aodv[node.index()].table.offer(entry, now);
    }

    /// Sends or forwards a packet toward `packet.dst`. `from` is the previous
    /// hop for forwarded packets.
    pub(crate) fn route_send(&mut self, node: NodeId, from: Option<NodeId>, packet: Packet) {
        let now = self.sched.now();
        let life = self.params.aodv.route_lifetime;
        let dst = packet.dst;
        let st = &mut self.aodv[node.index()];
        if let Some(nh) = st.table.lookup(dst, now) {
            st.table.refresh(dst, now, life);
            st.table.refresh(nh, now, life);
            st.table.refresh(packet.src, now, life);
            if let Some(prev) = from {
                st.table.add_precursor(dst, prev);
                st.table.refresh(prev, now, life);
            }
            self.mac_send(node, LinkAddr::Unicast(nh), packet);
            return;
        }
        match from {
            None => {
                let limit = self.params.aodv.buffer_limit;
                if st.buffer(dst, packet, limit).is_some() {
                    self.stats.pending_overflow += 1;
                }
                self.start_discovery(node, dst);
            }
            Some(prev) => {
                self.stats.no_route_forward_drops += 1;
                self.send_rerr(node, prev, vec![dst]);
            }
        }
    }

    pub(crate) fn net_receive(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        match packet.payload {
            Payload::Rreq(rreq) => self.handle_rreq(node, from, rreq),
            Payload::Rrep(rrep) => self.handle_rrep(node, from, rrep),
            Payload::Rerr(rerr) => self.handle_rerr(node, from, rerr),
            Payload::Tcp(seg) => {
                self.learn_neighbor(node, from);
                if packet.dst == node {
                    self.tcp_receive(node, packet.src, seg);
                } else {
                    let p = Packet::new(packet.src, packet.dst, Payload::Tcp(seg));
                    self.route_send(node, Some(from), p);
                }
            }
        }
    }

    fn start_discovery(&mut self, node: NodeId, dest: NodeId) {
        if self.aodv[node.index()].discoveries.contains_key(&dest) {
            return;
        }
        self.flood_rreq(node, dest, 0);
    }

    fn flood_rreq(&mut self, node: NodeId, dest: NodeId, attempt: u32) {
        let st = &mut self.aodv[node.index()];
        st.seq += 1;
        let rreq_id = st.next_rreq_id;
        st.next_rreq_id += 1;
        st.first_sighting(node, rreq_id);
        let rreq = Rreq {
            origin: node,
            origin_seq: st.seq,
            rreq_id,
            dest,
            dest_seq: st.table.known_seq(dest),
            hop_count: 0,
        };
        let timeout = self.params.aodv.discovery_timeout * 2u32.pow(attempt);
        let timer = self
            .sched
            .schedule_in(timeout, Event::DiscoveryTimeout { node, dest });
        self.aodv[node.index()]
            .discoveries
            .insert(dest, Discovery { attempt, timer });
        self.stats.rreq_floods += 1;
        self.stats.rreq_sent += 1;
        self.mac_send(
            node,
            LinkAddr::Broadcast,
            Packet::new(node, dest, Payload::Rreq(rreq)),
        );
    }

    pub(crate) fn on_discovery_timeout(&mut self, node: NodeId, dest: NodeId) {
        let now = self.sched.now();
        let st = &mut self.aodv[node.index()];
        let Some(d) = st.discoveries.get(&dest) else {
            return;
        };
        let attempt = d.attempt;
        if st.table.lookup(dest, now).is_some() {
            st.discoveries.remove(&dest);
            self.flush_pending(node, dest);
        } else if attempt < self.params.aodv.discovery_retries {
            self.flood_rreq(node, dest, attempt + 1);
        } else {
            st.discoveries.remove(&dest);
            let dropped = st.take_pending(dest).len() as u64;
            self.stats.discovery_failures += 1;
            self.stats.route_drops += dropped;
        }
    }

    fn flush_pending(&mut self, node: NodeId, dest: NodeId) {
        let pending = self.aodv[node.index()].take_pending(dest);
        for p in pending {
            self.route_send(node, None, p);
        }
    }

    pub(crate) fn on_rreq_forward(&mut self, node: NodeId, packet: Packet) {
        self.stats.rreq_sent += 1;
        self.mac_send(node, LinkAddr::Broadcast, packet);
    }

    fn handle_rreq(&mut self, node: NodeId, from: NodeId, rreq: Rreq) {
        self.learn_neighbor(node, from);
        if rreq.origin == node || !self.aodv[node.index()].first_sighting(rreq.origin, rreq.rreq_id)
        {
            return;
        }
        let now = self.sched.now();
        let expires = self.lifetime_from_now();
        let hop = rreq.hop_count + 1;
        let st = &mut self.aodv[node.index()];
        st.table.offer(
            RouteEntry::new(rreq.origin, from, hop, Some(rreq.origin_seq), expires),
            now,
        );

        if rreq.dest == node {
            st.seq = st.seq.max(rreq.dest_seq.unwrap_or(0)) + 1;
            let rrep = Rrep {
                origin: rreq.origin,
                dest: node,
                dest_seq: st.seq,
                hop_count: 0,
            };
            self.stats.rrep_sent += 1;
            self.mac_send(
                node,
                LinkAddr::Unicast(from),
                Packet::new(node, rreq.origin, Payload::Rrep(rrep)),
            );
            return;
        }

        let cached = st
            .table
            .get(rreq.dest)
            .filter(|e| e.usable(now))
            .filter(|e| match (e.dest_seq, rreq.dest_seq) {
                (Some(have), Some(want)) => have >= want,
                (Some(_), None) => true,
                (None, _) => false,
            })
            .map(|e| (e.next_hop, e.hop_count, e.dest_seq.expect("filtered")));
        if let Some((next_hop, hops, seq)) = cached {
            st.table.add_precursor(rreq.dest, from);
            st.table.add_precursor(rreq.origin, next_hop);
            let rrep = Rrep {
                origin: rreq.origin,
                dest: rreq.dest,
                dest_seq: seq,
                hop_count: hops,
            };
            self.stats.rrep_sent += 1;
            self.mac_send(
                node,
                LinkAddr::Unicast(from),
                Packet::new(rreq.dest, rreq.origin, Payload::Rrep(rrep)),
            );
            return;
        }

        let fwd = Rreq {
            hop_count: hop,
            ..rreq
        };
        let jitter = self
            .routing_rng
            .uniform(0.0, self.params.aodv.rreq_jitter_max.as_secs_f64());
        self.sched.schedule_in(
            Duration::from_secs_f64(jitter),
            Event::RreqForward {
                node,
                packet: Packet::new(fwd.origin, fwd.dest, Payload::Rreq(fwd)),
            },
        );
    }

    fn handle_rrep(&mut self, node: NodeId, from: NodeId, rrep: Rrep) {
        self.learn_neighbor(node, from);
        let now = self.sched.now();
        let life = self.params.aodv.route_lifetime;
        let expires = self.lifetime_from_now();
        let hop = rrep.hop_count + 1;
        let st = &mut self.aodv[node.index()];
        st.table.offer(
            RouteEntry::new(rrep.dest, from, hop, Some(rrep.dest_seq), expires),
            now,
        );
        if rrep.origin == node {
            if let Some(d) = st.discoveries.remove(&rrep.dest) {
                self.sched.cancel(d.timer);
            }
            self.flush_pending(node, rrep.dest);
            return;
        }
        let Some(nh) = st.table.lookup(rrep.origin, now) else {
            return;
        };
        st.table.add_precursor(rrep.dest, nh);
        st.table.add_precursor(rrep.origin, from);
        st.table.refresh(rrep.origin, now, life);
        let fwd = Rrep {
            hop_count: hop,
            ..rrep
        };
        self.stats.rrep_sent += 1;
        self.mac_send(
            node,
            LinkAddr::Unicast(nh),
            Packet::new(fwd.dest, fwd.origin, Payload::Rrep(fwd)),
        );
    }

    fn handle_rerr(&mut self, node: NodeId, from: NodeId, rerr: Rerr) {
        let st = &mut self.aodv[node.index()];
        let mut notify: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for dest in rerr.unreachable {
            if let Some(precursors) = st.table.invalidate_dest_via(dest, from) {
                bump_seq(st, dest);
                for p in precursors {
                    notify.entry(p).or_default().push(dest);
                }
            }
        }
        for (p, dests) in notify {
            self.send_rerr(node, p, dests);
        }
    }

    fn send_rerr(&mut self, node: NodeId, to: NodeId, unreachable: Vec<NodeId>) {
        self.stats.rerr_sent += 1;
        self.mac_send(
            node,
            LinkAddr::Unicast(to),
            Packet::new(node, to, Payload::Rerr(Rerr { unreachable })),
        );
    }

    /// Retry exhaustion toward `next_hop`: invalidate, purge and notify.
    pub(crate) fn net_link_break(&mut self, node: NodeId, next_hop: NodeId, _lost: Packet) {
        let st = &mut self.aodv[node.index()];
        let broken = st.table.invalidate_via(next_hop);
        let mut notify: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (dest, precursors) in broken {
            bump_seq(st, dest);
            for p in precursors {
                if p != next_hop {
                    notify.entry(p).or_default().insert(dest);
                }
            }
        }
        let purged = self.mac_purge(node, next_hop);
        self.stats.link_break_drops += 1 + purged.len() as u64;
        for (p, dests) in notify {
            self.send_rerr(node, p, dests.into_iter().collect());
        }
    }
}

/// A broken route's sequence number moves on so stale caches cannot answer
/// the next discovery.
fn bump_seq(st: &mut crate::routing::AodvState, dest: NodeId) {
    if let Some(e) = st.table.get_mut(dest) {
        e.dest_seq = e.dest_seq.map(|s| s + 1);
    }
}
