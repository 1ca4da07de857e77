//! Transport endpoints inside the network.

use crate::phy_mac::{NodeId, Role};
use crate::routing::{Packet, Payload};
use crate::transport::{ConnId, RtoOutcome, Segment, SegmentKind, TcpReceiver, TcpSender};

use super::{Event, SegmentDirection, SegmentEvent, SenderSlot, Simulation};

impl Simulation {
    fn log_segment(&mut self, node: NodeId, seg: &Segment, direction: SegmentDirection) {
        let t = self.sched.now();
        if let Some(log) = self.segment_log.as_mut() {
            log.push(SegmentEvent {
                t,
                node,
                conn: seg.conn,
                kind: seg.kind,
                seq: seg.seq,
                payload_bytes: seg.payload_bytes,
                direction,
            });
        }
    }

    pub(crate) fn tcp_emit(&mut self, node: NodeId, peer: NodeId, segments: Vec<Segment>) {
        for seg in segments {
            self.log_segment(node, &seg, SegmentDirection::Sent);
            self.route_send(node, None, Packet::new(node, peer, Payload::Tcp(seg)));
        }
    }

    /// Re-arms the retransmission timer of `node`'s connection to `peer` to
    /// match the sender's deadline.
    pub(crate) fn sync_rto(&mut self, node: NodeId, peer: NodeId) {
        let Some(slot) = self.senders.get_mut(&(node, peer)) else {
            return;
        };
        let want = slot.sender.rto_deadline();
        if want == slot.timer.map(|(t, _)| t) {
            return;
        }
        if let Some((_, h)) = slot.timer.take() {
            self.sched.cancel(h);
        }
        if let Some(at) = want {
            let at = at.max(self.sched.now());
            let h = self
                .sched
                .schedule(at, Event::TcpRto { node, peer })
                .expect("deadline not in the past");
            slot.timer = Some((at, h));
        }
    }

    /// Opens (or re-opens after a reset) the connection from `node` to `peer`.
    pub(crate) fn tcp_open(&mut self, node: NodeId, peer: NodeId) {
        let incarnation = {
            let inc = self.incarnations.entry((node, peer)).or_insert(0);
            let current = *inc;
            *inc += 1;
            current
        };
        let mut cfg = self.params.tcp.clone();
        if self.nodes[node.index()].role == Role::Proxy {
            cfg.send_buffer_bytes = self.params.proxy_send_buffer;
        }
        let conn = ConnId {
            src: node,
            dst: peer,
            incarnation,
        };
        let now = self.sched.now();
        let mut sender = TcpSender::new(conn, self.params.variant, cfg);
        if self.trace_node == Some(node) {
            sender.enable_trace(now);
        }
        let mut out = Vec::new();
        sender.open(now, &mut out);
        if let Some(old) = self.senders.insert(
            (node, peer),
            SenderSlot {
                sender,
                timer: None,
            },
        ) {
            self.retire_sender(node, old);
        }
        self.tcp_emit(node, peer, out);
        self.sync_rto(node, peer);
    }

    fn retire_sender(&mut self, node: NodeId, mut old: SenderSlot) {
        if let Some((_, h)) = old.timer.take() {
            self.sched.cancel(h);
        }
        let s = old.sender.stats();
        self.stats.segments_sent += s.segments_sent;
        self.stats.retransmits += s.retransmits;
        self.stats.fast_recovery_entries += s.fast_recovery_entries;
        self.stats.timeouts += s.timeouts;
        if self.trace_node == Some(node) {
            self.cwnd_trace.extend(old.sender.take_trace());
        }
    }

    pub(crate) fn tcp_receive(&mut self, node: NodeId, from: NodeId, seg: Segment) {
        self.log_segment(node, &seg, SegmentDirection::Received);
        let now = self.sched.now();
        match seg.kind {
            SegmentKind::Syn | SegmentKind::Data => {
                let cfg = &self.params.tcp;
                let rx = self
                    .receivers
                    .entry((node, from))
                    .or_insert_with(|| TcpReceiver::new(cfg));
                let arrival = rx.on_segment(now, &seg);
                if let Some(reply) = arrival.reply {
                    self.tcp_emit(node, from, vec![reply]);
                }
                for m in arrival.delivered {
                    self.app_deliver(node, m);
                }
            }
            SegmentKind::SynAck | SegmentKind::Ack => {
                let Some(slot) = self.senders.get_mut(&(node, from)) else {
                    return;
                };
                if slot.sender.conn() != seg.conn {
                    return;
                }
                let mut out = Vec::new();
                if seg.kind == SegmentKind::SynAck {
                    slot.sender.on_syn_ack(now, seg.wnd, &mut out);
                } else if let Err(e) = slot.sender.on_ack(now, seg.ack, seg.wnd, &mut out) {
                    self.fail(e);
                    return;
                }
                if let Err(e) = slot.sender.check_invariants() {
                    self.fail(e);
                    return;
                }
                self.tcp_emit(node, from, out);
                self.sync_rto(node, from);
                if self.relays.contains_key(&node) {
                    self.relay_pump(node);
                }
            }
        }
    }

    pub(crate) fn on_tcp_rto(&mut self, node: NodeId, peer: NodeId) {
        let now = self.sched.now();
        let Some(slot) = self.senders.get_mut(&(node, peer)) else {
            return;
        };
        slot.timer = None;
        if !slot.sender.rto_deadline().is_some_and(|d| d <= now) {
            self.sync_rto(node, peer);
            return;
        }
        let mut out = Vec::new();
        match slot.sender.on_rto(now, &mut out) {
            RtoOutcome::Reset(lost) => {
                self.stats.connection_resets += 1;
                self.stats.reset_lost_messages += lost.len() as u64;
                self.tcp_open(node, peer);
            }
            RtoOutcome::Retransmitted | RtoOutcome::Stale => {
                self.tcp_emit(node, peer, out);
                self.sync_rto(node, peer);
            }
        }
    }
}
