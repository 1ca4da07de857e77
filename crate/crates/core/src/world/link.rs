//! Shared channel and per-node DCF.

use crate::phy_mac::{points_in_range, Frame, Incoming, LinkAddr, MacSdu, MacStatus, NodeId};
use crate::routing::Packet;
use crate::sim::SimTime;

use super::{Event, Simulation};

/// A frame on the air with the nodes that were in range when it started.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub frame: Frame,
    pub hearers: Vec<NodeId>,
}

impl Simulation {
    /// Hands a packet to `node`'s MAC for the one-hop destination `dst`.
    pub(crate) fn mac_send(&mut self, node: NodeId, dst: LinkAddr, packet: Packet) {
        let sdu = MacSdu {
            dst,
            packet,
            retries: 0,
        };
        let limit = self.params.mac.queue_limit;
        if self.macs[node.index()].enqueue(sdu, limit).is_err() {
            self.stats.ifq_drops += 1;
            return;
        }
        if self.macs[node.index()].status == MacStatus::Idle {
            self.mac_next(node);
        }
    }

    /// End of the latest transmission `node` can currently hear, if any.
    fn busy_until(&self, node: NodeId) -> Option<SimTime> {
        self.active
            .values()
            .filter(|t| t.frame.src == node || t.hearers.contains(&node))
            .map(|t| t.frame.tx_end)
            .max()
    }

    /// Takes the next queued frame and starts contending for it.
    fn mac_next(&mut self, node: NodeId) {
        let mac = &mut self.macs[node.index()];
        mac.current = mac.queue.pop_front();
        if mac.current.is_none() {
            mac.status = MacStatus::Idle;
            return;
        }
        self.mac_contend(node);
    }

    /// Schedules an attempt after DIFS plus a backoff, counted from the end
    /// of any transmission the node currently senses.
    fn mac_contend(&mut self, node: NodeId) {
        let now = self.sched.now();
        let base = self.busy_until(node).map_or(now, |t| t.max(now));
        let cw = self.macs[node.index()].cw;
        let wait = self.params.mac.difs + self.params.mac.draw_backoff(cw, &mut self.backoff_rng);
        let h = self
            .sched
            .schedule(base + wait, Event::MacAttempt(node))
            .expect("attempt lies in the future");
        self.macs[node.index()].status = MacStatus::Contending(h);
    }

    pub(crate) fn on_mac_attempt(&mut self, node: NodeId) {
        let now = self.sched.now();
        if self.busy_until(node).is_some_and(|t| t > now) {
            // Medium taken during our backoff: defer and redraw.
            self.mac_contend(node);
            return;
        }
        let Some(sdu) = self.macs[node.index()].current.clone() else {
            self.macs[node.index()].status = MacStatus::Idle;
            return;
        };
        self.transmit(node, sdu);
    }

    fn transmit(&mut self, node: NodeId, sdu: MacSdu) {
        let now = self.sched.now();
        let payload = sdu.packet.size_bytes();
        let end = now + self.params.mac.airtime(payload);
        let tx = self.next_tx;
        self.next_tx += 1;

        let src_pos = self.nodes[node.index()].position;
        let range = self.params.radio_range;
        let hearers: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.id != node && points_in_range(&src_pos, &n.position, range))
            .map(|n| n.id)
            .collect();

        // Half duplex: whatever the sender was receiving is lost.
        for inc in &mut self.macs[node.index()].incoming {
            inc.corrupted = true;
        }
        for &h in &hearers {
            let mac = &mut self.macs[h.index()];
            let mut corrupted = mac.transmitting.is_some();
            for inc in &mut mac.incoming {
                inc.corrupted = true;
                corrupted = true;
            }
            mac.incoming.push(Incoming { tx, end, corrupted });
        }

        let frame = Frame {
            src: node,
            dst: sdu.dst,
            kind: sdu.kind(),
            payload_bytes: payload,
            tx_start: now,
            tx_end: end,
            retry_count: sdu.retries,
            packet: sdu.packet,
        };
        self.active.insert(tx, Transmission { frame, hearers });
        let mac = &mut self.macs[node.index()];
        mac.transmitting = Some(tx);
        mac.status = MacStatus::Transmitting;
        self.stats.frames_sent += 1;
        self.sched
            .schedule(end, Event::TxEnd(tx))
            .expect("transmission ends in the future");
    }

    pub(crate) fn on_tx_end(&mut self, tx: u64) {
        let Some(Transmission { frame, hearers }) = self.active.remove(&tx) else {
            return;
        };
        let src = frame.src;
        self.macs[src.index()].transmitting = None;

        let mut receivers = Vec::new();
        for &h in &hearers {
            let mac = &mut self.macs[h.index()];
            let Some(pos) = mac.incoming.iter().position(|i| i.tx == tx) else {
                continue;
            };
            let inc = mac.incoming.swap_remove(pos);
            let addressed = match frame.dst {
                LinkAddr::Broadcast => true,
                LinkAddr::Unicast(d) => d == h,
            };
            if !addressed {
                continue;
            }
            if inc.corrupted {
                self.stats.frames_corrupted += 1;
            } else {
                receivers.push(h);
            }
        }

        match frame.dst {
            LinkAddr::Unicast(d) => {
                let success = receivers.contains(&d);
                self.macs[src.index()].status = MacStatus::AwaitingAck;
                self.sched.schedule_in(
                    self.params.mac.ack_delay,
                    Event::MacOutcome { node: src, success },
                );
            }
            LinkAddr::Broadcast => self.mac_done(src),
        }

        for h in receivers {
            self.net_receive(h, src, frame.packet.clone());
        }
    }

    fn mac_done(&mut self, node: NodeId) {
        let cw_min = self.params.mac.cw_min;
        let mac = &mut self.macs[node.index()];
        mac.cw = cw_min;
        mac.current = None;
        self.mac_next(node);
    }

    pub(crate) fn on_mac_outcome(&mut self, node: NodeId, success: bool) {
        if success {
            self.mac_done(node);
            return;
        }
        self.stats.mac_retries += 1;
        let limit = self.params.mac.retry_limit;
        let cw_next = self.params.mac.next_cw(self.macs[node.index()].cw);
        let mac = &mut self.macs[node.index()];
        let Some(sdu) = mac.current.as_mut() else {
            return;
        };
        sdu.retries += 1;
        if sdu.retries > limit {
            let sdu = mac.current.take().expect("current frame");
            self.stats.mac_drops += 1;
            // Purge and notify before the queue moves on, so nothing else
            // is sent toward the dead neighbour.
            if let LinkAddr::Unicast(next_hop) = sdu.dst {
                self.net_link_break(node, next_hop, sdu.packet);
            }
            self.mac_done(node);
            return;
        }
        mac.cw = cw_next;
        self.mac_contend(node);
    }

    /// Removes queued unicast frames for `next_hop`, returning them.
    pub(crate) fn mac_purge(&mut self, node: NodeId, next_hop: NodeId) -> Vec<MacSdu> {
        let q = &mut self.macs[node.index()].queue;
        let (gone, keep): (Vec<_>, Vec<_>) = q
            .drain(..)
            .partition(|s| s.dst == LinkAddr::Unicast(next_hop));
        q.extend(keep);
        gone
    }
}
