//! Sensor reporting, sink accounting and proxy relaying.

use crate::app::{Message, RelayAccept};
use crate::phy_mac::NodeId;

use super::{Event, Simulation, SimulationError, SINK};

impl Simulation {
    pub(crate) fn on_app_generate(&mut self, node: NodeId) {
        self.sched
            .schedule_in(self.params.reporting_interval, Event::AppGenerate(node));
        let Some(dst) = self.destination_of(node) else {
            return;
        };
        let Some(slot) = self.senders.get_mut(&(node, dst)) else {
            // The connection opens on the first report.
            self.stats.blocked_ticks += 1;
            self.tcp_open(node, dst);
            return;
        };
        if !slot.sender.can_accept(self.params.message_size) {
            self.stats.blocked_ticks += 1;
            return;
        }
        let m = self.new_message(node);
        if let Err(e) = self.collector.record_generation(&m) {
            self.fail(e);
            return;
        }
        self.stats.messages_generated += 1;
        let now = self.sched.now();
        let mut out = Vec::new();
        let slot = self.senders.get_mut(&(node, dst)).expect("slot exists");
        slot.sender
            .write(now, m, &mut out)
            .expect("checked can_accept");
        self.tcp_emit(node, dst, out);
        self.sync_rto(node, dst);
    }

    pub(crate) fn app_deliver(&mut self, node: NodeId, m: Message) {
        let now = self.sched.now();
        if node == SINK {
            if let Err(e) = self.collector.record_delivery(&m, SINK, now) {
                self.fail(e);
            }
            return;
        }
        if !self.relays.contains_key(&node) {
            self.fail(SimulationError::Invalid(format!(
                "{} received message {} but is neither sink nor proxy",
                node, m.id
            )));
            return;
        }
        self.collector.record_proxy_arrival(m.id, now);
        let section = self.sections.section_of[m.origin.index()];
        let relay = self.relays.get_mut(&node).expect("checked");
        match relay.accept(m, section) {
            RelayAccept::Foreign | RelayAccept::Buffered => {}
            RelayAccept::StartBatch => {
                let h = self
                    .sched
                    .schedule_in(relay.batch_interval, Event::ProxyFlush(node));
                self.relay_timers.insert(node, h);
            }
            RelayAccept::Full => {
                if let Some(h) = self.relay_timers.remove(&node) {
                    self.sched.cancel(h);
                }
                self.flush_batch(node);
            }
        }
        if !self.senders.contains_key(&(node, SINK)) {
            self.tcp_open(node, SINK);
        }
    }

    pub(crate) fn on_proxy_flush(&mut self, node: NodeId) {
        self.relay_timers.remove(&node);
        self.flush_batch(node);
    }

    fn flush_batch(&mut self, node: NodeId) {
        if let Some(r) = self.relays.get_mut(&node) {
            r.close_batch();
        }
        self.relay_pump(node);
    }

    /// Moves closed batches into the proxy's connection as buffer room allows.
    pub(crate) fn relay_pump(&mut self, node: NodeId) {
        let now = self.sched.now();
        let Some(relay) = self.relays.get_mut(&node) else {
            return;
        };
        let Some(slot) = self.senders.get_mut(&(node, SINK)) else {
            return;
        };
        let mut out = Vec::new();
        let mut departed = Vec::new();
        while let Some(m) = relay.next_outbound() {
            if !slot.sender.can_accept(m.size_bytes) {
                break;
            }
            let m = relay.pop_outbound().expect("peeked");
            departed.push(m.id);
            slot.sender
                .write(now, m, &mut out)
                .expect("checked can_accept");
        }
        for id in departed {
            self.collector.record_proxy_departure(id, now);
        }
        self.tcp_emit(node, SINK, out);
        self.sync_rto(node, SINK);
    }
}
