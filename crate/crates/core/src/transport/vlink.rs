//! A scripted point-to-point link for exercising one connection in
//! isolation: fixed propagation delay, an optional bottleneck queue on the
//! data path, and deterministic or seeded segment losses.

use std::collections::BTreeSet;
use std::time::Duration;

use crate::app::{Message, MessageId};
use crate::phy_mac::NodeId;
use crate::sim::{EventHandle, RngStream, Scheduler, SimTime, StreamKind};

use super::{
    ConnId, CwndSample, RtoOutcome, Segment, SegmentKind, SenderStats, TcpConfig, TcpReceiver,
    TcpSender, TransportError, Variant,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LossRule {
    None,
    /// Drop the first transmission of these segment indices (0-based,
    /// counted in full-size segments). Retransmissions get through.
    FirstTransmissionOf(BTreeSet<u64>),
    /// Drop each data segment with `p_data` and each ack with `p_ack`.
    Random {
        p_data: f64,
        p_ack: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct VlinkConfig {
    pub rtt: Duration,
    /// Per-segment service time of a bottleneck queue on the data path.
    pub service_time: Option<Duration>,
    pub loss: LossRule,
    /// Sizes of the messages written at connection establishment.
    pub messages: Vec<u32>,
    pub tcp: TcpConfig,
    pub horizon: SimTime,
}

impl VlinkConfig {
    pub fn new(rtt: Duration, messages: Vec<u32>, loss: LossRule) -> Self {
        VlinkConfig {
            rtt,
            service_time: None,
            loss,
            messages,
            tcp: TcpConfig::default(),
            horizon: SimTime::from_secs(100_000),
        }
    }

    /// `n` segment-sized messages.
    pub fn segments(rtt: Duration, n: usize, loss: LossRule) -> Self {
        let mss = TcpConfig::default().segment_size;
        Self::new(rtt, vec![mss; n], loss)
    }
}

#[derive(Debug, Clone)]
pub struct VlinkRun {
    pub trace: Vec<CwndSample>,
    pub written: Vec<Message>,
    pub delivered: Vec<Message>,
    /// Length of the contiguous stream prefix handed to the application.
    pub delivered_bytes: u64,
    pub stats: SenderStats,
    pub finished_at: SimTime,
    pub completed: bool,
    pub reset: bool,
    pub data_dropped: u64,
    pub acks_dropped: u64,
}

#[derive(Debug, Clone)]
enum Ev {
    ToReceiver(Segment),
    ToSender(Segment),
    Rto,
}

struct Harness {
    sender: TcpSender,
    receiver: TcpReceiver,
    cfg: VlinkConfig,
    rng: RngStream,
    one_way: Duration,
    queue_free_at: SimTime,
    timer: Option<(SimTime, EventHandle)>,
    delivered: Vec<Message>,
    delivered_bytes: u64,
    data_dropped: u64,
    acks_dropped: u64,
    stream_error: Option<String>,
    reset: bool,
}

impl Harness {
    fn drop_data(&mut self, seg: &Segment) -> bool {
        match &self.cfg.loss {
            LossRule::None => false,
            LossRule::FirstTransmissionOf(set) => {
                seg.kind == SegmentKind::Data
                    && !seg.retransmit
                    && set.contains(&(seg.seq / self.cfg.tcp.segment_size as u64))
            }
            LossRule::Random { p_data, .. } => {
                seg.kind == SegmentKind::Data && self.rng.chance(*p_data)
            }
        }
    }

    fn drop_ack(&mut self, seg: &Segment) -> bool {
        match self.cfg.loss {
            LossRule::Random { p_ack, .. } => {
                seg.kind == SegmentKind::Ack && self.rng.chance(p_ack)
            }
            _ => false,
        }
    }

    fn send_data(&mut self, sched: &mut Scheduler<Ev>, out: Vec<Segment>) {
        let now = sched.now();
        for seg in out {
            if self.drop_data(&seg) {
                self.data_dropped += 1;
                continue;
            }
            let depart = match (self.cfg.service_time, seg.kind) {
                (Some(s), SegmentKind::Data) => {
                    let d = self.queue_free_at.max(now) + s;
                    self.queue_free_at = d;
                    d
                }
                _ => now,
            };
            sched
                .schedule(depart + self.one_way, Ev::ToReceiver(seg))
                .expect("future event");
        }
        self.sync_timer(sched);
    }

    fn sync_timer(&mut self, sched: &mut Scheduler<Ev>) {
        let want = self.sender.rto_deadline();
        if want == self.timer.map(|(t, _)| t) {
            return;
        }
        if let Some((_, h)) = self.timer.take() {
            sched.cancel(h);
        }
        if let Some(at) = want {
            let h = sched
                .schedule(at.max(sched.now()), Ev::Rto)
                .expect("future");
            self.timer = Some((at, h));
        }
    }

    fn handle(&mut self, sched: &mut Scheduler<Ev>, ev: Ev) -> Result<(), TransportError> {
        let now = sched.now();
        let mut out = Vec::new();
        match ev {
            Ev::ToReceiver(seg) => {
                let arrival = self.receiver.on_segment(now, &seg);
                if arrival.bytes.start != self.delivered_bytes && !arrival.bytes.is_empty() {
                    self.stream_error = Some(format!(
                        "gap in delivered stream: expected {} got {:?}",
                        self.delivered_bytes, arrival.bytes
                    ));
                }
                self.delivered_bytes += arrival.bytes.end - arrival.bytes.start;
                self.delivered.extend(arrival.delivered);
                if let Some(reply) = arrival.reply {
                    if !self.drop_ack(&reply) {
                        sched.schedule_in(self.one_way, Ev::ToSender(reply));
                    } else {
                        self.acks_dropped += 1;
                    }
                }
            }
            Ev::ToSender(seg) => match seg.kind {
                SegmentKind::SynAck => {
                    let was = self.sender.is_established();
                    self.sender.on_syn_ack(now, seg.wnd, &mut out);
                    if !was && self.sender.is_established() {
                        self.sender.enable_trace(now);
                        for (i, &size) in self.cfg.messages.clone().iter().enumerate() {
                            let m = Message {
                                id: MessageId(i as u64),
                                origin: NodeId(1),
                                created_at: SimTime::ZERO,
                                size_bytes: size,
                            };
                            self.sender
                                .write(now, m, &mut out)
                                .expect("vlink send buffer is unbounded");
                        }
                    }
                }
                SegmentKind::Ack => self.sender.on_ack(now, seg.ack, seg.wnd, &mut out)?,
                _ => {}
            },
            Ev::Rto => {
                self.timer = None;
                if self.sender.rto_deadline().is_some_and(|d| d <= now) {
                    if let RtoOutcome::Reset(_) = self.sender.on_rto(now, &mut out) {
                        self.reset = true;
                        return Ok(());
                    }
                }
            }
        }
        self.sender.check_invariants()?;
        self.send_data(sched, out);
        Ok(())
    }
}

/// Runs one connection over the scripted link until every written byte is
/// acknowledged, the sender gives up, or the horizon passes.
pub fn run(variant: Variant, cfg: VlinkConfig) -> Result<VlinkRun, TransportError> {
    let conn = ConnId {
        src: NodeId(1),
        dst: NodeId(0),
        incarnation: 0,
    };
    let mut tcp = cfg.tcp.clone();
    tcp.send_buffer_bytes = u64::MAX / 2;
    let seed = match cfg.loss {
        LossRule::Random { seed, .. } => seed,
        _ => 0,
    };
    let written: Vec<Message> = cfg
        .messages
        .iter()
        .enumerate()
        .map(|(i, &size)| Message {
            id: MessageId(i as u64),
            origin: NodeId(1),
            created_at: SimTime::ZERO,
            size_bytes: size,
        })
        .collect();
    let mut h = Harness {
        sender: TcpSender::new(conn, variant, tcp.clone()),
        receiver: TcpReceiver::new(&tcp),
        rng: RngStream::new(seed, StreamKind::Aux(0)),
        one_way: cfg.rtt / 2,
        queue_free_at: SimTime::ZERO,
        timer: None,
        delivered: Vec::new(),
        delivered_bytes: 0,
        data_dropped: 0,
        acks_dropped: 0,
        stream_error: None,
        reset: false,
        cfg,
    };
    let mut sched: Scheduler<Ev> = Scheduler::new();
    let mut out = Vec::new();
    h.sender.open(SimTime::ZERO, &mut out);
    h.send_data(&mut sched, out);

    let total: u64 = h.cfg.messages.iter().map(|&m| m as u64).sum();
    let horizon = h.cfg.horizon;
    while let Some((_, ev)) = sched.pop_due(horizon) {
        h.handle(&mut sched, ev)?;
        if h.reset {
            break;
        }
        if h.sender.is_established() && h.sender.snd_una() == total {
            break;
        }
    }
    if let Some(what) = h.stream_error.take() {
        return Err(TransportError::Invariant { conn, what });
    }
    let finished_at = sched.now();
    let completed = h.sender.is_established() && h.sender.snd_una() == total;
    Ok(VlinkRun {
        trace: h.sender.take_trace(),
        written,
        delivered: h.delivered,
        delivered_bytes: h.delivered_bytes,
        stats: h.sender.stats().clone(),
        finished_at,
        completed,
        reset: h.reset,
        data_dropped: h.data_dropped,
        acks_dropped: h.acks_dropped,
    })
}
