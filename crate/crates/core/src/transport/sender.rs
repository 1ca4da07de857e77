use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use crate::app::Message;
use crate::sim::SimTime;

use super::{
    CcState, ConnId, MessageMark, Segment, SegmentKind, TcpConfig, TransportError, Variant,
};

/// One point of a congestion-window trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwndSample {
    pub t: SimTime,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub state: CcState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub segments_sent: u64,
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub early_retransmits: u64,
    pub fast_recovery_entries: u64,
    pub timeouts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteError {
    NotEstablished,
    BufferFull,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RtoOutcome {
    /// Timer fired with nothing outstanding.
    Stale,
    Retransmitted,
    /// Too many consecutive timeouts; the connection must be re-opened and
    /// these messages are lost.
    Reset(Vec<Message>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Closed,
    SynSent {
        retransmitted: bool,
        sent_at: SimTime,
    },
    Established,
}

#[derive(Debug, Clone)]
struct SentSeg {
    len: u32,
    first_sent_at: SimTime,
    last_sent_at: SimTime,
    retransmitted: bool,
    marks: Vec<MessageMark>,
}

#[derive(Debug, Clone)]
struct VegasRound {
    /// The round ends once this sequence number is acknowledged.
    end: u64,
    sampled: bool,
    /// Slow start only grows on alternate rounds.
    grow: bool,
    last_rtt: Option<f64>,
    last_decrease_at: Option<SimTime>,
    /// Non-duplicate acks still to be checked after a retransmission.
    post_retx_checks: u32,
}

/// Sending half of a connection.
#[derive(Debug, Clone)]
pub struct TcpSender {
    conn: ConnId,
    variant: Variant,
    cfg: TcpConfig,
    phase: Phase,
    state: CcState,
    cwnd: f64,
    ssthresh: f64,
    snd_una: u64,
    snd_nxt: u64,
    snd_max: u64,
    buf_end: u64,
    dup_acks: u32,
    recover: u64,
    retransmitted_in_episode: bool,
    srtt: Option<f64>,
    rttvar: f64,
    rto: Duration,
    base_rtt: Option<f64>,
    vegas: VegasRound,
    peer_wnd: u32,
    outstanding: BTreeMap<u64, SentSeg>,
    unsent_marks: VecDeque<MessageMark>,
    rto_deadline: Option<SimTime>,
    consecutive_timeouts: u32,
    stats: SenderStats,
    trace: Option<Vec<CwndSample>>,
}

impl TcpSender {
    pub fn new(conn: ConnId, variant: Variant, cfg: TcpConfig) -> Self {
        let rto = cfg.rto_initial;
        TcpSender {
            conn,
            variant,
            phase: Phase::Closed,
            state: CcState::SlowStart,
            cwnd: cfg.init_cwnd.max(1.0),
            ssthresh: cfg.init_ssthresh.max(2.0),
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            buf_end: 0,
            dup_acks: 0,
            recover: 0,
            retransmitted_in_episode: false,
            srtt: None,
            rttvar: 0.0,
            rto,
            base_rtt: None,
            vegas: VegasRound {
                end: 0,
                sampled: false,
                grow: true,
                last_rtt: None,
                last_decrease_at: None,
                post_retx_checks: 0,
            },
            peer_wnd: cfg.rwnd_segments,
            outstanding: BTreeMap::new(),
            unsent_marks: VecDeque::new(),
            rto_deadline: None,
            consecutive_timeouts: 0,
            stats: SenderStats::default(),
            trace: None,
            cfg,
        }
    }

    /// Starts recording the (cwnd, ssthresh, state) trajectory.
    pub fn enable_trace(&mut self, now: SimTime) {
        self.trace = Some(vec![self.sample(now)]);
    }

    pub fn trace(&self) -> &[CwndSample] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<CwndSample> {
        self.trace.take().unwrap_or_default()
    }

    pub fn conn(&self) -> ConnId {
        self.conn
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn state(&self) -> CcState {
        self.state
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn snd_max(&self) -> u64 {
        self.snd_max
    }

    pub fn dup_acks(&self) -> u32 {
        self.dup_acks
    }

    pub fn recover(&self) -> u64 {
        self.recover
    }

    pub fn rto(&self) -> Duration {
        self.rto
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt.map(Duration::from_secs_f64)
    }

    pub fn rttvar(&self) -> Duration {
        Duration::from_secs_f64(self.rttvar)
    }

    pub fn base_rtt(&self) -> Option<Duration> {
        self.base_rtt.map(Duration::from_secs_f64)
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn stats(&self) -> &SenderStats {
        &self.stats
    }

    pub fn is_established(&self) -> bool {
        self.phase == Phase::Established
    }

    /// Segments sent but not yet acknowledged.
    pub fn flight_segments(&self) -> usize {
        self.outstanding.len()
    }

    pub fn unsent_bytes(&self) -> u64 {
        self.buf_end - self.snd_max
    }

    /// True when every written byte has been acknowledged.
    pub fn is_idle(&self) -> bool {
        self.snd_una == self.buf_end
    }

    /// Checks the window and sequence invariants.
    pub fn check_invariants(&self) -> Result<(), TransportError> {
        let bad = |what: &str| {
            Err(TransportError::Invariant {
                conn: self.conn,
                what: what.to_string(),
            })
        };
        if !(self.cwnd >= 1.0) {
            return bad("cwnd < 1");
        }
        if !(self.ssthresh >= 2.0) {
            return bad("ssthresh < 2");
        }
        if self.snd_una > self.snd_nxt || self.snd_nxt > self.snd_max || self.snd_max > self.buf_end
        {
            return bad("sequence ordering");
        }
        if self.state == CcState::FastRecovery
            && !matches!(self.variant, Variant::Reno | Variant::NewReno)
        {
            return bad("fast recovery in a variant without it");
        }
        if self.rto < self.cfg.rto_min.min(self.cfg.rto_initial) || self.rto > self.cfg.rto_max {
            return bad("rto out of bounds");
        }
        Ok(())
    }

    // ---- connection set-up ------------------------------------------------

    pub fn open(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        self.phase = Phase::SynSent {
            retransmitted: false,
            sent_at: now,
        };
        out.push(self.syn(now, false));
        self.rto_deadline = Some(now + self.rto);
    }

    fn syn(&mut self, now: SimTime, retransmit: bool) -> Segment {
        self.stats.segments_sent += 1;
        Segment {
            retransmit,
            ..Segment::control(self.conn, SegmentKind::Syn, 0, 0, now)
        }
    }

    pub fn on_syn_ack(&mut self, now: SimTime, wnd: u32, out: &mut Vec<Segment>) {
        let Phase::SynSent {
            retransmitted,
            sent_at,
        } = self.phase
        else {
            return;
        };
        self.phase = Phase::Established;
        self.peer_wnd = wnd;
        self.consecutive_timeouts = 0;
        if !retransmitted {
            self.rtt_update(now.since(sent_at).as_secs_f64());
        }
        self.rto_deadline = None;
        self.pump(now, out);
        self.record(now);
    }

    // ---- application side ------------------------------------------------

    /// Appends a message to the send buffer and transmits what the window
    /// allows.
    pub fn write(
        &mut self,
        now: SimTime,
        message: Message,
        out: &mut Vec<Segment>,
    ) -> Result<(), WriteError> {
        if self.phase != Phase::Established {
            return Err(WriteError::NotEstablished);
        }
        let size = message.size_bytes as u64;
        if self.unsent_bytes() + size > self.cfg.send_buffer_bytes {
            return Err(WriteError::BufferFull);
        }
        self.buf_end += size;
        self.unsent_marks.push_back(MessageMark {
            end: self.buf_end,
            message,
        });
        self.pump(now, out);
        Ok(())
    }

    /// Room left in the send buffer.
    pub fn can_accept(&self, size_bytes: u32) -> bool {
        self.phase == Phase::Established
            && self.unsent_bytes() + size_bytes as u64 <= self.cfg.send_buffer_bytes
    }

    fn window_segments(&self) -> usize {
        (self.cwnd.floor() as usize).min(self.peer_wnd.max(1) as usize)
    }

    fn in_flight_below_nxt(&self) -> usize {
        self.outstanding.range(self.snd_una..self.snd_nxt).count()
    }

    /// Emits segments while the window has room.
    pub fn pump(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        if self.phase != Phase::Established {
            return;
        }
        let mut in_flight = self.in_flight_below_nxt();
        let window = self.window_segments();
        while in_flight < window {
            if let Some(seg) = self.outstanding.get(&self.snd_nxt) {
                // Resending after go-back-N.
                let seq = self.snd_nxt;
                let len = seg.len;
                self.snd_nxt += len as u64;
                out.push(self.transmit(now, seq, true));
            } else if self.snd_nxt < self.buf_end {
                let seq = self.snd_nxt;
                let len = (self.buf_end - seq).min(self.cfg.segment_size as u64) as u32;
                let end = seq + len as u64;
                let mut marks = Vec::new();
                while self.unsent_marks.front().is_some_and(|m| m.end <= end) {
                    marks.push(self.unsent_marks.pop_front().unwrap());
                }
                self.outstanding.insert(
                    seq,
                    SentSeg {
                        len,
                        first_sent_at: now,
                        last_sent_at: now,
                        retransmitted: false,
                        marks,
                    },
                );
                self.snd_nxt = end;
                self.snd_max = self.snd_max.max(end);
                out.push(self.transmit(now, seq, false));
            } else {
                break;
            }
            in_flight += 1;
        }
        if self.rto_deadline.is_none() && self.snd_max > self.snd_una {
            self.rto_deadline = Some(now + self.rto);
        }
    }

    fn transmit(&mut self, now: SimTime, seq: u64, retransmit: bool) -> Segment {
        let seg = self
            .outstanding
            .get_mut(&seq)
            .expect("segment is outstanding");
        if retransmit {
            seg.retransmitted = true;
            seg.last_sent_at = now;
            self.stats.retransmits += 1;
        }
        self.stats.segments_sent += 1;
        Segment {
            conn: self.conn,
            kind: SegmentKind::Data,
            seq,
            ack: 0,
            payload_bytes: seg.len,
            wnd: 0,
            sent_at: now,
            retransmit,
            marks: seg.marks.clone(),
        }
    }

    fn retransmit_una(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        if self.outstanding.contains_key(&self.snd_una) {
            let seq = self.snd_una;
            out.push(self.transmit(now, seq, true));
            self.rto_deadline = Some(now + self.rto);
        }
    }

    // ---- acknowledgement processing --------------------------------------

    pub fn on_ack(
        &mut self,
        now: SimTime,
        ackno: u64,
        wnd: u32,
        out: &mut Vec<Segment>,
    ) -> Result<(), TransportError> {
        if self.phase != Phase::Established {
            return Ok(());
        }
        if ackno > self.snd_max {
            return Err(TransportError::AckBeyondSent {
                conn: self.conn,
                ack: ackno,
                snd_max: self.snd_max,
            });
        }
        self.peer_wnd = wnd;
        if ackno < self.snd_una {
            return Ok(());
        }
        if ackno == self.snd_una {
            if self.snd_max > self.snd_una {
                self.on_dup_ack(now, out);
            }
            self.pump(now, out);
            self.record(now);
            return Ok(());
        }
        self.on_new_ack(now, ackno, out);
        self.pump(now, out);
        self.record(now);
        Ok(())
    }

    fn on_new_ack(&mut self, now: SimTime, ackno: u64, out: &mut Vec<Segment>) {
        let mut newly_acked = 0u32;
        let mut any_retx = false;
        let mut last_sent_at = None;
        while let Some((&seq, seg)) = self.outstanding.first_key_value() {
            if seq + seg.len as u64 > ackno {
                break;
            }
            any_retx |= seg.retransmitted;
            last_sent_at = Some(seg.last_sent_at);
            newly_acked += 1;
            self.outstanding.remove(&seq);
        }
        self.snd_una = ackno;
        if self.snd_nxt < ackno {
            self.snd_nxt = ackno;
        }
        self.consecutive_timeouts = 0;
        if let (false, Some(sent)) = (any_retx, last_sent_at) {
            self.rtt_update(now.since(sent).as_secs_f64());
        }

        match (self.state, self.variant) {
            (CcState::FastRecovery, Variant::NewReno) => {
                self.on_partial_or_full_ack(now, ackno, newly_acked, out);
            }
            (CcState::FastRecovery, _) => {
                // Reno leaves recovery on any new ack.
                self.cwnd = self.ssthresh;
                self.state = CcState::CongestionAvoidance;
                self.dup_acks = 0;
            }
            _ => {
                self.dup_acks = 0;
                self.grow_window();
            }
        }
        if self.state != CcState::FastRecovery {
            self.retransmitted_in_episode = false;
        }

        if self.variant == Variant::Vegas {
            if self.vegas.post_retx_checks > 0 {
                self.vegas.post_retx_checks -= 1;
                if self.vegas_check_retransmit(now) {
                    self.stats.early_retransmits += 1;
                    self.retransmit_una(now, out);
                }
            }
            if ackno >= self.vegas.end {
                self.vegas_end_round();
            }
        }

        if self.snd_max > self.snd_una {
            self.rto_deadline = Some(now + self.rto);
        } else {
            self.rto_deadline = None;
        }
    }

    fn grow_window(&mut self) {
        let cap = self.cfg.rwnd_segments as f64;
        match (self.variant, self.state) {
            (Variant::Vegas, CcState::SlowStart) => {
                if self.vegas.grow {
                    self.cwnd = (self.cwnd + 1.0).min(cap);
                }
                if self.cwnd >= self.ssthresh {
                    self.state = CcState::CongestionAvoidance;
                }
            }
            (Variant::Vegas, _) => {}
            (_, CcState::SlowStart) => {
                self.cwnd = (self.cwnd + 1.0).min(cap);
                if self.cwnd >= self.ssthresh {
                    self.state = CcState::CongestionAvoidance;
                }
            }
            (_, CcState::CongestionAvoidance) => {
                // One segment per window of acks, sized by the whole-segment
                // window so that w acks at cwnd = w add exactly one.
                self.cwnd = (self.cwnd + 1.0 / self.cwnd.floor()).min(cap.max(self.cwnd));
            }
            (_, CcState::FastRecovery) => unreachable!("handled by the caller"),
        }
    }

    /// NewReno's response to a new ack while in fast recovery.
    fn on_partial_or_full_ack(
        &mut self,
        now: SimTime,
        ackno: u64,
        newly_acked: u32,
        out: &mut Vec<Segment>,
    ) {
        if ackno >= self.recover {
            self.cwnd = self.ssthresh;
            self.state = CcState::CongestionAvoidance;
            self.dup_acks = 0;
        } else {
            self.retransmit_una(now, out);
            self.cwnd = (self.cwnd - newly_acked as f64 + 1.0).max(1.0);
            self.dup_acks = 0;
        }
    }

    fn flight_half(&self) -> f64 {
        ((self.outstanding.len() / 2) as f64).max(2.0)
    }

    fn on_dup_ack(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        self.dup_acks += 1;
        match self.variant {
            Variant::Tcp => {
                if self.dup_acks == 3 {
                    self.ssthresh = self.flight_half();
                    self.cwnd = 1.0;
                    self.state = CcState::SlowStart;
                    self.fast_retransmit(now, out);
                }
            }
            Variant::Reno | Variant::NewReno => {
                if self.state == CcState::FastRecovery {
                    self.cwnd += 1.0;
                } else if self.dup_acks == 3 {
                    self.ssthresh = self.flight_half();
                    self.cwnd = self.ssthresh + 3.0;
                    self.state = CcState::FastRecovery;
                    self.recover = self.snd_max;
                    self.stats.fast_recovery_entries += 1;
                    self.fast_retransmit(now, out);
                }
            }
            Variant::Vegas => {
                if self.retransmitted_in_episode {
                    return;
                }
                if self.dup_acks < 3 {
                    if self.vegas_check_retransmit(now) {
                        self.stats.early_retransmits += 1;
                        self.vegas_loss(now, out);
                    }
                } else if self.dup_acks == 3 {
                    self.vegas_loss(now, out);
                }
            }
        }
    }

    fn fast_retransmit(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        self.stats.fast_retransmits += 1;
        self.retransmitted_in_episode = true;
        self.retransmit_una(now, out);
    }

    /// Vegas retransmission plus its window cut. The window is cut at most
    /// once per loss episode: only if the lost segment was first sent after
    /// the previous cut.
    fn vegas_loss(&mut self, now: SimTime, out: &mut Vec<Segment>) {
        let eligible = match (
            self.outstanding.get(&self.snd_una),
            self.vegas.last_decrease_at,
        ) {
            (Some(seg), Some(last)) => seg.first_sent_at > last,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if eligible {
            self.cwnd = (self.cwnd * self.cfg.vegas_loss_factor).max(1.0);
            self.ssthresh = self.cwnd.floor().max(2.0);
            if self.state == CcState::SlowStart {
                self.state = CcState::CongestionAvoidance;
            }
            self.vegas.last_decrease_at = Some(now);
        }
        self.vegas.post_retx_checks = 1;
        self.fast_retransmit(now, out);
    }

    /// Fine-grained timeout check: has the oldest unacked segment been out
    /// longer than `srtt + 4 * rttvar`?
    pub fn vegas_check_retransmit(&self, now: SimTime) -> bool {
        let (Some(srtt), Some(seg)) = (self.srtt, self.outstanding.get(&self.snd_una)) else {
            return false;
        };
        let fine_rto = srtt + 4.0 * self.rttvar;
        now.since(seg.last_sent_at).as_secs_f64() > fine_rto
    }

    fn vegas_end_round(&mut self) {
        if self.vegas.sampled {
            self.vegas_adjust();
        }
        self.vegas.sampled = false;
        self.vegas.end = self.snd_nxt;
    }

    /// Vegas diff in segments: `(expected - actual) * base_rtt`.
    pub fn vegas_diff(cwnd: f64, base_rtt: f64, rtt: f64) -> f64 {
        let expected = cwnd / base_rtt;
        let actual = cwnd / rtt;
        (expected - actual) * base_rtt
    }

    fn vegas_adjust(&mut self) {
        let (Some(base), Some(rtt)) = (self.base_rtt, self.vegas.last_rtt) else {
            return;
        };
        let diff = Self::vegas_diff(self.cwnd, base, rtt);
        match self.state {
            CcState::SlowStart => {
                if diff > self.cfg.vegas_gamma {
                    self.state = CcState::CongestionAvoidance;
                    self.ssthresh = self.cwnd.floor().max(2.0);
                } else {
                    self.vegas.grow = !self.vegas.grow;
                }
            }
            CcState::CongestionAvoidance => {
                if diff < self.cfg.vegas_alpha {
                    self.cwnd = (self.cwnd + 1.0).min(self.cfg.rwnd_segments as f64);
                } else if diff > self.cfg.vegas_beta {
                    self.cwnd = (self.cwnd - 1.0).max(1.0);
                }
            }
            CcState::FastRecovery => {}
        }
    }

    // ---- timers and estimators -------------------------------------------

    pub fn on_rto(&mut self, now: SimTime, out: &mut Vec<Segment>) -> RtoOutcome {
        match self.phase {
            Phase::Closed => return RtoOutcome::Stale,
            Phase::SynSent { sent_at, .. } => {
                let _ = sent_at;
                self.phase = Phase::SynSent {
                    retransmitted: true,
                    sent_at: now,
                };
                self.rto = (self.rto * 2).min(self.cfg.rto_max);
                out.push(self.syn(now, true));
                self.rto_deadline = Some(now + self.rto);
                return RtoOutcome::Retransmitted;
            }
            Phase::Established => {}
        }
        if self.snd_max == self.snd_una {
            self.rto_deadline = None;
            return RtoOutcome::Stale;
        }
        self.stats.timeouts += 1;
        self.consecutive_timeouts += 1;
        if self.consecutive_timeouts >= self.cfg.max_consecutive_timeouts {
            return RtoOutcome::Reset(self.reset());
        }
        self.ssthresh = self.flight_half();
        self.cwnd = 1.0;
        self.state = CcState::SlowStart;
        self.dup_acks = 0;
        self.retransmitted_in_episode = false;
        self.snd_nxt = self.snd_una;
        self.rto = (self.rto * 2).min(self.cfg.rto_max);
        if self.variant == Variant::Vegas {
            self.vegas.grow = true;
            self.vegas.sampled = false;
            self.vegas.end = self.snd_max;
            self.vegas.post_retx_checks = 1;
        }
        self.rto_deadline = None;
        self.pump(now, out);
        self.rto_deadline = Some(now + self.rto);
        self.record(now);
        RtoOutcome::Retransmitted
    }

    /// Drops all buffered data and returns the messages that will never be
    /// delivered.
    pub fn reset(&mut self) -> Vec<Message> {
        self.phase = Phase::Closed;
        self.rto_deadline = None;
        let mut lost: Vec<Message> = std::mem::take(&mut self.outstanding)
            .into_values()
            .flat_map(|s| s.marks.into_iter().map(|m| m.message))
            .collect();
        lost.extend(self.unsent_marks.drain(..).map(|m| m.message));
        self.snd_una = self.buf_end;
        self.snd_nxt = self.buf_end;
        self.snd_max = self.buf_end;
        lost
    }

    /// Feeds one RTT sample (seconds) into the estimators.
    pub fn rtt_update(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        let raw = self.srtt.unwrap() + 4.0 * self.rttvar;
        self.rto = Duration::from_secs_f64(raw).clamp(self.cfg.rto_min, self.cfg.rto_max);
        if self.variant == Variant::Vegas {
            self.base_rtt = Some(self.base_rtt.map_or(sample, |b| b.min(sample)));
            self.vegas.last_rtt = Some(sample);
            self.vegas.sampled = true;
        }
    }

    fn sample(&self, t: SimTime) -> CwndSample {
        CwndSample {
            t,
            cwnd: self.cwnd,
            ssthresh: self.ssthresh,
            state: self.state,
        }
    }

    fn record(&mut self, now: SimTime) {
        debug_assert!(self.cwnd >= 1.0, "{}: cwnd {}", self.conn, self.cwnd);
        debug_assert!(
            self.ssthresh >= 2.0,
            "{}: ssthresh {}",
            self.conn,
            self.ssthresh
        );
        let s = self.sample(now);
        if let Some(trace) = self.trace.as_mut() {
            let changed = trace
                .last()
                .is_none_or(|l| l.cwnd != s.cwnd || l.ssthresh != s.ssthresh || l.state != s.state);
            if changed {
                trace.push(s);
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn force_state(&mut self, state: CcState, cwnd: f64, ssthresh: f64) {
        self.state = state;
        self.cwnd = cwnd;
        self.ssthresh = ssthresh;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::{Message, MessageId};
    use crate::phy_mac::NodeId;

    fn conn() -> ConnId {
        ConnId {
            src: NodeId(1),
            dst: NodeId(0),
            incarnation: 0,
        }
    }

    fn msg(id: u64, size: u32) -> Message {
        Message {
            id: MessageId(id),
            origin: NodeId(1),
            created_at: SimTime::ZERO,
            size_bytes: size,
        }
    }

    fn cfg() -> TcpConfig {
        TcpConfig {
            send_buffer_bytes: 1 << 30,
            ..TcpConfig::default()
        }
    }

    fn established(variant: Variant) -> TcpSender {
        let mut s = TcpSender::new(conn(), variant, cfg());
        let mut out = vec![];
        s.open(SimTime::ZERO, &mut out);
        s.on_syn_ack(SimTime::from_millis(100), 64, &mut out);
        s
    }

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    /// Writes `n` full segments and returns what got transmitted.
    fn load(s: &mut TcpSender, n: u64, now: SimTime) -> Vec<Segment> {
        let mut out = vec![];
        for i in 0..n {
            s.write(now, msg(i, 512), &mut out).unwrap();
        }
        out
    }

    #[test]
    fn window_limits_emission() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::SlowStart, 2.0, 64.0);
        let out = load(&mut s, 5, t(100));
        assert_eq!(out.len(), 2);
        assert_eq!(s.flight_segments(), 2);
    }

    #[test]
    fn full_window_blocks_until_ack() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        let out = load(&mut s, 10, t(100));
        assert_eq!(out.len(), 10);
        let mut more = vec![];
        s.write(t(100), msg(99, 512), &mut more).unwrap();
        assert!(more.is_empty());
        s.on_ack(t(200), 512, 64, &mut more).unwrap();
        assert_eq!(more.len(), 1);
    }

    #[test]
    fn message_is_split_into_mss_segments() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        let mut out = vec![];
        s.write(t(100), msg(1, 1500), &mut out).unwrap();
        let sizes: Vec<u32> = out.iter().map(|x| x.payload_bytes).collect();
        assert_eq!(sizes, vec![512, 512, 476]);
        assert!(out[0].marks.is_empty() && out[1].marks.is_empty());
        assert_eq!(out[2].marks[0].end, 1500);
    }

    #[test]
    fn slow_start_adds_one_per_ack() {
        let mut s = established(Variant::Reno);
        let out = load(&mut s, 4, t(100));
        assert_eq!(out.len(), 1);
        let mut o = vec![];
        s.on_ack(t(200), 512, 64, &mut o).unwrap();
        assert_eq!(s.cwnd(), 2.0);
        assert_eq!(o.len(), 2);
    }

    #[test]
    fn congestion_avoidance_adds_one_per_window() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 4.0, 2.0);
        load(&mut s, 8, t(100));
        let mut o = vec![];
        for k in 1..=4u64 {
            s.on_ack(t(200 + k), 512 * k, 64, &mut o).unwrap();
        }
        assert!((s.cwnd() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn reno_fast_retransmit_and_inflation() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        load(&mut s, 20, t(100));
        assert_eq!(s.flight_segments(), 10);
        let mut o = vec![];
        s.on_ack(t(200), 0, 64, &mut o).unwrap();
        s.on_ack(t(201), 0, 64, &mut o).unwrap();
        assert_eq!(s.state(), CcState::CongestionAvoidance);
        assert_eq!(s.cwnd(), 10.0);
        assert!(o.is_empty());
        s.on_ack(t(202), 0, 64, &mut o).unwrap();
        assert_eq!(s.ssthresh(), 5.0);
        assert_eq!(s.cwnd(), 8.0);
        assert_eq!(s.state(), CcState::FastRecovery);
        assert_eq!(o.len(), 1);
        assert!(o[0].retransmit && o[0].seq == 0);
        s.on_ack(t(203), 0, 64, &mut o).unwrap();
        assert_eq!(s.cwnd(), 9.0);
    }

    #[test]
    fn tahoe_collapses_to_one() {
        let mut s = established(Variant::Tcp);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        load(&mut s, 10, t(100));
        let mut o = vec![];
        for k in 0..3 {
            s.on_ack(t(200 + k), 0, 64, &mut o).unwrap();
        }
        assert_eq!(
            (s.cwnd(), s.ssthresh(), s.state()),
            (1.0, 5.0, CcState::SlowStart)
        );
        assert_eq!(o.len(), 1);
    }

    #[test]
    fn newreno_partial_then_full_ack() {
        let mut s = established(Variant::NewReno);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        load(&mut s, 10, t(100));
        let mut o = vec![];
        for k in 0..3 {
            s.on_ack(t(200 + k), 0, 64, &mut o).unwrap();
        }
        assert_eq!(s.recover(), 10 * 512);
        assert_eq!((s.cwnd(), s.ssthresh()), (8.0, 5.0));
        o.clear();
        // Partial ack covering 3 segments: hole at segment 3 retransmitted.
        s.on_ack(t(300), 3 * 512, 64, &mut o).unwrap();
        assert_eq!(s.state(), CcState::FastRecovery);
        assert_eq!(s.cwnd(), 8.0 - 3.0 + 1.0);
        assert_eq!(s.ssthresh(), 5.0);
        assert!(o.iter().any(|x| x.retransmit && x.seq == 3 * 512));
        s.on_ack(t(400), 10 * 512, 64, &mut o).unwrap();
        assert_eq!(s.state(), CcState::CongestionAvoidance);
        assert_eq!(s.cwnd(), 5.0);
        assert_eq!(s.stats().fast_recovery_entries, 1);
    }

    #[test]
    fn reno_partial_ack_leaves_recovery() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        load(&mut s, 10, t(100));
        let mut o = vec![];
        for k in 0..3 {
            s.on_ack(t(200 + k), 0, 64, &mut o).unwrap();
        }
        s.on_ack(t(300), 3 * 512, 64, &mut o).unwrap();
        assert_eq!(s.state(), CcState::CongestionAvoidance);
        assert_eq!(s.cwnd(), 5.0);
    }

    #[test]
    fn ack_beyond_sent_is_fatal() {
        let mut s = established(Variant::Reno);
        load(&mut s, 1, t(100));
        let mut o = vec![];
        let err = s.on_ack(t(200), 4096, 64, &mut o).unwrap_err();
        assert!(matches!(err, TransportError::AckBeyondSent { .. }));
    }

    #[test]
    fn timeout_resets_to_slow_start() {
        let mut s = established(Variant::Reno);
        s.force_state(CcState::CongestionAvoidance, 16.0, 8.0);
        load(&mut s, 16, t(100));
        assert_eq!(s.flight_segments(), 16);
        let rto = s.rto();
        let mut o = vec![];
        assert_eq!(s.on_rto(t(1000), &mut o), RtoOutcome::Retransmitted);
        assert_eq!(
            (s.cwnd(), s.ssthresh(), s.state()),
            (1.0, 8.0, CcState::SlowStart)
        );
        assert_eq!(s.rto(), rto * 2);
        assert_eq!(o.len(), 1);
        assert!(o[0].retransmit && o[0].seq == 0);
    }

    #[test]
    fn rto_doubling_from_one_second() {
        let mut s = established(Variant::Reno);
        // Force a one-second rto without touching the estimators.
        s.rto = Duration::from_secs(1);
        load(&mut s, 1, t(100));
        let mut o = vec![];
        s.on_rto(t(1100), &mut o);
        assert_eq!(s.rto(), Duration::from_secs(2));
    }

    #[test]
    fn stale_timeout_is_a_no_op() {
        let mut s = established(Variant::Reno);
        let before = (s.cwnd(), s.ssthresh(), s.state());
        let mut o = vec![];
        assert_eq!(s.on_rto(t(500), &mut o), RtoOutcome::Stale);
        assert_eq!(before, (s.cwnd(), s.ssthresh(), s.state()));
        assert!(o.is_empty());
    }

    #[test]
    fn rto_estimator_first_and_steady_samples() {
        let mut s = TcpSender::new(conn(), Variant::Reno, cfg());
        s.rtt_update(0.1);
        assert_eq!(s.srtt(), Some(Duration::from_millis(100)));
        assert_eq!(s.rttvar(), Duration::from_millis(50));
        assert_eq!(s.rto(), Duration::from_millis(300));
        for _ in 0..200 {
            s.rtt_update(0.1);
        }
        assert!(s.rttvar() < Duration::from_micros(1));
        assert_eq!(s.rto(), Duration::from_millis(200));
    }

    #[test]
    fn karn_skips_retransmitted_samples() {
        let mut s = established(Variant::Reno);
        load(&mut s, 1, t(100));
        let mut o = vec![];
        s.on_rto(t(400), &mut o);
        let (srtt, rttvar) = (s.srtt(), s.rttvar());
        s.on_ack(t(2000), 512, 64, &mut o).unwrap();
        assert_eq!((s.srtt(), s.rttvar()), (srtt, rttvar));
    }

    #[test]
    fn vegas_adjust_arithmetic() {
        assert!((TcpSender::vegas_diff(10.0, 0.1, 0.125) - 2.0).abs() < 1e-12);
        assert_eq!(TcpSender::vegas_diff(10.0, 0.1, 0.1), 0.0);
        assert!((TcpSender::vegas_diff(10.0, 0.1, 0.2) - 5.0).abs() < 1e-12);

        for (rtt, expect) in [(0.125, 10.0), (0.1, 11.0), (0.2, 9.0)] {
            let mut s = TcpSender::new(conn(), Variant::Vegas, cfg());
            s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
            s.base_rtt = Some(0.1);
            s.vegas.last_rtt = Some(rtt);
            s.vegas_adjust();
            assert_eq!(s.cwnd(), expect, "rtt {rtt}");
        }
    }

    fn vegas_with_steady_rtt() -> TcpSender {
        let mut s = established(Variant::Vegas);
        for _ in 0..50 {
            s.rtt_update(0.1);
        }
        s.force_state(CcState::CongestionAvoidance, 10.0, 8.0);
        s
    }

    #[test]
    fn vegas_early_retransmit_on_first_dup() {
        let mut s = vegas_with_steady_rtt();
        load(&mut s, 10, t(100));
        let mut o = vec![];
        // Segment 0 has been out for 2 x srtt when the first dup arrives.
        s.on_ack(t(300), 0, 64, &mut o).unwrap();
        assert!(o.iter().any(|x| x.retransmit && x.seq == 0));
        assert_eq!(s.cwnd(), 7.5);
        assert_eq!(s.stats().early_retransmits, 1);
    }

    #[test]
    fn vegas_waits_when_segment_is_young() {
        let mut s = vegas_with_steady_rtt();
        load(&mut s, 10, t(100));
        let mut o = vec![];
        s.on_ack(t(110), 0, 64, &mut o).unwrap();
        assert!(o.is_empty());
        s.on_ack(t(111), 0, 64, &mut o).unwrap();
        assert!(o.is_empty());
        s.on_ack(t(112), 0, 64, &mut o).unwrap();
        assert_eq!(o.len(), 1);
        assert!(o[0].retransmit);
        assert_eq!(s.cwnd(), 7.5);
        assert_eq!(s.state(), CcState::CongestionAvoidance);
    }

    #[test]
    fn reset_after_repeated_timeouts() {
        let mut s = established(Variant::Reno);
        load(&mut s, 3, t(100));
        let mut o = vec![];
        let mut now = t(100);
        let mut outcome = RtoOutcome::Stale;
        for _ in 0..12 {
            now = now + s.rto();
            outcome = s.on_rto(now, &mut o);
        }
        match outcome {
            RtoOutcome::Reset(lost) => assert_eq!(lost.len(), 3),
            other => panic!("expected reset, got {other:?}"),
        }
    }
}
