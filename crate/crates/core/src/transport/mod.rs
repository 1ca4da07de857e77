//! Reliable byte-stream transport with pluggable congestion control.
//!
//! [`TcpSender`] and [`TcpReceiver`] are pure state machines: they take
//! events (acks, segments, timer expiries) and emit segments to transmit.
//! The simulator and the [`vlink`] harness drive them.

mod receiver;
mod sender;
pub mod vlink;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::app::Message;
use crate::phy_mac::NodeId;
use crate::sim::SimTime;

pub use receiver::{Arrival, TcpReceiver};
pub use sender::{CwndSample, RtoOutcome, SenderStats, TcpSender, WriteError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Tahoe-style baseline: fast retransmit, no fast recovery.
    Tcp,
    Reno,
    NewReno,
    Vegas,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Tcp,
        Variant::Reno,
        Variant::NewReno,
        Variant::Vegas,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tcp => "tcp",
            Variant::Reno => "reno",
            Variant::NewReno => "newreno",
            Variant::Vegas => "vegas",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Tcp => "TCP",
            Variant::Reno => "Reno",
            Variant::NewReno => "NewReno",
            Variant::Vegas => "Vegas",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" | "tahoe" => Ok(Variant::Tcp),
            "reno" => Ok(Variant::Reno),
            "newreno" => Ok(Variant::NewReno),
            "vegas" => Ok(Variant::Vegas),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CcState {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

impl CcState {
    pub fn as_str(self) -> &'static str {
        match self {
            CcState::SlowStart => "slow_start",
            CcState::CongestionAvoidance => "congestion_avoidance",
            CcState::FastRecovery => "fast_recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcpConfig {
    pub segment_size: u32,
    pub rwnd_segments: u32,
    pub rto_initial: Duration,
    pub rto_min: Duration,
    pub rto_max: Duration,
    pub init_cwnd: f64,
    pub init_ssthresh: f64,
    pub vegas_alpha: f64,
    pub vegas_beta: f64,
    pub vegas_gamma: f64,
    /// Multiplier applied to cwnd when Vegas confirms a loss.
    pub vegas_loss_factor: f64,
    pub max_consecutive_timeouts: u32,
    /// Unsent bytes the sender will buffer before the application blocks.
    pub send_buffer_bytes: u64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            segment_size: 512,
            rwnd_segments: 64,
            rto_initial: Duration::from_secs(1),
            rto_min: Duration::from_millis(200),
            rto_max: Duration::from_secs(60),
            init_cwnd: 1.0,
            init_ssthresh: 64.0,
            vegas_alpha: 1.0,
            vegas_beta: 3.0,
            vegas_gamma: 1.0,
            vegas_loss_factor: 0.75,
            max_consecutive_timeouts: 12,
            send_buffer_bytes: 1024,
        }
    }
}

/// Identifies one incarnation of a connection. `src` is the data sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnId {
    pub src: NodeId,
    pub dst: NodeId,
    pub incarnation: u32,
}

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}#{}", self.src, self.dst, self.incarnation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Syn,
    SynAck,
    Data,
    Ack,
}

/// An application message whose last byte sits at stream offset `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageMark {
    pub end: u64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub conn: ConnId,
    pub kind: SegmentKind,
    pub seq: u64,
    pub ack: u64,
    pub payload_bytes: u32,
    /// Advertised receive window in segments (acks only).
    pub wnd: u32,
    pub sent_at: SimTime,
    pub retransmit: bool,
    pub marks: Vec<MessageMark>,
}

impl Segment {
    pub fn control(conn: ConnId, kind: SegmentKind, ack: u64, wnd: u32, now: SimTime) -> Self {
        Segment {
            conn,
            kind,
            seq: 0,
            ack,
            payload_bytes: 0,
            wnd,
            sent_at: now,
            retransmit: false,
            marks: Vec::new(),
        }
    }

    pub fn end(&self) -> u64 {
        self.seq + self.payload_bytes as u64
    }

    pub fn is_data(&self) -> bool {
        self.kind == SegmentKind::Data
    }

    #[cfg(test)]
    pub(crate) fn probe(seq: u64) -> Self {
        Segment {
            seq,
            payload_bytes: 512,
            ..Segment::control(
                ConnId {
                    src: NodeId(0),
                    dst: NodeId(1),
                    incarnation: 0,
                },
                SegmentKind::Data,
                0,
                64,
                SimTime::ZERO,
            )
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("{conn}: ack {ack} acknowledges data never sent (highest sent {snd_max})")]
    AckBeyondSent {
        conn: ConnId,
        ack: u64,
        snd_max: u64,
    },
    #[error("{conn}: invariant violated: {what}")]
    Invariant { conn: ConnId, what: String },
}
