use std::collections::BTreeMap;
use std::ops::Range;

use crate::app::Message;
use crate::sim::SimTime;

use super::{ConnId, MessageMark, Segment, SegmentKind, TcpConfig};

/// What the receiver did with one incoming segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Arrival {
    /// ACK or SYN-ACK to send back, if any.
    pub reply: Option<Segment>,
    /// Messages completed in order by this segment.
    pub delivered: Vec<Message>,
    /// Stream bytes newly handed to the application.
    pub bytes: Range<u64>,
}

/// Receiving half of a connection. Acknowledges every segment immediately.
#[derive(Debug, Clone)]
pub struct TcpReceiver {
    conn: Option<ConnId>,
    wnd: u32,
    rcv_nxt: u64,
    out_of_order: BTreeMap<u64, Segment>,
    marks: BTreeMap<u64, Message>,
}

impl TcpReceiver {
    pub fn new(cfg: &TcpConfig) -> Self {
        TcpReceiver {
            conn: None,
            wnd: cfg.rwnd_segments,
            rcv_nxt: 0,
            out_of_order: BTreeMap::new(),
            marks: BTreeMap::new(),
        }
    }

    pub fn conn(&self) -> Option<ConnId> {
        self.conn
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn buffered_segments(&self) -> usize {
        self.out_of_order.len()
    }

    pub fn on_segment(&mut self, now: SimTime, seg: &Segment) -> Arrival {
        let mut arrival = Arrival {
            bytes: self.rcv_nxt..self.rcv_nxt,
            ..Arrival::default()
        };
        match seg.kind {
            SegmentKind::Syn => {
                let newer = self
                    .conn
                    .is_none_or(|c| seg.conn.incarnation > c.incarnation);
                if newer {
                    self.conn = Some(seg.conn);
                    self.rcv_nxt = 0;
                    self.out_of_order.clear();
                    self.marks.clear();
                    arrival.bytes = 0..0;
                }
                if self.conn == Some(seg.conn) {
                    arrival.reply = Some(Segment::control(
                        seg.conn,
                        SegmentKind::SynAck,
                        0,
                        self.wnd,
                        now,
                    ));
                }
                return arrival;
            }
            SegmentKind::Data => {}
            SegmentKind::SynAck | SegmentKind::Ack => return arrival,
        }
        if self.conn != Some(seg.conn) {
            return arrival;
        }
        let start = self.rcv_nxt;
        if seg.end() > self.rcv_nxt {
            self.out_of_order
                .entry(seg.seq)
                .or_insert_with(|| seg.clone());
            while let Some(next) = self.take_contiguous() {
                self.rcv_nxt = self.rcv_nxt.max(next.end());
                for MessageMark { end, message } in next.marks {
                    self.marks.insert(end, message);
                }
            }
            while let Some(entry) = self.marks.first_entry() {
                if *entry.key() > self.rcv_nxt {
                    break;
                }
                arrival.delivered.push(entry.remove());
            }
        }
        arrival.bytes = start..self.rcv_nxt;
        arrival.reply = Some(Segment::control(
            seg.conn,
            SegmentKind::Ack,
            self.rcv_nxt,
            self.wnd,
            now,
        ));
        arrival
    }

    /// Pops a buffered segment that starts at or before `rcv_nxt`.
    fn take_contiguous(&mut self) -> Option<Segment> {
        let (&seq, _) = self.out_of_order.first_key_value()?;
        if seq > self.rcv_nxt {
            return None;
        }
        self.out_of_order.remove(&seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::MessageId;
    use crate::phy_mac::NodeId;

    fn conn(inc: u32) -> ConnId {
        ConnId {
            src: NodeId(1),
            dst: NodeId(0),
            incarnation: inc,
        }
    }

    fn data(seq: u64, len: u32, mark: Option<u64>) -> Segment {
        let marks = mark
            .map(|id| {
                vec![MessageMark {
                    end: seq + len as u64,
                    message: Message {
                        id: MessageId(id),
                        origin: NodeId(1),
                        created_at: SimTime::ZERO,
                        size_bytes: len,
                    },
                }]
            })
            .unwrap_or_default();
        Segment {
            seq,
            payload_bytes: len,
            marks,
            ..Segment::control(conn(0), SegmentKind::Data, 0, 0, SimTime::ZERO)
        }
    }

    fn open() -> TcpReceiver {
        let mut r = TcpReceiver::new(&TcpConfig::default());
        let syn = Segment::control(conn(0), SegmentKind::Syn, 0, 0, SimTime::ZERO);
        let a = r.on_segment(SimTime::ZERO, &syn);
        assert_eq!(a.reply.unwrap().kind, SegmentKind::SynAck);
        r
    }

    #[test]
    fn in_order_segment_is_acked() {
        let mut r = open();
        let a = r.on_segment(SimTime::ZERO, &data(0, 512, Some(1)));
        assert_eq!(a.reply.unwrap().ack, 512);
        assert_eq!(a.delivered.len(), 1);
        assert_eq!(a.bytes, 0..512);
    }

    #[test]
    fn gap_then_fill_jumps_the_ack() {
        let mut r = open();
        let a = r.on_segment(SimTime::ZERO, &data(512, 512, Some(2)));
        assert_eq!(a.reply.unwrap().ack, 0);
        assert!(a.delivered.is_empty());
        let a = r.on_segment(SimTime::ZERO, &data(0, 512, Some(1)));
        assert_eq!(a.reply.unwrap().ack, 1024);
        let ids: Vec<u64> = a.delivered.iter().map(|m| m.id.0).collect();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(a.bytes, 0..1024);
    }

    #[test]
    fn duplicate_segment_is_not_redelivered() {
        let mut r = open();
        r.on_segment(SimTime::ZERO, &data(0, 512, Some(1)));
        let a = r.on_segment(SimTime::ZERO, &data(0, 512, Some(1)));
        assert_eq!(a.reply.unwrap().ack, 512);
        assert!(a.delivered.is_empty());
        assert!(a.bytes.is_empty());
    }

    #[test]
    fn message_spanning_segments_waits_for_its_last_byte() {
        let mut r = open();
        let a = r.on_segment(SimTime::ZERO, &data(0, 512, None));
        assert!(a.delivered.is_empty());
        let a = r.on_segment(SimTime::ZERO, &data(512, 512, Some(7)));
        assert_eq!(a.delivered[0].id, MessageId(7));
    }

    #[test]
    fn new_incarnation_resets_stream() {
        let mut r = open();
        r.on_segment(SimTime::ZERO, &data(0, 512, Some(1)));
        let syn = Segment::control(conn(1), SegmentKind::Syn, 0, 0, SimTime::ZERO);
        r.on_segment(SimTime::ZERO, &syn);
        assert_eq!(r.rcv_nxt(), 0);
        // Stale data from the old incarnation is ignored.
        let a = r.on_segment(SimTime::ZERO, &data(512, 512, Some(2)));
        assert!(a.reply.is_none());
    }
}
