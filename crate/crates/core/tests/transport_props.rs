use std::time::Duration;

use proptest::prelude::*;

use wsn_core::app::{Message, MessageId};
use wsn_core::phy_mac::NodeId;
use wsn_core::sim::SimTime;
use wsn_core::transport::vlink::{self, LossRule, VlinkConfig};
use wsn_core::transport::{ConnId, RtoOutcome, TcpConfig, TcpSender, Variant};

const VARIANTS: [Variant; 4] = [
    Variant::Tcp,
    Variant::Reno,
    Variant::NewReno,
    Variant::Vegas,
];

#[derive(Debug, Clone)]
enum Op {
    Wait(u64),
    /// Cumulative ack at this fraction of the outstanding range.
    Ack(f64),
    /// Ack that repeats an already acknowledged byte.
    StaleAck,
    Write(u32),
    Timeout,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1u64..400).prop_map(Op::Wait),
        (0.0f64..=1.0).prop_map(Op::Ack),
        Just(Op::StaleAck),
        (1u32..1500).prop_map(Op::Write),
        Just(Op::Timeout),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sender_invariants_under_arbitrary_acks(
        variant in prop::sample::select(VARIANTS.to_vec()),
        ops in prop::collection::vec(op(), 1..200),
    ) {
        let conn = ConnId { src: NodeId(1), dst: NodeId(0), incarnation: 0 };
        let cfg = TcpConfig { send_buffer_bytes: 1 << 20, ..TcpConfig::default() };
        let mut s = TcpSender::new(conn, variant, cfg);
        let mut now = SimTime::ZERO;
        let mut out = Vec::new();
        s.open(now, &mut out);
        now = now + Duration::from_millis(50);
        s.on_syn_ack(now, 64, &mut out);
        let mut next_id = 0;
        let mut last_una = s.snd_una();
        let mut last_base = s.base_rtt();
        for op in ops {
            match op {
                Op::Wait(ms) => now = now + Duration::from_millis(ms),
                Op::Ack(frac) => {
                    let span = s.snd_max() - s.snd_una();
                    let ack = s.snd_una() + (span as f64 * frac) as u64;
                    s.on_ack(now, ack, 64, &mut out).unwrap();
                }
                Op::StaleAck => {
                    let ack = s.snd_una().saturating_sub(1);
                    s.on_ack(now, ack, 64, &mut out).unwrap();
                }
                Op::Write(size) => {
                    let m = Message {
                        id: MessageId(next_id),
                        origin: NodeId(1),
                        created_at: now,
                        size_bytes: size,
                    };
                    next_id += 1;
                    s.write(now, m, &mut out).unwrap();
                }
                Op::Timeout => {
                    if let Some(d) = s.rto_deadline() {
                        now = now.max(d);
                        if let RtoOutcome::Reset(_) = s.on_rto(now, &mut out) {
                            break;
                        }
                    }
                }
            }
            out.clear();
            prop_assert!(s.check_invariants().is_ok(), "{:?}", s.check_invariants());
            prop_assert!(s.cwnd() >= 1.0 && s.ssthresh() >= 2.0);
            prop_assert!(s.snd_una() >= last_una);
            if let (Some(prev), Some(cur)) = (last_base, s.base_rtt()) {
                prop_assert!(cur <= prev);
            }
            last_una = s.snd_una();
            last_base = s.base_rtt().or(last_base);
        }
    }

    #[test]
    fn lossy_traces_keep_window_bounds(
        variant in prop::sample::select(VARIANTS.to_vec()),
        n in 1usize..80,
        p in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        let mut cfg = VlinkConfig::segments(
            Duration::from_millis(80),
            n,
            LossRule::Random { p_data: p, p_ack: p / 2.0, seed },
        );
        cfg.tcp.max_consecutive_timeouts = 64;
        let run = vlink::run(variant, cfg).unwrap();
        for s in &run.trace {
            prop_assert!(s.cwnd >= 1.0 && s.ssthresh >= 2.0, "{s:?}");
        }
        prop_assert!(run.trace.windows(2).all(|w| w[0].t <= w[1].t));
    }
}

/// A private link of 100 ms RTT behind a 25 ms-per-segment bottleneck holds
/// 4 segments in the pipe; everything above that queues. Vegas should settle
/// where the queued excess lies within [alpha, beta] and stop moving.
#[test]
fn vegas_settles_on_a_private_bottleneck() {
    let mut cfg = VlinkConfig::segments(Duration::from_millis(100), 3000, LossRule::None);
    cfg.service_time = Some(Duration::from_millis(25));
    let alpha = cfg.tcp.vegas_alpha;
    let beta = cfg.tcp.vegas_beta;
    let run = vlink::run(Variant::Vegas, cfg).unwrap();
    assert!(run.completed);
    assert_eq!(run.stats.retransmits, 0);

    let last = run.trace.last().unwrap();
    let settle = run.finished_at.since(SimTime::ZERO) / 4;
    assert!(
        last.t < SimTime::ZERO + settle,
        "cwnd still moving at {:?} of {:?}",
        last.t,
        run.finished_at
    );
    // Queue-limited: actual rate is one segment per 25 ms, so
    // diff = cwnd - base_rtt / service = cwnd - 4.
    let diff = last.cwnd - 4.0;
    assert!(
        (alpha..=beta).contains(&diff),
        "cwnd {} diff {diff}",
        last.cwnd
    );
}

#[test]
fn newreno_single_recovery_against_reno() {
    for k in 2..=4u64 {
        let lost: std::collections::BTreeSet<u64> = (0..k).map(|i| 16 + 2 * i).collect();
        let cfg = || {
            VlinkConfig::segments(
                Duration::from_millis(100),
                40,
                LossRule::FirstTransmissionOf(lost.clone()),
            )
        };
        let newreno = vlink::run(Variant::NewReno, cfg()).unwrap();
        let reno = vlink::run(Variant::Reno, cfg()).unwrap();
        assert_eq!(newreno.stats.fast_recovery_entries, 1, "k={k}");
        assert!(
            reno.stats.fast_recovery_entries + reno.stats.timeouts > 1,
            "k={k}: {:?}",
            reno.stats
        );
    }
}
