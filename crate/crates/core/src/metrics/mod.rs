//! Throughput, end-to-end delay and delivery ratio over the measurement
//! window, plus CSV export and cross-seed aggregation.

mod format;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::app::{Message, MessageId, ProxyMode};
use crate::phy_mac::NodeId;
use crate::sim::SimTime;
use crate::transport::Variant;

pub use format::{fmt_g6, format_table};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("message {0} generated twice")]
    DuplicateGeneration(MessageId),
    #[error("message {0} delivered but never generated")]
    UnknownMessage(MessageId),
    #[error("message {0} delivered twice")]
    DoubleDelivery(MessageId),
    #[error("message {id} delivered at {at} before its creation at {created}")]
    DeliveredBeforeCreation {
        id: MessageId,
        created: SimTime,
        at: SimTime,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Generated {
    origin: NodeId,
    created_at: SimTime,
    size_bytes: u32,
    in_window: bool,
    delivered_at: Option<SimTime>,
}

/// Per-leg timestamps of a relayed message.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelayLegs {
    pub proxy_arrival: Option<SimTime>,
    pub proxy_departure: Option<SimTime>,
}

/// Counts messages and delays for one run.
#[derive(Debug, Clone)]
pub struct Collector {
    warmup_end: SimTime,
    window_end: SimTime,
    messages: BTreeMap<MessageId, Generated>,
    /// Delivered payload bits per (origin, final destination).
    pair_bits: BTreeMap<(NodeId, NodeId), u64>,
    generated: u64,
    delivered: u64,
    delay_sum_ns: u128,
    legs: Option<BTreeMap<MessageId, RelayLegs>>,
}

impl Collector {
    pub fn new(warmup_end: SimTime, window_end: SimTime) -> Self {
        assert!(window_end > warmup_end, "empty measurement window");
        Collector {
            warmup_end,
            window_end,
            messages: BTreeMap::new(),
            pair_bits: BTreeMap::new(),
            generated: 0,
            delivered: 0,
            delay_sum_ns: 0,
            legs: None,
        }
    }

    /// Keeps per-leg proxy timestamps for the delay additivity check.
    pub fn instrument_legs(&mut self) {
        self.legs = Some(BTreeMap::new());
    }

    fn in_window(&self, t: SimTime) -> bool {
        t >= self.warmup_end && t < self.window_end
    }

    pub fn record_generation(&mut self, m: &Message) -> Result<(), MetricsError> {
        let in_window = self.in_window(m.created_at);
        let entry = Generated {
            origin: m.origin,
            created_at: m.created_at,
            size_bytes: m.size_bytes,
            in_window,
            delivered_at: None,
        };
        if self.messages.insert(m.id, entry).is_some() {
            return Err(MetricsError::DuplicateGeneration(m.id));
        }
        if in_window {
            self.generated += 1;
        }
        Ok(())
    }

    pub fn record_delivery(
        &mut self,
        m: &Message,
        destination: NodeId,
        at: SimTime,
    ) -> Result<(), MetricsError> {
        let g = self
            .messages
            .get_mut(&m.id)
            .ok_or(MetricsError::UnknownMessage(m.id))?;
        if g.delivered_at.is_some() {
            return Err(MetricsError::DoubleDelivery(m.id));
        }
        if at < g.created_at {
            return Err(MetricsError::DeliveredBeforeCreation {
                id: m.id,
                created: g.created_at,
                at,
            });
        }
        g.delivered_at = Some(at);
        if g.in_window && at <= self.window_end {
            self.delivered += 1;
            self.delay_sum_ns += at.since(g.created_at).as_nanos();
            *self.pair_bits.entry((g.origin, destination)).or_default() += g.size_bytes as u64 * 8;
        }
        Ok(())
    }

    pub fn record_proxy_arrival(&mut self, id: MessageId, at: SimTime) {
        if let Some(legs) = self.legs.as_mut() {
            legs.entry(id).or_default().proxy_arrival = Some(at);
        }
    }

    pub fn record_proxy_departure(&mut self, id: MessageId, at: SimTime) {
        if let Some(legs) = self.legs.as_mut() {
            legs.entry(id).or_default().proxy_departure = Some(at);
        }
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn window_secs(&self) -> f64 {
        self.window_end.since(self.warmup_end).as_secs_f64()
    }

    /// Per-pair throughput in Kbps.
    pub fn pair_throughput_kbps(&self) -> BTreeMap<(NodeId, NodeId), f64> {
        let w = self.window_secs();
        self.pair_bits
            .iter()
            .map(|(&k, &bits)| (k, bits as f64 / w / 1000.0))
            .collect()
    }

    /// Sum of per-pair throughputs, Kbps.
    pub fn throughput_kbps(&self) -> f64 {
        self.pair_throughput_kbps().values().fold(0.0, |a, b| a + b)
    }

    pub fn delivered_bits(&self) -> u64 {
        self.pair_bits.values().sum()
    }

    pub fn generated_bits(&self) -> u64 {
        self.messages
            .values()
            .filter(|g| g.in_window)
            .map(|g| g.size_bytes as u64 * 8)
            .sum()
    }

    /// Mean origin-to-destination delay in ms; NaN with no deliveries.
    pub fn mean_delay_ms(&self) -> f64 {
        if self.delivered == 0 {
            return f64::NAN;
        }
        self.delay_sum_ns as f64 / self.delivered as f64 / 1e6
    }

    /// NaN when nothing was generated.
    pub fn pdr(&self) -> f64 {
        if self.generated == 0 {
            return f64::NAN;
        }
        self.delivered as f64 / self.generated as f64
    }

    /// Delay of every delivered in-window message with its relay legs.
    pub fn delivered_with_legs(&self) -> Vec<(MessageId, SimTime, SimTime, RelayLegs)> {
        let legs = self.legs.as_ref();
        self.messages
            .iter()
            .filter(|(_, g)| g.in_window)
            .filter_map(|(&id, g)| {
                let at = g.delivered_at?;
                let l = legs.and_then(|l| l.get(&id)).copied().unwrap_or_default();
                Some((id, g.created_at, at, l))
            })
            .collect()
    }

    /// Message conservation: delivered ids form a subset of generated ids,
    /// each delivered once. Holds by construction; exposed for tests.
    pub fn conserved(&self) -> bool {
        self.delivered <= self.generated
            && self
                .messages
                .values()
                .filter(|g| g.in_window && g.delivered_at.is_some_and(|t| t <= self.window_end))
                .count() as u64
                == self.delivered
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub variant: Variant,
    pub node_count: u32,
    pub proxy_mode: ProxyMode,
    pub throughput_kbps: f64,
    pub mean_delay_ms: f64,
    pub pdr: f64,
    pub generated: u64,
    pub delivered: u64,
}

impl MetricsRecord {
    fn sort_key(&self) -> (Variant, u32, ProxyMode, u64, &str) {
        (
            self.variant,
            self.node_count,
            self.proxy_mode,
            self.seed,
            &self.scenario_id,
        )
    }
}

pub const CSV_HEADER: &str = "scenario_id,seed,variant,node_count,proxy_mode,throughput_kbps,mean_delay_ms,pdr,generated,delivered";

pub fn sort_records(records: &mut [MetricsRecord]) {
    records.sort_by(|a, b| {
        a.sort_key()
            .partial_cmp(&b.sort_key())
            .expect("keys are totally ordered")
    });
}

/// Renders records as CSV, sorted by the key columns.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario_id,
            r.seed,
            r.variant,
            r.node_count,
            r.proxy_mode,
            fmt_g6(r.throughput_kbps),
            fmt_g6(r.mean_delay_ms),
            fmt_g6(r.pdr),
            r.generated,
            r.delivered
        ));
    }
    out
}

pub fn export_csv(records: &[MetricsRecord], path: &Path) -> io::Result<()> {
    std::fs::write(path, to_csv(records))
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Reads back a file produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CSV_HEADER => {}
        _ => {
            return Err(CsvError::Parse {
                line: 1,
                msg: "missing or unexpected header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| CsvError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let real = |s: &str| -> Result<f64, CsvError> {
            s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")))
        };
        let int = |s: &str| -> Result<u64, CsvError> {
            s.parse::<u64>().map_err(|e| err(format!("'{s}': {e}")))
        };
        out.push(MetricsRecord {
            scenario_id: f[0].to_string(),
            seed: int(f[1])?,
            variant: f[2].parse().map_err(err)?,
            node_count: int(f[3])? as u32,
            proxy_mode: f[4].parse().map_err(err)?,
            throughput_kbps: real(f[5])?,
            mean_delay_ms: real(f[6])?,
            pdr: real(f[7])?,
            generated: int(f[8])?,
            delivered: int(f[9])?,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation over the finite values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey {
    pub variant: Variant,
    pub node_count: u32,
    pub proxy_mode: ProxyMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: ConfigKey,
    pub runs: usize,
    pub throughput_kbps: Stat,
    pub mean_delay_ms: Stat,
    pub pdr: Stat,
    pub generated: u64,
    pub delivered: u64,
}

/// Groups records by configuration and summarises each group across seeds.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<ConfigKey, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        let key = ConfigKey {
            variant: r.variant,
            node_count: r.node_count,
            proxy_mode: r.proxy_mode,
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, mut rs)| {
            rs.sort_by_key(|r| r.seed);
            Aggregate {
                key,
                runs: rs.len(),
                throughput_kbps: Stat::of(rs.iter().map(|r| r.throughput_kbps)),
                mean_delay_ms: Stat::of(rs.iter().map(|r| r.mean_delay_ms)),
                pdr: Stat::of(rs.iter().map(|r| r.pdr)),
                generated: rs.iter().map(|r| r.generated).sum(),
                delivered: rs.iter().map(|r| r.delivered).sum(),
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: &str = "variant,node_count,proxy_mode,runs,throughput_kbps_mean,throughput_kbps_std,mean_delay_ms_mean,mean_delay_ms_std,pdr_mean,pdr_std,generated,delivered";

pub fn aggregate_csv(rows: &[Aggregate]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            a.key.variant,
            a.key.node_count,
            a.key.proxy_mode,
            a.runs,
            fmt_g6(a.throughput_kbps.mean),
            fmt_g6(a.throughput_kbps.std),
            fmt_g6(a.mean_delay_ms.mean),
            fmt_g6(a.mean_delay_ms.std),
            fmt_g6(a.pdr.mean),
            fmt_g6(a.pdr.std),
            a.generated,
            a.delivered
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(id: u64, origin: u32, created_ms: u64) -> Message {
        Message {
            id: MessageId(id),
            origin: NodeId(origin),
            created_at: SimTime::from_millis(created_ms),
            size_bytes: 512,
        }
    }

    fn window() -> Collector {
        Collector::new(SimTime::from_secs(20), SimTime::from_secs(200))
    }

    #[test]
    fn pdr_counts_window_messages() {
        let mut c = window();
        for i in 0..100 {
            let m = msg(i, 1, 30_000 + i);
            c.record_generation(&m).unwrap();
            if i < 97 {
                c.record_delivery(&m, NodeId(0), SimTime::from_secs(40))
                    .unwrap();
            }
        }
        assert!((c.pdr() - 0.97).abs() < 1e-12);
        assert!(c.conserved());
    }

    #[test]
    fn warmup_messages_are_excluded() {
        let mut c = window();
        let m = msg(1, 1, 19_000);
        c.record_generation(&m).unwrap();
        c.record_delivery(&m, NodeId(0), SimTime::from_secs(21))
            .unwrap();
        assert_eq!((c.generated(), c.delivered()), (0, 0));
        assert!(c.pdr().is_nan());
        assert!(c.mean_delay_ms().is_nan());
        assert_eq!(c.throughput_kbps(), 0.0);
    }

    #[test]
    fn unknown_and_double_delivery_are_errors() {
        let mut c = window();
        let m = msg(1, 1, 30_000);
        assert_eq!(
            c.record_delivery(&m, NodeId(0), SimTime::from_secs(31)),
            Err(MetricsError::UnknownMessage(MessageId(1)))
        );
        c.record_generation(&m).unwrap();
        c.record_delivery(&m, NodeId(0), SimTime::from_secs(31))
            .unwrap();
        assert_eq!(
            c.record_delivery(&m, NodeId(0), SimTime::from_secs(32)),
            Err(MetricsError::DoubleDelivery(MessageId(1)))
        );
    }

    #[test]
    fn delay_examples() {
        let mut c = window();
        let a = msg(1, 1, 21_000);
        c.record_generation(&a).unwrap();
        c.record_delivery(&a, NodeId(0), SimTime::from_millis(21_120))
            .unwrap();
        assert!((c.mean_delay_ms() - 120.0).abs() < 1e-9);

        let mut c = window();
        let (a, b) = (msg(1, 1, 30_000), msg(2, 2, 30_000));
        c.record_generation(&a).unwrap();
        c.record_generation(&b).unwrap();
        c.record_delivery(&a, NodeId(0), SimTime::from_millis(30_100))
            .unwrap();
        c.record_delivery(&b, NodeId(0), SimTime::from_millis(30_300))
            .unwrap();
        assert!((c.mean_delay_ms() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn throughput_examples() {
        // 250 000 bits over a 10 s window.
        let mut c = Collector::new(SimTime::ZERO, SimTime::from_secs(10));
        let m = Message {
            size_bytes: 31_250,
            ..msg(1, 1, 1000)
        };
        c.record_generation(&m).unwrap();
        c.record_delivery(&m, NodeId(0), SimTime::from_secs(2))
            .unwrap();
        assert!((c.throughput_kbps() - 25.0).abs() < 1e-9);

        // Two pairs at 100 and 50 Kbps.
        let mut c = Collector::new(SimTime::ZERO, SimTime::from_secs(1));
        let a = Message {
            size_bytes: 12_500,
            ..msg(1, 1, 0)
        };
        let b = Message {
            size_bytes: 6_250,
            ..msg(2, 2, 0)
        };
        for m in [&a, &b] {
            c.record_generation(m).unwrap();
            c.record_delivery(m, NodeId(0), SimTime::from_millis(500))
                .unwrap();
        }
        let pairs = c.pair_throughput_kbps();
        assert!((pairs[&(NodeId(1), NodeId(0))] - 100.0).abs() < 1e-9);
        assert!((pairs[&(NodeId(2), NodeId(0))] - 50.0).abs() < 1e-9);
        assert!((c.throughput_kbps() - 150.0).abs() < 1e-9);
    }

    fn record(seed: u64, variant: Variant) -> MetricsRecord {
        MetricsRecord {
            scenario_id: format!("{variant}-n50-none"),
            seed,
            variant,
            node_count: 50,
            proxy_mode: ProxyMode::None,
            throughput_kbps: 123.456789,
            mean_delay_ms: f64::NAN,
            pdr: 1.0,
            generated: 10,
            delivered: 10,
        }
    }

    #[test]
    fn csv_shapes() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
        let one = to_csv(&[record(7, Variant::Reno)]);
        let lines: Vec<&str> = one.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "reno-n50-none,7,reno,50,none,123.457,NaN,1,10,10");
        let recs = [
            record(2, Variant::Vegas),
            record(1, Variant::Reno),
            record(0, Variant::Vegas),
        ];
        let a = to_csv(&recs);
        assert_eq!(a, to_csv(&recs));
        let order: Vec<&str> = a
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(order, vec!["1", "0", "2"]);
        let back = parse_csv(&a).unwrap();
        assert_eq!(to_csv(&back), a);
    }

    #[test]
    fn aggregation_mean_and_std() {
        let mut recs = vec![record(0, Variant::Tcp), record(1, Variant::Tcp)];
        recs[0].throughput_kbps = 100.0;
        recs[1].throughput_kbps = 200.0;
        let agg = aggregate(&recs);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].throughput_kbps.mean, 150.0);
        assert!((agg[0].throughput_kbps.std - 70.710678).abs() < 1e-6);
        assert!(agg[0].mean_delay_ms.mean.is_nan());
        assert_eq!(agg[0].runs, 2);
    }
}
