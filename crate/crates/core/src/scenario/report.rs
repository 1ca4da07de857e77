//! Proxy versus non-proxy comparisons and the trend checks over a set of
//! aggregated runs.

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use crate::app::ProxyMode;
use crate::metrics::{fmt_g6, Aggregate, ConfigKey};
use crate::transport::Variant;

/// Vegas throughput must stay below this fraction of Reno's.
pub const VEGAS_THROUGHPUT_MAX_RATIO: f64 = 0.7;
/// Minimum proxy/non-proxy throughput ratio for the loss-based variants.
pub const PROXY_THROUGHPUT_MIN_RATIO: f64 = 1.2;
/// Minimum proxy/non-proxy delay ratio for the loss-based variants.
pub const PROXY_DELAY_MIN_RATIO: f64 = 1.5;
pub const PDR_BAND: (f64, f64) = (0.90, 1.00);

pub const VEGAS_THROUGHPUT_NODES: [u32; 3] = [50, 100, 110];
pub const VEGAS_DELAY_NODES: [u32; 2] = [50, 100];
pub const PROXY_THROUGHPUT_NODES: [u32; 2] = [100, 110];
pub const LOSS_BASED: [Variant; 3] = [Variant::Tcp, Variant::Reno, Variant::NewReno];

/// One proxy configuration against its non-proxy counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub variant: Variant,
    pub node_count: u32,
    pub proxy_mode: ProxyMode,
    /// `None` when the non-proxy counterpart is missing.
    pub throughput_ratio: Option<f64>,
    pub delay_ratio: Option<f64>,
    pub pdr_delta: Option<f64>,
}

pub fn ratios(aggs: &[Aggregate]) -> Vec<RatioRow> {
    let by_key: BTreeMap<ConfigKey, &Aggregate> = aggs.iter().map(|a| (a.key, a)).collect();
    let mut out = Vec::new();
    for a in aggs {
        if a.key.proxy_mode == ProxyMode::None {
            continue;
        }
        let base = by_key.get(&ConfigKey {
            proxy_mode: ProxyMode::None,
            ..a.key
        });
        out.push(RatioRow {
            variant: a.key.variant,
            node_count: a.key.node_count,
            proxy_mode: a.key.proxy_mode,
            throughput_ratio: base.map(|b| a.throughput_kbps.mean / b.throughput_kbps.mean),
            delay_ratio: base.map(|b| a.mean_delay_ms.mean / b.mean_delay_ms.mean),
            pdr_delta: base.map(|b| a.pdr.mean - b.pdr.mean),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The records do not cover this check.
    Unavailable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Unavailable => "unavailable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u8,
    pub subject: String,
    pub value: f64,
    pub threshold: String,
    pub status: CheckStatus,
}

impl Check {
    fn new(
        criterion: u8,
        subject: String,
        value: Option<f64>,
        threshold: String,
        ok: impl FnOnce(f64) -> bool,
    ) -> Check {
        let (value, status) = match value {
            Some(v) if !v.is_nan() => (
                v,
                if ok(v) {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
            ),
            _ => (f64::NAN, CheckStatus::Unavailable),
        };
        Check {
            criterion,
            subject,
            value,
            threshold,
            status,
        }
    }
}

fn mean_of(
    by_key: &BTreeMap<ConfigKey, &Aggregate>,
    variant: Variant,
    node_count: u32,
    proxy_mode: ProxyMode,
    metric: fn(&Aggregate) -> f64,
) -> Option<f64> {
    by_key
        .get(&ConfigKey {
            variant,
            node_count,
            proxy_mode,
        })
        .map(|a| metric(a))
}

fn tput(a: &Aggregate) -> f64 {
    a.throughput_kbps.mean
}

fn delay(a: &Aggregate) -> f64 {
    a.mean_delay_ms.mean
}

/// Evaluates the trend checks. Checks whose configurations are absent from
/// `aggs` come back `Unavailable`.
pub fn checks(aggs: &[Aggregate]) -> Vec<Check> {
    let by_key: BTreeMap<ConfigKey, &Aggregate> = aggs.iter().map(|a| (a.key, a)).collect();
    let mut out = Vec::new();

    for n in VEGAS_THROUGHPUT_NODES {
        let vegas = mean_of(&by_key, Variant::Vegas, n, ProxyMode::None, tput);
        let reno = mean_of(&by_key, Variant::Reno, n, ProxyMode::None, tput);
        out.push(Check::new(
            4,
            format!("vegas/reno throughput n={n}"),
            vegas.zip(reno).map(|(v, r)| v / r),
            format!("< {VEGAS_THROUGHPUT_MAX_RATIO}"),
            |x| x < VEGAS_THROUGHPUT_MAX_RATIO,
        ));
    }

    for n in VEGAS_DELAY_NODES {
        let vegas = mean_of(&by_key, Variant::Vegas, n, ProxyMode::None, delay);
        let others: Option<Vec<f64>> = LOSS_BASED
            .iter()
            .map(|&v| mean_of(&by_key, v, n, ProxyMode::None, delay))
            .collect();
        // Ratio to the best loss-based variant; below 1 means Vegas is lowest.
        let ratio = vegas
            .zip(others)
            .map(|(v, o)| v / o.into_iter().fold(f64::INFINITY, f64::min));
        out.push(Check::new(
            5,
            format!("vegas/min(other) delay n={n}"),
            ratio,
            "< 1".into(),
            |x| x < 1.0,
        ));
    }

    let proxy_modes = [ProxyMode::Middle, ProxyMode::SinkNeighbor];
    for variant in LOSS_BASED {
        for n in PROXY_THROUGHPUT_NODES {
            for mode in proxy_modes {
                let p = mean_of(&by_key, variant, n, mode, tput);
                let b = mean_of(&by_key, variant, n, ProxyMode::None, tput);
                out.push(Check::new(
                    6,
                    format!("{variant} {mode}/none throughput n={n}"),
                    p.zip(b).map(|(p, b)| p / b),
                    format!(">= {PROXY_THROUGHPUT_MIN_RATIO}"),
                    |x| x >= PROXY_THROUGHPUT_MIN_RATIO,
                ));
            }
        }
    }

    let mut node_counts: Vec<u32> = aggs.iter().map(|a| a.key.node_count).collect();
    node_counts.sort_unstable();
    node_counts.dedup();
    for variant in LOSS_BASED {
        for &n in &node_counts {
            for mode in proxy_modes {
                let p = mean_of(&by_key, variant, n, mode, delay);
                let b = mean_of(&by_key, variant, n, ProxyMode::None, delay);
                if p.is_none() && b.is_none() {
                    continue;
                }
                out.push(Check::new(
                    7,
                    format!("{variant} {mode}/none delay n={n}"),
                    p.zip(b).map(|(p, b)| p / b),
                    format!(">= {PROXY_DELAY_MIN_RATIO}"),
                    |x| x >= PROXY_DELAY_MIN_RATIO,
                ));
            }
        }
    }

    for a in aggs {
        let (lo, hi) = PDR_BAND;
        out.push(Check::new(
            8,
            format!(
                "pdr {} n={} {}",
                a.key.variant, a.key.node_count, a.key.proxy_mode
            ),
            Some(a.pdr.mean),
            format!("in [{lo}, {hi}]"),
            |x| (lo..=hi).contains(&x),
        ));
        out.push(Check::new(
            8,
            format!(
                "conservation {} n={} {}",
                a.key.variant, a.key.node_count, a.key.proxy_mode
            ),
            Some(a.delivered as f64 / a.generated.max(1) as f64),
            "delivered <= generated".into(),
            |_| a.delivered <= a.generated,
        ));
    }
    out
}

pub fn any_failed(checks: &[Check]) -> bool {
    checks.iter().any(|c| c.status == CheckStatus::Fail)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "unavailable".to_string(), fmt_g6)
}

/// Human-readable ratio table followed by one line per check.
pub fn format_report(aggs: &[Aggregate]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>5} {:<14} {:>16} {:>12} {:>12}",
        "Protocol", "Nodes", "Proxy", "Throughput x", "Delay x", "PDR delta"
    );
    for r in ratios(aggs) {
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:<14} {:>16} {:>12} {:>12}",
            r.variant.label(),
            r.node_count,
            r.proxy_mode.as_str(),
            opt(r.throughput_ratio),
            opt(r.delay_ratio),
            opt(r.pdr_delta),
        );
    }
    out.push('\n');
    for c in checks(aggs) {
        let _ = writeln!(
            out,
            "{:<11} criterion {}: {} = {} (want {})",
            c.status.to_string().to_uppercase(),
            c.criterion,
            c.subject,
            fmt_g6(c.value),
            c.threshold
        );
    }
    out
}

pub const CHECKS_HEADER: &str = "criterion,subject,value,threshold,status";

/// Machine-readable pass/fail summary.
pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from(CHECKS_HEADER);
    out.push('\n');
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.criterion,
            c.subject,
            fmt_g6(c.value),
            c.threshold,
            c.status
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Stat;

    fn agg(variant: Variant, n: u32, mode: ProxyMode, tp: f64, d: f64, pdr: f64) -> Aggregate {
        let s = |x| Stat::of([x]);
        Aggregate {
            key: ConfigKey {
                variant,
                node_count: n,
                proxy_mode: mode,
            },
            runs: 1,
            throughput_kbps: s(tp),
            mean_delay_ms: s(d),
            pdr: s(pdr),
            generated: 100,
            delivered: 95,
        }
    }

    #[test]
    fn throughput_and_delay_ratios() {
        let aggs = [
            agg(Variant::Tcp, 110, ProxyMode::None, 301.17, 137.744, 0.97),
            agg(Variant::Tcp, 110, ProxyMode::Middle, 431.46, 414.309, 0.95),
        ];
        let r = &ratios(&aggs)[0];
        assert!((r.throughput_ratio.unwrap() - 1.43).abs() < 0.005);
        assert!((r.delay_ratio.unwrap() - 3.01).abs() < 0.005);
        assert!((r.pdr_delta.unwrap() + 0.02).abs() < 1e-12);
    }

    #[test]
    fn identical_records_give_unit_ratios() {
        let aggs = [
            agg(Variant::Reno, 50, ProxyMode::None, 200.0, 100.0, 0.95),
            agg(
                Variant::Reno,
                50,
                ProxyMode::SinkNeighbor,
                200.0,
                100.0,
                0.95,
            ),
        ];
        let r = &ratios(&aggs)[0];
        assert_eq!(r.throughput_ratio, Some(1.0));
        assert_eq!(r.delay_ratio, Some(1.0));
        assert_eq!(r.pdr_delta, Some(0.0));
    }

    #[test]
    fn missing_counterpart_is_unavailable() {
        let aggs = [agg(Variant::Reno, 50, ProxyMode::Middle, 1.0, 1.0, 0.95)];
        let r = &ratios(&aggs)[0];
        assert_eq!(r.throughput_ratio, None);
        assert!(format_report(&aggs).contains("unavailable"));
        let cs = checks(&aggs);
        assert!(!any_failed(&cs));
        assert!(cs
            .iter()
            .any(|c| c.criterion == 7 && c.status == CheckStatus::Unavailable));
    }

    #[test]
    fn failing_threshold_is_reported() {
        let aggs = [
            agg(Variant::Reno, 50, ProxyMode::None, 100.0, 100.0, 0.95),
            agg(Variant::Vegas, 50, ProxyMode::None, 90.0, 100.0, 0.5),
        ];
        let cs = checks(&aggs);
        let c4 = cs.iter().find(|c| c.criterion == 4).unwrap();
        assert_eq!(c4.status, CheckStatus::Fail);
        assert!(cs
            .iter()
            .any(|c| c.criterion == 8 && c.status == CheckStatus::Fail));
        assert!(any_failed(&cs));
    }
}
