use std::fmt::Write;

use super::Aggregate;
use crate::app::ProxyMode;

/// Formats like C's `%.6g`, with `NaN` for not-a-number.
pub fn fmt_g6(x: f64) -> String {
    const P: i32 = 6;
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let decimals = (P - 1 - exp) as usize;
        strip_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            strip_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn strip_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn table_title(mode: ProxyMode) -> &'static str {
    match mode {
        ProxyMode::None => "Network without proxy nodes",
        ProxyMode::Middle => "Proxy nodes in the middle of each section",
        ProxyMode::SinkNeighbor => "Proxy nodes next to the sink",
    }
}

/// Plain-text tables, one per proxy mode, with variant x node-count rows.
pub fn format_table(rows: &[Aggregate]) -> String {
    let mut out = String::new();
    for mode in ProxyMode::ALL {
        let mut group: Vec<&Aggregate> = rows.iter().filter(|a| a.key.proxy_mode == mode).collect();
        if group.is_empty() {
            continue;
        }
        group.sort_by_key(|a| (a.key.variant, a.key.node_count));
        let _ = writeln!(out, "{}", table_title(mode));
        let _ = writeln!(
            out,
            "{:<8} {:>5} {:>4} {:>20} {:>20} {:>18}",
            "Protocol", "Nodes", "Runs", "Throughput (Kbps)", "Delay (ms)", "PDR"
        );
        for a in group {
            let cell = |s: &super::Stat| format!("{} ± {}", fmt_g6(s.mean), fmt_g6(s.std));
            let _ = writeln!(
                out,
                "{:<8} {:>5} {:>4} {:>20} {:>20} {:>18}",
                a.key.variant.label(),
                a.key.node_count,
                a.runs,
                cell(&a.throughput_kbps),
                cell(&a.mean_delay_ms),
                cell(&a.pdr)
            );
        }
        out.push('\n');
    }
    out
}
