//! Flat `key=value` scenario configuration.

use std::fmt::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::app::{ProxyMode, TrafficState, SECTION_COUNT};
use crate::phy_mac::{BackoffPolicy, MacConfig, MobilityParams};
use crate::routing::AodvConfig;
use crate::transport::{TcpConfig, Variant};
use crate::world::WorldParams;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("line {line}: expected key=value, found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: '{key}' given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration: {key}: {msg}")]
    Invariant { key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Every tunable of a run. Times are in seconds unless the key says
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub node_count: u32,
    pub proxy_mode: ProxyMode,
    pub proxy_count: u32,
    pub radio_range: f64,
    pub variant: Variant,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub traffic_state: TrafficState,
    pub message_size: u32,
    pub batch_interval_s: f64,
    pub batch_bytes: u64,
    pub mobility: bool,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_s: f64,
    pub mobility_tick_s: f64,
    pub data_rate_bps: f64,
    pub difs_us: u64,
    pub slot_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub mac_overhead_bytes: u32,
    pub ack_delay_us: u64,
    pub ifq_limit: usize,
    /// `None` draws backoffs at random; `Some(k)` pins every backoff.
    pub backoff_slots: Option<u32>,
    pub route_lifetime_s: f64,
    pub discovery_timeout_s: f64,
    pub discovery_retries: u32,
    pub route_buffer: usize,
    pub rreq_jitter_ms: f64,
    pub segment_size: u32,
    pub rwnd: u32,
    pub rto_initial_s: f64,
    pub rto_min_s: f64,
    pub rto_max_s: f64,
    pub init_cwnd: f64,
    pub init_ssthresh: f64,
    pub vegas_alpha: f64,
    pub vegas_beta: f64,
    pub vegas_gamma: f64,
    pub vegas_loss_factor: f64,
    pub max_timeouts: u32,
    pub send_buffer_bytes: u64,
    pub proxy_send_buffer_bytes: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mac = MacConfig::default();
        let aodv = AodvConfig::default();
        let tcp = TcpConfig::default();
        let world = WorldParams::default();
        let mob = MobilityParams::default();
        ScenarioConfig {
            area_side: 1000.0,
            node_count: 50,
            proxy_mode: ProxyMode::None,
            proxy_count: SECTION_COUNT as u32,
            radio_range: 100.0,
            variant: Variant::Tcp,
            seed: 1,
            duration_s: 200.0,
            warmup_s: 20.0,
            traffic_state: TrafficState::Medium,
            message_size: world.message_size,
            batch_interval_s: world.batch_interval.as_secs_f64(),
            batch_bytes: world.batch_bytes,
            mobility: true,
            speed_min: mob.speed_min,
            speed_max: mob.speed_max,
            pause_s: mob.pause.as_secs_f64(),
            mobility_tick_s: world.mobility_tick.as_secs_f64(),
            data_rate_bps: mac.data_rate_bps,
            difs_us: mac.difs.as_micros() as u64,
            slot_us: mac.slot.as_micros() as u64,
            cw_min: mac.cw_min,
            cw_max: mac.cw_max,
            retry_limit: mac.retry_limit,
            mac_overhead_bytes: mac.frame_overhead_bytes,
            ack_delay_us: mac.ack_delay.as_micros() as u64,
            ifq_limit: mac.queue_limit,
            backoff_slots: None,
            route_lifetime_s: aodv.route_lifetime.as_secs_f64(),
            discovery_timeout_s: aodv.discovery_timeout.as_secs_f64(),
            discovery_retries: aodv.discovery_retries,
            route_buffer: aodv.buffer_limit,
            rreq_jitter_ms: aodv.rreq_jitter_max.as_secs_f64() * 1e3,
            segment_size: tcp.segment_size,
            rwnd: tcp.rwnd_segments,
            rto_initial_s: tcp.rto_initial.as_secs_f64(),
            rto_min_s: tcp.rto_min.as_secs_f64(),
            rto_max_s: tcp.rto_max.as_secs_f64(),
            init_cwnd: tcp.init_cwnd,
            init_ssthresh: tcp.init_ssthresh,
            vegas_alpha: tcp.vegas_alpha,
            vegas_beta: tcp.vegas_beta,
            vegas_gamma: tcp.vegas_gamma,
            vegas_loss_factor: tcp.vegas_loss_factor,
            max_timeouts: tcp.max_consecutive_timeouts,
            send_buffer_bytes: tcp.send_buffer_bytes,
            proxy_send_buffer_bytes: world.proxy_send_buffer,
        }
    }
}

fn parse<T: FromStr>(key: &str, line: usize, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        msg: e.to_string(),
    })
}

fn parse_bool(key: &str, line: usize, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            msg: format!("expected true or false, found '{v}'"),
        }),
    }
}

/// Generates `set`, `entries` and `KEYS` from one field list so the three
/// can never drift apart.
macro_rules! config_keys {
    ($($key:ident : $kind:ident),* $(,)?) => {
        impl ScenarioConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Assigns one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($key) => { config_keys!(@set self, $key, $kind, key, value, line); })*
                    _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
                }
                Ok(())
            }

            /// `(key, value)` pairs in canonical order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), config_keys!(@get self, $key, $kind))),*]
            }
        }
    };
    (@set $s:ident, $key:ident, plain, $k:ident, $v:ident, $l:ident) => { $s.$key = parse($k, $l, $v)? };
    (@set $s:ident, $key:ident, flag, $k:ident, $v:ident, $l:ident) => { $s.$key = parse_bool($k, $l, $v)? };
    (@set $s:ident, $key:ident, backoff, $k:ident, $v:ident, $l:ident) => {
        $s.$key = if $v == "random" { None } else { Some(parse($k, $l, $v)?) }
    };
    (@get $s:ident, $key:ident, plain) => { $s.$key.to_string() };
    (@get $s:ident, $key:ident, flag) => { $s.$key.to_string() };
    (@get $s:ident, $key:ident, backoff) => {
        $s.$key.map_or_else(|| "random".to_string(), |k| k.to_string())
    };
}

config_keys! {
    area_side: plain,
    node_count: plain,
    proxy_mode: plain,
    proxy_count: plain,
    radio_range: plain,
    variant: plain,
    seed: plain,
    duration_s: plain,
    warmup_s: plain,
    traffic_state: plain,
    message_size: plain,
    batch_interval_s: plain,
    batch_bytes: plain,
    mobility: flag,
    speed_min: plain,
    speed_max: plain,
    pause_s: plain,
    mobility_tick_s: plain,
    data_rate_bps: plain,
    difs_us: plain,
    slot_us: plain,
    cw_min: plain,
    cw_max: plain,
    retry_limit: plain,
    mac_overhead_bytes: plain,
    ack_delay_us: plain,
    ifq_limit: plain,
    backoff_slots: backoff,
    route_lifetime_s: plain,
    discovery_timeout_s: plain,
    discovery_retries: plain,
    route_buffer: plain,
    rreq_jitter_ms: plain,
    segment_size: plain,
    rwnd: plain,
    rto_initial_s: plain,
    rto_min_s: plain,
    rto_max_s: plain,
    init_cwnd: plain,
    init_ssthresh: plain,
    vegas_alpha: plain,
    vegas_beta: plain,
    vegas_gamma: plain,
    vegas_loss_factor: plain,
    max_timeouts: plain,
    send_buffer_bytes: plain,
    proxy_send_buffer_bytes: plain,
}

/// Splits config text into `(line number, key, value)` triples, skipping
/// blank lines and `#` comments. Accepts LF and CRLF.
pub fn config_lines(text: &str) -> Result<Vec<(usize, &str, &str)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                text: content.to_string(),
            });
        };
        out.push((line_no, k.trim(), v.trim()));
    }
    Ok(out)
}

impl ScenarioConfig {
    /// Parses and validates config text. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (line, key, value) in config_lines(text)? {
            if !seen.insert(key) {
                if Self::KEYS.contains(&key) {
                    return Err(ConfigError::Duplicate {
                        line,
                        key: key.to_string(),
                    });
                }
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Writes every key, one per line, in canonical order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| {
            Err(ConfigError::Invariant {
                key: key.to_string(),
                msg,
            })
        };
        if self.proxy_count != SECTION_COUNT as u32 {
            return bad(
                "proxy_count",
                format!("the field is split into {SECTION_COUNT} quadrants; proxy_count must be {SECTION_COUNT}"),
            );
        }
        if self.node_count < self.proxy_count + 1 {
            return bad(
                "node_count",
                format!(
                    "{} nodes cannot hold {} proxies plus the sink",
                    self.node_count, self.proxy_count
                ),
            );
        }
        if !(self.radio_range > 0.0) {
            return bad("radio_range", "must be positive".into());
        }
        if !(self.area_side > 0.0) {
            return bad("area_side", "must be positive".into());
        }
        if !(self.warmup_s >= 0.0) {
            return bad("warmup_s", "must be non-negative".into());
        }
        if !(self.duration_s > self.warmup_s) {
            return bad("duration_s", "must exceed warmup_s".into());
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed_min", "need 0 < speed_min <= speed_max".into());
        }
        if !(self.mobility_tick_s > 0.0) {
            return bad("mobility_tick_s", "must be positive".into());
        }
        if self.message_size == 0 {
            return bad("message_size", "must be positive".into());
        }
        if self.segment_size == 0 || self.rwnd == 0 {
            return bad(
                "segment_size",
                "segment_size and rwnd must be positive".into(),
            );
        }
        if !(self.rto_min_s > 0.0 && self.rto_min_s <= self.rto_max_s) {
            return bad("rto_min_s", "need 0 < rto_min_s <= rto_max_s".into());
        }
        if !(self.init_cwnd >= 1.0 && self.init_ssthresh >= 2.0) {
            return bad(
                "init_cwnd",
                "need init_cwnd >= 1 and init_ssthresh >= 2".into(),
            );
        }
        if !(self.vegas_alpha <= self.vegas_beta) {
            return bad("vegas_alpha", "must not exceed vegas_beta".into());
        }
        if !(self.vegas_loss_factor > 0.0 && self.vegas_loss_factor <= 1.0) {
            return bad("vegas_loss_factor", "must lie in (0, 1]".into());
        }
        if !(self.data_rate_bps > 0.0) || self.cw_min > self.cw_max {
            return bad(
                "data_rate_bps",
                "need a positive rate and cw_min <= cw_max".into(),
            );
        }
        Ok(())
    }

    /// Stable identifier of the configuration, independent of the seed.
    pub fn scenario_id(&self) -> String {
        format!("{}-n{}-{}", self.variant, self.node_count, self.proxy_mode)
    }

    pub fn world_params(&self) -> WorldParams {
        let secs = Duration::from_secs_f64;
        WorldParams {
            radio_range: self.radio_range,
            mobility: self.mobility.then(|| MobilityParams {
                area_side: self.area_side,
                speed_min: self.speed_min,
                speed_max: self.speed_max,
                pause: secs(self.pause_s),
            }),
            mobility_tick: secs(self.mobility_tick_s),
            mac: MacConfig {
                data_rate_bps: self.data_rate_bps,
                difs: Duration::from_micros(self.difs_us),
                slot: Duration::from_micros(self.slot_us),
                cw_min: self.cw_min,
                cw_max: self.cw_max,
                retry_limit: self.retry_limit,
                frame_overhead_bytes: self.mac_overhead_bytes,
                ack_delay: Duration::from_micros(self.ack_delay_us),
                queue_limit: self.ifq_limit,
                backoff: self
                    .backoff_slots
                    .map_or(BackoffPolicy::Random, BackoffPolicy::Fixed),
            },
            aodv: AodvConfig {
                route_lifetime: secs(self.route_lifetime_s),
                discovery_timeout: secs(self.discovery_timeout_s),
                discovery_retries: self.discovery_retries,
                buffer_limit: self.route_buffer,
                rreq_jitter_max: secs(self.rreq_jitter_ms / 1e3),
            },
            tcp: TcpConfig {
                segment_size: self.segment_size,
                rwnd_segments: self.rwnd,
                rto_initial: secs(self.rto_initial_s),
                rto_min: secs(self.rto_min_s),
                rto_max: secs(self.rto_max_s),
                init_cwnd: self.init_cwnd,
                init_ssthresh: self.init_ssthresh,
                vegas_alpha: self.vegas_alpha,
                vegas_beta: self.vegas_beta,
                vegas_gamma: self.vegas_gamma,
                vegas_loss_factor: self.vegas_loss_factor,
                max_consecutive_timeouts: self.max_timeouts,
                send_buffer_bytes: self.send_buffer_bytes,
            },
            variant: self.variant,
            proxy_mode: self.proxy_mode,
            reporting_interval: self.traffic_state.reporting_interval(),
            message_size: self.message_size,
            batch_interval: secs(self.batch_interval_s),
            batch_bytes: self.batch_bytes,
            proxy_send_buffer: self.proxy_send_buffer_bytes,
            warmup: secs(self.warmup_s),
            duration: secs(self.duration_s),
            seed: self.seed,
        }
    }
}
