//! Scenario configuration, topology generation, single runs and sweeps.

mod config;
pub mod report;
mod sweep;

use thiserror::Error;

pub use config::{config_lines, ConfigError, ScenarioConfig};
pub use sweep::{parse_grid, run_sweep, RunFailure, SweepResult, SweepSpec};

use crate::app::{assign_sections, select_proxies, ProxyMode, SECTION_COUNT};
use crate::metrics::MetricsRecord;
use crate::phy_mac::{NodeId, Point};
use crate::sim::{RngStream, StreamKind};
use crate::world::{RunOutcome, Simulation, SimulationError, Topology, SINK};

/// Placement attempts before a scenario is rejected.
pub const MAX_PLACEMENT_ATTEMPTS: u32 = 100;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no placement with every quadrant occupied after {0} attempts")]
    Placement(u32),
    #[error("{scenario} seed {seed}: {source}")]
    Run {
        scenario: String,
        seed: u64,
        #[source]
        source: SimulationError,
    },
    #[error("{scenario} seed {seed}: message conservation violated")]
    Conservation { scenario: String, seed: u64 },
}

/// Draws node positions uniformly over the field with the sink pinned at
/// the centre, redrawing the whole placement while some quadrant has no
/// sensor in it.
pub fn generate_topology(
    cfg: &ScenarioConfig,
    rng: &mut RngStream,
) -> Result<Topology, ScenarioError> {
    let side = cfg.area_side;
    let n = cfg.node_count as usize;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut positions = Vec::with_capacity(n);
        positions.push(Point::new(side / 2.0, side / 2.0));
        for _ in 1..n {
            let x = rng.uniform(0.0, side);
            let y = rng.uniform(0.0, side);
            positions.push(Point::new(x, y));
        }
        let mut sections = assign_sections(&positions, side);
        let occupied = (0..SECTION_COUNT).all(|q| sections.members(q).any(|m| m != SINK));
        if !occupied {
            continue;
        }
        if cfg.proxy_mode != ProxyMode::None {
            let proxies = select_proxies(cfg.proxy_mode, &sections, &positions, SINK)
                .expect("every quadrant holds a sensor");
            sections.proxies = Some(proxies);
        }
        return Ok(Topology {
            positions,
            sections,
        });
    }
    Err(ScenarioError::Placement(MAX_PLACEMENT_ATTEMPTS))
}

/// Optional instrumentation for a detailed run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub segment_log: bool,
    pub trace_from: Option<NodeId>,
    pub relay_legs: bool,
}

/// Builds the topology, runs the world to the configured duration and
/// summarises the measurement window.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsRecord, ScenarioError> {
    run_detailed(cfg, RunOptions::default()).map(|(r, _)| r)
}

pub fn run_detailed(
    cfg: &ScenarioConfig,
    opts: RunOptions,
) -> Result<(MetricsRecord, RunOutcome), ScenarioError> {
    cfg.validate()?;
    let scenario = cfg.scenario_id();
    let ctx = |source| ScenarioError::Run {
        scenario: scenario.clone(),
        seed: cfg.seed,
        source,
    };
    let mut rng = RngStream::new(cfg.seed, StreamKind::Placement);
    let topology = generate_topology(cfg, &mut rng)?;
    let mut sim = Simulation::new(cfg.world_params(), topology).map_err(ctx)?;
    if opts.segment_log {
        sim.enable_segment_log();
    }
    if let Some(node) = opts.trace_from {
        sim.trace_connection_from(node);
    }
    if opts.relay_legs {
        sim.instrument_relay_legs();
    }
    let outcome = sim.run().map_err(ctx)?;
    let c = &outcome.collector;
    if !c.conserved() {
        return Err(ScenarioError::Conservation {
            scenario,
            seed: cfg.seed,
        });
    }
    let record = MetricsRecord {
        scenario_id: scenario,
        seed: cfg.seed,
        variant: cfg.variant,
        node_count: cfg.node_count,
        proxy_mode: cfg.proxy_mode,
        throughput_kbps: c.throughput_kbps(),
        mean_delay_ms: c.mean_delay_ms(),
        pdr: c.pdr(),
        generated: c.generated(),
        delivered: c.delivered(),
    };
    Ok((record, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_in_field_with_centred_sink() {
        let cfg = ScenarioConfig::default();
        let mut rng = RngStream::new(3, StreamKind::Placement);
        let t = generate_topology(&cfg, &mut rng).unwrap();
        assert_eq!(t.positions.len(), 50);
        assert_eq!(t.positions[0], Point::new(500.0, 500.0));
        for p in &t.positions {
            assert!((0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y));
        }
        assert!(t.sections.proxies.is_none());
    }

    #[test]
    fn same_seed_same_topology() {
        let cfg = ScenarioConfig {
            proxy_mode: ProxyMode::Middle,
            ..ScenarioConfig::default()
        };
        let a = generate_topology(&cfg, &mut RngStream::new(7, StreamKind::Placement)).unwrap();
        let b = generate_topology(&cfg, &mut RngStream::new(7, StreamKind::Placement)).unwrap();
        assert_eq!(a, b);
        let proxies = a.sections.proxies.unwrap();
        for (q, p) in proxies.iter().enumerate() {
            assert_eq!(a.sections.section_of[p.index()], q);
        }
    }

    #[test]
    fn short_run_produces_a_record() {
        let cfg = ScenarioConfig {
            duration_s: 30.0,
            warmup_s: 5.0,
            ..ScenarioConfig::default()
        };
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.scenario_id, "tcp-n50-none");
        assert!(r.delivered <= r.generated);
        assert!(r.generated > 0);
    }
}
