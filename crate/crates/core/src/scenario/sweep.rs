//! Multi-seed sweeps over a grid of configurations.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::metrics::{aggregate, sort_records, Aggregate, MetricsRecord};

use super::{config_lines, run_scenario, ConfigError, ScenarioConfig};

/// Every configuration is run once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub configs: Vec<ScenarioConfig>,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 lets the pool choose.
    pub parallelism: usize,
}

impl SweepSpec {
    /// The (config, seed) pairs to run, with duplicates removed.
    pub fn jobs(&self) -> Vec<ScenarioConfig> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.configs {
            for &seed in &self.seeds {
                let job = ScenarioConfig { seed, ..c.clone() };
                if seen.insert(job.serialize()) {
                    out.push(job);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFailure {
    pub scenario_id: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by the CSV key columns.
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<RunFailure>,
    pub aggregates: Vec<Aggregate>,
}

/// Runs every job of the spec. A failing run is reported in `failures`
/// and does not stop the others.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, rayon::ThreadPoolBuildError> {
    let jobs = spec.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|cfg| {
                run_scenario(cfg).map_err(|e| RunFailure {
                    scenario_id: cfg.scenario_id(),
                    seed: cfg.seed,
                    error: e.to_string(),
                })
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    sort_records(&mut records);
    failures.sort_by(|a, b| (&a.scenario_id, a.seed).cmp(&(&b.scenario_id, b.seed)));
    let aggregates = aggregate(&records);
    Ok(SweepResult {
        records,
        failures,
        aggregates,
    })
}

fn parse_seeds(line: usize, value: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = |msg: String| ConfigError::BadValue {
        line,
        key: "seeds".into(),
        msg,
    };
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|e| bad(format!("{e}")))?;
                let b: u64 = b.trim().parse().map_err(|e| bad(format!("{e}")))?;
                if a > b {
                    return Err(bad(format!("empty range {a}-{b}")));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|e| bad(format!("{e}")))?),
        }
    }
    Ok(out)
}

/// Parses a grid file: the config format, except that a value may be a
/// comma-separated list (expanded as a cartesian product in file order),
/// `seeds` takes a list or an inclusive range `a-b`, and `parallelism`
/// sets the worker count. Without `seeds` the grid runs seed 1.
pub fn parse_grid(text: &str) -> Result<SweepSpec, ConfigError> {
    let mut seeds = None;
    let mut parallelism = 0;
    let mut axes: Vec<(usize, &str, Vec<&str>)> = Vec::new();
    for (line, key, value) in config_lines(text)? {
        match key {
            "seeds" | "seed" => seeds = Some(parse_seeds(line, value)?),
            "parallelism" => {
                parallelism = value.parse().map_err(|e| ConfigError::BadValue {
                    line,
                    key: key.into(),
                    msg: format!("{e}"),
                })?
            }
            _ => {
                if axes.iter().any(|(_, k, _)| *k == key) {
                    return Err(ConfigError::Duplicate {
                        line,
                        key: key.into(),
                    });
                }
                let values = value.split(',').map(str::trim).collect();
                axes.push((line, key, values));
            }
        }
    }

    let mut configs = vec![ScenarioConfig::default()];
    for (line, key, values) in &axes {
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for base in &configs {
            for v in values {
                let mut c = base.clone();
                c.set(key, v, *line)?;
                next.push(c);
            }
        }
        configs = next;
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(SweepSpec {
        configs,
        seeds: seeds.unwrap_or_else(|| vec![1]),
        parallelism,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_counts() {
        let spec = parse_grid(
            "variant=tcp,reno,newreno,vegas\nnode_count=50,100,110\n\
             proxy_mode=none,middle,sink_neighbor\nseeds=1-10\n",
        )
        .unwrap();
        assert_eq!(spec.configs.len(), 36);
        assert_eq!(spec.jobs().len(), 360);
    }

    #[test]
    fn seed_lists_and_errors() {
        assert_eq!(parse_seeds(1, "1,3, 5-7").unwrap(), vec![1, 3, 5, 6, 7]);
        assert!(parse_seeds(1, "9-2").is_err());
        let err = parse_grid("node_count=50,x\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 1, .. }));
        let err = parse_grid("nodes=50\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn duplicate_pairs_run_once() {
        let spec = SweepSpec {
            configs: vec![ScenarioConfig::default(), ScenarioConfig::default()],
            seeds: vec![4, 4, 5],
            parallelism: 1,
        };
        assert_eq!(spec.jobs().len(), 2);
    }

    #[test]
    fn empty_spec_is_empty_result() {
        let spec = SweepSpec {
            configs: vec![],
            seeds: vec![1],
            parallelism: 1,
        };
        let r = run_sweep(&spec).unwrap();
        assert!(r.records.is_empty() && r.failures.is_empty() && r.aggregates.is_empty());
    }
}
