//! `wsnsim`: run scenarios, sweep grids, compare results and dump cwnd
//! traces.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use wsn_core::metrics::{aggregate, aggregate_csv, format_table, parse_csv, to_csv, MetricsRecord};
use wsn_core::phy_mac::NodeId;
use wsn_core::scenario::report::{any_failed, checks, checks_csv, format_report};
use wsn_core::scenario::{parse_grid, run_detailed, run_sweep, RunOptions, ScenarioConfig};

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("key=value scenario file; flags override its values"),
    );
    ScenarioConfig::KEYS.iter().fold(cmd, |cmd, &key| {
        cmd.arg(Arg::new(key).long(key).value_name("VALUE").hide(!matches!(
            key,
            "node_count"
                | "proxy_mode"
                | "variant"
                | "seed"
                | "duration_s"
                | "warmup_s"
                | "traffic_state"
                | "radio_range"
        )))
    })
}

fn out_arg() -> Arg {
    Arg::new("out")
        .long("out")
        .short('o')
        .value_name("FILE")
        .help("write output here instead of stdout")
}

fn cli() -> Command {
    Command::new("wsnsim")
        .about("Discrete-event simulator for TCP variants over mobile sensor networks")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help("Every scenario key is accepted as --<key> VALUE; `wsnsim keys` lists them with defaults.")
        .subcommand(
            config_args(Command::new("run").about("Run one scenario and print its CSV record"))
                .arg(out_arg())
                .arg(
                    Arg::new("stats")
                        .long("stats")
                        .action(ArgAction::SetTrue)
                        .help("print layer counters to stderr"),
                ),
        )
        .subcommand(
            Command::new("sweep")
                .about("Run every (config, seed) pair of a grid file")
                .arg(Arg::new("grid").required(true).value_name("GRID"))
                .arg(
                    Arg::new("parallelism")
                        .long("parallelism")
                        .short('j')
                        .value_parser(clap::value_parser!(usize))
                        .help("worker threads (0 = all cores); overrides the grid file"),
                )
                .arg(out_arg().help("per-run CSV (default stdout)"))
                .arg(Arg::new("aggregate").long("aggregate").value_name("FILE").help("per-config mean/std CSV"))
                .arg(Arg::new("table").long("table").value_name("FILE").help("human-readable tables")),
        )
        .subcommand(
            Command::new("report")
                .about("Compare proxy and non-proxy results; exits 1 if a trend check fails")
                .arg(Arg::new("csv").required(true).num_args(1..).value_name("CSV"))
                .arg(out_arg())
                .arg(Arg::new("checks").long("checks").value_name("FILE").help("machine-readable pass/fail CSV")),
        )
        .subcommand(
            config_args(Command::new("trace").about("Dump the cwnd trajectory of one node's connection"))
                .arg(
                    Arg::new("node")
                        .long("node")
                        .value_parser(clap::value_parser!(u32))
                        .default_value("1")
                        .help("node whose outgoing connection is traced"),
                )
                .arg(out_arg()),
        )
        .subcommand(Command::new("keys").about("List scenario keys with their defaults"))
}

fn build_config(m: &ArgMatches) -> Result<ScenarioConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => ScenarioConfig::load(Path::new(path))?,
        None => ScenarioConfig::default(),
    };
    for &key in ScenarioConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v, 0).with_context(|| format!("--{key}"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&String>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {path}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = build_config(m)?;
    let (record, outcome) = run_detailed(&cfg, RunOptions::default())?;
    if m.get_flag("stats") {
        eprintln!("{:#?}", outcome.stats);
    }
    emit(m.get_one("out"), &to_csv(&[record]))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(m: &ArgMatches) -> Result<ExitCode> {
    let path: &String = m.get_one("grid").expect("required");
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let mut spec = parse_grid(&text).with_context(|| path.clone())?;
    if let Some(&j) = m.get_one::<usize>("parallelism") {
        spec.parallelism = j;
    }
    let result = run_sweep(&spec)?;
    for f in &result.failures {
        eprintln!("run failed: {} seed {}: {}", f.scenario_id, f.seed, f.error);
    }
    emit(m.get_one("out"), &to_csv(&result.records))?;
    if let Some(p) = m.get_one::<String>("aggregate") {
        fs::write(p, aggregate_csv(&result.aggregates)).with_context(|| format!("writing {p}"))?;
    }
    if let Some(p) = m.get_one::<String>("table") {
        fs::write(p, format_table(&result.aggregates)).with_context(|| format!("writing {p}"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(m: &ArgMatches) -> Result<ExitCode> {
    let mut records: Vec<MetricsRecord> = Vec::new();
    for path in m.get_many::<String>("csv").expect("required") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        records.extend(parse_csv(&text).with_context(|| path.clone())?);
    }
    let aggs = aggregate(&records);
    let mut text = format_table(&aggs);
    text.push('\n');
    text.push_str(&format_report(&aggs));
    emit(m.get_one("out"), &text)?;
    let results = checks(&aggs);
    if let Some(p) = m.get_one::<String>("checks") {
        fs::write(p, checks_csv(&results)).with_context(|| format!("writing {p}"))?;
    }
    Ok(if any_failed(&results) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_trace(m: &ArgMatches) -> Result<ExitCode> {
    let cfg = build_config(m)?;
    let node = *m.get_one::<u32>("node").expect("defaulted");
    if node == 0 || node >= cfg.node_count {
        bail!("--node must name a non-sink node below {}", cfg.node_count);
    }
    let opts = RunOptions {
        trace_from: Some(NodeId(node)),
        ..RunOptions::default()
    };
    let (_, outcome) = run_detailed(&cfg, opts)?;
    let mut text = String::from("t_s,cwnd,ssthresh,state\n");
    for s in &outcome.cwnd_trace {
        text.push_str(&format!(
            "{:.9},{},{},{}\n",
            s.t.as_secs_f64(),
            s.cwnd,
            s.ssthresh,
            s.state.as_str()
        ));
    }
    emit(m.get_one("out"), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    let result = match m.subcommand() {
        Some(("run", m)) => cmd_run(m),
        Some(("sweep", m)) => cmd_sweep(m),
        Some(("report", m)) => cmd_report(m),
        Some(("trace", m)) => cmd_trace(m),
        Some(("keys", _)) => {
            print!("{}", ScenarioConfig::default().serialize());
            Ok(ExitCode::SUCCESS)
        }
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
