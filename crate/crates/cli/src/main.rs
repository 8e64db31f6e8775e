use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use macsim_core::adversary::{lowerbound_construct, replay_violation, ScheduleFile};
use macsim_core::experiment::{monte_carlo, CapsSpec, ExperimentConfig, Outputs, ProtocolSpec};
use macsim_core::protocol::validate_trace;
use macsim_core::sim::{exclusion_report, lockout_report, makespan, DEFAULT_HORIZON};
use macsim_core::{run, Epsilon, ExecutionTrace, ProtocolKind, RunOptions, Scenario, StatsReport, StrategySpec};

const SEED_ENV: &str = "MACSIM_SEED";

#[derive(Parser)]
#[command(name = "macsim", version, about = "Mutual exclusion on a shared multiple access channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one execution and write its trace.
    Simulate(SimulateArgs),
    /// Run many seeded trials and report statistics.
    Mc(McArgs),
    /// Build the surviving set for a list of transmission schedules and
    /// replay the resulting exclusion violation.
    Adversary(AdversaryArgs),
    /// Check a trace file and print its metrics.
    Validate(ValidateArgs),
}

/// Options shared by `simulate` and `mc`. Flags override the config file.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    /// Target error probability, as a fraction such as 1/16.
    #[arg(long)]
    epsilon: Option<Epsilon>,
    /// Wrap the protocol in the lockout-free fair selection layer.
    #[arg(long)]
    fair: bool,
    /// Upper bound on process ids used by the fair layer.
    #[arg(long)]
    id_bound: Option<usize>,
    /// Collision detection.
    #[arg(long)]
    cd: bool,
    /// Global clock.
    #[arg(long)]
    gc: bool,
    /// Processes know n.
    #[arg(long)]
    kn: bool,
    /// Process counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Adversary strategy file (JSON).
    #[arg(long, conflicts_with_all = ["scenario", "static_"])]
    strategy: Option<PathBuf>,
    /// Shorthand for `--scenario static`.
    #[arg(long = "static", conflicts_with = "scenario")]
    static_: bool,
    /// Root seed. Falls back to the config file, then MACSIM_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Round limit per run.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Generated adversary scenario.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Trace output (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Generated adversary scenarios; one report row per scenario and n.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<Scenario>,
    #[arg(long)]
    trials: Option<u64>,
    /// JSON report output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// CSV report output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AdversaryArgs {
    /// JSON file of the form {"schedules": ["101", "0", ...]}.
    #[arg(long)]
    schedules: PathBuf,
    /// Process count; defaults to the number of schedules.
    #[arg(long)]
    n: Option<usize>,
    /// Trace output for the replayed violation.
    #[arg(long, default_value = "lower-bound.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    trace: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Mc(args) => mc(args),
        Command::Adversary(args) => adversary(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("{SEED_ENV}={s} is not a seed"))?)),
        Err(_) => Ok(None),
    }
}

/// Merges the config file (if any) with the flags.
fn experiment(args: &ExperimentArgs, scenario: Option<Scenario>) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let Some(kind) = args.protocol else {
                bail!("either --config or --protocol is required");
            };
            ExperimentConfig {
                protocol: ProtocolSpec::new(kind),
                caps: CapsSpec::default(),
                n: Vec::new(),
                strategy: StrategySpec::scenario(Scenario::Static),
                trials: 1,
                seed: None,
                horizon: DEFAULT_HORIZON,
                outputs: Outputs::default(),
            }
        }
    };
    if let Some(kind) = args.protocol {
        if kind != cfg.protocol.kind {
            cfg.protocol = ProtocolSpec { epsilon: cfg.protocol.epsilon, ..ProtocolSpec::new(kind) };
        }
    }
    if let Some(eps) = args.epsilon {
        cfg.protocol.epsilon = eps;
    }
    cfg.protocol.fair |= args.fair;
    if args.id_bound.is_some() {
        cfg.protocol.id_bound = args.id_bound;
    }
    cfg.caps.cd |= args.cd;
    cfg.caps.gc |= args.gc;
    cfg.caps.kn |= args.kn;
    if !args.n.is_empty() {
        cfg.n = args.n.clone();
    }
    if cfg.n.is_empty() {
        if cfg.protocol.kind == ProtocolKind::PiMod {
            bail!("pi-mod needs the process count: pass --n or set n in the config");
        }
        bail!("the process count is missing: pass --n or set n in the config");
    }
    if let Some(path) = &args.strategy {
        cfg.strategy = StrategySpec::File { path: path.clone() };
    } else if args.static_ {
        cfg.strategy = StrategySpec::scenario(Scenario::Static);
    } else if let Some(s) = scenario {
        cfg.strategy = StrategySpec::scenario(s);
    }
    cfg.seed = Some(match (args.seed, cfg.seed) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => env_seed()?.unwrap_or(0),
    });
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let cfg = experiment(&args.exp, args.scenario)?;
    let &[n] = cfg.n.as_slice() else {
        bail!("simulate runs a single process count; got n = {:?}", cfg.n);
    };
    let seed = cfg.seed.unwrap_or(0);
    let protocol = cfg.protocol.build();
    let caps = cfg.caps(n);
    protocol.check(&caps)?;
    let strategy = cfg.strategy.build(n, seed)?;
    let trace = run(protocol.as_ref(), &strategy, &caps, &RunOptions { seed, horizon: cfg.horizon })?;
    let out = args.out.or(cfg.outputs.trace).unwrap_or_else(|| PathBuf::from("trace.jsonl"));
    write_trace(&trace, &out)?;
    let ok = summarize(&trace);
    println!("trace: {}", out.display());
    Ok(ok)
}

fn mc(args: McArgs) -> Result<bool> {
    let mut cfg = experiment(&args.exp, None)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let variants: Vec<ExperimentConfig> = if args.scenario.is_empty() {
        vec![cfg.clone()]
    } else {
        args.scenario
            .iter()
            .map(|&s| ExperimentConfig { strategy: StrategySpec::scenario(s), ..cfg.clone() })
            .collect()
    };
    let mut report = StatsReport { seed: cfg.seed.unwrap_or(0), rows: Vec::new() };
    for v in &variants {
        report.rows.extend(monte_carlo(v)?.rows);
    }

    let json_path = args.json.or(cfg.outputs.report_json);
    let csv_path = args.csv.or(cfg.outputs.report_csv);
    if let Some(path) = &json_path {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &csv_path {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for row in &report.rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }

    println!("seed: {}", report.seed);
    println!(
        "{:<22} {:<11} {:>5} {:>7} {:>10} {:>12} {:>10} {:>10} {:>11}",
        "protocol", "scenario", "n", "trials", "admissible", "mean", "median", "max", "violations"
    );
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    for r in &report.rows {
        println!(
            "{:<22} {:<11} {:>5} {:>7} {:>10} {:>12} {:>10} {:>10} {:>11.5}",
            r.protocol,
            r.scenario,
            r.n,
            r.trials,
            r.admissible_trials,
            fmt(r.makespan_mean),
            fmt(r.makespan_median),
            fmt(r.makespan_max),
            r.violation_rate
        );
    }
    for p in json_path.iter().chain(csv_path.iter()) {
        println!("report: {}", p.display());
    }
    Ok(true)
}

fn adversary(args: AdversaryArgs) -> Result<bool> {
    let text =
        std::fs::read_to_string(&args.schedules).with_context(|| format!("reading {}", args.schedules.display()))?;
    let schedules = ScheduleFile::parse(&text).with_context(|| format!("in {}", args.schedules.display()))?;
    let n = args.n.unwrap_or(schedules.len());
    let fp = lowerbound_construct(&schedules, n)?;
    println!("n: {n}");
    println!("p_star: {:?}", fp.p_star);
    println!("iterations: {}", fp.iterations);
    println!("shortest schedule: {}", fp.shortest_len);
    println!("at least two survivors: {}", fp.post.at_least_two);
    println!("no unique transmitter in window: {}", fp.post.no_unique_transmitter);
    println!("shortest schedule shared: {}", fp.post.shared_minimum);
    if !fp.post.all() {
        println!("post-conditions: failed");
        return Ok(false);
    }
    let (trace, noise_only) = replay_violation(&schedules, &fp.p_star)?;
    write_trace(&trace, &args.out)?;
    let overlap = validate_trace(&trace)
        .into_iter()
        .find(|v| matches!(v, macsim_core::Violation::ExclusionViolation { .. }));
    println!("listeners heard only noise: {noise_only}");
    match &overlap {
        Some(v) => println!("violation: {v}"),
        None => println!("violation: none"),
    }
    println!("trace: {}", args.out.display());
    Ok(overlap.is_some() && noise_only)
}

fn validate(args: ValidateArgs) -> Result<bool> {
    let file = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = ExecutionTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("in {}", args.trace.display()))?;
    Ok(summarize(&trace))
}

fn write_trace(trace: &ExecutionTrace, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Prints rule breaks and metrics; false if the trace breaks a rule that
/// no protocol may break.
fn summarize(trace: &ExecutionTrace) -> bool {
    let m = &trace.meta;
    let violations = validate_trace(trace);
    let fatal = violations.iter().filter(|v| v.is_fatal()).count();
    let mk = makespan(trace);
    let ex = exclusion_report(trace);
    let lo = lockout_report(trace);
    let caps: Vec<&str> =
        [(m.caps.cd, "cd"), (m.caps.gc, "gc"), (m.caps.kn, "kn")].into_iter().filter(|c| c.0).map(|c| c.1).collect();
    println!("protocol: {}", m.protocol);
    println!("strategy: {}", m.strategy);
    println!("n: {}", m.n);
    println!("seed: {}", m.seed);
    println!("capabilities: {}", if caps.is_empty() { "none".to_string() } else { caps.join(",") });
    println!("rounds: {}", m.rounds);
    println!("truncated: {}", m.truncated);
    println!("makespan: {}{}", mk.max_gap, if mk.open_gap() { " (open gap)" } else { "" });
    println!("admissible: {}", mk.admissible);
    println!("critical visits: {}", ex.visits.len());
    println!("overlapping visits: {}", ex.violated_visits);
    println!("entries: {}", lo.entries.len());
    println!("unfulfilled entries: {}", lo.unfulfilled(0).len());
    if let Some(w) = lo.max_wait() {
        println!("longest wait: {w}");
    }
    println!("rule breaks: {} ({} fatal)", violations.len(), fatal);
    for v in violations.iter().take(20) {
        println!("  {v}");
    }
    if violations.len() > 20 {
        println!("  ... {} more", violations.len() - 20);
    }
    fatal == 0
}

