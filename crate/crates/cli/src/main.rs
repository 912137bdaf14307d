use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use uplink_sched::exec::Execution;
use uplink_sched::experiment::{
    oracle_check, run_compare, write_compare_csv, write_compare_json, BandwidthSource, CompareSpec, OracleCheckConfig,
};
use uplink_sched::gating::{gate, select_representative_roi, GateThresholds, SeverityOrder};
use uplink_sched::oracle::DEFAULT_N_MAX;
use uplink_sched::simulator::{gen_events, run, AlarmWeighting, ArrivalPattern, GenParams, StarvationMode, TraceMode};
use uplink_sched::traceio::{
    emit_results, load_bandwidth_csv, load_detections, load_events, write_event_records, BandMode, BandwidthUnits,
    ResultFormat,
};
use uplink_sched::{JsonOnlyOrder, MetricsReport, PolicyId, SimulationConfig};

#[derive(Parser)]
#[command(name = "uplinksim", version, about = "Priority- and bandwidth-aware uplink scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gate and route frames from a detection trace (JSON lines).
    Gate(GateArgs),
    /// Generate a synthetic event trace.
    GenEvents(GenArgs),
    /// Replay an event trace over a bandwidth trace under one policy.
    Simulate(SimulateArgs),
    /// Run a policy comparison matrix.
    Compare(CompareArgs),
    /// Check the greedy scheduler against the exact solver on random instances.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct GateArgs {
    /// Detection trace, one frame per line.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    tau_low: f64,
    #[arg(long, default_value_t = 0.8)]
    tau_high: f64,
    /// Class labels from most to least severe.
    #[arg(long, value_delimiter = ',', default_value = "severe,moderate")]
    severity: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_pattern)]
    pattern: ArrivalPattern,
    /// Trace length in seconds.
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score threshold between the two priority levels.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Summary,
    PerEvent,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    BytesPerSec,
    Kbps,
}

#[derive(Clone, Copy, ValueEnum)]
enum BandArg {
    Clamp,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum JsonOrderArg {
    GainPerByte,
    Priority,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Mean,
    Sum,
}

#[derive(Args)]
struct SimArgs {
    /// Visual deadline in seconds.
    #[arg(long, default_value_t = 1.5)]
    dvis: f64,
    /// Scheduling interval in seconds.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Alert parse time added to every alarm, in seconds.
    #[arg(long, default_value_t = 0.0)]
    t_parse: f64,
    /// Alert ordering used by the json-only policy.
    #[arg(long, value_enum, default_value = "gain-per-byte")]
    json_only_order: JsonOrderArg,
    /// Fail when the bandwidth trace runs out instead of wrapping.
    #[arg(long)]
    strict_trace: bool,
    /// Fail on events whose alert can never fit instead of flagging them.
    #[arg(long)]
    strict_starvation: bool,
    /// Weighted alarm delay as a mean or an unnormalized sum.
    #[arg(long, value_enum, default_value = "mean")]
    w_alarm: WeightingArg,
}

impl SimArgs {
    fn config(&self, policy: PolicyId, scale: f64) -> SimulationConfig {
        SimulationConfig {
            interval_delta: self.interval,
            d_vis: self.dvis,
            beta: self.beta,
            gamma: self.gamma,
            bandwidth_scale: scale,
            t_parse: self.t_parse,
            policy,
            json_only_order: match self.json_only_order {
                JsonOrderArg::GainPerByte => JsonOnlyOrder::GainPerByte,
                JsonOrderArg::Priority => JsonOnlyOrder::Priority,
            },
            trace_mode: if self.strict_trace { TraceMode::Strict } else { TraceMode::Wrap },
            starvation: if self.strict_starvation { StarvationMode::Error } else { StarvationMode::Flag },
            alarm_weighting: match self.w_alarm {
                WeightingArg::Mean => AlarmWeighting::Mean,
                WeightingArg::Sum => AlarmWeighting::Sum,
            },
            ..SimulationConfig::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Bandwidth trace CSV with header `t_sec,bytes_per_sec`.
    #[arg(long)]
    bw_trace: PathBuf,
    /// Event trace, one record per line.
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_parser = parse_policy)]
    policy: PolicyId,
    /// Bandwidth multiplier.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, value_enum, default_value = "bytes-per-sec")]
    bandwidth_units: UnitsArg,
    /// Out-of-band scores are clamped or rejected.
    #[arg(long, value_enum, default_value = "clamp")]
    band_mode: BandArg,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "summary")]
    format: FormatArg,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_policy, default_value = "dat,priority-only,bandwidth-only")]
    policies: Vec<PolicyId>,
    #[arg(long, value_delimiter = ',', value_parser = parse_pattern, default_value = "burst")]
    patterns: Vec<ArrivalPattern>,
    #[arg(long, value_delimiter = ',', default_value = "0.25")]
    scales: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Synthetic workload length in seconds.
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
    /// Visual deadlines to sweep; overrides --dvis.
    #[arg(long, value_delimiter = ',')]
    dvis_sweep: Vec<f64>,
    /// Bandwidth trace CSV; a seeded flat-plus-noise trace is used when absent.
    #[arg(long)]
    bw_trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bytes-per-sec")]
    bandwidth_units: UnitsArg,
    /// Base rate of the synthetic trace in bytes per second.
    #[arg(long, default_value_t = 2_000_000)]
    bw_base: u64,
    /// Relative standard deviation of the synthetic trace.
    #[arg(long, default_value_t = 0.1)]
    bw_noise: f64,
    #[command(flatten)]
    sim: SimArgs,
    /// Matrix output as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matrix output as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run scenarios on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Maximum events per instance.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Give every instance enough budget for all alerts.
    #[arg(long)]
    force_json_fit: bool,
    /// Schedule alerts only.
    #[arg(long)]
    no_visuals: bool,
    #[arg(long)]
    sequential: bool,
}

fn parse_policy(s: &str) -> Result<PolicyId, String> {
    s.parse()
}

fn parse_pattern(s: &str) -> Result<ArrivalPattern, String> {
    s.parse().map_err(|e: uplink_sched::simulator::WorkloadError| e.to_string())
}

fn units(u: UnitsArg) -> BandwidthUnits {
    match u {
        UnitsArg::BytesPerSec => BandwidthUnits::BytesPerSec,
        UnitsArg::Kbps => BandwidthUnits::Kbps,
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_headline(m: &MetricsReport) {
    println!("W-Alarm       {}", fmt_opt(m.w_alarm_s));
    for p in &m.vtr {
        println!("VTR@{:<9} {:.4}", format!("{}s", p.deadline_s), p.fraction);
    }
    println!("AvgVisDelay   {}", fmt_opt(m.avg_visual_delay_s));
    let c = &m.counts;
    println!(
        "events {}  alarms {}  visuals {}  expired {}  starved {}",
        c.events, c.alarms_delivered, c.visuals_delivered, c.visuals_expired, c.starved
    );
}

fn cmd_gate(a: GateArgs) -> Result<()> {
    let thresholds = GateThresholds::new(a.tau_low, a.tau_high)?;
    let order = SeverityOrder::new(a.severity);
    let frames = load_detections(&a.detections)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    for f in &frames {
        let d = gate(f, &thresholds);
        let roi = if d.gate { select_representative_roi(&d.valid_set, &order).ok() } else { None };
        let line = json!({
            "frame_id": f.frame_id,
            "timestamp_s": f.timestamp_s,
            "trigger_score": d.trigger_score,
            "gate": d.gate,
            "route": d.route,
            "valid": d.valid_set.len(),
            "roi": roi,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let params = GenParams { gamma: a.gamma, ..GenParams::default() };
    let records = gen_events(a.pattern, a.duration, a.seed, &params)?;
    write_event_records(create(&a.out)?, &records).with_context(|| format!("cannot write {}", a.out.display()))?;
    eprintln!("wrote {} events to {}", records.len(), a.out.display());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let config = a.sim.config(a.policy, a.scale);
    config.validate()?;
    let trace = load_bandwidth_csv(&a.bw_trace, config.interval_delta, units(a.bandwidth_units))?;
    let band = match a.band_mode {
        BandArg::Clamp => BandMode::Clamp,
        BandArg::Strict => BandMode::Strict,
    };
    let events = load_events(&a.events, config.beta, config.gamma, band)?;
    let (ledger, report) = run(&trace, &events, &config)?;
    print_headline(&report);
    if let Some(out) = &a.out {
        let format = match a.format {
            FormatArg::Summary => ResultFormat::Summary,
            FormatArg::PerEvent => ResultFormat::PerEvent,
        };
        emit_results(&ledger, &report, &config, out, format)?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let base = a.sim.config(PolicyId::Dat, 1.0);
    let bandwidth = match &a.bw_trace {
        Some(p) => BandwidthSource::Trace(load_bandwidth_csv(p, base.interval_delta, units(a.bandwidth_units))?),
        None => {
            if a.bw_base == 0 {
                bail!("--bw-base must be positive");
            }
            BandwidthSource::FlatNoise { base: a.bw_base, noise: a.bw_noise }
        }
    };
    let spec = CompareSpec {
        policies: a.policies,
        patterns: a.patterns,
        scales: a.scales,
        seeds: a.seeds,
        duration_s: a.duration,
        d_vis_values: a.dvis_sweep,
        bandwidth,
        base,
        gen: GenParams::default(),
    };
    let report = run_compare(&spec, exec(a.sequential))?;

    for r in &report.rows {
        let m = &r.metrics;
        let vtr: Vec<String> = m.vtr.iter().map(|p| format!("{:.4}", p.fraction)).collect();
        println!(
            "{:<7} x{:<5} seed {:<4} dvis {:<5} {:<15} w_alarm {}  vtr {}  avg_vis {}",
            r.pattern,
            r.scale,
            r.seed,
            r.d_vis,
            r.policy,
            fmt_opt(m.w_alarm_s),
            vtr.join("/"),
            fmt_opt(m.avg_visual_delay_s)
        );
    }
    for w in &report.winners {
        let names: Vec<&str> = w.policies.iter().map(|p| p.name()).collect();
        println!(
            "best {:<17} {} x{} seed {} dvis {}: {} ({:.4})",
            w.metric,
            w.pattern,
            w.scale,
            w.seed,
            w.d_vis,
            names.join("+"),
            w.value
        );
    }
    if let Some(p) = &a.out {
        write_compare_json(create(p)?, &report).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &a.csv {
        write_compare_csv(create(p)?, &report).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let cfg = OracleCheckConfig {
        n: a.n,
        trials: a.trials,
        seed: a.seed,
        force_json_fit: a.force_json_fit,
        visuals: !a.no_visuals,
        n_max: DEFAULT_N_MAX,
    };
    let rep = oracle_check(&cfg, exec(a.sequential))?;
    println!("trials              {}", rep.trials);
    println!("infeasible          {}", rep.infeasible);
    println!("dominance failures  {}", rep.dominance_failures);
    println!("exact matches       {} ({:.2}%)", rep.exact_matches, 100.0 * rep.match_fraction());
    println!("primary gap         mean {:.6e}  max {:.6e}", rep.mean_primary_gap, rep.max_primary_gap);
    println!("secondary gap       mean {:.6e}", rep.mean_secondary_gap);
    println!("mean enumeration    {:.1}", rep.mean_enumeration);
    if !rep.passed() {
        bail!("{} infeasible, {} dominance failures", rep.infeasible, rep.dominance_failures);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gate(a) => cmd_gate(a),
        Command::GenEvents(a) => cmd_gen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::OracleCheck(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
