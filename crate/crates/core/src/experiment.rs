//! Batch drivers: random single-interval instances, greedy-versus-exact
//! checks and policy comparison matrices.

use std::cmp::Ordering;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::PolicyId;
use crate::exec::Execution;
use crate::oracle::{compare, exact_lexicographic, Instance, OracleError, OracleOptions, DEFAULT_N_MAX};
use crate::priority::SemanticPriority;
use crate::scheduler::{json_load, schedule_interval_with, Event, GreedyOptions, IntervalContext, ScheduleError};
use crate::simulator::{
    flat_noise_trace, gen_events, run, ArrivalPattern, GenParams, MetricsReport, SimError, SimulationConfig,
    WorkloadError,
};
use crate::traceio::{events_from_records, BandMode, BandwidthTrace, TraceError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Config(String),
}

/// Per-trial RNG, independent of how trials are distributed over threads.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

// ---------------------------------------------------------------------------
// Random single-interval instances

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub min_events: usize,
    pub max_events: usize,
    /// Upper bound on events already alerted in an earlier interval.
    pub max_carried: usize,
    /// Guarantee that every pending alert fits the budget.
    pub force_json_fit: bool,
    /// Probability of drawing priorities and sizes on a coarse grid so
    /// that ties occur.
    pub tie_prob: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self { min_events: 1, max_events: 64, max_carried: 8, force_json_fit: false, tie_prob: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct RandomInterval {
    pub pending: Vec<Event>,
    pub carried: Vec<Event>,
    pub bandwidth: u64,
    pub delta: f64,
    pub d_vis: f64,
}

impl RandomInterval {
    pub fn context(&self) -> Result<IntervalContext<'_>, ScheduleError> {
        IntervalContext::new(
            self.bandwidth,
            self.delta,
            self.d_vis,
            self.pending.iter().collect(),
            self.carried.iter().collect(),
        )
    }

    /// The pending events as an exact-solver instance.
    pub fn instance(&self, t_parse: f64) -> Instance {
        Instance {
            events: self.pending.clone(),
            bandwidth: self.bandwidth,
            delta: self.delta,
            d_vis: self.d_vis,
            t_parse,
        }
    }
}

fn random_event<R: Rng>(rng: &mut R, id: String, coarse: bool) -> Event {
    let (s, j, r, b) = if coarse {
        (
            rng.random_range(1..=10) as f64 / 10.0,
            rng.random_range(1..=20u64) * 1_000,
            rng.random_range(1..=120u64) * 1_000,
            rng.random_range(1..=160u64) * 1_000,
        )
    } else {
        (
            rng.random_range(0.001..=1.0),
            rng.random_range(200..=20_000u64),
            rng.random_range(1_000..=120_000u64),
            rng.random_range(1_000..=160_000u64),
        )
    };
    Event::new(id, 0.0, SemanticPriority::new(s), j, r, b).expect("positive sizes")
}

pub fn random_interval<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> RandomInterval {
    let coarse = rng.random_bool(spec.tie_prob);
    let n = rng.random_range(spec.min_events..=spec.max_events.max(spec.min_events));
    let pending: Vec<Event> = (0..n).map(|i| random_event(rng, format!("p{i:03}"), coarse)).collect();
    let n_carried = if spec.max_carried == 0 { 0 } else { rng.random_range(0..=spec.max_carried) };
    let carried: Vec<Event> = (0..n_carried).map(|i| random_event(rng, format!("c{i:03}"), coarse)).collect();

    let load = json_load(&pending).max(1);
    let visual: u64 = pending.iter().chain(&carried).map(|e| e.visual_choice().1).sum();
    let regime = if spec.force_json_fit { rng.random_range(2..4) } else { rng.random_range(0..4) };
    let target = match regime {
        0 => rng.random_range(1..=load.div_ceil(2)),
        1 => rng.random_range(load.div_ceil(2)..=load),
        2 => rng.random_range(load..=load + visual / 2),
        _ => rng.random_range(load + visual / 2..=load + 2 * visual + 1),
    };
    let delta = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let bandwidth = ((target as f64 / delta).ceil() as u64).max(1);
    let d_vis = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0][rng.random_range(0..6)];
    RandomInterval { pending, carried, bandwidth, delta, d_vis }
}

// ---------------------------------------------------------------------------
// Greedy versus exact

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckConfig {
    /// Maximum events per instance; instances draw between 1 and `n`.
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub force_json_fit: bool,
    pub visuals: bool,
    pub n_max: usize,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self { n: DEFAULT_N_MAX, trials: 1000, seed: 1, force_json_fit: false, visuals: true, n_max: DEFAULT_N_MAX }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub feasible: bool,
    pub dominance: bool,
    pub primary_match: bool,
    pub primary_gap: f64,
    pub secondary_gap: f64,
    pub enumeration_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub trials: u64,
    pub infeasible: u64,
    pub dominance_failures: u64,
    pub exact_matches: u64,
    pub mean_primary_gap: f64,
    pub max_primary_gap: f64,
    pub mean_secondary_gap: f64,
    pub mean_enumeration: f64,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.infeasible == 0 && self.dominance_failures == 0
    }

    pub fn match_fraction(&self) -> f64 {
        if self.trials == 0 {
            1.0
        } else {
            self.exact_matches as f64 / self.trials as f64
        }
    }
}

pub fn oracle_trial(ri: &RandomInterval, visuals: bool, n_max: usize) -> Result<TrialOutcome, OracleError> {
    let inst = ri.instance(0.0);
    let ctx = inst.context()?;
    let greedy = schedule_interval_with(&ctx, GreedyOptions { visual_stage: visuals });
    let opts = OracleOptions { n_max, allow_visuals: visuals, ..Default::default() };
    let exact = exact_lexicographic(&inst, opts)?;
    match compare(&greedy, &exact, &inst) {
        Ok(gap) => Ok(TrialOutcome {
            feasible: true,
            dominance: gap.dominance_holds(),
            primary_match: gap.primary_match(),
            primary_gap: gap.primary_gap_f64(),
            secondary_gap: gap.secondary_gap_f64(),
            enumeration_count: exact.enumeration_count,
        }),
        Err(OracleError::InfeasibleGreedy(_)) => Ok(TrialOutcome {
            feasible: false,
            dominance: false,
            primary_match: false,
            primary_gap: f64::NAN,
            secondary_gap: f64::NAN,
            enumeration_count: exact.enumeration_count,
        }),
        Err(e) => Err(e),
    }
}

pub fn oracle_check(cfg: &OracleCheckConfig, exec: Execution) -> Result<OracleCheckReport, OracleError> {
    if cfg.n > cfg.n_max {
        return Err(OracleError::TooManyEvents { got: cfg.n, limit: cfg.n_max });
    }
    let spec = InstanceSpec {
        min_events: 1,
        max_events: cfg.n,
        max_carried: 0,
        force_json_fit: cfg.force_json_fit,
        tie_prob: 0.2,
    };
    let trials: Vec<u64> = (0..cfg.trials).collect();
    let outcomes = exec.try_map(&trials, |&t| {
        let ri = random_interval(&mut trial_rng(cfg.seed, t), &spec);
        oracle_trial(&ri, cfg.visuals, cfg.n_max)
    })?;

    let mut rep = OracleCheckReport {
        trials: cfg.trials,
        infeasible: 0,
        dominance_failures: 0,
        exact_matches: 0,
        mean_primary_gap: 0.0,
        max_primary_gap: 0.0,
        mean_secondary_gap: 0.0,
        mean_enumeration: 0.0,
    };
    let mut feasible = 0u64;
    for o in &outcomes {
        rep.mean_enumeration += o.enumeration_count as f64;
        if !o.feasible {
            rep.infeasible += 1;
            continue;
        }
        feasible += 1;
        rep.dominance_failures += u64::from(!o.dominance);
        rep.exact_matches += u64::from(o.primary_match);
        rep.mean_primary_gap += o.primary_gap;
        rep.mean_secondary_gap += o.secondary_gap;
        rep.max_primary_gap = rep.max_primary_gap.max(o.primary_gap);
    }
    if feasible > 0 {
        rep.mean_primary_gap /= feasible as f64;
        rep.mean_secondary_gap /= feasible as f64;
    }
    if cfg.trials > 0 {
        rep.mean_enumeration /= cfg.trials as f64;
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Comparison matrices

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSource {
    Trace(BandwidthTrace),
    /// Seeded flat-plus-noise trace, regenerated per workload seed.
    FlatNoise { base: u64, noise: f64 },
}

#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub policies: Vec<PolicyId>,
    pub patterns: Vec<ArrivalPattern>,
    pub scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    /// Empty means `base.d_vis` only.
    pub d_vis_values: Vec<f64>,
    pub bandwidth: BandwidthSource,
    pub base: SimulationConfig,
    pub gen: GenParams,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            policies: vec![PolicyId::Dat, PolicyId::PriorityOnly, PolicyId::BandwidthOnly],
            patterns: vec![ArrivalPattern::Burst],
            scales: vec![0.25],
            seeds: vec![1],
            duration_s: 300.0,
            d_vis_values: Vec::new(),
            bandwidth: BandwidthSource::FlatNoise { base: 2_000_000, noise: 0.1 },
            base: SimulationConfig::default(),
            gen: GenParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub pattern: ArrivalPattern,
    pub scale: f64,
    pub seed: u64,
    pub d_vis: f64,
    pub policy: PolicyId,
    pub metrics: MetricsReport,
}

impl CompareRow {
    fn scenario_cmp(&self, other: &Self) -> Ordering {
        self.pattern
            .cmp(&other.pattern)
            .then(self.scale.total_cmp(&other.scale))
            .then(self.seed.cmp(&other.seed))
            .then(self.d_vis.total_cmp(&other.d_vis))
    }

    fn same_scenario(&self, other: &Self) -> bool {
        self.scenario_cmp(other) == Ordering::Equal
    }
}

fn policy_rank(p: PolicyId) -> usize {
    PolicyId::ALL.iter().position(|&q| q == p).unwrap_or(usize::MAX)
}

/// Best policy (or tied policies) for one metric within one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub pattern: ArrivalPattern,
    pub scale: f64,
    pub seed: u64,
    pub d_vis: f64,
    pub metric: String,
    pub policies: Vec<PolicyId>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub winners: Vec<Winner>,
}

impl CompareReport {
    pub fn row(&self, pattern: ArrivalPattern, scale: f64, seed: u64, d_vis: f64, policy: PolicyId) -> Option<&CompareRow> {
        self.rows
            .iter()
            .find(|r| r.pattern == pattern && r.scale == scale && r.seed == seed && r.d_vis == d_vis && r.policy == policy)
    }
}

fn trace_for(source: &BandwidthSource, seed: u64, duration_s: f64, period: f64) -> BandwidthTrace {
    match source {
        BandwidthSource::Trace(t) => t.clone(),
        BandwidthSource::FlatNoise { base, noise } => {
            let len = (duration_s / period).ceil() as usize + 1;
            flat_noise_trace(*base, *noise, len, period, seed ^ 0x5eed_ba4d)
        }
    }
}

fn pick_winners(group: &[CompareRow], deadlines: &[f64], out: &mut Vec<Winner>) {
    let Some(first) = group.first() else { return };
    let mut metrics: Vec<(String, bool, Box<dyn Fn(&MetricsReport) -> Option<f64>>)> = Vec::new();
    metrics.push(("w_alarm".into(), false, Box::new(|m: &MetricsReport| m.w_alarm_s)));
    for &d in deadlines {
        metrics.push((format!("vtr@{d}"), true, Box::new(move |m: &MetricsReport| m.vtr_at(d))));
    }
    metrics.push(("avg_visual_delay".into(), false, Box::new(|m: &MetricsReport| m.avg_visual_delay_s)));

    for (name, higher_better, get) in metrics {
        let vals: Vec<(PolicyId, f64)> = group.iter().filter_map(|r| get(&r.metrics).map(|v| (r.policy, v))).collect();
        let best = vals.iter().map(|&(_, v)| v).reduce(|a, b| if (b > a) == higher_better { b } else { a });
        let Some(best) = best else { continue };
        out.push(Winner {
            pattern: first.pattern,
            scale: first.scale,
            seed: first.seed,
            d_vis: first.d_vis,
            metric: name,
            policies: vals.iter().filter(|&&(_, v)| v == best).map(|&(p, _)| p).collect(),
            value: best,
        });
    }
}

pub fn run_compare(spec: &CompareSpec, exec: Execution) -> Result<CompareReport, ExperimentError> {
    if spec.policies.is_empty() || spec.patterns.is_empty() || spec.scales.is_empty() || spec.seeds.is_empty() {
        return Err(ExperimentError::Config("compare needs at least one policy, pattern, scale and seed".into()));
    }
    if let Some(s) = spec.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(ExperimentError::Config(format!("scale must be positive, got {s}")));
    }
    spec.base.validate()?;
    let d_vis_values = if spec.d_vis_values.is_empty() { vec![spec.base.d_vis] } else { spec.d_vis_values.clone() };
    let gen = GenParams { gamma: spec.base.gamma, ..spec.gen.clone() };

    let workloads: Vec<(ArrivalPattern, u64)> =
        spec.patterns.iter().flat_map(|&p| spec.seeds.iter().map(move |&s| (p, s))).collect();
    let events = exec.try_map(&workloads, |&(pattern, seed)| -> Result<Vec<Event>, ExperimentError> {
        let records = gen_events(pattern, spec.duration_s, seed, &gen)?;
        let numbered: Vec<(usize, _)> = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Ok(events_from_records(&numbered, spec.base.beta, spec.base.gamma, BandMode::Strict)?)
    })?;

    let mut jobs = Vec::new();
    for (w, &(pattern, seed)) in workloads.iter().enumerate() {
        for &scale in &spec.scales {
            for &d_vis in &d_vis_values {
                for &policy in &spec.policies {
                    jobs.push((w, pattern, seed, scale, d_vis, policy));
                }
            }
        }
    }
    let mut rows = exec.try_map(&jobs, |&(w, pattern, seed, scale, d_vis, policy)| -> Result<CompareRow, ExperimentError> {
        let config = SimulationConfig { bandwidth_scale: scale, d_vis, policy, seed, ..spec.base.clone() };
        let trace = trace_for(&spec.bandwidth, seed, spec.duration_s, config.interval_delta);
        let (_, metrics) = run(&trace, &events[w], &config)?;
        Ok(CompareRow { pattern, scale, seed, d_vis, policy, metrics })
    })?;
    rows.sort_by(|a, b| a.scenario_cmp(b).then(policy_rank(a.policy).cmp(&policy_rank(b.policy))));

    let mut winners = Vec::new();
    for group in rows.chunk_by(|a, b| a.same_scenario(b)) {
        pick_winners(group, &spec.base.vtr_deadlines, &mut winners);
    }
    Ok(CompareReport { rows, winners })
}

pub fn write_compare_json<W: Write>(mut w: W, report: &CompareReport) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line per row with the headline metrics.
pub fn write_compare_csv<W: Write>(w: W, report: &CompareReport) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let deadlines: Vec<f64> = report
        .rows
        .first()
        .map(|r| r.metrics.vtr.iter().map(|p| p.deadline_s).collect())
        .unwrap_or_default();
    let mut header = vec!["pattern".to_owned(), "scale".into(), "seed".into(), "d_vis".into(), "policy".into(), "w_alarm_s".into()];
    header.extend(deadlines.iter().map(|d| format!("vtr@{d}")));
    header.extend(["avg_visual_delay_s".into(), "events".into(), "visuals_delivered".into(), "visuals_expired".into(), "starved".into()]);
    wtr.write_record(&header)?;
    for r in &report.rows {
        let m = &r.metrics;
        let mut rec = vec![
            r.pattern.to_string(),
            r.scale.to_string(),
            r.seed.to_string(),
            r.d_vis.to_string(),
            r.policy.to_string(),
            opt(m.w_alarm_s),
        ];
        rec.extend(deadlines.iter().map(|&d| opt(m.vtr_at(d))));
        rec.extend([
            opt(m.avg_visual_delay_s),
            m.counts.events.to_string(),
            m.counts.visuals_delivered.to_string(),
            m.counts.visuals_expired.to_string(),
            m.counts.starved.to_string(),
        ]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()
}
