//! Interval-by-interval replay of an event trace over a bandwidth trace.
//!
//! At each interval start the engine admits every event that has arrived
//! (arrivals exactly on the boundary included), drops stale visual backlog for
//! policies that honor the visual deadline, asks the policy for a schedule at
//! the interval's budget, and stamps each unit's wall-clock delivery time as
//! interval start plus its completion time.

mod metrics;
mod workload;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{policy_schedule, PolicyId, PolicyOptions};
use crate::scheduler::{completion_times, interval_budget, Event, EventId, IntervalContext, ScheduleError, UnitKind};
use crate::traceio::BandwidthTrace;

pub use metrics::{compute_metrics, AlarmWeighting, MetricCounts, MetricsReport, VtrPoint};
pub use workload::{flat_noise_trace, gen_events, scale_trace, ArrivalPattern, GenParams, WorkloadError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bandwidth trace is empty")]
    EmptyTrace,
    #[error("event {id} needs {bytes} B in one interval but the largest budget is {max_budget} B")]
    Unschedulable { id: EventId, bytes: u64, max_budget: u64 },
    #[error("bandwidth trace exhausted after {0} intervals with work outstanding")]
    TraceExhausted(usize),
    #[error("simulation did not drain within {0} intervals")]
    GuardExceeded(u64),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// Replay the trace cyclically.
    #[default]
    Wrap,
    /// Fail once the trace runs out.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarvationMode {
    /// Flag events whose alert can never fit and leave them out of W-Alarm.
    #[default]
    Flag,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub interval_delta: f64,
    pub d_vis: f64,
    pub beta: f64,
    pub gamma: f64,
    pub bandwidth_scale: f64,
    pub t_parse: f64,
    pub policy: PolicyId,
    pub json_only_order: crate::baselines::JsonOnlyOrder,
    pub vtr_deadlines: Vec<f64>,
    pub seed: u64,
    pub trace_mode: TraceMode,
    pub starvation: StarvationMode,
    pub alarm_weighting: AlarmWeighting,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            interval_delta: 1.0,
            d_vis: 1.5,
            beta: 0.5,
            gamma: 0.5,
            bandwidth_scale: 1.0,
            t_parse: 0.0,
            policy: PolicyId::Dat,
            json_only_order: Default::default(),
            vtr_deadlines: vec![0.5, 1.0],
            seed: 0,
            trace_mode: TraceMode::Wrap,
            starvation: StarvationMode::Flag,
            alarm_weighting: AlarmWeighting::Mean,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("interval_delta", self.interval_delta)?;
        positive("d_vis", self.d_vis)?;
        positive("bandwidth_scale", self.bandwidth_scale)?;
        if !(self.t_parse >= 0.0 && self.t_parse.is_finite()) {
            return Err(SimError::Config(format!("t_parse must be non-negative, got {}", self.t_parse)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(SimError::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SimError::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.vtr_deadlines.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(SimError::Config("VTR deadlines must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn policy_options(&self) -> PolicyOptions {
        PolicyOptions { json_only_order: self.json_only_order }
    }
}

/// Realized deliveries for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub event_id: EventId,
    pub priority: f64,
    pub arrival_s: f64,
    pub alarm_s: Option<f64>,
    pub visual_s: Option<f64>,
    pub visual_kind: Option<UnitKind>,
    /// Visual evidence dropped after outliving the visual deadline.
    pub expired_visual: bool,
    /// The alert carrier never fits any interval budget.
    pub starved: bool,
}

impl LedgerEntry {
    pub fn alarm_delay(&self) -> Option<f64> {
        self.alarm_s.map(|a| a - self.arrival_s)
    }

    pub fn visual_delay(&self) -> Option<f64> {
        self.visual_s.map(|v| v - self.arrival_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliveryLedger {
    pub entries: Vec<LedgerEntry>,
}

/// Runs one simulation. The ledger lists events in arrival order.
pub fn run(
    trace: &BandwidthTrace,
    events: &[Event],
    config: &SimulationConfig,
) -> Result<(DeliveryLedger, MetricsReport), SimError> {
    config.validate()?;
    if trace.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let delta = config.interval_delta;
    let trace = if (trace.sample_period_s - delta).abs() > 1e-12 { trace.resample(delta) } else { trace.clone() };
    let rates: Vec<u64> = scale_trace(&trace, config.bandwidth_scale).rates().collect();
    let budgets: Vec<u64> = rates.iter().map(|&b| interval_budget(b, delta)).collect::<Result<_, _>>()?;
    let max_budget = budgets.iter().copied().max().unwrap_or(0);

    let policy = config.policy;
    let opts = config.policy_options();

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        events[a].arrival_s.total_cmp(&events[b].arrival_s).then_with(|| events[a].id.cmp(&events[b].id))
    });
    let events: Vec<&Event> = order.iter().map(|&i| &events[i]).collect();
    let index: HashMap<&EventId, usize> = events.iter().enumerate().map(|(i, e)| (&e.id, i)).collect();

    let mut entries: Vec<LedgerEntry> = events
        .iter()
        .map(|e| LedgerEntry {
            event_id: e.id.clone(),
            priority: e.s(),
            arrival_s: e.arrival_s,
            alarm_s: None,
            visual_s: None,
            visual_kind: None,
            expired_visual: false,
            starved: false,
        })
        .collect();
    let mut visual_possible = vec![policy.carries_visual_backlog(); events.len()];
    for (i, e) in events.iter().enumerate() {
        let bytes = policy.alert_bytes(e);
        if bytes > max_budget {
            match config.starvation {
                StarvationMode::Error => {
                    return Err(SimError::Unschedulable { id: e.id.clone(), bytes, max_budget })
                }
                StarvationMode::Flag => {
                    log::warn!("event {} needs {bytes} B for its alert; largest budget is {max_budget} B", e.id);
                    entries[i].starved = true;
                }
            }
        }
        if e.visual_choice().1 > max_budget {
            visual_possible[i] = false;
        }
    }

    let n = events.len();
    let last_arrival = events.last().map(|e| e.arrival_s).unwrap_or(0.0);
    let guard = (last_arrival / delta).ceil() as u64 + 1 + rates.len() as u64 * (2 * n as u64 + 1);

    let mut pending: Vec<usize> = Vec::new();
    let mut visual_pending: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut tau: u64 = 0;
    loop {
        if pending.is_empty() && visual_pending.is_empty() && next < n {
            // Idle: jump to the first interval that admits the next arrival.
            let first = (events[next].arrival_s / delta).ceil() as u64;
            let mut t = first.max(tau);
            while (t as f64) * delta < events[next].arrival_s {
                t += 1;
            }
            tau = t;
        }
        let start = tau as f64 * delta;
        while next < n && events[next].arrival_s <= start {
            if !entries[next].starved {
                pending.push(next);
            }
            next += 1;
        }
        if policy.expires_visuals() {
            visual_pending.retain(|&i| {
                let keep = start - events[i].arrival_s <= config.d_vis;
                if !keep {
                    entries[i].expired_visual = true;
                }
                keep
            });
        }
        if next >= n && pending.is_empty() && visual_pending.is_empty() {
            break;
        }
        if tau >= guard {
            return Err(SimError::GuardExceeded(guard));
        }
        let slot = tau as usize;
        if config.trace_mode == TraceMode::Strict && slot >= rates.len() {
            return Err(SimError::TraceExhausted(rates.len()));
        }
        let bandwidth = rates[slot % rates.len()];

        let ctx = IntervalContext::new(
            bandwidth,
            delta,
            config.d_vis,
            pending.iter().map(|&i| events[i]).collect(),
            visual_pending.iter().map(|&i| events[i]).collect(),
        )?;
        let schedule = policy_schedule(policy, &ctx, &opts);
        let carrier = policy.alert_carrier();
        let mut alerted_now = Vec::new();
        for (u, t) in schedule.order.iter().zip(completion_times(&schedule, bandwidth)) {
            let i = index[&u.event_id];
            let wall = start + t;
            let entry = &mut entries[i];
            if u.kind == carrier && entry.alarm_s.is_none() {
                entry.alarm_s = Some(wall + config.t_parse);
                alerted_now.push(i);
            }
            if u.kind.is_visual() && entry.visual_s.is_none() {
                entry.visual_s = Some(wall);
                entry.visual_kind = Some(u.kind);
            }
        }
        pending.retain(|&i| entries[i].alarm_s.is_none());
        visual_pending.retain(|&i| entries[i].visual_s.is_none());
        for i in alerted_now {
            if visual_possible[i] && entries[i].visual_s.is_none() {
                visual_pending.push(i);
            }
        }
        tau += 1;
    }

    let ledger = DeliveryLedger { entries };
    let report = compute_metrics(&ledger, &config.vtr_deadlines, config.alarm_weighting);
    Ok((ledger, report))
}
