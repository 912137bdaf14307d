//! Comparison policies sharing the per-interval scheduling interface.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scheduler::{schedule_interval, sort_by_json_gain, Event, IntervalContext, Schedule, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyId {
    FixedBox,
    FixedRoi,
    FixedJsonBox,
    BandwidthOnly,
    PriorityOnly,
    JsonOnly,
    Dat,
}

impl PolicyId {
    pub const ALL: [PolicyId; 7] = [
        PolicyId::FixedBox,
        PolicyId::FixedRoi,
        PolicyId::FixedJsonBox,
        PolicyId::BandwidthOnly,
        PolicyId::PriorityOnly,
        PolicyId::JsonOnly,
        PolicyId::Dat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyId::FixedBox => "fixed-box",
            PolicyId::FixedRoi => "fixed-roi",
            PolicyId::FixedJsonBox => "fixed-json-box",
            PolicyId::BandwidthOnly => "bandwidth-only",
            PolicyId::PriorityOnly => "priority-only",
            PolicyId::JsonOnly => "json-only",
            PolicyId::Dat => "dat",
        }
    }

    /// Unit whose arrival raises the alarm.
    pub fn alert_carrier(self) -> UnitKind {
        match self {
            PolicyId::FixedBox => UnitKind::Box,
            PolicyId::FixedRoi => UnitKind::Roi,
            _ => UnitKind::Json,
        }
    }

    /// Alerted events without visual evidence re-compete in later intervals.
    pub fn carries_visual_backlog(self) -> bool {
        matches!(self, PolicyId::Dat | PolicyId::BandwidthOnly | PolicyId::PriorityOnly)
    }

    /// Backlogged visuals are dropped once older than the visual deadline.
    pub fn expires_visuals(self) -> bool {
        matches!(self, PolicyId::Dat)
    }

    /// Bytes that must fit in one interval for the event ever to be alerted.
    pub fn alert_bytes(self, e: &Event) -> u64 {
        match self {
            PolicyId::FixedBox => e.c_box,
            PolicyId::FixedRoi => e.c_roi,
            PolicyId::FixedJsonBox => e.c_json + e.c_box,
            _ => e.c_json,
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PolicyId::ALL.iter().map(|p| p.name()).collect();
                format!("unknown policy {s:?} (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JsonOnlyOrder {
    /// Same ranking as the semantic stage of `Dat`.
    #[default]
    GainPerByte,
    Priority,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyOptions {
    pub json_only_order: JsonOnlyOrder,
}

fn fifo(a: &Event, b: &Event) -> Ordering {
    a.arrival_s.total_cmp(&b.arrival_s).then_with(|| a.id.cmp(&b.id))
}

fn by_priority(a: &Event, b: &Event) -> Ordering {
    b.s().total_cmp(&a.s()).then_with(|| a.id.cmp(&b.id))
}

/// First-fit over `ranked`: alerts, then the cheaper visual of every alerted
/// or backlogged event in the same ranking. No deadline check.
fn alerts_then_visuals(ctx: &IntervalContext<'_>, rank: fn(&Event, &Event) -> Ordering) -> Schedule {
    let mut s = Schedule::empty(ctx.bandwidth);
    let mut remaining = ctx.budget;
    let mut ranked = ctx.pending.clone();
    ranked.sort_by(|a, b| rank(a, b));
    let mut visual: Vec<&Event> = Vec::with_capacity(ranked.len() + ctx.visual_pending.len());
    for e in ranked {
        if remaining >= e.c_json {
            remaining -= e.c_json;
            s.push(e.unit(UnitKind::Json));
            visual.push(e);
        }
    }
    visual.extend(ctx.visual_pending.iter().copied());
    visual.sort_by(|a, b| rank(a, b));
    for e in visual {
        let (kind, c) = e.visual_choice();
        if remaining >= c {
            remaining -= c;
            s.push(e.unit(kind));
        }
    }
    s
}

fn fixed(ctx: &IntervalContext<'_>, kinds: &[UnitKind]) -> Schedule {
    let mut s = Schedule::empty(ctx.bandwidth);
    let mut remaining = ctx.budget;
    let mut ranked = ctx.pending.clone();
    ranked.sort_by(|a, b| fifo(a, b));
    for e in ranked {
        let need: u64 = kinds.iter().map(|&k| e.cost(k)).sum();
        if remaining >= need {
            remaining -= need;
            for &k in kinds {
                s.push(e.unit(k));
            }
        }
    }
    s
}

pub fn policy_schedule(policy: PolicyId, ctx: &IntervalContext<'_>, opts: &PolicyOptions) -> Schedule {
    match policy {
        PolicyId::Dat => schedule_interval(ctx),
        PolicyId::FixedBox => fixed(ctx, &[UnitKind::Box]),
        PolicyId::FixedRoi => fixed(ctx, &[UnitKind::Roi]),
        PolicyId::FixedJsonBox => fixed(ctx, &[UnitKind::Json, UnitKind::Box]),
        PolicyId::BandwidthOnly => alerts_then_visuals(ctx, fifo),
        PolicyId::PriorityOnly => alerts_then_visuals(ctx, by_priority),
        PolicyId::JsonOnly => {
            let mut ranked = ctx.pending.clone();
            match opts.json_only_order {
                JsonOnlyOrder::GainPerByte => sort_by_json_gain(&mut ranked),
                JsonOnlyOrder::Priority => ranked.sort_by(|a, b| by_priority(a, b)),
            }
            let mut s = Schedule::empty(ctx.bandwidth);
            let mut remaining = ctx.budget;
            for e in ranked {
                if remaining >= e.c_json {
                    remaining -= e.c_json;
                    s.push(e.unit(UnitKind::Json));
                }
            }
            s
        }
    }
}
