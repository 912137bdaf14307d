//! Per-interval hierarchical greedy scheduling.
//!
//! Stage 1 ranks pending events by semantic gain per JSON byte and packs JSON
//! alerts into the interval budget. Stage 2 spends what is left on at most one
//! visual unit per event (the cheaper of ROI and boxed image), ranked by gain
//! per visual byte and gated by the visual deadline.
//!
//! Budgets and sizes are integer bytes. Ratio comparisons and the deadline
//! test are exact, so a schedule never depends on float rounding; seconds are
//! only derived for reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{bytes_within, floor_product, ratio_cmp};
use crate::priority::SemanticPriority;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("bandwidth must be positive")]
    ZeroBandwidth,
    #[error("interval length must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("event {id}: {kind} cost must be positive")]
    ZeroCost { id: EventId, kind: UnitKind },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(Arc<str>);

impl EventId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        Self(Arc::from(s))
    }
}

impl From<String> for EventId {
    fn from(s: String) -> Self {
        Self(Arc::from(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Json,
    Roi,
    Box,
}

impl UnitKind {
    pub fn is_visual(self) -> bool {
        !matches!(self, UnitKind::Json)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Json => "json",
            UnitKind::Roi => "roi",
            UnitKind::Box => "box",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One detected incident with its three candidate upload costs in bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub arrival_s: f64,
    pub priority: SemanticPriority,
    pub c_json: u64,
    pub c_roi: u64,
    pub c_box: u64,
}

impl Event {
    pub fn new(
        id: impl Into<String>,
        arrival_s: f64,
        priority: SemanticPriority,
        c_json: u64,
        c_roi: u64,
        c_box: u64,
    ) -> Result<Self, ScheduleError> {
        let id = EventId::from(id.into());
        for (kind, c) in [(UnitKind::Json, c_json), (UnitKind::Roi, c_roi), (UnitKind::Box, c_box)] {
            if c == 0 {
                return Err(ScheduleError::ZeroCost { id, kind });
            }
        }
        Ok(Self { id, arrival_s, priority, c_json, c_roi, c_box })
    }

    pub fn s(&self) -> f64 {
        self.priority.value()
    }

    pub fn cost(&self, kind: UnitKind) -> u64 {
        match kind {
            UnitKind::Json => self.c_json,
            UnitKind::Roi => self.c_roi,
            UnitKind::Box => self.c_box,
        }
    }

    /// The cheaper visual unit; ROI wins ties.
    pub fn visual_choice(&self) -> (UnitKind, u64) {
        if self.c_box < self.c_roi {
            (UnitKind::Box, self.c_box)
        } else {
            (UnitKind::Roi, self.c_roi)
        }
    }

    pub fn unit(&self, kind: UnitKind) -> TransmissionUnit {
        TransmissionUnit { event_id: self.id.clone(), kind, size: self.cost(kind) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransmissionUnit {
    pub event_id: EventId,
    pub kind: UnitKind,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub json: bool,
    pub roi: bool,
    #[serde(rename = "box")]
    pub boxed: bool,
}

impl Selection {
    pub fn get(&self, kind: UnitKind) -> bool {
        match kind {
            UnitKind::Json => self.json,
            UnitKind::Roi => self.roi,
            UnitKind::Box => self.boxed,
        }
    }

    pub fn set(&mut self, kind: UnitKind, on: bool) {
        match kind {
            UnitKind::Json => self.json = on,
            UnitKind::Roi => self.roi = on,
            UnitKind::Box => self.boxed = on,
        }
    }
}

/// Selections, transmission order and byte accounting for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub selections: BTreeMap<EventId, Selection>,
    pub order: Vec<TransmissionUnit>,
    pub used_bytes: u64,
    pub bandwidth: u64,
}

impl Schedule {
    pub fn empty(bandwidth: u64) -> Self {
        Self { selections: BTreeMap::new(), order: Vec::new(), used_bytes: 0, bandwidth }
    }

    /// Builds a schedule whose selections mirror `order`.
    pub fn from_order(order: Vec<TransmissionUnit>, bandwidth: u64) -> Self {
        // The leading id bytes as a big-endian integer order the same way as
        // the ids themselves whenever they differ, and keep the sort in cache.
        let prefix = |id: &EventId| {
            let mut buf = [0u8; 8];
            let b = id.as_str().as_bytes();
            let n = b.len().min(8);
            buf[..n].copy_from_slice(&b[..n]);
            u64::from_be_bytes(buf)
        };
        let mut keyed: Vec<(u64, &EventId, UnitKind)> =
            order.iter().map(|u| (prefix(&u.event_id), &u.event_id, u.kind)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let mut grouped: Vec<(EventId, Selection)> = Vec::with_capacity(keyed.len());
        for (_, id, kind) in keyed {
            match grouped.last_mut() {
                Some((last, sel)) if last == id => sel.set(kind, true),
                _ => {
                    let mut sel = Selection::default();
                    sel.set(kind, true);
                    grouped.push((id.clone(), sel));
                }
            }
        }
        let used_bytes = order.iter().map(|u| u.size).sum();
        Self { selections: grouped.into_iter().collect(), order, used_bytes, bandwidth }
    }

    pub fn push(&mut self, unit: TransmissionUnit) {
        self.selections.entry(unit.event_id.clone()).or_default().set(unit.kind, true);
        self.used_bytes += unit.size;
        self.order.push(unit);
    }

    /// Accumulated transmit time within the interval.
    pub fn t_end(&self) -> f64 {
        self.used_bytes as f64 / self.bandwidth as f64
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Inputs to one scheduling decision.
#[derive(Debug, Clone)]
pub struct IntervalContext<'a> {
    pub bandwidth: u64,
    pub delta: f64,
    pub budget: u64,
    pub d_vis: f64,
    /// Events still waiting for their alert unit.
    pub pending: Vec<&'a Event>,
    /// Events whose alert went out earlier and still await visual evidence.
    pub visual_pending: Vec<&'a Event>,
}

impl<'a> IntervalContext<'a> {
    pub fn new(
        bandwidth: u64,
        delta: f64,
        d_vis: f64,
        pending: Vec<&'a Event>,
        visual_pending: Vec<&'a Event>,
    ) -> Result<Self, ScheduleError> {
        let budget = interval_budget(bandwidth, delta)?;
        Ok(Self { bandwidth, delta, budget, d_vis, pending, visual_pending })
    }
}

/// `floor(bandwidth * delta)` bytes.
pub fn interval_budget(bandwidth: u64, delta: f64) -> Result<u64, ScheduleError> {
    if bandwidth == 0 {
        return Err(ScheduleError::ZeroBandwidth);
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ScheduleError::BadDelta(delta));
    }
    Ok(floor_product(bandwidth, delta))
}

pub fn json_load<'e>(events: impl IntoIterator<Item = &'e Event>) -> u64 {
    events.into_iter().map(|e| e.c_json).sum()
}

/// Sorts `(event, cost)` pairs by `S / cost` descending, then by higher
/// `S`, then by event id.
///
/// The sort runs over a compact key array so that large pending sets do not
/// chase event pointers on every comparison.
pub(crate) fn rank_by_gain<'e>(items: &[(&'e Event, u64)]) -> Vec<(&'e Event, u64)> {
    // Correctly rounded division is monotone, so distinct rounded quotients
    // already order the exact ratios; only equal ones need the exact check.
    let mut keys: Vec<(f64, u32)> =
        items.iter().enumerate().map(|(i, (e, c))| (e.s() / *c as f64, i as u32)).collect();
    keys.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| {
            let (ea, ca) = items[a.1 as usize];
            let (eb, cb) = items[b.1 as usize];
            ratio_cmp(eb.s(), cb, ea.s(), ca)
                .then_with(|| eb.s().total_cmp(&ea.s()))
                .then_with(|| ea.id.cmp(&eb.id))
        })
    });
    keys.into_iter().map(|(_, i)| items[i as usize]).collect()
}

pub(crate) fn sort_by_json_gain(events: &mut [&Event]) {
    let items: Vec<(&Event, u64)> = events.iter().map(|e| (*e, e.c_json)).collect();
    for (slot, (e, _)) in events.iter_mut().zip(rank_by_gain(&items)) {
        *slot = e;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyOptions {
    pub visual_stage: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { visual_stage: true }
    }
}

pub fn schedule_interval(ctx: &IntervalContext<'_>) -> Schedule {
    schedule_interval_with(ctx, GreedyOptions::default())
}

pub fn schedule_interval_with(ctx: &IntervalContext<'_>, opts: GreedyOptions) -> Schedule {
    let mut order = Vec::new();
    let mut remaining = ctx.budget;

    let pending: Vec<(&Event, u64)> = ctx.pending.iter().map(|e| (*e, e.c_json)).collect();
    let mut alerted = Vec::with_capacity(pending.len());
    for (e, c) in rank_by_gain(&pending) {
        if remaining >= c {
            remaining -= c;
            order.push(e.unit(UnitKind::Json));
            alerted.push(e);
        }
    }

    if opts.visual_stage {
        let mut used = ctx.budget - remaining;
        let candidates: Vec<(&Event, u64)> = alerted
            .into_iter()
            .chain(ctx.visual_pending.iter().copied())
            .map(|e| (e, e.visual_choice().1))
            .collect();
        for (e, c) in rank_by_gain(&candidates) {
            if remaining >= c && bytes_within(used + c, ctx.bandwidth, ctx.d_vis) {
                remaining -= c;
                used += c;
                order.push(TransmissionUnit { event_id: e.id.clone(), kind: e.visual_choice().0, size: c });
            }
        }
    }
    Schedule::from_order(order, ctx.bandwidth)
}

/// Completion time of every unit in `schedule.order`, in seconds from the
/// interval start.
pub fn completion_times(schedule: &Schedule, bandwidth: u64) -> Vec<f64> {
    let b = bandwidth as f64;
    let mut acc = 0u64;
    schedule
        .order
        .iter()
        .map(|u| {
            acc += u.size;
            acc as f64 / b
        })
        .collect()
}

pub fn alarm_delay(t_tx_json: f64, t_parse: f64) -> f64 {
    t_tx_json + t_parse
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A visual unit selected without the event's alert.
    Hierarchy(EventId),
    /// Both visual kinds selected for one event.
    NonRedundancy(EventId),
    Budget { used: u64, budget: u64 },
    /// Selections and transmission order disagree.
    OrderMismatch(EventId),
    DuplicateUnit(EventId, UnitKind),
    UnknownEvent(EventId),
    SizeMismatch(EventId, UnitKind),
    /// An alert re-sent for an event that was already alerted.
    RepeatedAlert(EventId),
}

/// Checks the selection constraints of one interval.
///
/// `carried` are events whose alert was delivered in an earlier interval; a
/// visual for them satisfies the hierarchy without a JSON this interval.
pub fn check_constraints(
    schedule: &Schedule,
    pending: &[&Event],
    carried: &[&Event],
    budget: u64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let known: BTreeMap<&EventId, (&Event, bool)> = pending
        .iter()
        .map(|e| (&e.id, (*e, false)))
        .chain(carried.iter().map(|e| (&e.id, (*e, true))))
        .collect();

    let total: u64 = schedule.order.iter().map(|u| u.size).sum();
    if total > budget {
        out.push(Violation::Budget { used: total, budget });
    }

    let mut seen: BTreeSet<(&EventId, UnitKind)> = BTreeSet::new();
    for u in &schedule.order {
        if !seen.insert((&u.event_id, u.kind)) {
            out.push(Violation::DuplicateUnit(u.event_id.clone(), u.kind));
        }
        match known.get(&u.event_id) {
            None => out.push(Violation::UnknownEvent(u.event_id.clone())),
            Some((e, _)) if e.cost(u.kind) != u.size => {
                out.push(Violation::SizeMismatch(u.event_id.clone(), u.kind))
            }
            _ => {}
        }
        let selected = schedule.selections.get(&u.event_id).is_some_and(|s| s.get(u.kind));
        if !selected {
            out.push(Violation::OrderMismatch(u.event_id.clone()));
        }
    }

    for (id, sel) in &schedule.selections {
        for kind in [UnitKind::Json, UnitKind::Roi, UnitKind::Box] {
            if sel.get(kind) && !seen.contains(&(id, kind)) {
                out.push(Violation::OrderMismatch(id.clone()));
            }
        }
        let was_carried = known.get(id).is_some_and(|(_, c)| *c);
        if (sel.roi || sel.boxed) && !sel.json && !was_carried {
            out.push(Violation::Hierarchy(id.clone()));
        }
        if sel.roi && sel.boxed {
            out.push(Violation::NonRedundancy(id.clone()));
        }
        if sel.json && was_carried {
            out.push(Violation::RepeatedAlert(id.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: &str, s: f64, j: u64, r: u64, b: u64) -> Event {
        Event::new(id, 0.0, SemanticPriority::new(s), j, r, b).unwrap()
    }

    fn three() -> Vec<Event> {
        vec![
            ev("e1", 0.9, 10_000, 50_000, 80_000),
            ev("e2", 0.5, 20_000, 40_000, 60_000),
            ev("e3", 0.2, 5_000, 100_000, 90_000),
        ]
    }

    fn labels(s: &Schedule) -> Vec<(String, UnitKind)> {
        s.order.iter().map(|u| (u.event_id.as_str().to_owned(), u.kind)).collect()
    }

    #[test]
    fn budget_examples() {
        assert_eq!(interval_budget(100_000, 1.0).unwrap(), 100_000);
        assert_eq!(interval_budget(250_000, 0.5).unwrap(), 125_000);
        assert_eq!(interval_budget(3, 0.1).unwrap(), 0);
        assert_eq!(interval_budget(0, 1.0), Err(ScheduleError::ZeroBandwidth));
        assert!(interval_budget(5, 0.0).is_err());
        assert!(interval_budget(5, -1.0).is_err());
    }

    #[test]
    fn json_load_examples() {
        let es = [ev("a", 0.1, 10_000, 1, 1), ev("b", 0.1, 20_000, 1, 1), ev("c", 0.1, 5_000, 1, 1)];
        assert_eq!(json_load(&es), 35_000);
        assert_eq!(json_load(&[]), 0);
        assert_eq!(json_load(&[ev("x", 0.1, 7, 1, 1)]), 7);
    }

    #[test]
    fn zero_cost_rejected() {
        let e = Event::new("z", 0.0, SemanticPriority::new(0.5), 0, 1, 1);
        assert!(matches!(e, Err(ScheduleError::ZeroCost { kind: UnitKind::Json, .. })));
    }

    #[test]
    fn three_event_full_budget() {
        let es = three();
        let ctx = IntervalContext::new(100_000, 1.0, 1.5, es.iter().collect(), vec![]).unwrap();
        let s = schedule_interval(&ctx);
        assert_eq!(
            labels(&s),
            vec![
                ("e1".into(), UnitKind::Json),
                ("e3".into(), UnitKind::Json),
                ("e2".into(), UnitKind::Json),
                ("e1".into(), UnitKind::Roi),
            ]
        );
        assert_eq!(s.used_bytes, 85_000);
        assert_eq!(s.t_end(), 0.85);
        assert_eq!(completion_times(&s, 100_000), vec![0.10, 0.15, 0.35, 0.85]);
        assert!(check_constraints(&s, &ctx.pending, &[], ctx.budget).is_empty());
    }

    #[test]
    fn three_event_tight_budget() {
        let es = three();
        let ctx = IntervalContext::new(100_000, 0.2, 1.5, es.iter().collect(), vec![]).unwrap();
        assert_eq!(ctx.budget, 20_000);
        let s = schedule_interval(&ctx);
        assert_eq!(labels(&s), vec![("e1".into(), UnitKind::Json), ("e3".into(), UnitKind::Json)]);
        assert_eq!(s.t_end(), 0.15);
    }

    #[test]
    fn empty_pending() {
        let ctx = IntervalContext::new(100_000, 1.0, 1.5, vec![], vec![]).unwrap();
        let s = schedule_interval(&ctx);
        assert!(s.is_empty());
        assert_eq!(s.t_end(), 0.0);
    }

    #[test]
    fn completion_time_examples() {
        let es = three();
        let s = Schedule::from_order(vec![es[0].unit(UnitKind::Json), es[2].unit(UnitKind::Json)], 100_000);
        assert_eq!(completion_times(&s, 100_000), vec![0.10, 0.15]);
        let one = Schedule::from_order(vec![es[0].unit(UnitKind::Roi)], 100_000);
        assert_eq!(completion_times(&one, 100_000), vec![0.5]);
    }

    #[test]
    fn alarm_delay_examples() {
        assert_eq!(alarm_delay(0.35, 0.0), 0.35);
        assert!((alarm_delay(0.10, 0.02) - 0.12).abs() < 1e-15);
        assert_eq!(alarm_delay(0.0, 0.0), 0.0);
    }

    #[test]
    fn deadline_blocks_visual() {
        let es = [ev("a", 0.9, 10_000, 50_000, 80_000)];
        // 0.1 s of JSON + 0.5 s of ROI overruns a 0.5 s deadline.
        let ctx = IntervalContext::new(100_000, 1.0, 0.5, es.iter().collect(), vec![]).unwrap();
        let s = schedule_interval(&ctx);
        assert_eq!(labels(&s), vec![("a".into(), UnitKind::Json)]);
        // Exactly on the deadline is accepted.
        let ctx = IntervalContext::new(100_000, 1.0, 0.6, es.iter().collect(), vec![]).unwrap();
        assert_eq!(schedule_interval(&ctx).order.len(), 2);
    }

    #[test]
    fn carried_visuals_compete_in_stage_two() {
        let fresh = ev("f", 0.2, 1_000, 30_000, 40_000);
        let old = ev("o", 0.9, 1_000, 20_000, 10_000);
        let ctx = IntervalContext::new(40_000, 1.0, 1.5, vec![&fresh], vec![&old]).unwrap();
        let s = schedule_interval(&ctx);
        assert_eq!(
            labels(&s),
            vec![("f".into(), UnitKind::Json), ("o".into(), UnitKind::Box)]
        );
        assert!(check_constraints(&s, &ctx.pending, &ctx.visual_pending, ctx.budget).is_empty());
    }

    #[test]
    fn ties_break_on_priority_then_id() {
        // Equal gain per byte: 0.4/2000 == 0.2/1000.
        let a = ev("a", 0.2, 1_000, 9, 9);
        let b = ev("b", 0.4, 2_000, 9, 9);
        let c = ev("c", 0.2, 1_000, 9, 9);
        let mut v = vec![&c, &a, &b];
        sort_by_json_gain(&mut v);
        let ids: Vec<&str> = v.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    fn hand_built_violations() {
        let es = three();
        let pending: Vec<&Event> = es.iter().collect();
        let s = Schedule::from_order(vec![es[0].unit(UnitKind::Roi)], 100_000);
        assert_eq!(
            check_constraints(&s, &pending, &[], 100_000),
            vec![Violation::Hierarchy("e1".into())]
        );

        let s = Schedule::from_order(
            vec![es[0].unit(UnitKind::Json), es[0].unit(UnitKind::Roi), es[0].unit(UnitKind::Box)],
            100_000,
        );
        assert_eq!(
            check_constraints(&s, &pending, &[], 1_000_000),
            vec![Violation::NonRedundancy("e1".into())]
        );

        let s = Schedule::from_order(vec![es[1].unit(UnitKind::Json)], 100_000);
        assert_eq!(
            check_constraints(&s, &pending, &[], 10_000),
            vec![Violation::Budget { used: 20_000, budget: 10_000 }]
        );

        let mut s = Schedule::from_order(vec![es[1].unit(UnitKind::Json)], 100_000);
        s.selections.insert("e3".into(), Selection { json: true, ..Default::default() });
        assert_eq!(
            check_constraints(&s, &pending, &[], 100_000),
            vec![Violation::OrderMismatch("e3".into())]
        );
    }
}
