//! Brute-force solver for the single-interval lexicographic program.
//!
//! Minimizes `sum S_i * T_alarm_i` first and maximizes `sum S_i * z_vis_i`
//! second over every feasible (selection, order) pair. Events whose alert is
//! not sent are charged the earliest completion they could get next interval,
//! `delta + c_json / B` (plus parse time).
//!
//! The search walks transmission sequences depth-first. Float arithmetic is
//! used only to prune and to shortlist near-ties; the shortlist is then
//! resolved with exact rationals, so the reported optimum is exact.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::exact::bytes_within;
use crate::scheduler::{
    check_constraints, interval_budget, EventId, Event, IntervalContext, Schedule, ScheduleError,
    Selection, TransmissionUnit, UnitKind, Violation,
};

pub const DEFAULT_N_MAX: usize = 4;

/// Relative slack used when comparing float objectives during the search.
const FLOAT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{got} events exceed the exhaustive-search limit of {limit}")]
    TooManyEvents { got: usize, limit: usize },
    #[error("unit references unknown event {0}")]
    UnknownEvent(EventId),
    #[error("greedy schedule is infeasible: {0:?}")]
    InfeasibleGreedy(Vec<Violation>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// A single-interval scheduling problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub events: Vec<Event>,
    pub bandwidth: u64,
    pub delta: f64,
    pub d_vis: f64,
    pub t_parse: f64,
}

impl Instance {
    pub fn budget(&self) -> Result<u64, ScheduleError> {
        interval_budget(self.bandwidth, self.delta)
    }

    pub fn context(&self) -> Result<IntervalContext<'_>, ScheduleError> {
        IntervalContext::new(self.bandwidth, self.delta, self.d_vis, self.events.iter().collect(), vec![])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub n_max: usize,
    /// When false only JSON units are considered.
    pub allow_visuals: bool,
    /// Restrict to orders where every JSON unit precedes every visual unit.
    pub json_first_only: bool,
    /// Branch-and-bound on the primary objective. Disable for a full scan.
    pub prune: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { n_max: DEFAULT_N_MAX, allow_visuals: true, json_first_only: false, prune: true }
    }
}

/// Exact objective pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objectives {
    pub primary: BigRational,
    pub secondary: BigRational,
}

impl Objectives {
    pub fn primary_f64(&self) -> f64 {
        self.primary.to_f64().unwrap_or(f64::NAN)
    }

    pub fn secondary_f64(&self) -> f64 {
        self.secondary.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub selections: BTreeMap<EventId, Selection>,
    pub order: Vec<TransmissionUnit>,
    pub z_vis: BTreeMap<EventId, bool>,
    pub objectives: Objectives,
    /// Feasible (selection, order) pairs scored during the search.
    pub enumeration_count: u64,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite objective input")
}

fn int(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Scores a transmission order against the lexicographic objectives.
pub fn evaluate(inst: &Instance, order: &[TransmissionUnit]) -> Result<(Objectives, BTreeMap<EventId, bool>), OracleError> {
    let by_id: BTreeMap<&EventId, &Event> = inst.events.iter().map(|e| (&e.id, e)).collect();
    let b = int(inst.bandwidth);
    let t_parse = rat(inst.t_parse);
    let mut alarm_prefix: BTreeMap<&EventId, u64> = BTreeMap::new();
    let mut z_vis = BTreeMap::new();
    let mut secondary = BigRational::zero();
    let mut prefix = 0u64;
    for u in order {
        let e = by_id.get(&u.event_id).ok_or_else(|| OracleError::UnknownEvent(u.event_id.clone()))?;
        prefix += u.size;
        match u.kind {
            UnitKind::Json => {
                alarm_prefix.insert(&e.id, prefix);
            }
            _ => {
                let on_time = bytes_within(prefix, inst.bandwidth, inst.d_vis);
                if on_time {
                    secondary += rat(e.s());
                }
                z_vis.insert(e.id.clone(), on_time);
            }
        }
    }
    let mut primary = BigRational::zero();
    let penalty_base = rat(inst.delta) + &t_parse;
    for e in &inst.events {
        let s = rat(e.s());
        let t = match alarm_prefix.get(&e.id) {
            Some(&p) => int(p) / &b + &t_parse,
            None => &penalty_base + int(e.c_json) / &b,
        };
        primary += s * t;
    }
    Ok((Objectives { primary, secondary }, z_vis))
}

struct Search<'a> {
    inst: &'a Instance,
    opts: OracleOptions,
    budget: u64,
    b: f64,
    /// Units indexed `3 * event + kind`.
    units: Vec<(usize, UnitKind, u64)>,
    /// DFS branching order over unit indices: alerts first.
    branch_order: Vec<usize>,
    placed: Vec<bool>,
    seq: Vec<usize>,
    best: f64,
    shortlist: Vec<(f64, Vec<usize>)>,
    count: u64,
}

impl Search<'_> {
    fn json_placed(&self, ev: usize) -> bool {
        self.placed[3 * ev]
    }

    fn visual_placed(&self, ev: usize) -> bool {
        self.placed[3 * ev + 1] || self.placed[3 * ev + 2]
    }

    /// Float primary of the current sequence if it were complete, and a lower
    /// bound over all of its extensions.
    fn score(&self, used: u64, served: f64) -> (f64, f64) {
        let tp = self.inst.t_parse;
        let mut complete = served;
        let mut bound = served;
        for (i, e) in self.inst.events.iter().enumerate() {
            if !self.json_placed(i) {
                let s = e.s();
                complete += s * (self.inst.delta + e.c_json as f64 / self.b + tp);
                let later = (used + e.c_json) as f64 / self.b + tp;
                bound += s * later.min(self.inst.delta + e.c_json as f64 / self.b + tp);
            }
        }
        (complete, bound)
    }

    fn hierarchy_ok(&self) -> bool {
        (0..self.inst.events.len()).all(|i| !self.visual_placed(i) || self.json_placed(i))
    }

    fn slack(x: f64) -> f64 {
        x + x.abs() * FLOAT_SLACK + 1e-12
    }

    fn visit(&mut self, used: u64, served: f64, any_visual: bool) {
        let (complete, bound) = self.score(used, served);
        if self.hierarchy_ok() {
            self.count += 1;
            if complete <= Self::slack(self.best) {
                if complete < self.best {
                    self.best = complete;
                    let cut = Self::slack(self.best);
                    self.shortlist.retain(|(v, _)| *v <= cut);
                }
                self.shortlist.push((complete, self.seq.clone()));
            }
        }
        if self.opts.prune && bound > Self::slack(self.best) {
            return;
        }
        for bi in 0..self.branch_order.len() {
            let u = self.branch_order[bi];
            if self.placed[u] {
                continue;
            }
            let (ev, kind, size) = self.units[u];
            if used + size > self.budget {
                continue;
            }
            let served_next = match kind {
                UnitKind::Json => {
                    if self.opts.json_first_only && any_visual {
                        continue;
                    }
                    served + self.inst.events[ev].s() * ((used + size) as f64 / self.b + self.inst.t_parse)
                }
                _ => {
                    if !self.opts.allow_visuals || self.visual_placed(ev) {
                        continue;
                    }
                    served
                }
            };
            self.placed[u] = true;
            self.seq.push(u);
            self.visit(used + size, served_next, any_visual || kind.is_visual());
            self.seq.pop();
            self.placed[u] = false;
        }
    }
}

pub fn exact_lexicographic(inst: &Instance, opts: OracleOptions) -> Result<OracleSolution, OracleError> {
    if inst.events.len() > opts.n_max {
        return Err(OracleError::TooManyEvents { got: inst.events.len(), limit: opts.n_max });
    }
    let budget = inst.budget()?;
    let units: Vec<(usize, UnitKind, u64)> = inst
        .events
        .iter()
        .enumerate()
        .flat_map(|(i, e)| [UnitKind::Json, UnitKind::Roi, UnitKind::Box].map(|k| (i, k, e.cost(k))))
        .collect();
    let mut branch_order: Vec<usize> = (0..units.len()).collect();
    branch_order.sort_by_key(|&u| (units[u].1.is_visual(), u));

    let mut search = Search {
        inst,
        opts,
        budget,
        b: inst.bandwidth as f64,
        placed: vec![false; units.len()],
        units,
        branch_order,
        seq: Vec::new(),
        best: f64::INFINITY,
        shortlist: Vec::new(),
        count: 0,
    };
    search.visit(0, 0.0, false);

    let to_units = |seq: &[usize]| -> Vec<TransmissionUnit> {
        seq.iter()
            .map(|&u| {
                let (ev, kind, _) = search.units[u];
                inst.events[ev].unit(kind)
            })
            .collect()
    };

    let mut best: Option<(Objectives, BTreeMap<EventId, bool>, Vec<TransmissionUnit>)> = None;
    for (_, seq) in &search.shortlist {
        let order = to_units(seq);
        let (obj, z) = evaluate(inst, &order)?;
        let better = match &best {
            None => true,
            Some((bo, _, border)) => match obj.primary.cmp(&bo.primary) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => match obj.secondary.cmp(&bo.secondary) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => canonical_key(&order) < canonical_key(border),
                },
            },
        };
        if better {
            best = Some((obj, z, order));
        }
    }
    let (objectives, z_vis, order) = best.expect("the empty schedule is always feasible");
    let selections = Schedule::from_order(order.clone(), inst.bandwidth).selections;
    Ok(OracleSolution { selections, order, z_vis, objectives, enumeration_count: search.count })
}

fn canonical_key(order: &[TransmissionUnit]) -> Vec<(&EventId, UnitKind)> {
    order.iter().map(|u| (&u.event_id, u.kind)).collect()
}

/// Greedy-versus-exact comparison on one instance.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub greedy: Objectives,
    pub exact: Objectives,
    pub greedy_feasible: bool,
}

impl GapReport {
    /// `greedy_primary - exact_primary`; never negative.
    pub fn primary_gap(&self) -> BigRational {
        &self.greedy.primary - &self.exact.primary
    }

    /// `exact_secondary - greedy_secondary`; positive when the oracle
    /// delivers more on-time visual weight.
    pub fn secondary_gap(&self) -> BigRational {
        &self.exact.secondary - &self.greedy.secondary
    }

    pub fn primary_gap_f64(&self) -> f64 {
        self.primary_gap().to_f64().unwrap_or(f64::NAN)
    }

    pub fn secondary_gap_f64(&self) -> f64 {
        self.secondary_gap().to_f64().unwrap_or(f64::NAN)
    }

    pub fn primary_match(&self) -> bool {
        self.greedy.primary == self.exact.primary
    }

    /// Exact objectives dominate the greedy lexicographically.
    pub fn dominance_holds(&self) -> bool {
        match self.exact.primary.cmp(&self.greedy.primary) {
            Ordering::Less => true,
            Ordering::Equal => self.exact.secondary >= self.greedy.secondary,
            Ordering::Greater => false,
        }
    }
}

pub fn compare(greedy: &Schedule, exact: &OracleSolution, inst: &Instance) -> Result<GapReport, OracleError> {
    let pending: Vec<&Event> = inst.events.iter().collect();
    let violations = check_constraints(greedy, &pending, &[], inst.budget()?);
    if !violations.is_empty() {
        return Err(OracleError::InfeasibleGreedy(violations));
    }
    let (greedy_obj, _) = evaluate(inst, &greedy.order)?;
    Ok(GapReport { greedy: greedy_obj, exact: exact.objectives.clone(), greedy_feasible: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priority::SemanticPriority;
    use crate::scheduler::{schedule_interval, schedule_interval_with, GreedyOptions};

    fn ev(id: &str, s: f64, j: u64, r: u64, b: u64) -> Event {
        Event::new(id, 0.0, SemanticPriority::new(s), j, r, b).unwrap()
    }

    fn inst(events: Vec<Event>, bandwidth: u64, delta: f64, d_vis: f64) -> Instance {
        Instance { events, bandwidth, delta, d_vis, t_parse: 0.0 }
    }

    fn json_only() -> OracleOptions {
        OracleOptions { allow_visuals: false, ..Default::default() }
    }

    #[test]
    fn three_event_order_is_smith() {
        let i = inst(
            vec![ev("e1", 0.9, 10_000, 50_000, 80_000), ev("e2", 0.5, 20_000, 40_000, 60_000), ev("e3", 0.2, 5_000, 100_000, 90_000)],
            100_000,
            1.0,
            1.5,
        );
        let sol = exact_lexicographic(&i, json_only()).unwrap();
        let ids: Vec<&str> = sol.order.iter().map(|u| u.event_id.as_str()).collect();
        assert_eq!(ids, ["e1", "e3", "e2"]);
        // 0.9*0.10 + 0.2*0.15 + 0.5*0.35
        assert!((sol.objectives.primary_f64() - 0.295).abs() < 1e-12);

        let g = schedule_interval_with(&i.context().unwrap(), GreedyOptions { visual_stage: false });
        let rep = compare(&g, &sol, &i).unwrap();
        assert!(rep.primary_match());

        // Worse order for reference: (e1, e2, e3) scores 0.310.
        let alt = vec![i.events[0].unit(UnitKind::Json), i.events[1].unit(UnitKind::Json), i.events[2].unit(UnitKind::Json)];
        let (obj, _) = evaluate(&i, &alt).unwrap();
        assert!((obj.primary_f64() - 0.310).abs() < 1e-12);
    }

    #[test]
    fn single_event_gets_visual() {
        let i = inst(vec![ev("a", 0.7, 1_000, 5_000, 8_000)], 10_000, 1.0, 1.5);
        let sol = exact_lexicographic(&i, OracleOptions::default()).unwrap();
        assert_eq!(sol.order.len(), 2);
        assert_eq!(sol.order[0].kind, UnitKind::Json);
        assert!(sol.order[1].kind.is_visual());
        assert_eq!(sol.objectives.secondary, rat(0.7));
        assert_eq!(sol.z_vis.get(&EventId::from("a")), Some(&true));
    }

    #[test]
    fn empty_instance() {
        let i = inst(vec![], 10_000, 1.0, 1.5);
        let sol = exact_lexicographic(&i, OracleOptions::default()).unwrap();
        assert!(sol.order.is_empty());
        assert!(sol.objectives.primary.is_zero() && sol.objectives.secondary.is_zero());
    }

    #[test]
    fn size_guard() {
        let es = (0..5).map(|k| ev(&format!("e{k}"), 0.5, 1, 1, 1)).collect();
        assert_eq!(
            exact_lexicographic(&inst(es, 10, 1.0, 1.0), OracleOptions::default()).unwrap_err(),
            OracleError::TooManyEvents { got: 5, limit: 4 }
        );
    }

    #[test]
    fn unserved_events_pay_penalty() {
        // Budget 10 fits one alert. Serving "b" costs 0.1*1 + 0.9*(1+0.9) more
        // than serving "a", so "a" wins.
        let i = inst(vec![ev("a", 0.9, 9, 1, 1), ev("b", 0.1, 9, 1, 1)], 10, 1.0, 1.0);
        let sol = exact_lexicographic(&i, json_only()).unwrap();
        assert_eq!(sol.order.len(), 1);
        assert_eq!(sol.order[0].event_id, EventId::from("a"));
        // 0.9 * 0.9 + 0.1 * (1 + 0.9)
        assert!((sol.objectives.primary_f64() - (0.81 + 0.19)).abs() < 1e-12);
    }

    #[test]
    fn pruned_matches_full_scan() {
        let i = inst(
            vec![ev("a", 0.8, 3, 7, 5), ev("b", 0.3, 2, 4, 9), ev("c", 0.55, 4, 3, 6)],
            20,
            1.0,
            0.8,
        );
        let pruned = exact_lexicographic(&i, OracleOptions::default()).unwrap();
        let full = exact_lexicographic(&i, OracleOptions { prune: false, ..Default::default() }).unwrap();
        assert_eq!(pruned.objectives, full.objectives);
        assert_eq!(pruned.order, full.order);
        assert!(full.enumeration_count > pruned.enumeration_count);
    }

    #[test]
    fn greedy_gap_non_negative_on_example() {
        let i = inst(
            vec![ev("e1", 0.9, 10_000, 50_000, 80_000), ev("e2", 0.5, 20_000, 40_000, 60_000), ev("e3", 0.2, 5_000, 100_000, 90_000)],
            100_000,
            1.0,
            1.5,
        );
        let sol = exact_lexicographic(&i, OracleOptions::default()).unwrap();
        let g = schedule_interval(&i.context().unwrap());
        let rep = compare(&g, &sol, &i).unwrap();
        assert!(rep.dominance_holds());
        assert!(rep.primary_match());
        assert!(rep.secondary_gap_f64() >= 0.0);
    }

    #[test]
    fn infeasible_greedy_is_an_error() {
        let i = inst(vec![ev("a", 0.5, 10, 10, 10)], 10, 1.0, 1.0);
        let sol = exact_lexicographic(&i, OracleOptions::default()).unwrap();
        let bad = Schedule::from_order(vec![i.events[0].unit(UnitKind::Roi)], 10);
        assert!(matches!(compare(&bad, &sol, &i), Err(OracleError::InfeasibleGreedy(_))));
    }
}
