use serde::{Deserialize, Serialize};

use super::DeliveryLedger;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlarmWeighting {
    /// Priority-weighted mean alarm delay.
    #[default]
    Mean,
    /// Unnormalized priority-weighted sum.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VtrPoint {
    pub deadline_s: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub events: usize,
    pub alarms_delivered: usize,
    pub visuals_delivered: usize,
    pub visuals_expired: usize,
    pub starved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when no alarm was delivered.
    pub w_alarm_s: Option<f64>,
    /// Fraction of all events whose visual arrived within each deadline.
    /// Empty when there are no events.
    pub vtr: Vec<VtrPoint>,
    pub avg_visual_delay_s: Option<f64>,
    pub counts: MetricCounts,
}

impl MetricsReport {
    pub fn vtr_at(&self, deadline_s: f64) -> Option<f64> {
        self.vtr.iter().find(|p| p.deadline_s == deadline_s).map(|p| p.fraction)
    }
}

pub fn compute_metrics(ledger: &DeliveryLedger, vtr_deadlines: &[f64], weighting: AlarmWeighting) -> MetricsReport {
    let entries = &ledger.entries;
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut counts = MetricCounts { events: entries.len(), ..Default::default() };
    let mut vis_sum = 0.0;
    let mut vis_delays = Vec::new();
    for e in entries {
        if e.starved {
            counts.starved += 1;
        }
        if e.expired_visual {
            counts.visuals_expired += 1;
        }
        if let Some(d) = e.alarm_delay() {
            counts.alarms_delivered += 1;
            if !e.starved {
                weighted += e.priority * d;
                weight += e.priority;
            }
        }
        if let Some(d) = e.visual_delay() {
            counts.visuals_delivered += 1;
            vis_sum += d;
            vis_delays.push(d);
        }
    }
    let w_alarm_s = match weighting {
        _ if counts.alarms_delivered == 0 => None,
        AlarmWeighting::Mean if weight > 0.0 => Some(weighted / weight),
        AlarmWeighting::Mean => None,
        AlarmWeighting::Sum => Some(weighted),
    };
    let vtr = if entries.is_empty() {
        Vec::new()
    } else {
        vtr_deadlines
            .iter()
            .map(|&d| VtrPoint {
                deadline_s: d,
                fraction: vis_delays.iter().filter(|&&x| x <= d).count() as f64 / entries.len() as f64,
            })
            .collect()
    };
    let avg_visual_delay_s = (!vis_delays.is_empty()).then(|| vis_sum / vis_delays.len() as f64);
    MetricsReport { w_alarm_s, vtr, avg_visual_delay_s, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::LedgerEntry;

    fn entry(id: &str, s: f64, alarm: Option<f64>, vis: Option<f64>) -> LedgerEntry {
        LedgerEntry {
            event_id: id.into(),
            priority: s,
            arrival_s: 0.0,
            alarm_s: alarm,
            visual_s: vis,
            visual_kind: None,
            expired_visual: false,
            starved: false,
        }
    }

    #[test]
    fn weighted_alarm_example() {
        let l = DeliveryLedger { entries: vec![entry("e1", 0.9, Some(0.10), None), entry("e2", 0.5, Some(0.35), None)] };
        let r = compute_metrics(&l, &[], AlarmWeighting::Mean);
        assert!((r.w_alarm_s.unwrap() - 0.18929).abs() < 1e-5);
        let r = compute_metrics(&l, &[], AlarmWeighting::Sum);
        assert!((r.w_alarm_s.unwrap() - 0.265).abs() < 1e-12);
    }

    #[test]
    fn vtr_and_average_example() {
        let l = DeliveryLedger {
            entries: vec![
                entry("a", 0.5, Some(0.1), Some(0.4)),
                entry("b", 0.5, Some(0.1), Some(0.9)),
                entry("c", 0.5, Some(0.1), None),
            ],
        };
        let r = compute_metrics(&l, &[0.5, 1.0], AlarmWeighting::Mean);
        assert!((r.vtr_at(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.vtr_at(1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.avg_visual_delay_s.unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(r.counts.visuals_delivered, 2);
    }

    #[test]
    fn starved_events_do_not_weigh_in() {
        let mut s = entry("s", 1.0, None, None);
        s.starved = true;
        let l = DeliveryLedger { entries: vec![entry("a", 0.5, Some(0.2), None), s] };
        let r = compute_metrics(&l, &[1.0], AlarmWeighting::Mean);
        assert_eq!(r.w_alarm_s, Some(0.2));
        assert_eq!(r.counts.starved, 1);
        assert_eq!(r.vtr_at(1.0), Some(0.0));
    }
}
