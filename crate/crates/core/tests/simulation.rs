use std::fs;

use uplink_sched::simulator::{gen_events, ArrivalPattern, GenParams};
use uplink_sched::traceio::{
    emit_results, events_from_records, load_bandwidth_csv, load_events, load_summary, read_per_event,
    write_bandwidth_csv, write_event_records, BandMode, BandwidthUnits, EventRecord, ResultFormat,
};
use uplink_sched::{run, BandwidthTrace, PolicyId, SimulationConfig, UnitKind};

fn record(id: &str, arrival: f64, level: u32, score: f64, sizes: [u64; 3]) -> EventRecord {
    EventRecord {
        event_id: id.into(),
        arrival_s: arrival,
        level,
        num_levels: 2,
        score,
        c_json: sizes[0],
        c_roi: sizes[1],
        c_box: sizes[2],
    }
}

#[test]
fn files_in_results_out() {
    let dir = tempfile::tempdir().unwrap();
    let bw = dir.path().join("bw.csv");
    fs::write(&bw, "t_sec,bytes_per_sec\n0,100000\n1,100000\n2,100000\n").unwrap();
    let ev = dir.path().join("events.jsonl");
    // S = 0.5 * 1 + 0.5 * 0.9 = 0.95
    write_event_records(fs::File::create(&ev).unwrap(), &[record("a", 0.0, 1, 0.9, [10_000, 50_000, 80_000])]).unwrap();

    let trace = load_bandwidth_csv(&bw, 1.0, BandwidthUnits::BytesPerSec).unwrap();
    let events = load_events(&ev, 0.5, 0.5, BandMode::Strict).unwrap();
    assert!((events[0].s() - 0.95).abs() < 1e-12);
    let config = SimulationConfig::default();
    let (ledger, report) = run(&trace, &events, &config).unwrap();
    assert_eq!(ledger.entries[0].alarm_s, Some(0.1));
    assert_eq!(ledger.entries[0].visual_s, Some(0.6));
    assert_eq!(ledger.entries[0].visual_kind, Some(UnitKind::Roi));

    let summary = dir.path().join("summary.json");
    emit_results(&ledger, &report, &config, &summary, ResultFormat::Summary).unwrap();
    let back = load_summary(&summary).unwrap();
    assert_eq!(back.metrics, report);
    assert_eq!(back.config, config);

    let table = dir.path().join("events.csv");
    emit_results(&ledger, &report, &config, &table, ResultFormat::PerEvent).unwrap();
    let rows = read_per_event(fs::File::open(&table).unwrap()).unwrap();
    assert_eq!(rows, ledger);
}

#[test]
fn json_only_reports_no_visuals() {
    let records: Vec<_> = gen_events(ArrivalPattern::Medium, 60.0, 4, &GenParams::default())
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i + 1, r))
        .collect();
    let events = events_from_records(&records, 0.5, 0.5, BandMode::Strict).unwrap();
    let trace = BandwidthTrace::flat(500_000, 60, 1.0);
    let config = SimulationConfig { policy: PolicyId::JsonOnly, ..Default::default() };
    let (_, rep) = run(&trace, &events, &config).unwrap();
    assert!(rep.vtr.iter().all(|p| p.fraction == 0.0));
    assert_eq!(rep.avg_visual_delay_s, None);
    assert_eq!(rep.counts.visuals_delivered, 0);

    let (_, dat) = run(&trace, &events, &SimulationConfig::default()).unwrap();
    assert_eq!(dat.w_alarm_s.map(f64::to_bits), rep.w_alarm_s.map(f64::to_bits));
    assert!(dat.counts.visuals_delivered > 0);
}

#[test]
fn every_policy_delivers_every_alert() {
    let records: Vec<_> = gen_events(ArrivalPattern::Burst, 120.0, 9, &GenParams::default())
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i + 1, r))
        .collect();
    let events = events_from_records(&records, 0.5, 0.5, BandMode::Strict).unwrap();
    let trace = BandwidthTrace::flat(500_000, 30, 1.0);
    for policy in PolicyId::ALL {
        let config = SimulationConfig { policy, ..Default::default() };
        let (ledger, rep) = run(&trace, &events, &config).unwrap();
        assert_eq!(rep.counts.events, events.len());
        assert_eq!(rep.counts.alarms_delivered + rep.counts.starved, events.len(), "{policy}");
        for e in &ledger.entries {
            if let (Some(a), Some(v)) = (e.alarm_s, e.visual_s) {
                if policy.alert_carrier().is_visual() {
                    assert_eq!(a, v);
                } else {
                    assert!(v > a, "{policy}: visual before alert for {}", e.event_id);
                }
            }
        }
        if !policy.expires_visuals() {
            assert_eq!(rep.counts.visuals_expired, 0);
        }
    }
}

#[test]
fn bandwidth_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    let t = BandwidthTrace::from_rates([1_000, 2_000, 1_500], 1.0);
    write_bandwidth_csv(fs::File::create(&p).unwrap(), &t).unwrap();
    assert_eq!(load_bandwidth_csv(&p, 1.0, BandwidthUnits::BytesPerSec).unwrap(), t);
}

#[test]
fn lower_priority_waits_under_contention() {
    // Two alerts that do not fit together: the higher gain per byte goes
    // first and the other follows in the next interval.
    let records = vec![
        (1, record("hi", 0.0, 1, 0.9, [8_000, 50_000, 60_000])),
        (2, record("lo", 0.0, 0, 0.1, [8_000, 50_000, 60_000])),
    ];
    let events = events_from_records(&records, 0.5, 0.5, BandMode::Strict).unwrap();
    let (ledger, _) = run(&BandwidthTrace::flat(10_000, 5, 1.0), &events, &SimulationConfig::default()).unwrap();
    let by_id = |id: &str| ledger.entries.iter().find(|e| e.event_id.as_str() == id).unwrap();
    assert_eq!(by_id("hi").alarm_s, Some(0.8));
    assert_eq!(by_id("lo").alarm_s, Some(1.8));
}
