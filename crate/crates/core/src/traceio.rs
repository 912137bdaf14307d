//! On-disk formats: bandwidth CSV, line-delimited event and detection traces,
//! and result files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gating::FrameDetections;
use crate::priority::{clamp_to_band, priority_of, validate_priority, PriorityOutput};
use crate::scheduler::{Event, EventId, UnitKind};
use crate::simulator::{DeliveryLedger, LedgerEntry, MetricsReport, SimulationConfig};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("bandwidth trace has no samples")]
    EmptyTrace,
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: event {id} score {score} outside the band of level {level}")]
    BandViolation { line: usize, id: String, level: u32, score: f64 },
    #[error("{0}")]
    Invalid(String),
}

fn open(path: &Path) -> Result<BufReader<File>, TraceError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| TraceError::Io { path: path.to_owned(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, TraceError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| TraceError::Io { path: path.to_owned(), source })
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_owned(), source }
}

// ---------------------------------------------------------------------------
// Bandwidth traces

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSample {
    pub t_start_s: f64,
    pub bytes_per_s: u64,
}

/// Average uplink throughput per fixed-length period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    pub samples: Vec<BandwidthSample>,
    pub sample_period_s: f64,
}

impl BandwidthTrace {
    /// Builds a trace from consecutive per-period rates starting at t = 0.
    pub fn from_rates(rates: impl IntoIterator<Item = u64>, period: f64) -> Self {
        let samples = rates
            .into_iter()
            .enumerate()
            .map(|(i, r)| BandwidthSample { t_start_s: i as f64 * period, bytes_per_s: r.max(1) })
            .collect();
        Self { samples, sample_period_s: period }
    }

    pub fn flat(bytes_per_s: u64, len: usize, period: f64) -> Self {
        Self::from_rates(std::iter::repeat_n(bytes_per_s, len.max(1)), period)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rates(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|s| s.bytes_per_s)
    }

    /// Mean-pools samples into bins of `period` seconds measured from the
    /// first timestamp. Empty bins repeat the previous bin's rate.
    pub fn resample(&self, period: f64) -> Self {
        let Some(first) = self.samples.first() else {
            return self.clone();
        };
        let t0 = first.t_start_s;
        let last = self.samples.last().map(|s| s.t_start_s).unwrap_or(t0);
        let bins = ((last - t0) / period).floor() as usize + 1;
        let mut sums = vec![(0u128, 0u64); bins];
        for s in &self.samples {
            let k = (((s.t_start_s - t0) / period).floor() as usize).min(bins - 1);
            sums[k].0 += s.bytes_per_s as u128;
            sums[k].1 += 1;
        }
        let mut prev = first.bytes_per_s;
        let samples = sums
            .into_iter()
            .enumerate()
            .map(|(k, (sum, n))| {
                if n > 0 {
                    prev = ((sum + n as u128 / 2) / n as u128).max(1) as u64;
                }
                BandwidthSample { t_start_s: t0 + k as f64 * period, bytes_per_s: prev }
            })
            .collect();
        Self { samples, sample_period_s: period }
    }

    fn is_uniform(&self, period: f64) -> bool {
        self.samples
            .windows(2)
            .all(|w| ((w[1].t_start_s - w[0].t_start_s) - period).abs() <= 1e-9 * period.max(1.0))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthUnits {
    #[default]
    BytesPerSec,
    /// Kilobits per second; converted as `kbps * 1000 / 8` bytes per second.
    Kbps,
}

/// Parses `t_sec,bytes_per_sec` CSV.
pub fn parse_bandwidth_csv<R: Read>(reader: R, period: f64, units: BandwidthUnits) -> Result<BandwidthTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let expected = ["t_sec", "bytes_per_sec"];
    if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(TraceError::EmptyTrace);
        }
        return Err(TraceError::MalformedRow {
            line: 1,
            reason: format!("expected header `t_sec,bytes_per_sec`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples: Vec<BandwidthSample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TraceError::MalformedRow { line, reason: e.to_string() })?;
        if rec.len() != 2 {
            return Err(TraceError::MalformedRow { line, reason: format!("expected 2 fields, got {}", rec.len()) });
        }
        let t: f64 = rec[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| TraceError::MalformedRow { line, reason: format!("bad time {:?}", &rec[0]) })?;
        let raw: f64 = rec[1]
            .parse()
            .ok()
            .filter(|b: &f64| b.is_finite())
            .ok_or_else(|| TraceError::MalformedRow { line, reason: format!("bad bandwidth {:?}", &rec[1]) })?;
        if let Some(prev) = samples.last() {
            if t <= prev.t_start_s {
                return Err(TraceError::MalformedRow { line, reason: format!("time {t} not after {}", prev.t_start_s) });
            }
        }
        let bytes = match units {
            BandwidthUnits::BytesPerSec => raw,
            BandwidthUnits::Kbps => raw * 1000.0 / 8.0,
        };
        let bytes_per_s = if bytes < 1.0 {
            warn!("line {line}: non-positive bandwidth {raw} clamped to 1 B/s");
            1
        } else {
            bytes.round() as u64
        };
        samples.push(BandwidthSample { t_start_s: t, bytes_per_s });
    }
    if samples.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let trace = BandwidthTrace { samples, sample_period_s: period };
    Ok(if trace.is_uniform(period) { trace } else { trace.resample(period) })
}

pub fn load_bandwidth_csv(path: &Path, period: f64, units: BandwidthUnits) -> Result<BandwidthTrace, TraceError> {
    parse_bandwidth_csv(open(path)?, period, units)
}

pub fn write_bandwidth_csv<W: Write>(w: W, trace: &BandwidthTrace) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t_sec", "bytes_per_sec"])?;
    for s in &trace.samples {
        wtr.write_record([s.t_start_s.to_string(), s.bytes_per_s.to_string()])?;
    }
    wtr.flush()
}

// ---------------------------------------------------------------------------
// Event traces

fn two_levels() -> u32 {
    2
}

/// One line of an event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub arrival_s: f64,
    pub level: u32,
    #[serde(default = "two_levels")]
    pub num_levels: u32,
    pub score: f64,
    pub c_json: u64,
    pub c_roi: u64,
    pub c_box: u64,
}

impl EventRecord {
    pub fn priority_output(&self) -> PriorityOutput {
        PriorityOutput { level: self.level, score: self.score, num_levels: self.num_levels }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMode {
    /// Warn and move the score into its level's band.
    #[default]
    Clamp,
    Strict,
}

fn json_lines<T, R>(reader: R) -> impl Iterator<Item = Result<(usize, T), TraceError>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(TraceError::MalformedRecord { line: line_no, reason: e.to_string() })),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str::<T>(&l)
                    .map(|v| (line_no, v))
                    .map_err(|e| TraceError::MalformedRecord { line: line_no, reason: e.to_string() }),
            ),
        }
    })
}

pub fn read_event_records<R: BufRead>(reader: R) -> Result<Vec<(usize, EventRecord)>, TraceError> {
    json_lines(reader).collect()
}

/// Validates records, computes semantic priorities and sorts by arrival.
pub fn events_from_records(
    records: &[(usize, EventRecord)],
    beta: f64,
    gamma: f64,
    mode: BandMode,
) -> Result<Vec<Event>, TraceError> {
    let mut out = Vec::with_capacity(records.len());
    for (line, r) in records {
        let line = *line;
        let bad = |reason: String| TraceError::MalformedRecord { line, reason };
        if !(0.0..=1.0).contains(&r.score) {
            return Err(bad(format!("score {} outside [0, 1]", r.score)));
        }
        if !r.arrival_s.is_finite() || r.arrival_s < 0.0 {
            return Err(bad(format!("arrival {} must be finite and non-negative", r.arrival_s)));
        }
        if r.num_levels < 2 || r.level >= r.num_levels {
            return Err(bad(format!("level {} outside 0..{}", r.level, r.num_levels)));
        }
        let mut p = r.priority_output();
        if !validate_priority(&p, gamma) {
            match mode {
                BandMode::Strict => {
                    return Err(TraceError::BandViolation { line, id: r.event_id.clone(), level: r.level, score: r.score })
                }
                BandMode::Clamp => {
                    p = clamp_to_band(&p, gamma);
                    warn!("line {line}: event {} score {} clamped to {}", r.event_id, r.score, p.score);
                }
            }
        }
        let s = priority_of(&p, beta).map_err(|e| bad(e.to_string()))?;
        let e = Event::new(r.event_id.clone(), r.arrival_s, s, r.c_json, r.c_roi, r.c_box).map_err(|e| bad(e.to_string()))?;
        out.push(e);
    }
    out.sort_by(|a, b| a.arrival_s.total_cmp(&b.arrival_s).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

pub fn load_events(path: &Path, beta: f64, gamma: f64, mode: BandMode) -> Result<Vec<Event>, TraceError> {
    let records = read_event_records(open(path)?)?;
    events_from_records(&records, beta, gamma, mode)
}

pub fn write_event_records<W: Write>(mut w: W, records: &[EventRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

// ---------------------------------------------------------------------------
// Detection traces

pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<FrameDetections>, TraceError> {
    let mut out: Vec<FrameDetections> = Vec::new();
    for item in json_lines::<FrameDetections, _>(reader) {
        let (line, frame) = item?;
        if let Some(bad) = frame.detections.iter().position(|d| !d.is_well_formed()) {
            return Err(TraceError::MalformedRecord {
                line,
                reason: format!("detection {bad} of frame {} has an invalid box or confidence", frame.frame_id),
            });
        }
        if let Some(prev) = out.last() {
            if frame.timestamp_s < prev.timestamp_s {
                return Err(TraceError::MalformedRecord {
                    line,
                    reason: format!("timestamp {} precedes {}", frame.timestamp_s, prev.timestamp_s),
                });
            }
        }
        out.push(frame);
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<FrameDetections>, TraceError> {
    read_detections(open(path)?)
}

// ---------------------------------------------------------------------------
// Results

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResultFormat {
    Summary,
    PerEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsSummary {
    pub config: SimulationConfig,
    pub metrics: MetricsReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct PerEventRow {
    event_id: String,
    s: f64,
    arrival_s: f64,
    alarm_s: Option<f64>,
    visual_s: Option<f64>,
    kind: Option<UnitKind>,
    expired: bool,
}

pub fn write_summary<W: Write>(mut w: W, summary: &ResultsSummary) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_per_event<W: Write>(w: W, ledger: &DeliveryLedger) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for e in &ledger.entries {
        wtr.serialize(PerEventRow {
            event_id: e.event_id.as_str().to_owned(),
            s: e.priority,
            arrival_s: e.arrival_s,
            alarm_s: e.alarm_s,
            visual_s: e.visual_s,
            kind: e.visual_kind,
            expired: e.expired_visual,
        })?;
    }
    wtr.flush()
}

pub fn emit_results(
    ledger: &DeliveryLedger,
    report: &MetricsReport,
    config: &SimulationConfig,
    path: &Path,
    format: ResultFormat,
) -> Result<(), TraceError> {
    let w = create(path)?;
    match format {
        ResultFormat::Summary => {
            write_summary(w, &ResultsSummary { config: config.clone(), metrics: report.clone() })
        }
        ResultFormat::PerEvent => write_per_event(w, ledger),
    }
    .map_err(io_at(path))
}

pub fn load_summary(path: &Path) -> Result<ResultsSummary, TraceError> {
    serde_json::from_reader(open(path)?).map_err(|e| TraceError::MalformedRecord { line: e.line(), reason: e.to_string() })
}

/// Reads a per-event table back. The `starved` flag is not part of the
/// table and comes back false.
pub fn read_per_event<R: Read>(reader: R) -> Result<DeliveryLedger, TraceError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<PerEventRow>().enumerate() {
        let row = row.map_err(|e| TraceError::MalformedRow { line: i + 2, reason: e.to_string() })?;
        entries.push(LedgerEntry {
            event_id: EventId::from(row.event_id),
            priority: row.s,
            arrival_s: row.arrival_s,
            alarm_s: row.alarm_s,
            visual_s: row.visual_s,
            visual_kind: row.kind,
            expired_visual: row.expired,
            starved: false,
        });
    }
    Ok(DeliveryLedger { entries })
}
