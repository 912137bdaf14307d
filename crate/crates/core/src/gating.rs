//! Edge-side gating over detector output.
//!
//! A frame's trigger score is the highest detection confidence in it. Frames
//! at or above the base threshold are forwarded; the detections that clear the
//! same threshold form the valid set from which one representative ROI is
//! kept per event.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GatingError {
    #[error("threshold {name}={value} outside [0, 1]")]
    ThresholdRange { name: &'static str, value: f64 },
    #[error("tau_low ({low}) exceeds tau_high ({high})")]
    InvertedThresholds { low: f64, high: f64 },
    #[error("valid set is empty; no representative ROI")]
    EmptyValidSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Normalized `[x1, y1, x2, y2]`.
    pub bbox: [f64; 4],
    #[serde(rename = "class")]
    pub class_label: String,
    #[serde(rename = "conf")]
    pub confidence: f64,
    pub size_bytes: u64,
}

impl Detection {
    pub fn is_well_formed(&self) -> bool {
        let [x1, y1, x2, y2] = self.bbox;
        (0.0..=1.0).contains(&x1)
            && (0.0..=1.0).contains(&y1)
            && x1 < x2
            && x2 <= 1.0
            && y1 < y2
            && y2 <= 1.0
            && (0.0..=1.0).contains(&self.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_id: String,
    pub timestamp_s: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Discard,
    ToMllm,
    DirectAccept,
}

/// Gating and routing thresholds. `tau_low` doubles as the gating threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateThresholds {
    tau_low: f64,
    tau_high: f64,
}

impl GateThresholds {
    pub fn new(tau_low: f64, tau_high: f64) -> Result<Self, GatingError> {
        for (name, value) in [("tau_low", tau_low), ("tau_high", tau_high)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GatingError::ThresholdRange { name, value });
            }
        }
        if tau_low > tau_high {
            return Err(GatingError::InvertedThresholds { low: tau_low, high: tau_high });
        }
        Ok(Self { tau_low, tau_high })
    }

    pub fn tau_low(&self) -> f64 {
        self.tau_low
    }

    pub fn tau_high(&self) -> f64 {
        self.tau_high
    }
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { tau_low: 0.25, tau_high: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision {
    pub trigger_score: f64,
    pub gate: bool,
    pub route: Route,
    pub valid_set: Vec<Detection>,
}

/// Highest detection confidence in the frame, 0 for an empty frame.
pub fn trigger_score(frame: &FrameDetections) -> f64 {
    frame.detections.iter().map(|d| d.confidence).fold(0.0, f64::max)
}

pub fn route(score: f64, tau_low: f64, tau_high: f64) -> Result<Route, GatingError> {
    if tau_low > tau_high {
        return Err(GatingError::InvertedThresholds { low: tau_low, high: tau_high });
    }
    Ok(if score < tau_low {
        Route::Discard
    } else if score < tau_high {
        Route::ToMllm
    } else {
        Route::DirectAccept
    })
}

pub fn gate(frame: &FrameDetections, thresholds: &GateThresholds) -> GateDecision {
    let tau_g = thresholds.tau_low;
    let trigger_score = trigger_score(frame);
    let valid_set = frame
        .detections
        .iter()
        .filter(|d| d.confidence >= tau_g)
        .cloned()
        .collect();
    let route = if trigger_score < tau_g {
        Route::Discard
    } else if trigger_score < thresholds.tau_high {
        Route::ToMllm
    } else {
        Route::DirectAccept
    };
    GateDecision { trigger_score, gate: trigger_score >= tau_g, route, valid_set }
}

/// Total order over class labels, most severe first. Unknown labels rank
/// below every listed one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeverityOrder(Vec<String>);

impl SeverityOrder {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(labels.into_iter().map(Into::into).collect())
    }

    /// Lower rank means more severe.
    pub fn rank(&self, label: &str) -> usize {
        self.0.iter().position(|l| l == label).unwrap_or(self.0.len())
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }
}

impl Default for SeverityOrder {
    fn default() -> Self {
        Self::new(["severe", "moderate"])
    }
}

/// Keeps one ROI per event: most severe class first, then the smallest
/// encoded size, then the earliest in the list.
pub fn select_representative_roi<'a>(
    valid_set: &'a [Detection],
    order: &SeverityOrder,
) -> Result<&'a Detection, GatingError> {
    valid_set
        .iter()
        .enumerate()
        .min_by_key(|(i, d)| (order.rank(&d.class_label), d.size_bytes, *i))
        .map(|(_, d)| d)
        .ok_or(GatingError::EmptyValidSet)
}
