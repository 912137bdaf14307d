//! Priority- and bandwidth-aware uplink scheduling for edge video alerts.
//!
//! An edge node turns detections into events, each with a small JSON alert
//! and two optional visual payloads (a cropped ROI or a boxed full frame).
//! Every scheduling interval has a byte budget. Alerts go out first, ranked
//! by semantic priority per byte; leftover budget carries the cheaper visual
//! of each alerted event as long as it lands before the visual deadline.
//!
//! Modules:
//! - [`gating`]: frame-level trigger score, routing and ROI selection
//! - [`priority`]: level/score bands and the semantic priority mix
//! - [`scheduler`]: the two-stage greedy interval scheduler and its checks
//! - [`oracle`]: exhaustive exact solver for small intervals
//! - [`baselines`]: alternative policies behind one dispatch
//! - [`simulator`]: trace replay, workloads and metrics
//! - [`traceio`]: bandwidth, event, detection and result file formats
//! - [`experiment`]: random instances, oracle checks and comparison matrices

pub mod baselines;
pub mod exact;
pub mod exec;
pub mod experiment;
pub mod gating;
pub mod oracle;
pub mod priority;
pub mod scheduler;
pub mod simulator;
pub mod traceio;

pub use baselines::{policy_schedule, JsonOnlyOrder, PolicyId, PolicyOptions};
pub use exec::Execution;
pub use priority::SemanticPriority;
pub use scheduler::{schedule_interval, Event, EventId, IntervalContext, Schedule, TransmissionUnit, UnitKind};
pub use simulator::{run, DeliveryLedger, MetricsReport, SimulationConfig};
pub use traceio::BandwidthTrace;
