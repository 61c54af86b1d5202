//! Streaming run-time verification for detection-producing modules.
//!
//! A detector (radar tracker, vision pipeline, anomaly alarm, ...) emits a
//! stream of timestamped positions. Some of those detections are false. This
//! crate maintains, online, a full posterior over the detector's false-positive
//! rate and turns it into per-step accept/violation verdicts against a
//! specification of the form
//!
//! ```text
//!     Pr(f_FP <= T_FP) >= c1
//! ```
//!
//! The estimate never counts false positives directly (ground truth is not
//! observable at run-time). Instead each detection receives a probability of
//! being true, derived from how far it lands from a short-horizon trajectory
//! prediction, and a Markov recursion propagates the joint belief over "k of
//! the first n detections were true". Integrating the induced Beta-mixture
//! posterior yields the confidence that the rate is below threshold.
//!
//! Modules, in pipeline order:
//!
//! - [`predictor`] — sliding-window constant-velocity fit producing the
//!   smoothness residual for each incoming detection.
//! - [`belief`] — residual → truth probability, the belief recursion, and the
//!   Beta-mixture posterior (mean, variance, density, confidence).
//! - [`monitor`] — the verdict engine: spec evaluation, 20-step trace ring,
//!   edge-triggered operator events, flagged-event sink.
//! - [`descriptor`] — declarative monitor characterization; selects a
//!   monitoring strategy (direct / surrogate / falsification) or rejects the
//!   design as not observable.
//! - [`scenario`] — seeded synthetic trajectories with injected false
//!   detections and ground-truth labels, for harness and calibration use.
//! - [`harness`] — drives a monitor (or two, in shadow mode) over a labeled
//!   stream and renders reports.
//! - [`special`] — the regularized incomplete Beta function and friends.

pub mod belief;
pub mod descriptor;
pub mod detection;
pub mod harness;
pub mod monitor;
pub mod predictor;
pub mod scenario;
pub mod special;

pub use belief::{truth_probability, BeliefError, BeliefState, TruthProbability, ZMode, Z_DEFAULT};
pub use descriptor::{
    bind_monitor, load_descriptor, validate_descriptor, BoundMonitor, DescriptorError,
    FpRateBinding, MonitorDescriptor, Strategy, StrategyAssignment,
};
pub use detection::Detection;
pub use harness::{run_stream, shadow_compare, HarnessError, RunReport, RunSummary, ShadowReport};
pub use monitor::{
    FlagSink, JsonLinesSink, MonitorEngine, MonitorError, MonitorSpec, SigmaConfig, Verdict,
    VerdictStatus, ViolationReason,
};
pub use predictor::{
    calibrate_sigma, GateConfig, PredictionResidual, PredictorConfig, PredictorError,
    PredictorState,
};
pub use scenario::{
    generate, sigma_oracle, LabeledStream, ScenarioConfig, ScenarioError, TrajectoryConfig,
    TrajectoryKind,
};
pub use special::{ln_beta, ln_gamma, regularized_incomplete_beta, SpecialError};
