//! The verdict engine.
//!
//! Each step runs the full pipeline — predictor residual, truth probability,
//! belief update, confidence and rate estimate — and evaluates the
//! specification
//!
//! ```text
//!     Pr(f_FP <= T_FP) >= c1
//! ```
//!
//! A verdict is `Accept` exactly when no violation reason applies:
//! `ConfidenceNotMet` when confidence < c1, `ThresholdExceeded` when the
//! rate estimate (posterior mean) exceeds T_FP, and `InvalidInput` when the
//! detection itself carries non-finite values. Invalid detections are
//! quarantined: they receive a violation verdict and a trace entry, but are
//! excluded from the predictor window and the belief update, which has no
//! defined transition for them.
//!
//! The engine keeps the last 20 steps in a ring buffer for post-hoc
//! analysis. Operator events are edge-triggered — recorded when a verdict
//! transitions into violation or when the violation reasons change, never on
//! every step of a long violation run. [`MonitorEngine::flush_flagged`]
//! serializes each recorded event, with a copy of the trace ring taken at
//! flush time, as one JSON line:
//!
//! ```text
//! {"step":..,"reasons":[..],"spec":{"t_fp":..,"c1":..},"trace":[{"step":..,
//!  "time":..,"pos":[..,..],"residual":..,"z":..,"confidence":..,
//!  "rate_estimate":..,"status":".."}]}
//! ```
//!
//! Field names and order are fixed; `residual` and `z` are `null` where not
//! computed. Flush per step if events must snapshot the trace exactly as it
//! stood when they fired.

use std::collections::VecDeque;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{truth_probability, BeliefError, BeliefState, TruthProbability, ZMode, Z_DEFAULT};
use crate::detection::Detection;
use crate::predictor::{calibrate_sigma, PredictorConfig, PredictorError, PredictorState};
use crate::special::SpecialError;

/// Trace ring capacity: the current step plus the 19 before it.
pub const TRACE_CAPACITY: usize = 20;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("invalid monitor spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("no steps processed yet")]
    EmptyTrace,
    #[error("flagged-event sink unavailable: {0}")]
    SinkUnavailable(#[source] io::Error),
    #[error("flagged-event serialization failed: {0}")]
    Serialization(#[from] serde_json::Error),
}

/// Where the Gaussian scale of the truth-probability model comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaConfig {
    /// Known up front (e.g. from ground-truth calibration of a labeled
    /// stream).
    Fixed(f64),
    /// Estimated once as the sample standard deviation of the first `M`
    /// residuals. Until then detections are absorbed with the
    /// maximum-entropy truth probability [`Z_DEFAULT`], so a long
    /// calibration window biases the early rate estimate upward; budget
    /// `M` accordingly. Fails with `DegenerateCalibration` if the first `M`
    /// residuals are all identical.
    CalibrateFirst(usize),
}

/// The specification under verification plus the model knobs needed to
/// evaluate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSpec {
    /// Maximum tolerated false-positive rate, in (0, 1).
    pub t_fp: f64,
    /// Minimum confidence that the rate is below `t_fp`, in (0, 1).
    pub c1: f64,
    pub sigma: SigmaConfig,
    pub z_mode: ZMode,
}

impl MonitorSpec {
    pub fn new(t_fp: f64, c1: f64, sigma: SigmaConfig, z_mode: ZMode) -> Result<Self, MonitorError> {
        let spec = Self {
            t_fp,
            c1,
            sigma,
            z_mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.t_fp.is_finite() && 0.0 < self.t_fp && self.t_fp < 1.0) {
            return Err(MonitorError::InvalidSpec(format!(
                "t_fp must lie in (0, 1), got {}",
                self.t_fp
            )));
        }
        if !(self.c1.is_finite() && 0.0 < self.c1 && self.c1 < 1.0) {
            return Err(MonitorError::InvalidSpec(format!(
                "c1 must lie in (0, 1), got {}",
                self.c1
            )));
        }
        match self.sigma {
            SigmaConfig::Fixed(s) if !(s.is_finite() && s > 0.0) => Err(MonitorError::InvalidSpec(
                format!("fixed sigma must be finite and > 0, got {s}"),
            )),
            SigmaConfig::CalibrateFirst(m) if m < 2 => Err(MonitorError::InvalidSpec(format!(
                "calibration window must be >= 2 residuals, got {m}"
            ))),
            _ => Ok(()),
        }
    }

    /// The verdict rule: which violation reasons apply to an evaluated step.
    /// Deterministic in (confidence, rate_estimate) — re-deriving from
    /// logged values reproduces every verdict exactly.
    pub fn classify(&self, confidence: f64, rate_estimate: f64) -> Vec<ViolationReason> {
        let mut reasons = Vec::new();
        if confidence < self.c1 {
            reasons.push(ViolationReason::ConfidenceNotMet);
        }
        if rate_estimate > self.t_fp {
            reasons.push(ViolationReason::ThresholdExceeded);
        }
        reasons
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Accept,
    Violation,
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictStatus::Accept => "accept",
            VerdictStatus::Violation => "violation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    ConfidenceNotMet,
    ThresholdExceeded,
    /// The detection carried non-finite values and was quarantined.
    InvalidInput,
}

impl std::fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViolationReason::ConfidenceNotMet => "confidence_not_met",
            ViolationReason::ThresholdExceeded => "threshold_exceeded",
            ViolationReason::InvalidInput => "invalid_input",
        })
    }
}

/// Per-step monitor outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub step_index: u64,
    pub confidence: f64,
    pub rate_estimate: f64,
    pub status: VerdictStatus,
    pub reasons: Vec<ViolationReason>,
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        self.status == VerdictStatus::Violation
    }
}

/// One step as retained by the trace ring.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub step_index: u64,
    pub time: f64,
    pub position: [f64; 2],
    pub residual_norm: Option<f64>,
    /// `None` for quarantined detections, where no truth probability exists.
    pub z: Option<f64>,
    pub confidence: f64,
    pub rate_estimate: f64,
    pub status: VerdictStatus,
}

/// Receives serialized flagged-event records, one JSON line per call.
pub trait FlagSink {
    fn emit(&mut self, json_line: &str) -> io::Result<()>;
}

/// Writes each record as a line to any `io::Write`.
pub struct JsonLinesSink<W: io::Write> {
    writer: W,
}

impl<W: io::Write> JsonLinesSink<W> {
    pub fn new(writer: W) -> Self {
        Self { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: io::Write> FlagSink for JsonLinesSink<W> {
    fn emit(&mut self, json_line: &str) -> io::Result<()> {
        writeln!(self.writer, "{json_line}")
    }
}

/// Operator notification recorded at a verdict transition; the trace
/// snapshot is attached when the event is flushed to a sink.
#[derive(Debug, Clone, PartialEq)]
struct PendingEvent {
    step_index: u64,
    reasons: Vec<ViolationReason>,
}

#[derive(Debug, Clone)]
enum Calibration {
    Ready(f64),
    Collecting { target: usize, residuals: Vec<f64> },
}

// Serialization shapes for the flagged-event format. Field order is the
// external contract; do not reorder.
#[derive(Serialize)]
struct FlaggedRecord<'a> {
    step: u64,
    reasons: &'a [ViolationReason],
    spec: SpecEcho,
    trace: Vec<TraceLine>,
}

#[derive(Serialize)]
struct SpecEcho {
    t_fp: f64,
    c1: f64,
}

#[derive(Serialize)]
struct TraceLine {
    step: u64,
    time: Option<f64>,
    pos: [Option<f64>; 2],
    residual: Option<f64>,
    z: Option<f64>,
    confidence: f64,
    rate_estimate: f64,
    status: VerdictStatus,
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TraceLine {
    fn from_entry(e: &TraceEntry) -> Self {
        Self {
            step: e.step_index,
            time: finite_or_null(e.time),
            pos: [finite_or_null(e.position[0]), finite_or_null(e.position[1])],
            residual: e.residual_norm,
            z: e.z,
            confidence: e.confidence,
            rate_estimate: e.rate_estimate,
            status: e.status,
        }
    }
}

/// One engine per monitored stream. Deterministic: the same spec over the
/// same stream yields the same verdicts, trace, and events. The engine only
/// consumes detections — nothing here feeds back into the stream source.
#[derive(Debug)]
pub struct MonitorEngine {
    spec: MonitorSpec,
    predictor: PredictorState,
    belief: BeliefState,
    calibration: Calibration,
    trace: VecDeque<TraceEntry>,
    pending: Vec<PendingEvent>,
    flushed: usize,
    last_reasons: Vec<ViolationReason>,
    /// (confidence, rate) after the latest belief change; quarantined steps
    /// report these unchanged.
    last_eval: (f64, f64),
    steps: u64,
    last_step_index: Option<u64>,
    last_time: Option<f64>,
}

impl MonitorEngine {
    pub fn new(spec: MonitorSpec, predictor: PredictorConfig) -> Result<Self, MonitorError> {
        spec.validate()?;
        let calibration = match spec.sigma {
            SigmaConfig::Fixed(s) => Calibration::Ready(s),
            SigmaConfig::CalibrateFirst(m) => Calibration::Collecting {
                target: m,
                residuals: Vec::with_capacity(m),
            },
        };
        Ok(Self {
            spec,
            predictor: PredictorState::new(predictor)?,
            belief: BeliefState::new(),
            calibration,
            trace: VecDeque::with_capacity(TRACE_CAPACITY),
            pending: Vec::new(),
            flushed: 0,
            last_reasons: Vec::new(),
            // Prior belief: Pr(x <= T) = T under Beta(1,1), mean 0.5.
            last_eval: (spec.t_fp, 0.5),
            steps: 0,
            last_step_index: None,
            last_time: None,
        })
    }

    pub fn spec(&self) -> &MonitorSpec {
        &self.spec
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    /// Steps processed, including quarantined ones.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// The calibrated Gaussian scale, once known.
    pub fn sigma(&self) -> Option<f64> {
        match &self.calibration {
            Calibration::Ready(s) => Some(*s),
            Calibration::Collecting { .. } => None,
        }
    }

    /// Processes one detection and renders its verdict.
    pub fn step(&mut self, d: &Detection) -> Result<Verdict, MonitorError> {
        if let Some(last) = self.last_step_index {
            if d.step_index <= last {
                return Err(PredictorError::NonMonotoneStep {
                    last,
                    got: d.step_index,
                }
                .into());
            }
        }
        if let Some(last_time) = self.last_time {
            if d.time.is_finite() && d.time < last_time {
                return Err(PredictorError::NonMonotoneTime {
                    step_index: d.step_index,
                    time: d.time,
                    last_time,
                }
                .into());
            }
        }
        self.last_step_index = Some(d.step_index);
        if d.time.is_finite() {
            self.last_time = Some(d.time);
        }
        self.steps += 1;

        if !d.is_finite() {
            return Ok(self.quarantine(d));
        }

        let update = self.predictor.observe(d)?;
        let residual_norm = update.residual.map(|r| r.residual_norm);

        let z = match &mut self.calibration {
            Calibration::Ready(sigma) => {
                truth_probability(residual_norm, *sigma, self.spec.z_mode)?
            }
            Calibration::Collecting { target, residuals } => {
                if let Some(r) = residual_norm {
                    residuals.push(r);
                    if residuals.len() >= *target {
                        let sigma = calibrate_sigma(residuals)?;
                        self.calibration = Calibration::Ready(sigma);
                    }
                }
                // The scale only applies from the next step on.
                TruthProbability::new(Z_DEFAULT)?
            }
        };

        self.belief.update(z);
        let confidence = self.belief.confidence(self.spec.t_fp)?;
        let rate_estimate = self.belief.posterior_mean();
        self.last_eval = (confidence, rate_estimate);

        let reasons = self.spec.classify(confidence, rate_estimate);
        self.finish_step(d, residual_norm, Some(z.value()), confidence, rate_estimate, reasons)
    }

    fn quarantine(&mut self, d: &Detection) -> Verdict {
        let (confidence, rate_estimate) = self.last_eval;
        let reasons = vec![ViolationReason::InvalidInput];
        self.finish_step(d, None, None, confidence, rate_estimate, reasons)
            .expect("quarantine path is infallible")
    }

    fn finish_step(
        &mut self,
        d: &Detection,
        residual_norm: Option<f64>,
        z: Option<f64>,
        confidence: f64,
        rate_estimate: f64,
        reasons: Vec<ViolationReason>,
    ) -> Result<Verdict, MonitorError> {
        let status = if reasons.is_empty() {
            VerdictStatus::Accept
        } else {
            VerdictStatus::Violation
        };

        if self.trace.len() == TRACE_CAPACITY {
            self.trace.pop_front();
        }
        self.trace.push_back(TraceEntry {
            step_index: d.step_index,
            time: d.time,
            position: d.position,
            residual_norm,
            z,
            confidence,
            rate_estimate,
            status,
        });

        // Edge-triggered: entering violation, or violating differently.
        if !reasons.is_empty() && reasons != self.last_reasons {
            self.pending.push(PendingEvent {
                step_index: d.step_index,
                reasons: reasons.clone(),
            });
        }
        self.last_reasons = reasons.clone();

        Ok(Verdict {
            step_index: d.step_index,
            confidence,
            rate_estimate,
            status,
            reasons,
        })
    }

    /// The retained steps, oldest first, ending at the current step.
    pub fn trace_window(&self) -> Result<Vec<TraceEntry>, MonitorError> {
        if self.trace.is_empty() {
            return Err(MonitorError::EmptyTrace);
        }
        Ok(self.trace.iter().cloned().collect())
    }

    /// Events recorded since the last flush, ready for inspection.
    pub fn pending_events(&self) -> usize {
        self.pending.len() - self.flushed
    }

    /// Writes every not-yet-flushed operator event to `sink`, attaching a
    /// copy of the trace ring as it stands now. Returns the number written.
    /// Events are never written twice; call once per step for
    /// transition-time snapshots, or once at end-of-stream for a final view.
    pub fn flush_flagged(&mut self, sink: &mut dyn FlagSink) -> Result<usize, MonitorError> {
        let mut written = 0;
        while self.flushed < self.pending.len() {
            let ev = &self.pending[self.flushed];
            let record = FlaggedRecord {
                step: ev.step_index,
                reasons: &ev.reasons,
                spec: SpecEcho {
                    t_fp: self.spec.t_fp,
                    c1: self.spec.c1,
                },
                trace: self.trace.iter().map(TraceLine::from_entry).collect(),
            };
            let line = serde_json::to_string(&record)?;
            sink.emit(&line).map_err(MonitorError::SinkUnavailable)?;
            self.flushed += 1;
            written += 1;
        }
        Ok(written)
    }
}
