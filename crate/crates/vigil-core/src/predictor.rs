//! Sliding-window trajectory predictor and smoothness residual.
//!
//! A constant-velocity least-squares line is fit (per axis, against time)
//! over the last `W` admitted detections. The predicted position for the
//! incoming detection and the Euclidean distance to the observed position
//! form the residual
//!
//! ```text
//!     delta_n = || x_hat_n - x_n ||
//! ```
//!
//! which is the belief estimator's measure of how smoothly the target moves.
//!
//! # Outlier gating
//!
//! A least-squares window has no notion of outliers: one wildly displaced
//! detection entering the fit corrupts the next `W` predictions, which would
//! smear a single false detection into several large residuals downstream.
//! `observe` therefore *holds out* a detection whose residual exceeds
//! `factor` times the running median of recently admitted residuals. A
//! held-out detection still produces its (large) residual — the belief
//! estimator must see it — it just does not poison the fit. To avoid locking
//! onto a stale trajectory when the target genuinely maneuvers, at most
//! `max_consecutive` detections are held out in a row; the next one is
//! admitted unconditionally. Set [`PredictorConfig::gate`] to `None` for the
//! plain append-always window.

use std::collections::VecDeque;

use thiserror::Error;

use crate::detection::Detection;

/// Admitted residual norms kept for the gate's running median.
const SCALE_WINDOW: usize = 64;

/// Floor for the gate's median scale, so a noiseless warm-up cannot produce
/// a zero threshold.
const MIN_SCALE: f64 = 1e-9;

/// Times closer than this are treated as coincident by the fit.
const DEGENERATE_TIME_SPREAD: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PredictorError {
    #[error("prediction needs at least {need} detections, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("time went backwards at step {step_index}: {time} < {last_time}")]
    NonMonotoneTime {
        step_index: u64,
        time: f64,
        last_time: f64,
    },
    #[error("step index {got} does not increase on previous {last}")]
    NonMonotoneStep { last: u64, got: u64 },
    #[error("non-finite detection at step {step_index}")]
    NonFiniteInput { step_index: u64 },
    #[error("calibration residuals are all identical; sigma would be 0")]
    DegenerateCalibration,
    #[error("invalid predictor configuration: {0}")]
    InvalidConfig(String),
}

/// Residual-outlier hold-out rule; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// A residual above `factor * median(recent residuals)` is held out.
    pub factor: f64,
    /// Number of admitted residuals required before the gate arms.
    pub min_history: usize,
    /// Hold-outs allowed in a row before forced admission.
    pub max_consecutive: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            factor: 5.0,
            min_history: 8,
            max_consecutive: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorConfig {
    /// Fit window length W (>= 2).
    pub window: usize,
    pub gate: Option<GateConfig>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: 8,
            gate: Some(GateConfig::default()),
        }
    }
}

/// Prediction and distance-to-observation for one detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionResidual {
    pub step_index: u64,
    pub predicted: [f64; 2],
    pub residual_norm: f64,
}

/// Outcome of feeding one detection to the predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowUpdate {
    /// `None` for the first two detections (nothing to predict from).
    pub residual: Option<PredictionResidual>,
    /// `false` when the detection was held out of the fit window as a
    /// residual outlier.
    pub admitted: bool,
}

#[derive(Debug, Clone)]
pub struct PredictorState {
    cfg: PredictorConfig,
    window: VecDeque<(f64, [f64; 2])>,
    scale: VecDeque<f64>,
    consecutive_held: usize,
    last_step: Option<u64>,
    last_time: Option<f64>,
}

impl PredictorState {
    pub fn new(cfg: PredictorConfig) -> Result<Self, PredictorError> {
        if cfg.window < 2 {
            return Err(PredictorError::InvalidConfig(format!(
                "window must be >= 2, got {}",
                cfg.window
            )));
        }
        if let Some(g) = cfg.gate {
            if !(g.factor.is_finite() && g.factor > 1.0) {
                return Err(PredictorError::InvalidConfig(format!(
                    "gate factor must be finite and > 1, got {}",
                    g.factor
                )));
            }
        }
        Ok(Self {
            cfg,
            window: VecDeque::with_capacity(cfg.window + 1),
            scale: VecDeque::with_capacity(SCALE_WINDOW),
            consecutive_held: 0,
            last_step: None,
            last_time: None,
        })
    }

    /// Detections currently inside the fit window.
    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Least-squares position and velocity at the most recent window time,
    /// when a fit exists.
    pub fn kinematic_estimate(&self) -> Option<([f64; 2], [f64; 2])> {
        if self.window.len() < 2 {
            return None;
        }
        let (mean_t, mean_p, slope) = self.fit();
        let t_last = self.window.back().expect("non-empty window").0;
        let pos = [
            mean_p[0] + slope[0] * (t_last - mean_t),
            mean_p[1] + slope[1] * (t_last - mean_t),
        ];
        Some((pos, slope))
    }

    /// Extrapolates the window fit to `next_time`.
    pub fn predict_next(&self, next_time: f64) -> Result<[f64; 2], PredictorError> {
        if self.window.len() < 2 {
            return Err(PredictorError::InsufficientHistory {
                have: self.window.len(),
                need: 2,
            });
        }
        let t_last = self.window.back().expect("non-empty window").0;
        if next_time < t_last {
            return Err(PredictorError::NonMonotoneTime {
                step_index: self.last_step.unwrap_or(0),
                time: next_time,
                last_time: t_last,
            });
        }
        let (mean_t, mean_p, slope) = self.fit();
        Ok([
            mean_p[0] + slope[0] * (next_time - mean_t),
            mean_p[1] + slope[1] * (next_time - mean_t),
        ])
    }

    /// Feeds one detection: emits the residual against the current fit (when
    /// one exists) and then admits the detection into the window, unless the
    /// gate holds it out.
    ///
    /// Residuals for a given step depend only on strictly earlier steps.
    pub fn observe(&mut self, d: &Detection) -> Result<WindowUpdate, PredictorError> {
        if !d.is_finite() {
            return Err(PredictorError::NonFiniteInput {
                step_index: d.step_index,
            });
        }
        if let Some(last) = self.last_step {
            if d.step_index <= last {
                return Err(PredictorError::NonMonotoneStep {
                    last,
                    got: d.step_index,
                });
            }
        }
        if let Some(last_time) = self.last_time {
            if d.time < last_time {
                return Err(PredictorError::NonMonotoneTime {
                    step_index: d.step_index,
                    time: d.time,
                    last_time,
                });
            }
        }
        self.last_step = Some(d.step_index);
        self.last_time = Some(d.time);

        let residual = if self.window.len() >= 2 {
            let predicted = self.predict_next(d.time)?;
            let dx = predicted[0] - d.position[0];
            let dy = predicted[1] - d.position[1];
            Some(PredictionResidual {
                step_index: d.step_index,
                predicted,
                residual_norm: (dx * dx + dy * dy).sqrt(),
            })
        } else {
            None
        };

        if let (Some(gate), Some(res)) = (self.cfg.gate, residual) {
            let armed =
                self.scale.len() >= gate.min_history && self.consecutive_held < gate.max_consecutive;
            if armed && res.residual_norm > gate.factor * self.median_scale().max(MIN_SCALE) {
                self.consecutive_held += 1;
                return Ok(WindowUpdate {
                    residual,
                    admitted: false,
                });
            }
        }

        self.consecutive_held = 0;
        self.window.push_back((d.time, d.position));
        if self.window.len() > self.cfg.window {
            self.window.pop_front();
        }
        if let Some(res) = residual {
            if self.scale.len() == SCALE_WINDOW {
                self.scale.pop_front();
            }
            self.scale.push_back(res.residual_norm);
        }
        Ok(WindowUpdate {
            residual,
            admitted: true,
        })
    }

    /// Per-axis linear regression of position on time over the window.
    /// Returns (mean time, mean position, slope). Falls back to zero slope —
    /// i.e. predicting the window centroid — when all times coincide.
    fn fit(&self) -> (f64, [f64; 2], [f64; 2]) {
        let n = self.window.len() as f64;
        let mut mean_t = 0.0;
        let mut mean_p = [0.0; 2];
        for &(t, p) in &self.window {
            mean_t += t;
            mean_p[0] += p[0];
            mean_p[1] += p[1];
        }
        mean_t /= n;
        mean_p[0] /= n;
        mean_p[1] /= n;

        let mut s_tt = 0.0;
        let mut s_tp = [0.0; 2];
        for &(t, p) in &self.window {
            let dt = t - mean_t;
            s_tt += dt * dt;
            s_tp[0] += dt * (p[0] - mean_p[0]);
            s_tp[1] += dt * (p[1] - mean_p[1]);
        }
        let slope = if s_tt < DEGENERATE_TIME_SPREAD {
            [0.0; 2]
        } else {
            [s_tp[0] / s_tt, s_tp[1] / s_tt]
        };
        (mean_t, mean_p, slope)
    }

    fn median_scale(&self) -> f64 {
        debug_assert!(!self.scale.is_empty());
        let mut v: Vec<f64> = self.scale.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let mid = v.len() / 2;
        if v.len() % 2 == 1 {
            v[mid]
        } else {
            0.5 * (v[mid - 1] + v[mid])
        }
    }
}

/// Sample standard deviation (n−1 divisor) of a residual series, used to set
/// the Gaussian scale of the truth-probability model.
///
/// ```
/// use vigil_core::predictor::calibrate_sigma;
///
/// let sigma = calibrate_sigma(&[0.0, 2.0]).unwrap();
/// assert!((sigma - std::f64::consts::SQRT_2).abs() < 1e-15);
/// ```
pub fn calibrate_sigma(residuals: &[f64]) -> Result<f64, PredictorError> {
    if residuals.len() < 2 {
        return Err(PredictorError::InsufficientHistory {
            have: residuals.len(),
            need: 2,
        });
    }
    let first = residuals[0];
    if residuals.iter().all(|&r| r == first) {
        return Err(PredictorError::DegenerateCalibration);
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let ss = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
    Ok((ss / (n - 1.0)).sqrt())
}
