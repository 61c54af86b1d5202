//! Markov belief over true-detection counts and the false-positive-rate
//! posterior.
//!
//! Let `z_n` be the probability that the n-th detection is true, derived
//! from the prediction residual. The state `(n, k)` — "k of the first n
//! detections were true" — evolves by
//!
//! ```text
//!     p(k | n+1) = z_{n+1} * p(k-1 | n) + (1 - z_{n+1}) * p(k | n)
//! ```
//!
//! with `p(0|0) = 1` and single-parent rules at the edges. Every update is a
//! convex redistribution, so the vector stays normalized without any
//! explicit renormalization.
//!
//! Conditioned on `(n, k)`, the false-positive rate `x` has the Beta-shaped
//! density `(1-x)^k x^{n-k} / B(1+n-k, 1+k)`; mixing over the belief gives
//! the full posterior
//!
//! ```text
//!     p(x | n) = sum_k p(k|n) * (1-x)^k * x^(n-k) / B(1+n-k, 1+k)
//! ```
//!
//! and the specification confidence is its CDF at the rate threshold:
//!
//! ```text
//!     Pr(x <= T) = sum_k p(k|n) * I_T(1+n-k, 1+k)
//! ```
//!
//! Mind the parameter convention: the *first* Beta parameter is the exponent
//! of `x` plus one, i.e. `1+n-k`, not `1+k`. Swapping these is the easiest
//! mistake to make in this file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{ln_beta, regularized_incomplete_beta, SpecialError};

/// Truth probability assigned to detections that produced no residual
/// (the first two of a stream, and steps observed before the Gaussian scale
/// is calibrated): maximum entropy, no evidence either way.
pub const Z_DEFAULT: f64 = 0.5;

/// Mixture components with weight below this are skipped when evaluating
/// the confidence integral. The belief itself is never pruned; the induced
/// error is at most (n+1) * 1e-15, far below every tolerance used against
/// the confidence.
const WEIGHT_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("sigma must be > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// How a residual maps to a truth probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// `exp(-delta^2 / (2 sigma^2))` — the Gaussian kernel rescaled to peak
    /// at 1, so the value is a probability for every sigma. Default.
    #[default]
    UnitPeak,
    /// The Gaussian density itself, `exp(-delta^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`,
    /// clamped into [0, 1]. For sigma < 1/sqrt(2 pi) the unclamped value
    /// exceeds 1 and is not a probability; provided for comparison runs.
    LiteralDensity,
}

impl std::str::FromStr for ZMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit_peak" | "unit-peak" => Ok(ZMode::UnitPeak),
            "literal_density" | "literal-density" => Ok(ZMode::LiteralDensity),
            other => Err(format!(
                "unknown z mode {other:?} (expected unit_peak or literal_density)"
            )),
        }
    }
}

impl std::fmt::Display for ZMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ZMode::UnitPeak => "unit_peak",
            ZMode::LiteralDensity => "literal_density",
        })
    }
}

/// A validated probability that a detection is true.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthProbability(f64);

impl TruthProbability {
    pub fn new(z: f64) -> Result<Self, BeliefError> {
        if !z.is_finite() {
            return Err(BeliefError::NonFiniteInput(format!("z = {z}")));
        }
        if !(0.0..=1.0).contains(&z) {
            return Err(BeliefError::OutOfRange(z));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Maps a prediction residual to the probability that the detection is true.
///
/// `None` (no prediction available) yields [`Z_DEFAULT`].
///
/// ```
/// use vigil_core::belief::{truth_probability, ZMode};
///
/// let z = truth_probability(Some(0.0), 1.0, ZMode::UnitPeak).unwrap();
/// assert_eq!(z.value(), 1.0);
/// let z = truth_probability(Some(1.0), 1.0, ZMode::UnitPeak).unwrap();
/// assert!((z.value() - (-0.5f64).exp()).abs() < 1e-15);
/// ```
pub fn truth_probability(
    residual_norm: Option<f64>,
    sigma: f64,
    mode: ZMode,
) -> Result<TruthProbability, BeliefError> {
    if !sigma.is_finite() {
        return Err(BeliefError::NonFiniteInput(format!("sigma = {sigma}")));
    }
    if sigma <= 0.0 {
        return Err(BeliefError::NonPositiveSigma(sigma));
    }
    let delta = match residual_norm {
        None => return Ok(TruthProbability(Z_DEFAULT)),
        Some(d) => d,
    };
    if !delta.is_finite() {
        return Err(BeliefError::NonFiniteInput(format!("residual = {delta}")));
    }
    let kernel = (-delta * delta / (2.0 * sigma * sigma)).exp();
    let z = match mode {
        ZMode::UnitPeak => kernel,
        ZMode::LiteralDensity => {
            (kernel / (sigma * (2.0 * std::f64::consts::PI).sqrt())).min(1.0)
        }
    };
    Ok(TruthProbability(z))
}

/// The belief vector `p(k | n)` for k = 0..=n.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl Default for BeliefState {
    fn default() -> Self {
        Self::new()
    }
}

impl BeliefState {
    /// Initial condition: zero detections, `p(0|0) = 1`.
    pub fn new() -> Self {
        Self { probs: vec![1.0] }
    }

    /// Number of detections absorbed so far.
    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    /// The belief vector, `probs[k] = p(k | n)`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Absorbs one detection with truth probability `z`.
    ///
    /// ```
    /// use vigil_core::belief::{BeliefState, TruthProbability};
    ///
    /// let mut b = BeliefState::new();
    /// b.update(TruthProbability::new(0.9).unwrap());
    /// b.update(TruthProbability::new(0.8).unwrap());
    /// let expect = [0.02, 0.26, 0.72];
    /// for (p, e) in b.probs().iter().zip(expect) {
    ///     assert!((p - e).abs() < 1e-15);
    /// }
    /// ```
    pub fn update(&mut self, z: TruthProbability) {
        let z = z.value();
        let stay = 1.0 - z;
        let old_len = self.probs.len();
        self.probs.push(0.0);
        // In place, top down: writing index k reads k and k-1, both still
        // holding the previous step's values.
        for k in (0..old_len + 1).rev() {
            let from_true = if k >= 1 { z * self.probs[k - 1] } else { 0.0 };
            let from_false = if k < old_len { stay * self.probs[k] } else { 0.0 };
            self.probs[k] = from_true + from_false;
        }
    }

    /// Posterior density of the false-positive rate at `x`.
    ///
    /// Each mixture component is evaluated in log space,
    /// `exp(k ln(1-x) + (n-k) ln x - ln B(1+n-k, 1+k))`, so the sum stays
    /// finite out to n ~ 1e4. The zero-exponent edge cases use `0 ln 0 = 0`.
    ///
    /// # Panics
    ///
    /// Panics if `x` is outside [0, 1].
    pub fn posterior_pdf(&self, x: f64) -> f64 {
        assert!(
            (0.0..=1.0).contains(&x),
            "posterior_pdf: x = {x} outside [0, 1]"
        );
        let n = self.n();
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let n_minus_k = (n - k) as f64;
            let kf = k as f64;
            // (1-x)^k vanishes at x=1 unless k=0; x^(n-k) vanishes at x=0
            // unless k=n.
            if (x == 1.0 && k > 0) || (x == 0.0 && k < n) {
                continue;
            }
            let mut ln_term = -ln_beta(n_minus_k + 1.0, kf + 1.0);
            if k > 0 {
                ln_term += kf * (1.0 - x).ln();
            }
            if k < n {
                ln_term += n_minus_k * x.ln();
            }
            acc += p * ln_term.exp();
        }
        acc
    }

    /// `Pr(f_FP <= t_fp)` — the confidence that the rate is below threshold.
    pub fn confidence(&self, t_fp: f64) -> Result<f64, SpecialError> {
        if !(0.0..=1.0).contains(&t_fp) {
            return Err(SpecialError::Domain(format!("t_fp = {t_fp} outside [0, 1]")));
        }
        let n = self.n();
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p < WEIGHT_FLOOR {
                continue;
            }
            let a = (n - k) as f64 + 1.0;
            let b = k as f64 + 1.0;
            acc += p * regularized_incomplete_beta(a, b, t_fp)?;
        }
        // Guard against accumulated roundoff nudging past the endpoints.
        Ok(acc.clamp(0.0, 1.0))
    }

    /// Mean of the rate posterior: `sum_k p(k|n) (n-k+1) / (n+2)`.
    pub fn posterior_mean(&self) -> f64 {
        let n = self.n() as f64;
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p * (n - k as f64 + 1.0);
        }
        acc / (n + 2.0)
    }

    /// Standard deviation of the rate posterior, from the closed-form
    /// second moment of each Beta component.
    pub fn posterior_std(&self) -> f64 {
        let n = self.n() as f64;
        let mut second = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            let a = n - k as f64 + 1.0;
            // E[X^2] for Beta(a, b) with a+b = n+2.
            second += p * a * (a + 1.0) / ((n + 2.0) * (n + 3.0));
        }
        let mean = self.posterior_mean();
        (second - mean * mean).max(0.0).sqrt()
    }
}
