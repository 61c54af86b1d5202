//! Stream execution and shadow comparison.
//!
//! [`run_stream`] drives one engine over a detection stream, collecting a
//! per-step record of every verdict, posterior snapshots at requested
//! checkpoints (for plotting the rate estimate's concentration), and a
//! summary with the first stable-accept step. When a flag sink is supplied,
//! operator events are flushed after every step, so each flagged record
//! carries the trace exactly as it stood when the event fired.
//!
//! [`shadow_compare`] runs two configurations over the identical stream —
//! the candidate executes in the background and its verdicts are used for
//! comparison only. Each engine exclusively owns its state on its own
//! thread; the streams never feed back, so neither run can perturb the
//! other, and the primary's report is byte-identical to a solo run.
//! Divergences are the steps where status or reasons differ.

use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::detection::Detection;
use crate::descriptor::DescriptorError;
use crate::monitor::{
    FlagSink, MonitorEngine, MonitorError, MonitorSpec, VerdictStatus, ViolationReason,
};
use crate::predictor::PredictorConfig;
use crate::scenario::ScenarioError;

/// Upper edge of the posterior-density grid; the region of interest for
/// small false-positive rates.
pub const PDF_GRID_MAX: f64 = 0.05;

/// Number of grid points (inclusive of both edges).
pub const PDF_GRID_POINTS: usize = 201;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("stream contains no detections")]
    EmptyStream,
}

/// One verdict as recorded by the harness; `n` counts processed detections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub n: u64,
    pub confidence: f64,
    pub rate_estimate: f64,
    pub status: VerdictStatus,
    pub reasons: Vec<ViolationReason>,
}

/// Posterior snapshot after the `n`-th detection, sampled on a fixed grid
/// over [0, `PDF_GRID_MAX`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointPdf {
    pub n: u64,
    pub mean: f64,
    pub std: f64,
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Smallest n with every verdict from n on accepting; `None` when the
    /// last step still violates.
    pub first_stable_accept_n: Option<u64>,
    pub total_violations: u64,
    pub final_rate_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<CheckpointPdf>,
    pub summary: RunSummary,
}

/// A step where the two shadowed configurations disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub n: u64,
    pub a_status: VerdictStatus,
    pub b_status: VerdictStatus,
    pub a_reasons: Vec<ViolationReason>,
    pub b_reasons: Vec<ViolationReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowReport {
    pub a: RunReport,
    pub b: RunReport,
    pub divergences: Vec<Divergence>,
}

/// Runs one engine over the whole stream.
///
/// `checkpoints` lists detection counts at which to snapshot the posterior;
/// entries beyond the stream length are skipped. With `flag_sink` set,
/// operator events are written as JSON lines as they fire.
pub fn run_stream(
    detections: &[Detection],
    spec: MonitorSpec,
    predictor: PredictorConfig,
    checkpoints: &[u64],
    mut flag_sink: Option<&mut (dyn FlagSink + Send)>,
) -> Result<RunReport, HarnessError> {
    if detections.is_empty() {
        return Err(HarnessError::EmptyStream);
    }
    let mut engine = MonitorEngine::new(spec, predictor)?;
    let mut wanted: Vec<u64> = checkpoints.to_vec();
    wanted.sort_unstable();
    wanted.dedup();

    let mut steps = Vec::with_capacity(detections.len());
    let mut checkpoint_pdfs = Vec::with_capacity(wanted.len());
    let mut total_violations = 0u64;

    for d in detections {
        let verdict = engine.step(d)?;
        if verdict.status == VerdictStatus::Violation {
            total_violations += 1;
        }
        let n = engine.steps();
        steps.push(StepRecord {
            n,
            confidence: verdict.confidence,
            rate_estimate: verdict.rate_estimate,
            status: verdict.status,
            reasons: verdict.reasons,
        });
        if wanted.binary_search(&n).is_ok() {
            checkpoint_pdfs.push(snapshot_pdf(&engine, n));
        }
        if let Some(sink) = flag_sink.as_deref_mut() {
            engine.flush_flagged(sink)?;
        }
    }

    let first_stable_accept_n = first_stable_accept(&steps);
    let final_rate_estimate = steps.last().expect("non-empty").rate_estimate;
    Ok(RunReport {
        steps,
        checkpoints: checkpoint_pdfs,
        summary: RunSummary {
            first_stable_accept_n,
            total_violations,
            final_rate_estimate,
        },
    })
}

fn snapshot_pdf(engine: &MonitorEngine, n: u64) -> CheckpointPdf {
    let belief = engine.belief();
    let xs: Vec<f64> = (0..PDF_GRID_POINTS)
        .map(|i| PDF_GRID_MAX * i as f64 / (PDF_GRID_POINTS - 1) as f64)
        .collect();
    let density = xs.iter().map(|&x| belief.posterior_pdf(x)).collect();
    CheckpointPdf {
        n,
        mean: belief.posterior_mean(),
        std: belief.posterior_std(),
        xs,
        density,
    }
}

fn first_stable_accept(steps: &[StepRecord]) -> Option<u64> {
    let last_violation = steps
        .iter()
        .rev()
        .find(|s| s.status == VerdictStatus::Violation);
    match last_violation {
        None => steps.first().map(|s| s.n),
        Some(v) if v.n == steps.last().expect("non-empty").n => None,
        Some(v) => Some(v.n + 1),
    }
}

/// Runs configuration A (primary) and B (candidate) over the same stream on
/// separate threads and reports where their verdicts diverge.
#[allow(clippy::too_many_arguments)]
pub fn shadow_compare(
    detections: &[Detection],
    spec_a: MonitorSpec,
    predictor_a: PredictorConfig,
    spec_b: MonitorSpec,
    predictor_b: PredictorConfig,
    checkpoints: &[u64],
    sink_a: Option<&mut (dyn FlagSink + Send)>,
    sink_b: Option<&mut (dyn FlagSink + Send)>,
) -> Result<ShadowReport, HarnessError> {
    let (a, b) = std::thread::scope(|scope| {
        let handle_a =
            scope.spawn(move || run_stream(detections, spec_a, predictor_a, checkpoints, sink_a));
        let b = run_stream(detections, spec_b, predictor_b, checkpoints, sink_b);
        let a = match handle_a.join() {
            Ok(result) => result,
            Err(panic) => std::panic::resume_unwind(panic),
        };
        (a, b)
    });
    let (a, b) = (a?, b?);

    let divergences = a
        .steps
        .iter()
        .zip(&b.steps)
        .filter(|(sa, sb)| sa.status != sb.status || sa.reasons != sb.reasons)
        .map(|(sa, sb)| Divergence {
            n: sa.n,
            a_status: sa.status,
            b_status: sb.status,
            a_reasons: sa.reasons.clone(),
            b_reasons: sb.reasons.clone(),
        })
        .collect();

    Ok(ShadowReport { a, b, divergences })
}

fn join_reasons(reasons: &[ViolationReason]) -> String {
    reasons
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

/// Writes the per-step verdicts as CSV: `n,confidence,rate_estimate,status,reasons`.
pub fn write_steps_csv<W: io::Write>(report: &RunReport, writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "confidence", "rate_estimate", "status", "reasons"])?;
    for s in &report.steps {
        w.serialize((
            s.n,
            s.confidence,
            s.rate_estimate,
            s.status.to_string(),
            join_reasons(&s.reasons),
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the run summary as pretty JSON.
pub fn write_summary_json<W: io::Write>(report: &RunReport, writer: W) -> Result<(), HarnessError> {
    write_json(&report.summary, writer)
}

/// Writes posterior checkpoint samples as CSV: `n,x,density`, one row per
/// grid point per checkpoint.
pub fn write_posterior_csv<W: io::Write>(report: &RunReport, writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "x", "density"])?;
    for cp in &report.checkpoints {
        for (x, d) in cp.xs.iter().zip(&cp.density) {
            w.serialize((cp.n, x, d))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes shadow divergences as CSV:
/// `n,a_status,a_reasons,b_status,b_reasons`.
pub fn write_divergences_csv<W: io::Write>(
    divergences: &[Divergence],
    writer: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "a_status", "a_reasons", "b_status", "b_reasons"])?;
    for d in divergences {
        w.serialize((
            d.n,
            d.a_status.to_string(),
            join_reasons(&d.a_reasons),
            d.b_status.to_string(),
            join_reasons(&d.b_reasons),
        ))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ShadowSummary<'a> {
    steps: usize,
    divergences: usize,
    a: &'a RunSummary,
    b: &'a RunSummary,
}

/// Writes the shadow comparison summary as pretty JSON.
pub fn write_shadow_summary_json<W: io::Write>(
    report: &ShadowReport,
    writer: W,
) -> Result<(), HarnessError> {
    write_json(
        &ShadowSummary {
            steps: report.a.steps.len(),
            divergences: report.divergences.len(),
            a: &report.a.summary,
            b: &report.b.summary,
        },
        writer,
    )
}

fn write_json<W: io::Write, T: Serialize>(value: &T, mut writer: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ZMode;
    use crate::monitor::SigmaConfig;
    use crate::scenario::{generate, sigma_oracle, ScenarioConfig, TrajectoryConfig, TrajectoryKind};

    fn small_stream(n: usize, n_false: usize, seed: u64) -> (Vec<Detection>, f64) {
        let cfg = ScenarioConfig {
            n_total: n,
            n_false,
            seed,
            trajectory: TrajectoryConfig {
                kind: TrajectoryKind::Spline,
                speed: 15.0,
                noise_std: 0.15,
            },
            perturbation_magnitude: 250.0,
        };
        let s = generate(&cfg).unwrap();
        let sigma = sigma_oracle(&s).unwrap_or(1.0);
        (s.detections, sigma)
    }

    fn spec(t_fp: f64, c1: f64, sigma: f64) -> MonitorSpec {
        MonitorSpec::new(t_fp, c1, SigmaConfig::Fixed(sigma), ZMode::UnitPeak).unwrap()
    }

    #[test]
    fn empty_stream_is_an_error() {
        let result = run_stream(
            &[],
            spec(0.018, 0.95, 1.0),
            PredictorConfig::default(),
            &[],
            None,
        );
        assert!(matches!(result, Err(HarnessError::EmptyStream)));
    }

    #[test]
    fn report_is_consistent_with_itself() {
        let (detections, sigma) = small_stream(300, 2, 3);
        let report = run_stream(
            &detections,
            spec(0.018, 0.95, sigma),
            PredictorConfig::default(),
            &[100, 300],
            None,
        )
        .unwrap();
        assert_eq!(report.steps.len(), 300);
        assert_eq!(
            report.summary.total_violations,
            report
                .steps
                .iter()
                .filter(|s| s.status == VerdictStatus::Violation)
                .count() as u64
        );
        assert_eq!(
            report.summary.final_rate_estimate,
            report.steps.last().unwrap().rate_estimate
        );
        if let Some(first) = report.summary.first_stable_accept_n {
            assert!(report
                .steps
                .iter()
                .filter(|s| s.n >= first)
                .all(|s| s.status == VerdictStatus::Accept));
            assert!(report
                .steps
                .iter()
                .any(|s| s.n == first.saturating_sub(1)
                    && s.status == VerdictStatus::Violation)
                || first == 1);
        }
        assert_eq!(report.checkpoints.len(), 2);
        assert_eq!(report.checkpoints[0].n, 100);
        assert_eq!(report.checkpoints[1].n, 300);
        for cp in &report.checkpoints {
            assert_eq!(cp.xs.len(), PDF_GRID_POINTS);
            assert_eq!(cp.xs[0], 0.0);
            assert_eq!(*cp.xs.last().unwrap(), PDF_GRID_MAX);
            assert!(cp.density.iter().all(|d| d.is_finite() && *d >= 0.0));
        }
    }

    #[test]
    fn checkpoints_beyond_stream_are_skipped() {
        let (detections, sigma) = small_stream(50, 1, 5);
        let report = run_stream(
            &detections,
            spec(0.018, 0.95, sigma),
            PredictorConfig::default(),
            &[30, 500],
            None,
        )
        .unwrap();
        assert_eq!(report.checkpoints.len(), 1);
        assert_eq!(report.checkpoints[0].n, 30);
    }

    #[test]
    fn shadow_of_identical_configs_never_diverges() {
        let (detections, sigma) = small_stream(200, 2, 9);
        let s = spec(0.018, 0.95, sigma);
        let report = shadow_compare(
            &detections,
            s,
            PredictorConfig::default(),
            s,
            PredictorConfig::default(),
            &[100],
            None,
            None,
        )
        .unwrap();
        assert!(report.divergences.is_empty());
        assert_eq!(report.a, report.b);
    }

    #[test]
    fn shadow_divergences_follow_the_confidence_band() {
        // Same threshold, stricter confidence bound in B: the two disagree
        // exactly where confidence lands in [0.95, 0.99).
        let (detections, sigma) = small_stream(400, 3, 13);
        let a = spec(0.018, 0.95, sigma);
        let b = spec(0.018, 0.99, sigma);
        let report = shadow_compare(
            &detections,
            a,
            PredictorConfig::default(),
            b,
            PredictorConfig::default(),
            &[],
            None,
            None,
        )
        .unwrap();
        assert!(!report.divergences.is_empty());
        for (sa, sb) in report.a.steps.iter().zip(&report.b.steps) {
            let diverged = sa.status != sb.status || sa.reasons != sb.reasons;
            let in_band = (0.95..0.99).contains(&sa.confidence);
            assert_eq!(diverged, in_band, "n={} conf={}", sa.n, sa.confidence);
        }
    }

    #[test]
    fn shadow_primary_report_matches_solo_run() {
        let (detections, sigma) = small_stream(250, 2, 17);
        let a = spec(0.018, 0.95, sigma);
        let b = spec(0.05, 0.9, sigma);
        let solo = run_stream(&detections, a, PredictorConfig::default(), &[100], None).unwrap();
        let shadow = shadow_compare(
            &detections,
            a,
            PredictorConfig::default(),
            b,
            PredictorConfig::default(),
            &[100],
            None,
            None,
        )
        .unwrap();
        assert_eq!(shadow.a, solo);
        let mut solo_csv = Vec::new();
        let mut shadow_csv = Vec::new();
        write_steps_csv(&solo, &mut solo_csv).unwrap();
        write_steps_csv(&shadow.a, &mut shadow_csv).unwrap();
        assert_eq!(solo_csv, shadow_csv);
    }

    #[test]
    fn renderers_emit_expected_headers() {
        let (detections, sigma) = small_stream(60, 1, 21);
        let report = run_stream(
            &detections,
            spec(0.018, 0.95, sigma),
            PredictorConfig::default(),
            &[50],
            None,
        )
        .unwrap();
        let mut steps = Vec::new();
        write_steps_csv(&report, &mut steps).unwrap();
        let text = String::from_utf8(steps).unwrap();
        assert!(text.starts_with("n,confidence,rate_estimate,status,reasons\n"));
        assert_eq!(text.lines().count(), 61);

        let mut posterior = Vec::new();
        write_posterior_csv(&report, &mut posterior).unwrap();
        let text = String::from_utf8(posterior).unwrap();
        assert!(text.starts_with("n,x,density\n"));
        assert_eq!(text.lines().count(), 1 + PDF_GRID_POINTS);

        let mut summary = Vec::new();
        write_summary_json(&report, &mut summary).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&summary).unwrap();
        assert!(v.get("first_stable_accept_n").is_some());
        assert!(v.get("total_violations").is_some());
        assert!(v.get("final_rate_estimate").is_some());
    }
}
