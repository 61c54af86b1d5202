//! `vigil` — run streaming false-positive-rate monitors from the shell.
//!
//! Subcommands:
//!
//! - `run`: one monitor over a scenario (generated or loaded from CSV);
//!   writes `steps.csv`, `summary.json`, `posterior.csv`, `flagged.jsonl`.
//! - `shadow`: two monitor configurations over the identical stream; writes
//!   both reports plus `divergences.csv` and `shadow_summary.json`.
//! - `generate`: a labeled scenario stream as CSV.
//! - `validate-descriptor`: strategy assignment and binding for a
//!   descriptor file.
//!
//! Exit codes: 0 success, 1 violations (or shadow divergences) present,
//! 2 usage, parse, or validation errors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use vigil_core::belief::ZMode;
use vigil_core::descriptor::{
    bind_monitor, load_descriptor, validate_descriptor, BoundMonitor, FpRateBinding,
    MonitorDescriptor,
};
use vigil_core::harness::{
    run_stream, shadow_compare, write_divergences_csv, write_posterior_csv,
    write_shadow_summary_json, write_steps_csv, write_summary_json, RunReport,
};
use vigil_core::monitor::{FlagSink, JsonLinesSink, MonitorSpec, SigmaConfig};
use vigil_core::predictor::PredictorConfig;
use vigil_core::scenario::{generate, sigma_oracle, LabeledStream, ScenarioConfig, TrajectoryConfig};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Streaming run-time verification for detection-producing modules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a monitor over a scenario stream and write report files.
    Run(RunArgs),
    /// Run two configurations over the same stream and report divergences.
    Shadow(ShadowArgs),
    /// Generate a labeled scenario stream as CSV.
    Generate(GenerateArgs),
    /// Check a descriptor file and print its strategy assignment.
    ValidateDescriptor(ValidateArgs),
}

/// Flags describing a generated scenario. Ignored when `--scenario` loads a
/// stream from disk.
#[derive(Args)]
struct ScenarioArgs {
    /// Scenario RNG seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Total detections in the stream.
    #[arg(long, default_value_t = 1000)]
    n_total: usize,
    /// Injected false detections.
    #[arg(long, default_value_t = 8)]
    n_false: usize,
    /// Trajectory family: line, arc, or spline.
    #[arg(long, default_value = "spline")]
    trajectory: String,
    /// Target speed in m/s.
    #[arg(long, default_value_t = 15.0)]
    speed: f64,
    /// Per-axis observation noise in meters.
    #[arg(long, default_value_t = 0.15)]
    noise_std: f64,
    /// Displacement of injected detections in meters.
    #[arg(long, default_value_t = 250.0)]
    magnitude: f64,
}

/// Overrides applied on top of the descriptor's surrogate parameters.
#[derive(Args)]
struct SpecOverrides {
    /// Override the false-positive-rate threshold T_FP.
    #[arg(long)]
    t_fp: Option<f64>,
    /// Override the confidence bound c1.
    #[arg(long)]
    c1: Option<f64>,
    /// Override the residual scale sigma in meters (skips oracle calibration).
    #[arg(long)]
    sigma: Option<f64>,
    /// Override the truth-probability mode: unit_peak or literal_density.
    #[arg(long)]
    z_mode: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Monitor descriptor file.
    #[arg(long)]
    descriptor: PathBuf,
    /// Load the stream from a scenario CSV instead of generating one.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    gen: ScenarioArgs,
    #[command(flatten)]
    overrides: SpecOverrides,
    /// Detection counts at which to snapshot the posterior.
    #[arg(long, value_delimiter = ',', default_value = "100,300,600,1000")]
    checkpoints: Vec<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ShadowArgs {
    /// Descriptor for configuration A (the primary).
    #[arg(long)]
    descriptor_a: PathBuf,
    /// Descriptor for configuration B (the shadowed candidate).
    #[arg(long)]
    descriptor_b: PathBuf,
    /// Load the stream from a scenario CSV instead of generating one.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    gen: ScenarioArgs,
    /// Overrides applied to both configurations.
    #[command(flatten)]
    overrides: SpecOverrides,
    #[arg(long, value_delimiter = ',', default_value = "100,300,600,1000")]
    checkpoints: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    gen: ScenarioArgs,
    /// Output CSV path.
    #[arg(long, default_value = "scenario.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Descriptor file to check.
    descriptor: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Shadow(args) => cmd_shadow(args),
        Command::Generate(args) => cmd_generate(args),
        Command::ValidateDescriptor(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn scenario_config(args: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    Ok(ScenarioConfig {
        n_total: args.n_total,
        n_false: args.n_false,
        seed: args.seed,
        trajectory: TrajectoryConfig {
            kind: args.trajectory.parse()?,
            speed: args.speed,
            noise_std: args.noise_std,
        },
        perturbation_magnitude: args.magnitude,
    })
}

fn load_or_generate(
    scenario: &Option<PathBuf>,
    args: &ScenarioArgs,
) -> anyhow::Result<LabeledStream> {
    match scenario {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("cannot open scenario {}", path.display()))?;
            Ok(LabeledStream::from_csv(BufReader::new(file))?)
        }
        None => Ok(generate(&scenario_config(args)?)?),
    }
}

/// The one binding `run`/`shadow` can execute: the fp-rate pipeline.
fn fp_binding(d: &MonitorDescriptor) -> anyhow::Result<FpRateBinding> {
    let assignment = validate_descriptor(d)?;
    for (name, bound) in bind_monitor(d, &assignment)? {
        if let BoundMonitor::FpRateMarkov(binding) = bound {
            return Ok(binding);
        }
        eprintln!("note: specification {name:?} is not stream-executable here; skipping");
    }
    anyhow::bail!("descriptor binds no fp_rate_markov surrogate; nothing to run on a detection stream")
}

fn resolve_spec(
    binding: &FpRateBinding,
    stream: &LabeledStream,
    overrides: &SpecOverrides,
) -> anyhow::Result<MonitorSpec> {
    let sigma = match (overrides.sigma, binding.sigma) {
        (Some(s), _) => SigmaConfig::Fixed(s),
        (None, Some(s)) => s,
        // The descriptor leaves the scale open: calibrate from the labeled
        // stream's ground truth. Only sensible when the stream contains the
        // outliers that should dominate the scale.
        (None, None) => SigmaConfig::Fixed(
            sigma_oracle(stream).context("descriptor leaves sigma open and the stream cannot calibrate it")?,
        ),
    };
    let mut spec = binding.to_spec(sigma)?;
    if let Some(t) = overrides.t_fp {
        spec.t_fp = t;
    }
    if let Some(c) = overrides.c1 {
        spec.c1 = c;
    }
    if let Some(z) = &overrides.z_mode {
        spec.z_mode = z.parse::<ZMode>().map_err(anyhow::Error::msg)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_report(report: &RunReport, dir: &Path, prefix: &str) -> anyhow::Result<()> {
    let open = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let path = dir.join(format!("{prefix}{name}"));
        Ok(BufWriter::new(File::create(&path).with_context(|| {
            format!("cannot create {}", path.display())
        })?))
    };
    write_steps_csv(report, open("steps.csv")?)?;
    write_summary_json(report, open("summary.json")?)?;
    write_posterior_csv(report, open("posterior.csv")?)?;
    Ok(())
}

fn flagged_sink(dir: &Path, name: &str) -> anyhow::Result<JsonLinesSink<BufWriter<File>>> {
    let path = dir.join(name);
    let file =
        File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(JsonLinesSink::new(BufWriter::new(file)))
}

fn summary_line(report: &RunReport) -> String {
    let first = report
        .summary
        .first_stable_accept_n
        .map_or_else(|| "none".to_string(), |n| n.to_string());
    format!(
        "steps={} violations={} first_stable_accept_n={} final_rate_estimate={:.6}",
        report.steps.len(),
        report.summary.total_violations,
        first,
        report.summary.final_rate_estimate
    )
}

fn cmd_run(args: RunArgs) -> anyhow::Result<u8> {
    let descriptor = load_descriptor(&args.descriptor)?;
    let binding = fp_binding(&descriptor)?;
    let stream = load_or_generate(&args.scenario, &args.gen)?;
    let spec = resolve_spec(&binding, &stream, &args.overrides)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut sink = flagged_sink(&args.out, "flagged.jsonl")?;
    let report = run_stream(
        &stream.detections,
        spec,
        PredictorConfig::default(),
        &args.checkpoints,
        Some(&mut sink),
    )?;
    sink.into_inner().flush()?;
    write_report(&report, &args.out, "")?;

    println!("{}", summary_line(&report));
    Ok(u8::from(report.summary.total_violations > 0))
}

fn cmd_shadow(args: ShadowArgs) -> anyhow::Result<u8> {
    let descriptor_a = load_descriptor(&args.descriptor_a)?;
    let descriptor_b = load_descriptor(&args.descriptor_b)?;
    let binding_a = fp_binding(&descriptor_a)?;
    let binding_b = fp_binding(&descriptor_b)?;
    let stream = load_or_generate(&args.scenario, &args.gen)?;
    let spec_a = resolve_spec(&binding_a, &stream, &args.overrides)?;
    let spec_b = resolve_spec(&binding_b, &stream, &args.overrides)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut sink_a = flagged_sink(&args.out, "a_flagged.jsonl")?;
    let mut sink_b = flagged_sink(&args.out, "b_flagged.jsonl")?;
    let report = shadow_compare(
        &stream.detections,
        spec_a,
        PredictorConfig::default(),
        spec_b,
        PredictorConfig::default(),
        &args.checkpoints,
        Some(&mut sink_a as &mut (dyn FlagSink + Send)),
        Some(&mut sink_b as &mut (dyn FlagSink + Send)),
    )?;
    sink_a.into_inner().flush()?;
    sink_b.into_inner().flush()?;

    write_report(&report.a, &args.out, "a_")?;
    write_report(&report.b, &args.out, "b_")?;
    let open = |name: &str| -> anyhow::Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(args.out.join(name))?))
    };
    write_divergences_csv(&report.divergences, open("divergences.csv")?)?;
    write_shadow_summary_json(&report, open("shadow_summary.json")?)?;

    println!("a: {}", summary_line(&report.a));
    println!("b: {}", summary_line(&report.b));
    println!("divergences={}", report.divergences.len());
    Ok(u8::from(!report.divergences.is_empty()))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<u8> {
    let stream = generate(&scenario_config(&args.gen)?)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    stream.to_csv(BufWriter::new(file))?;
    let injected = stream.injected_indices().len();
    match sigma_oracle(&stream) {
        Ok(sigma) => println!(
            "wrote {} steps ({} injected) to {}; sigma_oracle={:.6}",
            stream.len(),
            injected,
            args.out.display(),
            sigma
        ),
        Err(_) => println!(
            "wrote {} steps ({} injected) to {}",
            stream.len(),
            injected,
            args.out.display()
        ),
    }
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<u8> {
    let descriptor = load_descriptor(&args.descriptor)?;
    let assignment = validate_descriptor(&descriptor)?;
    let bound = bind_monitor(&descriptor, &assignment)?;
    for (name, config) in &bound {
        let what = match config {
            BoundMonitor::FpRateMarkov(b) => format!(
                "surrogate via fp_rate_markov (t_fp={}, c1={})",
                b.t_fp, b.c1
            ),
            BoundMonitor::Threshold(check) => {
                format!("direct check on {} (max {})", check.output, check.max)
            }
            BoundMonitor::Falsification { condition } => {
                format!("falsification: {condition}")
            }
        };
        println!("{name}: {what}");
    }
    Ok(0)
}
