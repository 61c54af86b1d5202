//! Declarative monitor characterization.
//!
//! A descriptor answers, in machine-readable form, the design questions that
//! decide whether and how a module can be monitored at run time: what the
//! monitoring goal is, which reference inputs and observed outputs exist,
//! whether each specification is directly observable, whether a surrogate
//! estimator can stand in for it, and whether unmet behaviour is at least
//! recognizable. Validation assigns each specification the first applicable
//! strategy in the order
//!
//! ```text
//!     Direct -> Surrogate -> Falsification
//! ```
//!
//! and rejects the design with [`DescriptorError::NotObservable`] when none
//! applies — that error is the signal to rework the system, not a condition
//! the monitor can absorb.
//!
//! Descriptors are stored as JSON (see the bundled `fixtures/*.descriptor`
//! files). `formal_text` is carried verbatim and never interpreted; the
//! executable parameters of a check live in dedicated fields (`surrogate`
//! for estimator-backed specifications, `direct` for plain output bounds).
//! Loading rejects unknown fields and unknown kind strings, so schema drift
//! fails loudly instead of silently dropping information.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::ZMode;
use crate::monitor::{MonitorError, MonitorSpec, SigmaConfig, VerdictStatus};

/// The one surrogate estimator this crate implements: the Markov-chain
/// false-positive-rate pipeline.
pub const ESTIMATOR_FP_RATE_MARKOV: &str = "fp_rate_markov";

/// Calibration-window fallback for callers with no labeled stream to
/// calibrate against.
pub const DEFAULT_CALIBRATION_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("cannot read descriptor {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("descriptor {path} is malformed: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("descriptor declares no specifications")]
    NoSpecifications,
    #[error("name {0:?} is declared more than once")]
    DuplicateName(String),
    #[error(
        "specification {spec:?} is not observable and has no surrogate or \
         falsification strategy; the system design needs rework"
    )]
    NotObservable { spec: String },
    #[error("specification {spec:?} references undeclared signal {input:?}")]
    DanglingReference { spec: String, input: String },
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
    #[error("specification {spec:?} is missing required parameter {param:?}")]
    MissingParameter { spec: String, param: &'static str },
    #[error("specification {spec:?} declares both a fixed sigma and a calibration window")]
    ConflictingSigma { spec: String },
    #[error("specification {spec:?} is directly observable but declares no direct check")]
    MissingDirectCheck { spec: String },
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// What a reference input carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Signal,
    Statistic,
    Qos,
    Sla,
    State,
    Functional,
}

/// Where an observed output lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Physical,
    Qos,
    Computational,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceInput {
    pub name: String,
    pub kind: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedOutput {
    pub name: String,
    pub kind: OutputKind,
}

/// Surrogate estimation: the specification is predicted from named inputs
/// rather than measured. Parameters of the estimator ride along so that a
/// binding is executable without interpreting `formal_text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateDecl {
    pub estimator_name: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_fp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_first: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_mode: Option<ZMode>,
}

/// Falsification: no run-time estimate exists, but unmet behaviour has a
/// recognizable symptom, carried as text for the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsificationDecl {
    pub condition_text: String,
}

/// Direct comparison of a named output against an upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectCheck {
    pub output: String,
    pub max: f64,
}

impl DirectCheck {
    /// The whole run-time check for a directly observable bound.
    pub fn evaluate(&self, value: f64) -> VerdictStatus {
        if value <= self.max {
            VerdictStatus::Accept
        } else {
            VerdictStatus::Violation
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecificationDecl {
    pub name: String,
    pub formal_text: String,
    pub directly_observable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falsification: Option<FalsificationDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNotify {
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
}

/// The full characterization of one monitorable module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorDescriptor {
    pub goal: String,
    #[serde(default)]
    pub reference_inputs: Vec<ReferenceInput>,
    #[serde(default)]
    pub observed_outputs: Vec<ObservedOutput>,
    pub specifications: Vec<SpecificationDecl>,
    #[serde(default)]
    pub posthoc_traces: Vec<String>,
    #[serde(default)]
    pub operator_notify: OperatorNotify,
}

/// How each specification will be monitored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    Surrogate,
    Falsification,
}

/// Strategy per specification, keyed by name so the assignment does not
/// depend on declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyAssignment {
    pub by_spec: BTreeMap<String, Strategy>,
}

impl StrategyAssignment {
    pub fn strategy(&self, spec_name: &str) -> Option<Strategy> {
        self.by_spec.get(spec_name).copied()
    }
}

/// Executable monitor configuration produced by [`bind_monitor`].
#[derive(Debug, Clone, PartialEq)]
pub enum BoundMonitor {
    /// The streaming false-positive-rate pipeline.
    FpRateMarkov(FpRateBinding),
    /// A plain bound on a directly observable output.
    Threshold(DirectCheck),
    /// Nothing to execute; the operator watches for the declared symptom.
    Falsification { condition: String },
}

/// Parameters for the false-positive-rate pipeline as bound from a
/// descriptor. `sigma` stays open when the descriptor pins neither a scale
/// nor a calibration window; the caller resolves it (for labeled streams,
/// from ground truth) before building the executable spec.
#[derive(Debug, Clone, PartialEq)]
pub struct FpRateBinding {
    pub t_fp: f64,
    pub c1: f64,
    pub sigma: Option<SigmaConfig>,
    pub z_mode: ZMode,
    pub inputs: Vec<String>,
}

impl FpRateBinding {
    /// Completes the binding, falling back to `fallback` when the
    /// descriptor leaves the scale open.
    pub fn to_spec(&self, fallback: SigmaConfig) -> Result<MonitorSpec, MonitorError> {
        MonitorSpec::new(
            self.t_fp,
            self.c1,
            self.sigma.unwrap_or(fallback),
            self.z_mode,
        )
    }
}

/// Reads and structurally checks a descriptor file. Unknown fields, unknown
/// kind strings, an empty specification list, duplicate names, and dangling
/// references are all rejected here, so a loaded descriptor is internally
/// consistent.
pub fn load_descriptor(path: impl AsRef<Path>) -> Result<MonitorDescriptor, DescriptorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DescriptorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let d: MonitorDescriptor =
        serde_json::from_str(&text).map_err(|source| DescriptorError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    check_integrity(&d)?;
    Ok(d)
}

fn check_integrity(d: &MonitorDescriptor) -> Result<(), DescriptorError> {
    if d.specifications.is_empty() {
        return Err(DescriptorError::NoSpecifications);
    }
    let mut declared = BTreeSet::new();
    for name in d
        .reference_inputs
        .iter()
        .map(|i| &i.name)
        .chain(d.observed_outputs.iter().map(|o| &o.name))
    {
        if !declared.insert(name.clone()) {
            return Err(DescriptorError::DuplicateName(name.clone()));
        }
    }
    let mut spec_names = BTreeSet::new();
    for spec in &d.specifications {
        if !spec_names.insert(spec.name.clone()) {
            return Err(DescriptorError::DuplicateName(spec.name.clone()));
        }
        if let Some(surrogate) = &spec.surrogate {
            for input in &surrogate.inputs {
                if !declared.contains(input) {
                    return Err(DescriptorError::DanglingReference {
                        spec: spec.name.clone(),
                        input: input.clone(),
                    });
                }
            }
        }
        if let Some(direct) = &spec.direct {
            if !declared.contains(&direct.output) {
                return Err(DescriptorError::DanglingReference {
                    spec: spec.name.clone(),
                    input: direct.output.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Assigns each specification its monitoring strategy, or rejects the
/// design. Total over structurally consistent descriptors: every
/// specification receives exactly one strategy or a typed error.
pub fn validate_descriptor(d: &MonitorDescriptor) -> Result<StrategyAssignment, DescriptorError> {
    check_integrity(d)?;
    let mut by_spec = BTreeMap::new();
    for spec in &d.specifications {
        let strategy = if spec.directly_observable {
            Strategy::Direct
        } else if spec.surrogate.is_some() {
            Strategy::Surrogate
        } else if spec.falsification.is_some() {
            Strategy::Falsification
        } else {
            return Err(DescriptorError::NotObservable {
                spec: spec.name.clone(),
            });
        };
        by_spec.insert(spec.name.clone(), strategy);
    }
    Ok(StrategyAssignment { by_spec })
}

/// Turns an assignment into executable configurations, one per
/// specification in declaration order.
pub fn bind_monitor(
    d: &MonitorDescriptor,
    a: &StrategyAssignment,
) -> Result<Vec<(String, BoundMonitor)>, DescriptorError> {
    let mut bound = Vec::with_capacity(d.specifications.len());
    for spec in &d.specifications {
        let strategy =
            a.strategy(&spec.name)
                .ok_or_else(|| DescriptorError::MissingParameter {
                    spec: spec.name.clone(),
                    param: "strategy assignment",
                })?;
        let config = match strategy {
            Strategy::Direct => {
                let direct = spec
                    .direct
                    .clone()
                    .ok_or_else(|| DescriptorError::MissingDirectCheck {
                        spec: spec.name.clone(),
                    })?;
                BoundMonitor::Threshold(direct)
            }
            Strategy::Surrogate => {
                let surrogate =
                    spec.surrogate
                        .as_ref()
                        .ok_or_else(|| DescriptorError::MissingParameter {
                            spec: spec.name.clone(),
                            param: "surrogate",
                        })?;
                if surrogate.estimator_name != ESTIMATOR_FP_RATE_MARKOV {
                    return Err(DescriptorError::UnknownEstimator(
                        surrogate.estimator_name.clone(),
                    ));
                }
                let t_fp = surrogate
                    .t_fp
                    .ok_or_else(|| DescriptorError::MissingParameter {
                        spec: spec.name.clone(),
                        param: "t_fp",
                    })?;
                let c1 = surrogate
                    .c1
                    .ok_or_else(|| DescriptorError::MissingParameter {
                        spec: spec.name.clone(),
                        param: "c1",
                    })?;
                let sigma = match (surrogate.sigma, surrogate.calibrate_first) {
                    (Some(_), Some(_)) => {
                        return Err(DescriptorError::ConflictingSigma {
                            spec: spec.name.clone(),
                        })
                    }
                    (Some(s), None) => Some(SigmaConfig::Fixed(s)),
                    (None, Some(m)) => Some(SigmaConfig::CalibrateFirst(m)),
                    (None, None) => None,
                };
                let z_mode = surrogate.z_mode.unwrap_or_default();
                let binding = FpRateBinding {
                    t_fp,
                    c1,
                    sigma,
                    z_mode,
                    inputs: surrogate.inputs.clone(),
                };
                // Validates ranges now so binding errors surface at bind
                // time, not mid-stream.
                binding.to_spec(SigmaConfig::CalibrateFirst(DEFAULT_CALIBRATION_WINDOW))?;
                BoundMonitor::FpRateMarkov(binding)
            }
            Strategy::Falsification => {
                let falsification =
                    spec.falsification
                        .as_ref()
                        .ok_or_else(|| DescriptorError::MissingParameter {
                            spec: spec.name.clone(),
                            param: "falsification",
                        })?;
                BoundMonitor::Falsification {
                    condition: falsification.condition_text.clone(),
                }
            }
        };
        bound.push((spec.name.clone(), config));
    }
    Ok(bound)
}
