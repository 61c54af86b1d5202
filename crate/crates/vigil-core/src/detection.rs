//! The detection record shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

/// One timestamped position observation emitted by the module under
/// verification.
///
/// `step_index` starts at 1 and increases strictly within a stream; `time` is
/// non-decreasing. Position components are expected to be finite — the
/// monitor engine quarantines detections that are not (see
/// [`crate::monitor::MonitorEngine`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub step_index: u64,
    /// Seconds.
    pub time: f64,
    /// Meters, planar coordinates.
    pub position: [f64; 2],
}

impl Detection {
    pub fn new(step_index: u64, time: f64, position: [f64; 2]) -> Self {
        Self {
            step_index,
            time,
            position,
        }
    }

    /// True when the timestamp and both position components are finite.
    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.position.iter().all(|c| c.is_finite())
    }
}
