//! Post-training analyses: occupancy, readiness, calibration, frozen shock
//! rollouts, recovery-phase PCA displacement and the same-state probe.

use serde::{Deserialize, Serialize};

pub mod report;
pub mod rollout;
pub mod stats;

pub use report::{
    assay_run, occupancy_assay, readiness_assay, summarize_rows, AssayRow, AssaySummary,
    CohortSummary, OccupancyRow, RunAssay,
};
pub use rollout::{
    calibration_assay, pca_displacement, same_state_probe, shock_magnitude, shock_rollout,
    Calibration, Condition, ProbeSet, ShockRollout,
};
pub use stats::{mannwhitney, residue_correlation, spearman};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssayConfig {
    pub occupancy_window: usize,
    pub rollout_steps: usize,
    pub shock_start: usize,
    pub shock_end: usize,
    pub shock_delta: f64,
    pub calibration_states: usize,
    pub probe_count: usize,
}

impl Default for AssayConfig {
    fn default() -> Self {
        AssayConfig {
            occupancy_window: 50,
            rollout_steps: 160,
            shock_start: 60,
            shock_end: 79,
            shock_delta: -0.08,
            calibration_states: 500,
            probe_count: 64,
        }
    }
}

impl AssayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.shock_start > self.shock_end || self.shock_end + 1 >= self.rollout_steps {
            return Err("assay shock window must end before the rollout does".into());
        }
        if self.occupancy_window == 0 || self.probe_count == 0 || self.calibration_states < 2 {
            return Err("assay sample sizes must be positive".into());
        }
        Ok(())
    }

    /// Recovery window: from the step after the shock to the end of the rollout.
    pub fn recovery(&self) -> std::ops::Range<usize> {
        self.shock_end + 1..self.rollout_steps
    }
}
