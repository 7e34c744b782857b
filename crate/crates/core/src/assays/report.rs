//! Per-run assay rows and the cohort-level summary.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::environment::{Zone, N_ACTIONS, N_ZONES};
use crate::numcore::NumResult;
use crate::trainer::{Cohort, EpisodeLog, RunState};

use super::rollout::{
    calibration_assay, identical_prefix, mean_g, pca_displacement_with_trajectory,
    same_state_probe, shock_magnitude, shock_rollout, Calibration, Condition, ProbeSet,
    ShockRollout,
};
use super::stats::{
    mannwhitney, median, residue_correlation, spearman_permutation_p, summarize, Correlation,
    RankSum, Summary,
};

/// Zone fractions averaged over the last `window` episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub zones: [f64; N_ZONES],
    pub episodes_used: usize,
    /// Fewer than `window` episodes were available.
    pub short: bool,
}

pub fn occupancy_assay(logs: &[EpisodeLog], window: usize) -> OccupancyRow {
    let used = &logs[logs.len().saturating_sub(window)..];
    let mut zones = [0.0; N_ZONES];
    for l in used {
        for (z, v) in zones.iter_mut().zip(&l.occupancy) {
            *z += v;
        }
    }
    let n = used.len().max(1) as f64;
    OccupancyRow {
        zones: zones.map(|v| v / n),
        episodes_used: used.len(),
        short: used.len() < window,
    }
}

/// Mean conative target per action over the last `window` episodes.
pub fn readiness_assay(logs: &[EpisodeLog], window: usize) -> [f64; N_ACTIONS] {
    let used = &logs[logs.len().saturating_sub(window)..];
    let mut q = [0.0; N_ACTIONS];
    for l in used {
        for (a, v) in q.iter_mut().zip(&l.mean_q) {
            *a += v;
        }
    }
    q.map(|v| v / used.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssayRow {
    pub cohort: Cohort,
    pub seed: u64,
    pub top_right_occupancy: f64,
    pub bottom_occupancy: f64,
    pub occupancy: [f64; N_ZONES],
    pub occupancy_short: bool,
    pub q_by_action: [f64; N_ACTIONS],
    /// Zero when undefined; see `calibration_degenerate`.
    pub eta_calibration_r: f64,
    pub calibration_degenerate: bool,
    pub pca_displacement: f64,
    pub displacement_zero_variance: bool,
    pub state_distance: f64,
    pub spectrum_distance: f64,
    pub shock_magnitude: f64,
    pub identical_prefix: usize,
    pub injected_total: f64,
    /// Mean per-step |Δg| and |Δz| over the last training episodes.
    pub mean_abs_dg: f64,
    pub mean_abs_dz: f64,
}

impl AssayRow {
    pub fn q_gap(&self) -> f64 {
        self.q_by_action[0] - self.q_by_action[1]
    }
}

/// Everything computed for one trained run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAssay {
    pub row: AssayRow,
    pub calibration: Calibration,
    pub control: ShockRollout,
    pub shock: ShockRollout,
    pub displacement_trajectory: Vec<f64>,
}

pub fn assay_run(cfg: &ExperimentConfig, run: &RunState, probes: &ProbeSet) -> NumResult<RunAssay> {
    let a = &cfg.assay;
    let params = &run.params;
    let occ = occupancy_assay(&run.logs, a.occupancy_window);
    let q = readiness_assay(&run.logs, a.occupancy_window);
    let calibration = calibration_assay(params, cfg, run.cohort, run.seed)?;

    let control = shock_rollout(params, cfg, run.cohort, run.seed, Condition::Control)?;
    let shock = shock_rollout(params, cfg, run.cohort, run.seed, Condition::Shock)?;
    let rec = a.recovery();
    let gs = |r: &ShockRollout, range: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        r.steps[range].iter().map(|s| s.g.clone()).collect()
    };
    let all = 0..a.rollout_steps;
    let disp = pca_displacement_with_trajectory(
        &gs(&control, rec.clone()),
        &gs(&shock, rec.clone()),
        &gs(&control, all.clone()),
        &gs(&shock, all),
    )?;
    let probe = same_state_probe(
        params,
        cfg,
        &mean_g(&control.steps[rec.clone()]),
        &mean_g(&shock.steps[rec.clone()]),
        probes,
    )?;

    let tail = &run.logs[run.logs.len().saturating_sub(a.occupancy_window)..];
    let tail_mean =
        |f: fn(&EpisodeLog) -> f64| tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64;
    let row = AssayRow {
        cohort: run.cohort,
        seed: run.seed,
        top_right_occupancy: occ.zones[Zone::TOP_RIGHT.index()],
        bottom_occupancy: (0..N_ZONES)
            .filter(|&i| Zone::from_index(i).is_bottom())
            .map(|i| occ.zones[i])
            .sum(),
        occupancy: occ.zones,
        occupancy_short: occ.short,
        q_by_action: q,
        eta_calibration_r: calibration.r.unwrap_or(0.0),
        calibration_degenerate: calibration.r.is_none(),
        pca_displacement: disp.value,
        displacement_zero_variance: disp.zero_variance,
        state_distance: probe.state_distance,
        spectrum_distance: probe.spectrum_distance,
        shock_magnitude: shock_magnitude(&control, &shock, rec),
        identical_prefix: identical_prefix(&control, &shock),
        injected_total: shock.total_injected,
        mean_abs_dg: tail_mean(|l| l.mean_abs_dg),
        mean_abs_dz: tail_mean(|l| l.mean_abs_dz),
    };
    Ok(RunAssay {
        row,
        calibration,
        control,
        shock,
        displacement_trajectory: disp.trajectory,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub cohort: Cohort,
    pub n: usize,
    pub top_right_occupancy: Summary,
    pub bottom_occupancy: Summary,
    pub q_by_action: Vec<Summary>,
    /// Per-seed `q(UP) − q(DOWN)`.
    pub q_gap: Summary,
    pub eta_calibration_r: Summary,
    pub pca_displacement: Summary,
    pub state_distance: Summary,
    pub spectrum_distance: Summary,
    pub shock_magnitude: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortTest {
    pub metric: String,
    pub a: Cohort,
    pub b: Cohort,
    pub test: RankSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssaySummary {
    pub config_hash: String,
    pub probe_hash: String,
    pub cohorts: Vec<CohortSummary>,
    pub rank_tests: Vec<CohortTest>,
    /// Spearman between displacement and spectrum distance over all rows.
    pub residue: Option<Correlation>,
    pub residue_permutation: Option<Correlation>,
    pub flags: Vec<String>,
}

impl AssaySummary {
    pub fn cohort(&self, c: Cohort) -> Option<&CohortSummary> {
        self.cohorts.iter().find(|s| s.cohort == c)
    }

    pub fn rank_test(&self, metric: &str, a: Cohort, b: Cohort) -> Option<&RankSum> {
        self.rank_tests
            .iter()
            .find(|t| t.metric == metric && t.a == a && t.b == b)
            .map(|t| &t.test)
    }
}

/// Draws for the permutation p of the residue correlation.
pub const PERMUTATION_DRAWS: usize = 20_000;

pub fn summarize_rows(cfg: &ExperimentConfig, rows: &[AssayRow], probe_hash: &str) -> AssaySummary {
    let mut cohorts = Vec::new();
    let mut flags = Vec::new();
    let present: Vec<Cohort> = Cohort::ALL
        .into_iter()
        .filter(|c| rows.iter().any(|r| r.cohort == *c))
        .collect();
    let pick = |c: Cohort, f: &dyn Fn(&AssayRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.cohort == c).map(f).collect()
    };
    for &c in &present {
        cohorts.push(CohortSummary {
            cohort: c,
            n: rows.iter().filter(|r| r.cohort == c).count(),
            top_right_occupancy: summarize(&pick(c, &|r| r.top_right_occupancy)),
            bottom_occupancy: summarize(&pick(c, &|r| r.bottom_occupancy)),
            q_by_action: (0..N_ACTIONS)
                .map(|a| summarize(&pick(c, &|r| r.q_by_action[a])))
                .collect(),
            q_gap: summarize(&pick(c, &|r| r.q_gap())),
            eta_calibration_r: summarize(&pick(c, &|r| r.eta_calibration_r)),
            pca_displacement: summarize(&pick(c, &|r| r.pca_displacement)),
            state_distance: summarize(&pick(c, &|r| r.state_distance)),
            spectrum_distance: summarize(&pick(c, &|r| r.spectrum_distance)),
            shock_magnitude: summarize(&pick(c, &|r| r.shock_magnitude)),
        });
    }
    for r in rows {
        let tag = format!("{}/{}", r.cohort, r.seed);
        if r.occupancy_short {
            flags.push(format!(
                "{tag}: fewer than {} episodes for occupancy",
                cfg.assay.occupancy_window
            ));
        }
        if r.calibration_degenerate {
            flags.push(format!("{tag}: calibration undefined (no variance)"));
        }
        if r.displacement_zero_variance {
            flags.push(format!("{tag}: recovery g has zero variance"));
        }
    }

    let mut rank_tests = Vec::new();
    let pairs = [
        (Cohort::Full, Cohort::NoBodyToG),
        (Cohort::NoConation, Cohort::NoBodyToG),
        (Cohort::Full, Cohort::NoConation),
    ];
    for metric in ["spectrum_distance", "pca_displacement"] {
        for (a, b) in pairs {
            let f = |r: &AssayRow| match metric {
                "spectrum_distance" => r.spectrum_distance,
                _ => r.pca_displacement,
            };
            let (xa, xb) = (pick(a, &f), pick(b, &f));
            if xa.len() >= 3 && xb.len() >= 3 {
                rank_tests.push(CohortTest {
                    metric: metric.to_string(),
                    a,
                    b,
                    test: mannwhitney(&xa, &xb),
                });
            }
        }
    }
    let disp: Vec<f64> = rows.iter().map(|r| r.pca_displacement).collect();
    let spec: Vec<f64> = rows.iter().map(|r| r.spectrum_distance).collect();
    let (residue, residue_permutation) = if rows.len() >= 8 {
        (
            residue_correlation(&disp, &spec),
            spearman_permutation_p(&disp, &spec, PERMUTATION_DRAWS, cfg.run.master_seed),
        )
    } else {
        flags.push(format!(
            "only {} rows: residue correlation skipped",
            rows.len()
        ));
        (None, None)
    };
    AssaySummary {
        config_hash: cfg.hash(),
        probe_hash: probe_hash.to_string(),
        cohorts,
        rank_tests,
        residue,
        residue_permutation,
        flags,
    }
}

/// Median of a metric for one cohort, `NaN` if the cohort is absent.
pub fn cohort_median(rows: &[AssayRow], c: Cohort, f: impl Fn(&AssayRow) -> f64) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.cohort == c).map(f).collect();
    median(&v)
}
