//! Acceptance criteria over a set of assayed runs.
//!
//! Shared by `replicate` and the acceptance test so both judge the same way.
//! Criteria 1, 2 and 10 concern the numerical core, the environment and the
//! pipeline itself and are checked by tests; the rest are evaluated here.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::ParamGroup;
use crate::assays::report::cohort_median;
use crate::assays::{AssayRow, AssaySummary};
use crate::config::ExperimentConfig;
use crate::environment::N_ZONES;
use crate::trainer::Cohort;

/// Seeds per cohort below which cohort statistics are not judged.
pub const MIN_SEEDS: usize = 3;
/// Pooled rows below which the residue coupling is not judged.
pub const MIN_POOLED: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Criterion {
    fn new(id: u8, name: &str, ok: bool, detail: String) -> Self {
        Criterion {
            id,
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(id: u8, name: &str, why: String) -> Self {
        Criterion {
            id,
            name: name.to_string(),
            status: Status::Skipped,
            detail: why,
        }
    }

    pub fn line(&self) -> String {
        format!("{} criterion {:>2} {}: {}", self.status, self.id, self.name, self.detail)
    }
}

/// Criterion 3 from a gradient-presence map (see
/// [`crate::trainer::gradient_presence`]).
pub fn firewall_criterion(presence: &BTreeMap<(String, ParamGroup), bool>, cohort: Cohort) -> Criterion {
    let mut wrong = Vec::new();
    for ((loss, group), &has) in presence {
        if let Some(want) = expected_presence(loss, *group, cohort) {
            if want != has {
                wrong.push(format!("{loss}->{} is {has}", group.name()));
            }
        }
    }
    let n = presence.len();
    Criterion::new(
        3,
        "gradient firewall",
        wrong.is_empty(),
        if wrong.is_empty() {
            format!("{cohort}: {n} loss/group cells match the wiring table")
        } else {
            format!("{cohort}: {}", wrong.join(", "))
        },
    )
}

/// Whether `loss` should reach `group`. `None` marks cells the wiring table
/// leaves unconstrained.
pub fn expected_presence(loss: &str, group: ParamGroup, cohort: Cohort) -> Option<bool> {
    use ParamGroup::*;
    Some(match (loss, group) {
        ("conative", g) => cohort.conative_on() && g == PolicyHead,
        ("actor", PolicyHead | StateHead | Encoders) => true,
        ("actor", _) => false,
        ("obs_pred", ObsDecoder | StateHead | Encoders | Metric | Perspective) => true,
        ("obs_pred", _) => false,
        ("body", BodyDecoder | Encoders) => true,
        ("body", _) => false,
        _ => return None,
    })
}

fn cohorts_complete(rows: &[AssayRow]) -> Result<(), String> {
    for c in Cohort::ALL {
        let n = rows.iter().filter(|r| r.cohort == c).count();
        if n < MIN_SEEDS {
            return Err(format!("{c} has {n} seeds (< {MIN_SEEDS})"));
        }
    }
    Ok(())
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

pub fn shock_criterion(cfg: &ExperimentConfig, rows: &[AssayRow]) -> Criterion {
    const NAME: &str = "shock bookkeeping";
    let a = &cfg.assay;
    let expected = (a.shock_end - a.shock_start + 1) as f64 * a.shock_delta;
    let prefix_ok = rows.iter().all(|r| r.identical_prefix >= a.shock_start);
    let total_ok = rows.iter().all(|r| r.injected_total == expected);
    let mut parts = vec![
        format!("prefix {}", if prefix_ok { "ok" } else { "broken" }),
        format!("injected {}", if total_ok { "ok" } else { "off" }),
    ];
    let mut ok = prefix_ok && total_ok;
    if cohorts_complete(rows).is_ok() {
        for c in Cohort::ALL {
            let m = cohort_median(rows, c, |r| r.shock_magnitude);
            ok &= (-1.45..=-1.05).contains(&m);
            parts.push(format!("{c} Δu {}", f3(m)));
        }
    } else if rows.is_empty() {
        return Criterion::skipped(4, NAME, "no rows".into());
    } else {
        let all: Vec<f64> = rows.iter().map(|r| r.shock_magnitude).collect();
        let m = crate::assays::stats::median(&all);
        ok &= (-1.45..=-1.05).contains(&m);
        parts.push(format!("pooled Δu {}", f3(m)));
    }
    Criterion::new(4, NAME, ok, parts.join("; "))
}

pub fn behaviour_criterion(rows: &[AssayRow]) -> Criterion {
    const NAME: &str = "conation drives behaviour";
    if let Err(why) = cohorts_complete(rows) {
        return Criterion::skipped(5, NAME, why);
    }
    let tr = |c| cohort_median(rows, c, |r| r.top_right_occupancy);
    let bot = |c| cohort_median(rows, c, |r| r.bottom_occupancy);
    let chance = 2.0 / N_ZONES as f64;
    let (tf, tn, tb) = (tr(Cohort::Full), tr(Cohort::NoConation), tr(Cohort::NoBodyToG));
    let (bf, bn, bb) = (bot(Cohort::Full), bot(Cohort::NoConation), bot(Cohort::NoBodyToG));
    let ok = tf > tn && tb > tn && tf >= chance && tb >= chance && bf < bn && bb < bn;
    Criterion::new(
        5,
        NAME,
        ok,
        format!(
            "top-right {} / {} / {} (need > no_conation and >= {}); bottom {} / {} / {}",
            f3(tf),
            f3(tn),
            f3(tb),
            f3(chance),
            f3(bf),
            f3(bn),
            f3(bb)
        ),
    )
}

pub fn calibration_criterion(rows: &[AssayRow]) -> Criterion {
    const NAME: &str = "tendency calibration";
    if let Err(why) = cohorts_complete(rows) {
        return Criterion::skipped(6, NAME, why);
    }
    let r: Vec<f64> = Cohort::ALL
        .iter()
        .map(|&c| cohort_median(rows, c, |r| r.eta_calibration_r))
        .collect();
    Criterion::new(
        6,
        NAME,
        r.iter().all(|&v| v >= 0.8),
        format!("median r {} / {} / {} (need >= 0.8)", f3(r[0]), f3(r[1]), f3(r[2])),
    )
}

/// Median `q(UP)` minus median `q(DOWN)` for one cohort.
pub fn readiness_gap(rows: &[AssayRow], c: Cohort) -> f64 {
    cohort_median(rows, c, |r| r.q_by_action[0]) - cohort_median(rows, c, |r| r.q_by_action[1])
}

pub fn readiness_criterion(rows: &[AssayRow]) -> Criterion {
    const NAME: &str = "readiness dissociation";
    if let Err(why) = cohorts_complete(rows) {
        return Criterion::skipped(7, NAME, why);
    }
    let (gf, gn, gb) = (
        readiness_gap(rows, Cohort::Full),
        readiness_gap(rows, Cohort::NoConation),
        readiness_gap(rows, Cohort::NoBodyToG),
    );
    let ok = gf > 0.05 && gb > 0.05 && gn.abs() < gf && gn.abs() < gb;
    Criterion::new(
        7,
        NAME,
        ok,
        format!("q(UP)-q(DOWN) {} / {} / {}", f3(gf), f3(gn), f3(gb)),
    )
}

pub fn residue_criterion(rows: &[AssayRow], summary: &AssaySummary) -> Criterion {
    const NAME: &str = "geometric residue";
    if let Err(why) = cohorts_complete(rows) {
        return Criterion::skipped(8, NAME, why);
    }
    let disp = |c| cohort_median(rows, c, |r| r.pca_displacement);
    let spec = |c| cohort_median(rows, c, |r| r.spectrum_distance);
    let (df, dn, db) = (disp(Cohort::Full), disp(Cohort::NoConation), disp(Cohort::NoBodyToG));
    let (sf, sn, sb) = (spec(Cohort::Full), spec(Cohort::NoConation), spec(Cohort::NoBodyToG));
    let p = |a, b| {
        summary
            .rank_test("spectrum_distance", a, b)
            .map(|t| t.p)
            .unwrap_or(f64::NAN)
    };
    let (pf, pn) = (p(Cohort::Full, Cohort::NoBodyToG), p(Cohort::NoConation, Cohort::NoBodyToG));
    let disp_ok = df >= dn && dn > db && db < 0.5 * df.min(dn);
    let spec_ok = sf >= sn && sn > sb && pf < 0.05 && pn < 0.05;
    Criterion::new(
        8,
        NAME,
        disp_ok && spec_ok,
        format!(
            "displacement {} / {} / {}; spectrum {} / {} / {}, p(full>nb) {}, p(nc>nb) {}",
            f3(df),
            f3(dn),
            f3(db),
            f3(sf),
            f3(sn),
            f3(sb),
            f3(pf),
            f3(pn)
        ),
    )
}

pub fn coupling_criterion(rows: &[AssayRow], summary: &AssaySummary) -> Criterion {
    const NAME: &str = "residue coupling";
    if rows.len() < MIN_POOLED {
        return Criterion::skipped(9, NAME, format!("{} pooled rows (< {MIN_POOLED})", rows.len()));
    }
    match &summary.residue_permutation {
        Some(c) => Criterion::new(
            9,
            NAME,
            c.rho > 0.3 && c.p < 0.1,
            format!("spearman rho {} permutation p {} over {} rows", f3(c.rho), f3(c.p), c.n),
        ),
        None => Criterion::new(9, NAME, false, "correlation undefined (constant ranks)".into()),
    }
}

/// Criteria 4 to 9 over assayed rows.
pub fn evaluate(cfg: &ExperimentConfig, rows: &[AssayRow], summary: &AssaySummary) -> Vec<Criterion> {
    vec![
        shock_criterion(cfg, rows),
        behaviour_criterion(rows),
        calibration_criterion(rows),
        readiness_criterion(rows),
        residue_criterion(rows, summary),
        coupling_criterion(rows, summary),
    ]
}

pub fn failures(criteria: &[Criterion]) -> Vec<&Criterion> {
    criteria.iter().filter(|c| c.status == Status::Fail).collect()
}
