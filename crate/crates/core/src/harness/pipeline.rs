use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::assays::{assay_run, summarize_rows, AssayRow, AssaySummary, ProbeSet, RunAssay};
use crate::config::ExperimentConfig;
use crate::environment::{Action, GridWorld, Zone, N_ZONES};
use crate::trainer::{collect_episode, gradient_presence, train_episode, Cohort, EpisodeLog, RunState, TrainError};

use super::checkpoint::{write_atomic, Checkpoint};
use super::criteria::{self, Criterion, Status};
use super::manifest::{RunEntry, RunManifest, RunStatus};
use super::pool::run_pool;
use super::{hash_header, svg, HarnessError, Layout};

/// Episodes between intermediate checkpoints.
pub const CHECKPOINT_EVERY: usize = 10;

fn world_for(cfg: &ExperimentConfig) -> Result<GridWorld, HarnessError> {
    GridWorld::new(cfg.env.clone()).map_err(|e| HarnessError::Usage(format!("environment config: {e}")))
}

/// Trains every seed of `cfg.run.seeds` for one cohort, resuming from any
/// checkpoint written under the same config hash. Seeds trained by earlier
/// invocations with the same hash stay in the cohort manifest.
pub fn train_cohort(
    cfg: &ExperimentConfig,
    cohort: Cohort,
    layout: &Layout,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<RunManifest, HarnessError> {
    if cfg.run.seeds.is_empty() {
        return Err(HarnessError::Usage("no seeds to train".into()));
    }
    let world = world_for(cfg)?;
    let hash = cfg.hash();
    let results = run_pool(&cfg.run.seeds, cfg.run.workers, |&seed| {
        let r = train_seed(cfg, &world, cohort, seed, layout);
        match &r {
            Ok(_) => progress(&format!("{cohort}/seed {seed}: done")),
            Err(e) => progress(&format!("{cohort}/seed {seed}: {e}")),
        }
        r
    });

    let path = layout.manifest(cohort);
    let previous = if path.exists() {
        RunManifest::load(&path).ok().filter(|m| m.config_hash == hash)
    } else {
        None
    };
    let mut manifest = RunManifest::new("train", &hash, cfg.run.master_seed, vec![cohort], Vec::new());
    if let Some(prev) = &previous {
        manifest.started = prev.started.clone();
        manifest.runs = prev
            .runs
            .iter()
            .filter(|r| !cfg.run.seeds.contains(&r.seed))
            .cloned()
            .collect();
    }
    let mut first_error = None;
    for (&seed, r) in cfg.run.seeds.iter().zip(results) {
        match r {
            Ok(entry) => manifest.runs.push(entry),
            Err(e) => {
                let ck = layout.checkpoint(cohort, seed);
                manifest.runs.push(RunEntry {
                    cohort,
                    seed,
                    run_hash: cfg.run_hash(cohort.name(), seed),
                    episodes: 0,
                    status: RunStatus::Failed { message: e.to_string() },
                    checkpoint: ck.exists().then(|| layout.relative(&ck)),
                    log: None,
                });
                first_error.get_or_insert(e);
            }
        }
    }
    manifest.runs.sort_by_key(|r| r.seed);
    manifest.seeds = manifest.runs.iter().map(|r| r.seed).collect();
    manifest.finish();
    manifest.save(&path)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn train_seed(
    cfg: &ExperimentConfig,
    world: &GridWorld,
    cohort: Cohort,
    seed: u64,
    layout: &Layout,
) -> Result<RunEntry, HarnessError> {
    let ck_path = layout.checkpoint(cohort, seed);
    let hash = cfg.hash();
    let resumed = if ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        (ck.config_hash == hash && ck.state.cohort == cohort && ck.state.seed == seed).then_some(ck.state)
    } else {
        None
    };
    let train_err = |source| HarnessError::Train { cohort, seed, source };
    let mut state = match resumed {
        Some(s) => s,
        None => RunState::new(cfg, cohort, seed).map_err(train_err)?,
    };
    let mut dirty = false;
    while state.episode < cfg.train.episodes {
        train_episode(&mut state, world, cfg).map_err(train_err)?;
        dirty = true;
        if state.episode % CHECKPOINT_EVERY == 0 {
            Checkpoint::new(cfg, &state)?.save(&ck_path)?;
            dirty = false;
        }
    }
    if dirty || !ck_path.exists() {
        Checkpoint::new(cfg, &state)?.save(&ck_path)?;
    }
    let log_path = layout.log(cohort, seed);
    write_atomic(&log_path, training_log_csv(&hash, &state.logs).as_bytes())?;
    Ok(RunEntry {
        cohort,
        seed,
        run_hash: cfg.run_hash(cohort.name(), seed),
        episodes: state.episode,
        status: RunStatus::Complete,
        checkpoint: Some(layout.relative(&ck_path)),
        log: Some(layout.relative(&log_path)),
    })
}

pub fn training_log_csv(config_hash: &str, logs: &[EpisodeLog]) -> String {
    let mut out = hash_header("#", config_hash);
    out.push_str("episode,warmup,obs_pred,actor,body,conative,total");
    for z in 0..N_ZONES {
        write!(out, ",occ_{}", Zone::from_index(z).label()).unwrap();
    }
    for a in Action::ALL {
        write!(out, ",q_{}", a.name()).unwrap();
    }
    for a in Action::ALL {
        write!(out, ",pi_{}", a.name()).unwrap();
    }
    out.push_str(",mean_alpha,mean_abs_dg,mean_abs_dz,final_u\n");
    for l in logs {
        let x = &l.losses;
        write!(
            out,
            "{},{},{},{},{},{},{}",
            l.episode, l.warmup, x.obs_pred, x.actor, x.body, x.conative, x.total
        )
        .unwrap();
        for v in l.occupancy.iter().chain(&l.mean_q).chain(&l.mean_pi) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{},{},{},{}", l.mean_alpha, l.mean_abs_dg, l.mean_abs_dz, l.final_u).unwrap();
    }
    out
}

pub struct AssayOutput {
    pub config: ExperimentConfig,
    pub states: Vec<RunState>,
    pub runs: Vec<RunAssay>,
    pub summary: AssaySummary,
    pub manifest: RunManifest,
}

impl AssayOutput {
    pub fn rows(&self) -> Vec<AssayRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }
}

/// Loads all three cohorts' runs, checking manifests and checkpoints.
pub fn load_runs(layout: &Layout) -> Result<(ExperimentConfig, Vec<RunState>), HarnessError> {
    let mut manifests = Vec::new();
    for c in Cohort::ALL {
        let path = layout.manifest(c);
        if !path.exists() {
            return Err(HarnessError::MissingCohort(c));
        }
        manifests.push(RunManifest::load(&path)?);
    }
    let hash = manifests[0].config_hash.clone();
    if let Some(m) = manifests.iter().find(|m| m.config_hash != hash) {
        return Err(HarnessError::Usage(format!(
            "cohort manifests disagree on the config hash ({} has {}, expected {hash})",
            m.cohorts.first().map(|c| c.name()).unwrap_or("?"),
            m.config_hash
        )));
    }
    let seeds: BTreeSet<u64> = manifests[0].runs.iter().map(|r| r.seed).collect();
    let mut states = Vec::new();
    let mut config = None;
    for (c, m) in Cohort::ALL.into_iter().zip(&manifests) {
        let mine: BTreeSet<u64> = m.runs.iter().map(|r| r.seed).collect();
        if mine != seeds {
            return Err(HarnessError::Usage(format!(
                "cohort {c} has seeds {mine:?}, expected {seeds:?}"
            )));
        }
        for r in &m.runs {
            let rel = match (&r.status, &r.checkpoint) {
                (RunStatus::Complete, Some(p)) => p,
                (RunStatus::Failed { message }, _) => {
                    return Err(HarnessError::Usage(format!("{c}/seed {}: run failed: {message}", r.seed)))
                }
                _ => return Err(HarnessError::Usage(format!("{c}/seed {}: no checkpoint", r.seed))),
            };
            let ck = Checkpoint::load(&layout.root.join(rel))?;
            if ck.config_hash != hash || ck.state.cohort != c || ck.state.seed != r.seed {
                return Err(HarnessError::Integrity(format!(
                    "{rel}: checkpoint does not belong to {c}/seed {} under config {hash}",
                    r.seed
                )));
            }
            if config.is_none() {
                config = Some(ck.experiment_config(rel)?);
            }
            states.push(ck.state);
        }
    }
    let mut cfg = config.ok_or_else(|| HarnessError::Usage("manifests list no runs".into()))?;
    if states.iter().any(|s| s.episode < cfg.train.episodes) {
        return Err(HarnessError::Usage("some checkpoints are not fully trained".into()));
    }
    cfg.run.seeds = seeds.into_iter().collect();
    Ok((cfg, states))
}

/// Runs the assay battery over trained runs and writes the report.
pub fn assay(layout: &Layout, workers: usize) -> Result<AssayOutput, HarnessError> {
    let (mut cfg, states) = load_runs(layout)?;
    cfg.run.workers = workers.max(1);
    let probes = ProbeSet::build(&cfg);
    let results = run_pool(&states, cfg.run.workers, |s| assay_run(&cfg, s, &probes));
    let mut runs = Vec::with_capacity(states.len());
    for (s, r) in states.iter().zip(results) {
        runs.push(r.map_err(|e| HarnessError::Train {
            cohort: s.cohort,
            seed: s.seed,
            source: TrainError::Num(e),
        })?);
    }
    let rows: Vec<AssayRow> = runs.iter().map(|r| r.row.clone()).collect();
    let summary = summarize_rows(&cfg, &rows, &probes.hash());

    let hash = cfg.hash();
    let dir = layout.report_dir();
    let mut manifest = RunManifest::new(
        "assay",
        &hash,
        cfg.run.master_seed,
        Cohort::ALL.to_vec(),
        cfg.run.seeds.clone(),
    );
    let mut files = vec![
        ("report.csv".to_string(), report_csv(&hash, &rows)),
        ("summary.json".to_string(), summary_json(&summary)?),
        ("trajectories.csv".to_string(), trajectories_csv(&hash, &runs)),
    ];
    files.extend(svg::figures(
        &hash,
        (cfg.assay.shock_start, cfg.assay.shock_end),
        &runs,
        &summary,
    ));
    for (name, body) in &files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        manifest.artifacts.push(layout.relative(&path));
    }
    manifest.finish();
    manifest.save(&dir.join("manifest.json"))?;
    Ok(AssayOutput {
        config: cfg,
        states,
        runs,
        summary,
        manifest,
    })
}

pub fn report_csv(config_hash: &str, rows: &[AssayRow]) -> String {
    let mut out = hash_header("#", config_hash);
    out.push_str("cohort,seed,top_right_occupancy,bottom_occupancy");
    for a in Action::ALL {
        write!(out, ",q_{}", a.name()).unwrap();
    }
    out.push_str(
        ",eta_calibration_r,pca_displacement,state_distance,spectrum_distance,shock_magnitude,\
         identical_prefix,injected_total,calibration_degenerate,displacement_zero_variance,occupancy_short\n",
    );
    for r in rows {
        write!(out, "{},{},{},{}", r.cohort, r.seed, r.top_right_occupancy, r.bottom_occupancy).unwrap();
        for q in r.q_by_action {
            write!(out, ",{q}").unwrap();
        }
        writeln!(
            out,
            ",{},{},{},{},{},{},{},{},{},{}",
            r.eta_calibration_r,
            r.pca_displacement,
            r.state_distance,
            r.spectrum_distance,
            r.shock_magnitude,
            r.identical_prefix,
            r.injected_total,
            r.calibration_degenerate,
            r.displacement_zero_variance,
            r.occupancy_short
        )
        .unwrap();
    }
    out
}

/// JSON has no comments; the hash is the summary's `config_hash` field.
pub fn summary_json(summary: &AssaySummary) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(summary)
        .map_err(|e| HarnessError::Integrity(format!("serialize summary: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Per-step control and shock rollouts with the time-resolved displacement.
pub fn trajectories_csv(config_hash: &str, runs: &[RunAssay]) -> String {
    let mut out = hash_header("#", config_hash);
    let d = runs
        .first()
        .and_then(|r| r.control.steps.first())
        .map_or(0, |s| s.g.len());
    out.push_str("cohort,seed,condition,t,row,col,action,u,b_tilde,displacement");
    for i in 0..d {
        write!(out, ",g{i}").unwrap();
    }
    out.push('\n');
    for r in runs {
        for (cond, roll) in [("control", &r.control), ("shock", &r.shock)] {
            for s in &roll.steps {
                let disp = r.displacement_trajectory.get(s.t).copied().unwrap_or(f64::NAN);
                write!(
                    out,
                    "{},{},{cond},{},{},{},{},{},{},{disp}",
                    r.row.cohort,
                    r.row.seed,
                    s.t,
                    s.row,
                    s.col,
                    s.action.name(),
                    s.u,
                    s.b_tilde
                )
                .unwrap();
                for v in &s.g {
                    write!(out, ",{v}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Criterion 3 on a live batch: one fresh episode collected from each
/// cohort's first trained run.
pub fn firewall_criterion(cfg: &ExperimentConfig, states: &[RunState]) -> Result<Criterion, HarnessError> {
    let world = world_for(cfg)?;
    let mut details = Vec::new();
    let mut ok = true;
    for c in Cohort::ALL {
        let Some(state) = states.iter().find(|s| s.cohort == c) else {
            return Err(HarnessError::MissingCohort(c));
        };
        let mut probe = state.clone();
        let train_err = |source| HarnessError::Train {
            cohort: c,
            seed: state.seed,
            source,
        };
        let batch = collect_episode(&mut probe, &world, cfg).map_err(train_err)?;
        let presence = gradient_presence(&state.params, &batch.records, cfg, c).map_err(train_err)?;
        let crit = criteria::firewall_criterion(&presence, c);
        ok &= crit.status == Status::Pass;
        details.push(crit.detail);
    }
    Ok(Criterion {
        id: 3,
        name: "gradient firewall".into(),
        status: if ok { Status::Pass } else { Status::Fail },
        detail: details.join("; "),
    })
}

pub struct ReplicateOutput {
    pub assay: AssayOutput,
    pub criteria: Vec<Criterion>,
}

impl ReplicateOutput {
    pub fn failures(&self) -> Vec<&Criterion> {
        criteria::failures(&self.criteria)
    }
}

/// Train all cohorts, assay, and judge criteria 3 to 9. Writes
/// `report/criteria.txt`; the caller decides what a failure means.
pub fn replicate(
    cfg: &ExperimentConfig,
    layout: &Layout,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<ReplicateOutput, HarnessError> {
    for c in Cohort::ALL {
        train_cohort(cfg, c, layout, progress)?;
    }
    let out = assay(layout, cfg.run.workers)?;
    let rows = out.rows();
    let mut crits = vec![firewall_criterion(&out.config, &out.states)?];
    crits.extend(criteria::evaluate(&out.config, &rows, &out.summary));
    let mut text = hash_header("#", &out.config.hash());
    for c in &crits {
        text.push_str(&c.line());
        text.push('\n');
    }
    write_atomic(&layout.report_dir().join("criteria.txt"), text.as_bytes())?;
    Ok(ReplicateOutput {
        assay: out,
        criteria: crits,
    })
}

/// Human-readable dump of a checkpoint: identity, config and parameter stats.
pub fn inspect(path: &std::path::Path) -> Result<String, HarnessError> {
    let ck = Checkpoint::load(path)?;
    let s = &ck.state;
    let mut out = String::new();
    writeln!(out, "checkpoint   {}", path.display()).unwrap();
    writeln!(out, "config_hash  {}", ck.config_hash).unwrap();
    writeln!(out, "run_hash     {}", ck.run_hash).unwrap();
    writeln!(out, "digest       {} (verified)", ck.digest).unwrap();
    writeln!(out, "cohort       {}", s.cohort).unwrap();
    writeln!(out, "seed         {} (master {})", s.seed, s.master_seed).unwrap();
    writeln!(out, "episodes     {}", s.episode).unwrap();
    writeln!(out, "parameters   {}", s.params.n_params()).unwrap();
    writeln!(out, "\n{:<32} {:<13} {:>9} {:>11} {:>11} {:>11} {:>11}", "tensor", "group", "shape", "mean", "std", "min", "max").unwrap();
    for (name, group, t) in s.params.named_tensors() {
        let v = t.data();
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shape = t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        writeln!(
            out,
            "{name:<32} {:<13} {shape:>9} {mean:>11.4e} {std:>11.4e} {min:>11.4e} {max:>11.4e}",
            group.name()
        )
        .unwrap();
    }
    writeln!(out, "\n# effective config\n{}", ck.config).unwrap();
    Ok(out)
}
