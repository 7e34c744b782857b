use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use somagrid::config::{parse_seed_list, ConfigError, ExperimentConfig};
use somagrid::harness::{self, HarnessError, Layout};
use somagrid::trainer::Cohort;

#[derive(Parser)]
#[command(name = "somagrid", version, about = "Train and assay grid-world agents with a bodily perspective")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cohort (or all three) and write checkpoints, logs and a manifest.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// full, no_conation or no_body_to_g; all three when omitted.
        #[arg(long)]
        cohort: Option<String>,
    },
    /// Run the assay battery over trained cohorts under --out.
    Assay {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Train all cohorts, run the assays and judge the acceptance criteria.
    Replicate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a checkpoint's config and parameter statistics.
    Inspect { checkpoint: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; desk-scale defaults when omitted. `SOMAGRID__SECTION__KEY`
    /// environment variables override either.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed list, e.g. `0..7` (inclusive) or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::from_toml_with_overrides(
                &ExperimentConfig::desk().dump(),
                "<desk defaults>",
                std::env::vars(),
            )?,
        };
        if let Some(s) = &self.seeds {
            cfg.run.seeds = parse_seed_list(s).map_err(|e| HarnessError::Usage(format!("--seeds: {e}")))?;
        }
        if let Some(n) = self.episodes {
            cfg.train.episodes = n;
            cfg.train.warmup_episodes = cfg.train.warmup_episodes.min(n);
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        if let Some(m) = self.master_seed {
            cfg.run.master_seed = m;
        }
        cfg.validate()?;
        if cfg.run.seeds.is_empty() {
            return Err(ConfigError::Invalid("the seed list is empty".into()).into());
        }
        Ok(cfg)
    }
}

fn progress(msg: &str) {
    eprintln!("{msg}");
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { run, cohort } => {
            let cohorts = match cohort {
                Some(name) => vec![Cohort::parse(&name).map_err(HarnessError::Usage)?],
                None => Cohort::ALL.to_vec(),
            };
            let cfg = run.config()?;
            let layout = Layout::new(&run.out);
            eprintln!("config_hash {}", cfg.hash());
            for c in cohorts {
                let m = harness::train_cohort(&cfg, c, &layout, &progress)?;
                println!("{c}: {} runs -> {}", m.runs.len(), layout.manifest(c).display());
            }
        }
        Command::Assay { out, workers } => {
            let layout = Layout::new(&out);
            let a = harness::assay(&layout, workers.unwrap_or(1).max(1))?;
            println!("{} rows -> {}", a.rows().len(), layout.report_dir().display());
        }
        Command::Replicate { run } => {
            let cfg = run.config()?;
            let layout = Layout::new(&run.out);
            eprintln!("config_hash {}", cfg.hash());
            let r = harness::replicate(&cfg, &layout, &progress)?;
            for c in &r.criteria {
                println!("{}", c.line());
            }
            let failed = r.failures();
            if !failed.is_empty() {
                let names: Vec<String> = failed.iter().map(|c| format!("{} ({})", c.id, c.name)).collect();
                return Err(HarnessError::CriteriaFailed(names.join(", ")));
            }
        }
        Command::Inspect { checkpoint } => print!("{}", harness::inspect(&checkpoint)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
