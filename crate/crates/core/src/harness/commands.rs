//! The `baseline`, `esgd`, `iterate` and `report` entry points.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::checkpoint::Checkpoint;
use super::config_file::RunConfigFile;
use super::manifest::RunManifest;
use super::metrics::{
    fine_tune_row, generation_rows, read_metrics, rows_from_history, MetricsRow, MetricsWriter,
};
use super::report::{build_report, Report};
use crate::driver::{train_single_baseline, BackoffTrace, EsgdConfig, EsgdRun};
use crate::error::{Error, Result};
use crate::fitness::FitnessProblem;
use crate::history::RunHistory;
use crate::params::ParamVector;
use crate::population::Individual;

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn manifest(&self) -> PathBuf {
        self.0.join("manifest.txt")
    }
    pub fn config(&self) -> PathBuf {
        self.0.join("config.toml")
    }
    pub fn metrics(&self) -> PathBuf {
        self.0.join("metrics.jsonl")
    }
    pub fn params(&self) -> PathBuf {
        self.0.join("params.bin")
    }
    pub fn report_table(&self) -> PathBuf {
        self.0.join("report.tsv")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.0.join("checkpoints")
    }
    pub fn checkpoint(&self, generation: usize) -> PathBuf {
        self.checkpoints().join(format!("gen-{generation:04}.ckpt"))
    }
    pub fn latest_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("latest.ckpt")
    }
    pub fn abort_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("abort.ckpt")
    }

    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(self.checkpoints()).map_err(|e| Error::io(self.checkpoints(), e))
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfigFile> {
    let mut file = RunConfigFile::load(path)?;
    if let Some(s) = seed {
        file.seed = s;
        if let Some(b) = file.baseline.as_mut() {
            b.seed = Some(s);
        }
    }
    Ok(file)
}

pub fn read_params(path: &Path) -> Result<ParamVector<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let v = ParamVector::read_from(&bytes[..]).map_err(|e| Error::format(path, e.to_string()))?;
    if bytes.len() != 8 + 8 * v.dim() {
        return Err(Error::format(path, "trailing bytes after parameter vector"));
    }
    Ok(v)
}

pub fn write_params(path: &Path, v: &ParamVector<f64>) -> Result<()> {
    std::fs::write(path, v.to_bytes()).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub struct BaselineOutcome {
    pub trace: BackoffTrace<f64>,
}

/// Trains the single-optimizer reference model and writes it as `params.bin`.
pub fn cmd_baseline(config: &Path, out: &Path, seed: Option<u64>) -> Result<BaselineOutcome> {
    let file = load_config(config, seed)?;
    let cfg = file.baseline_config()?;
    let problem = file.problem.build::<f64>()?;
    let dir = RunDir(out.to_path_buf());
    dir.create()?;
    let snapshot = file.to_toml();
    RunManifest::new(
        "baseline",
        cfg.seed,
        problem.name(),
        problem.dimension(),
        &snapshot,
    )
    .with("epochs", cfg.epochs)
    .with("batch_size", cfg.batch_size)
    .with("lr0", cfg.lr0)
    .write(&dir.manifest())?;
    write_text(&dir.config(), &snapshot)?;
    let mut metrics = MetricsWriter::create(&dir.metrics())?;

    let trace = train_single_baseline(problem.as_ref(), &cfg)?;
    let mut rows = vec![MetricsRow::Baseline {
        epoch: 0,
        loss: trace.initial_loss,
        lr: cfg.lr0,
        backed_off: false,
    }];
    for (e, ((&loss, &lr), &backed_off)) in trace
        .losses
        .iter()
        .zip(&trace.learning_rates)
        .zip(&trace.backed_off)
        .enumerate()
    {
        rows.push(MetricsRow::Baseline {
            epoch: e + 1,
            loss,
            lr,
            backed_off,
        });
    }
    metrics.write_rows(&rows)?;
    write_params(&dir.params(), &trace.params)?;
    Ok(BaselineOutcome { trace })
}

#[derive(Debug, Clone)]
pub struct EsgdOptions {
    pub config: PathBuf,
    pub anchor: PathBuf,
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    pub seed: Option<u64>,
    pub rounds: usize,
}

pub struct EsgdOutcome {
    pub best: Individual<f64>,
    pub history: RunHistory,
}

fn same_run(a: &EsgdConfig, b: &EsgdConfig) -> bool {
    let mut a = a.clone();
    a.workers = b.workers;
    &a == b
}

/// Runs (or resumes) anchored ESGD for `opts.rounds` anchoring rounds.
/// One round is the plain `esgd` command.
pub fn cmd_iterate(opts: &EsgdOptions) -> Result<EsgdOutcome> {
    if opts.rounds < 1 {
        return Err(Error::config("rounds", "must be at least 1"));
    }
    let file = load_config(&opts.config, opts.seed)?;
    let cfg = file.esgd_config()?;
    let problem: Arc<dyn FitnessProblem<f64>> = cfg.problem.build()?;
    let anchor = read_params(&opts.anchor)?;
    if anchor.dim() != problem.dimension() {
        return Err(Error::Dimension {
            expected: problem.dimension(),
            actual: anchor.dim(),
        });
    }
    let resume = opts.resume.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(ck) = &resume {
        if !same_run(&ck.config, &cfg) {
            return Err(Error::config(
                "resume",
                "checkpoint was written with a different configuration",
            ));
        }
        if ck.rounds_total != opts.rounds {
            return Err(Error::config(
                "rounds",
                format!("checkpoint belongs to a {}-round run", ck.rounds_total),
            ));
        }
    }

    let dir = RunDir(opts.out.clone());
    dir.create()?;
    let snapshot = file.to_toml();
    let command = if opts.rounds == 1 { "esgd" } else { "iterate" };
    let mut manifest = RunManifest::new(
        command,
        cfg.seed,
        problem.name(),
        problem.dimension(),
        &snapshot,
    )
    .with("anchor", opts.anchor.display())
    .with("rounds", opts.rounds);
    if let Some(r) = &opts.resume {
        manifest = manifest.with("resumed_from", r.display());
    }
    manifest.write(&dir.manifest())?;
    write_text(&dir.config(), &snapshot)?;

    let mut metrics = MetricsWriter::create(&dir.metrics())?;
    let mut run = match resume {
        Some(ck) => {
            metrics.write_rows(&rows_from_history(
                &ck.history,
                Some((ck.round, ck.round_initial_anchor)),
            ))?;
            EsgdRun::restore(
                cfg.clone(),
                problem.clone(),
                ck.round,
                ck.round_initial_anchor,
                ck.population,
                ck.history,
            )?
        }
        None => {
            let run = EsgdRun::new_round(cfg.clone(), problem.clone(), &anchor, 0, None)?;
            metrics.write_rows(&[MetricsRow::RoundStart {
                round: 0,
                anchor: run.round_initial_anchor(),
            }])?;
            run
        }
    };

    loop {
        while !run.is_evolution_done() {
            let rows = match run.step_generation() {
                Ok(record) => generation_rows(record),
                Err(e) => {
                    let path = dir.abort_checkpoint();
                    Checkpoint::from_run(&run, opts.rounds).save(&path)?;
                    return Err(Error::Aborted {
                        generation: run.history.generations.len(),
                        message: format!("{e}; last valid population saved to {}", path.display()),
                    });
                }
            };
            metrics.write_rows(&rows)?;
            let ck = Checkpoint::from_run(&run, opts.rounds);
            let generation = run.history.generations.last().map_or(0, |g| g.generation);
            ck.save(&dir.checkpoint(generation))?;
            ck.save(&dir.latest_checkpoint())?;
        }

        let round = run.round();
        let (best, history) = run.finish()?;
        let mut rows: Vec<MetricsRow> = history
            .fine_tune
            .iter()
            .filter(|f| f.round == round)
            .map(fine_tune_row)
            .collect();
        let record = history.rounds.last().expect("finished round is recorded");
        rows.push(MetricsRow::RoundEnd {
            round,
            initial_anchor: record.initial_anchor,
            final_best: record.final_best,
            anchor_update: true,
        });
        metrics.write_rows(&rows)?;

        if round + 1 == opts.rounds {
            write_params(&dir.params(), &best.params)?;
            return Ok(EsgdOutcome { best, history });
        }
        run = EsgdRun::new_round(
            cfg.clone(),
            problem.clone(),
            &best.params,
            round + 1,
            Some(history),
        )?;
        metrics.write_rows(&[MetricsRow::RoundStart {
            round: round + 1,
            anchor: run.round_initial_anchor(),
        }])?;
    }
}

/// Builds the report of a run directory and writes its plot-ready table.
pub fn cmd_report(out: &Path) -> Result<Report> {
    let dir = RunDir(out.to_path_buf());
    let rows = read_metrics(&dir.metrics())?;
    let report = build_report(&rows)?;
    write_text(&dir.report_table(), &report.table)?;
    Ok(report)
}
