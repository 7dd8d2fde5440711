//! Seeded training runs on the toy objective and their CSV output.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::lowrank::{LowRankOptimizer, ProjectionMethod};
use crate::optim::{OptimizerKind, OptimizerSpec};
use crate::toy::sample_problem;

/// Runs abort once the loss exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e12;

pub const CSV_HEADER: [&str; 9] = [
    "optimizer",
    "projection",
    "dim",
    "rank",
    "seed",
    "step",
    "loss",
    "predicted_delta",
    "wall_time_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub rank: usize,
    pub steps: usize,
    pub optimizer: OptimizerSpec,
    pub projection: ProjectionMethod,
    pub seed: u64,
    pub report_every: usize,
    #[serde(default)]
    pub reset_factor_state_each_step: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.report_every == 0 {
            return Err(invalid("report_every must be at least 1"));
        }
        if self.projection != ProjectionMethod::None && !(1..=self.dim).contains(&self.rank) {
            return Err(invalid(format!(
                "rank {} outside 1..={}",
                self.rank, self.dim
            )));
        }
        self.optimizer.validate()
    }
}

/// Problem size and length of the toy grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `D = 100`, `R = 5`, 50,000 steps.
    Full,
    /// `D = 30`, `R = 5`, 5,000 steps.
    Fast,
}

impl Profile {
    pub fn dim(self) -> usize {
        match self {
            Self::Full => 100,
            Self::Fast => 30,
        }
    }

    pub fn steps(self) -> usize {
        match self {
            Self::Full => 50_000,
            Self::Fast => 5_000,
        }
    }

    pub fn rank(self) -> usize {
        5
    }

    pub fn report_every(self) -> usize {
        100
    }

    pub fn seeds(self) -> Vec<u64> {
        (1..=5).collect()
    }
}

/// Learning rate used for the toy grid when none is given.
pub fn default_learning_rate(kind: OptimizerKind) -> f64 {
    match kind {
        OptimizerKind::GradientDescent => 3.0,
        OptimizerKind::Momentum => 2.0,
        OptimizerKind::Adam => 0.03,
    }
}

/// Nine optimizer × projection configs per seed, optimizer-major.
pub fn table_grid(profile: Profile, seeds: &[u64]) -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(9 * seeds.len());
    for kind in OptimizerKind::ALL {
        for projection in ProjectionMethod::ALL {
            for &seed in seeds {
                out.push(ExperimentConfig {
                    dim: profile.dim(),
                    rank: profile.rank(),
                    steps: profile.steps(),
                    optimizer: OptimizerSpec::new(kind, default_learning_rate(kind)),
                    projection,
                    seed,
                    report_every: profile.report_every(),
                    reset_factor_state_each_step: false,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    /// First-order loss prediction for the step; zero without projection.
    pub predicted_delta: f64,
    /// Seconds spent in gradient and update computation up to this step.
    pub cumulative_wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub initial_loss: f64,
    pub records: Vec<TrainRecord>,
    pub final_loss: f64,
    pub total_wall_time: f64,
}

impl RunResult {
    pub fn wall_time_per_step(&self) -> f64 {
        self.total_wall_time / self.config.steps as f64
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

enum Updater {
    Full(OptimizerSpec, crate::optim::OptimizerState),
    LowRank(LowRankOptimizer),
}

/// Runs one configuration.
///
/// The problem is drawn from the config seed, then the same stream supplies
/// the random factors. A record is kept every `report_every` steps and at the
/// last step.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let (problem, mut w) = sample_problem(&mut rng, config.dim)?;
    let initial_loss = problem.loss(&w)?;
    let d = config.dim;

    let mut updater = match config.projection {
        ProjectionMethod::None => {
            Updater::Full(config.optimizer, config.optimizer.init_state(d, d))
        }
        method => Updater::LowRank(LowRankOptimizer::new(
            config.optimizer,
            method,
            d,
            d,
            config.rank,
            config.reset_factor_state_each_step,
        )?),
    };

    let mut records = Vec::with_capacity(config.steps / config.report_every + 1);
    let mut elapsed = Duration::ZERO;
    for step in 1..=config.steps {
        let start = Instant::now();
        let predicted =
            train_step(&problem, &mut w, &mut updater, &mut rng).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    step,
                    loss: f64::INFINITY,
                },
                other => other,
            })?;
        elapsed += start.elapsed();

        if step % config.report_every == 0 || step == config.steps {
            let loss = problem.loss(&w).unwrap_or(f64::INFINITY);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged { step, loss });
            }
            records.push(TrainRecord {
                step,
                loss,
                predicted_delta: predicted,
                cumulative_wall_time: elapsed.as_secs_f64(),
            });
        }
    }

    let final_loss = records.last().expect("last step is always recorded").loss;
    Ok(RunResult {
        config: *config,
        initial_loss,
        records,
        final_loss,
        total_wall_time: elapsed.as_secs_f64(),
    })
}

fn train_step(
    problem: &crate::toy::ToyProblem,
    w: &mut Matrix,
    updater: &mut Updater,
    rng: &mut Rng,
) -> Result<f64> {
    let g = problem.gradient(w)?;
    match updater {
        Updater::Full(spec, state) => {
            let delta = spec.apply(state, &g)?.delta;
            w.add_assign(&delta)?;
            if !w.is_finite() {
                return Err(Error::NonFinite("weights"));
            }
            Ok(0.0)
        }
        Updater::LowRank(opt) => {
            let report = opt.step(w, &g, rng)?;
            if !w.is_finite() {
                return Err(Error::NonFinite("weights"));
            }
            Ok(report.predicted_loss_delta)
        }
    }
}

/// Runs every config, possibly in parallel. Results keep input order and a
/// failed run does not stop the others.
pub fn run_grid(configs: &[ExperimentConfig]) -> Vec<Result<RunResult>> {
    configs.par_iter().map(run_experiment).collect()
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub optimizer: String,
    pub projection: String,
    pub dim: usize,
    pub rank: usize,
    pub seed: u64,
    pub step: usize,
    pub loss: f64,
    pub predicted_delta: f64,
    pub wall_time_s: f64,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_results_csv_to<W: Write>(results: &[RunResult], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for run in results {
        let c = &run.config;
        for rec in &run.records {
            writer.write_record([
                c.optimizer.kind.name().to_string(),
                c.projection.name().to_string(),
                c.dim.to_string(),
                c.rank.to_string(),
                c.seed.to_string(),
                rec.step.to_string(),
                fmt_float(rec.loss),
                fmt_float(rec.predicted_delta),
                fmt_float(rec.cumulative_wall_time),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_results_csv(results: &[RunResult], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_results_csv_to(results, io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    reader
        .deserialize()
        .collect::<csv::Result<Vec<CsvRow>>>()
        .map_err(wrap)
}

/// Aggregate over seeds of one optimizer × projection cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub optimizer: OptimizerKind,
    pub projection: ProjectionMethod,
    pub runs: usize,
    pub median_final_loss: f64,
    pub median_wall_time: f64,
    pub median_step_time: f64,
}

/// Groups results by optimizer and projection, in first-seen order.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(OptimizerKind, ProjectionMethod)> = Vec::new();
    for r in results {
        let key = (r.config.optimizer.kind, r.config.projection);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(optimizer, projection)| {
            let cell: Vec<&RunResult> = results
                .iter()
                .filter(|r| {
                    r.config.optimizer.kind == optimizer && r.config.projection == projection
                })
                .collect();
            SummaryRow {
                optimizer,
                projection,
                runs: cell.len(),
                median_final_loss: median(cell.iter().map(|r| r.final_loss).collect()),
                median_wall_time: median(cell.iter().map(|r| r.total_wall_time).collect()),
                median_step_time: median(cell.iter().map(|r| r.wall_time_per_step()).collect()),
            }
        })
        .collect()
}

/// Median; mean of the middle pair for even lengths. NaN for an empty input.
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Plain-text table of a summary.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<10} {:<10} {:>4} {:>14} {:>12} {:>14}\n",
        "optimizer", "projection", "runs", "final_loss", "time_s", "step_time_s"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<10} {:>4} {:>14.6e} {:>12.3} {:>14.3e}\n",
            r.optimizer.name(),
            r.projection.name(),
            r.runs,
            r.median_final_loss,
            r.median_wall_time,
            r.median_step_time
        ));
    }
    out
}
