//! `lowrank` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
//! numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{
    default_learning_rate, format_summary, run_grid, summarize, write_results_csv,
    ExperimentConfig, Profile, RunResult,
};
use crate::lowrank::ProjectionMethod;
use crate::memory::{
    crossover_rank, full_rank_memory_with, low_rank_memory_with, LayerDims, MemoryOptions,
};
use crate::optim::{AdamBiasMode, OptimizerKind, OptimizerSpec};
use crate::selfcheck::{run_selfcheck, SelfcheckOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lowrank",
    version,
    about = "Low-rank gradient training: toy benchmark and memory model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the toy objective over optimizer × projection configurations.
    RunToy(RunToyArgs),
    /// Print training-memory totals per rank and the crossover ranks.
    MemoryTable(MemoryArgs),
    /// Run the invariant suites.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Gd,
    Momentum,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(a: OptimizerArg) -> Self {
        match a {
            OptimizerArg::Gd => OptimizerKind::GradientDescent,
            OptimizerArg::Momentum => OptimizerKind::Momentum,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    None,
    Random,
    Svd,
}

impl From<ProjectionArg> for ProjectionMethod {
    fn from(a: ProjectionArg) -> Self {
        match a {
            ProjectionArg::None => ProjectionMethod::None,
            ProjectionArg::Random => ProjectionMethod::Random,
            ProjectionArg::Svd => ProjectionMethod::Svd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BiasModeArg {
    Standard,
    Paper,
}

#[derive(Debug, Args)]
struct RunToyArgs {
    /// JSON file with experiment fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write per-record results as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Single seed; the default is seeds 1 to 5.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one optimizer.
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Restrict to one projection method.
    #[arg(long, value_enum)]
    projection: Option<ProjectionArg>,
    #[arg(long)]
    lr: Option<f64>,
    /// D = 30 and 5,000 steps instead of D = 100 and 50,000 steps.
    #[arg(long)]
    fast: bool,
    #[arg(long, value_enum)]
    adam_bias_mode: Option<BiasModeArg>,
    /// Zero the factor optimizer state before every step.
    #[arg(long)]
    reset_factor_state: bool,
    #[arg(long)]
    report_every: Option<usize>,
}

#[derive(Debug, Args)]
struct MemoryArgs {
    /// JSON file with `layers`, `max_rank`, `rank_step`, `bytes_per_slot`, `include_gradient`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the table as CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single square layer of this size.
    #[arg(long)]
    dim: Option<usize>,
    /// Layer shape `MxN`; repeatable.
    #[arg(long = "layer", value_parser = parse_layer)]
    layers: Vec<(usize, usize)>,
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long)]
    rank_step: Option<usize>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["4", "8"]))]
    bytes_per_slot: Option<String>,
    /// Leave the transient gradient buffer out of the totals.
    #[arg(long)]
    exclude_gradient: bool,
}

#[derive(Debug, Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_layer(s: &str) -> std::result::Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected MxN, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(m)?, parse(n)?))
}

/// Optional experiment fields read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunToyFile {
    dim: Option<usize>,
    rank: Option<usize>,
    steps: Option<usize>,
    optimizer: Option<OptimizerFile>,
    projection: Option<ProjectionMethod>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    report_every: Option<usize>,
    reset_factor_state_each_step: Option<bool>,
    fast: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerFile {
    kind: Option<OptimizerKind>,
    learning_rate: Option<f64>,
    momentum_coeff: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    adam_bias_mode: Option<AdamBiasMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryFile {
    layers: Option<Vec<(usize, usize)>>,
    max_rank: Option<usize>,
    rank_step: Option<usize>,
    bytes_per_slot: Option<usize>,
    include_gradient: Option<bool>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::RunToy(a) => cmd_run_toy(&a),
        Command::MemoryTable(a) => cmd_memory_table(&a),
        Command::Selfcheck(a) => cmd_selfcheck(&a),
    }
}

fn usage(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

fn failure(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_FAILURE
}

fn build_toy_configs(a: &RunToyArgs) -> Result<Vec<ExperimentConfig>> {
    let file: RunToyFile = match &a.config {
        Some(path) => read_json(path)?,
        None => RunToyFile::default(),
    };
    let profile = if a.fast || file.fast.unwrap_or(false) {
        Profile::Fast
    } else {
        Profile::Full
    };
    let opt_file = file.optimizer.unwrap_or_default();

    let kinds: Vec<OptimizerKind> = match a.optimizer.map(Into::into).or(opt_file.kind) {
        Some(k) => vec![k],
        None => OptimizerKind::ALL.to_vec(),
    };
    let projections: Vec<ProjectionMethod> = match a.projection.map(Into::into).or(file.projection)
    {
        Some(p) => vec![p],
        None => ProjectionMethod::ALL.to_vec(),
    };
    let seeds: Vec<u64> = match (a.seed, file.seed, file.seeds) {
        (Some(s), _, _) => vec![s],
        (None, Some(s), _) => vec![s],
        (None, None, Some(list)) if !list.is_empty() => list,
        _ => profile.seeds(),
    };
    let bias_mode = match a.adam_bias_mode {
        Some(BiasModeArg::Standard) => AdamBiasMode::Standard,
        Some(BiasModeArg::Paper) => AdamBiasMode::PaperLiteral,
        None => opt_file.adam_bias_mode.unwrap_or_default(),
    };

    let mut configs = Vec::new();
    for &kind in &kinds {
        let mut spec = OptimizerSpec::new(kind, default_learning_rate(kind));
        if let Some(lr) = a.lr.or(opt_file.learning_rate) {
            spec.learning_rate = lr;
        }
        spec.momentum_coeff = opt_file.momentum_coeff.unwrap_or(spec.momentum_coeff);
        spec.beta1 = opt_file.beta1.unwrap_or(spec.beta1);
        spec.beta2 = opt_file.beta2.unwrap_or(spec.beta2);
        spec.epsilon = opt_file.epsilon.unwrap_or(spec.epsilon);
        spec.adam_bias_mode = bias_mode;
        for &projection in &projections {
            for &seed in &seeds {
                let cfg = ExperimentConfig {
                    dim: a.dim.or(file.dim).unwrap_or(profile.dim()),
                    rank: a.rank.or(file.rank).unwrap_or(profile.rank()),
                    steps: a.steps.or(file.steps).unwrap_or(profile.steps()),
                    optimizer: spec,
                    projection,
                    seed,
                    report_every: a
                        .report_every
                        .or(file.report_every)
                        .unwrap_or(profile.report_every()),
                    reset_factor_state_each_step: a.reset_factor_state
                        || file.reset_factor_state_each_step.unwrap_or(false),
                };
                cfg.validate()?;
                configs.push(cfg);
            }
        }
    }
    Ok(configs)
}

fn cmd_run_toy(a: &RunToyArgs) -> i32 {
    let configs = match build_toy_configs(a) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let mut ok: Vec<RunResult> = Vec::new();
    let mut failed = 0;
    for (cfg, result) in configs.iter().zip(run_grid(&configs)) {
        match result {
            Ok(r) => ok.push(r),
            Err(e) => {
                failed += 1;
                eprintln!(
                    "error: {} / {} seed {}: {e}",
                    cfg.optimizer.kind.name(),
                    cfg.projection.name(),
                    cfg.seed
                );
            }
        }
    }
    if let Some(path) = &a.out {
        if let Err(e) = write_results_csv(&ok, path) {
            return failure(e);
        }
    }
    print!("{}", format_summary(&summarize(&ok)));
    let _ = io::stdout().flush();
    if failed > 0 {
        eprintln!("error: {failed} of {} runs failed", configs.len());
        return EXIT_FAILURE;
    }
    EXIT_OK
}

fn cmd_memory_table(a: &MemoryArgs) -> i32 {
    let file: MemoryFile = match &a.config {
        Some(path) => match read_json(path) {
            Ok(f) => f,
            Err(e) => return usage(e),
        },
        None => MemoryFile::default(),
    };
    let shapes = if !a.layers.is_empty() {
        a.layers.clone()
    } else if let Some(d) = a.dim {
        vec![(d, d)]
    } else if let Some(layers) = file.layers {
        layers
    } else {
        return usage("give layer shapes with --layer MxN, --dim D or a config file");
    };
    let dims = match LayerDims::new(shapes) {
        Ok(d) => d,
        Err(e) => return usage(e),
    };
    let bytes_per_slot = a
        .bytes_per_slot
        .as_deref()
        .map(|b| b.parse().expect("validated by clap"))
        .or(file.bytes_per_slot)
        .unwrap_or(8);
    if bytes_per_slot != 4 && bytes_per_slot != 8 {
        return usage(format!(
            "bytes_per_slot must be 4 or 8, got {bytes_per_slot}"
        ));
    }
    let opts = MemoryOptions {
        include_gradient: !a.exclude_gradient && file.include_gradient.unwrap_or(true),
        bytes_per_slot,
    };
    let max_rank = a.max_rank.or(file.max_rank).unwrap_or(dims.max_rank());
    if max_rank == 0 || max_rank > dims.max_rank() {
        return usage(format!("max rank must be in 1..={}", dims.max_rank()));
    }
    let step = a
        .rank_step
        .or(file.rank_step)
        .unwrap_or((max_rank / 20).max(1));
    if step == 0 {
        return usage("rank step must be at least 1");
    }

    let mut table = Vec::new();
    for kind in [OptimizerKind::Momentum, OptimizerKind::Adam] {
        let full = full_rank_memory_with(&dims, kind, opts);
        for rank in (step..=max_rank).step_by(step) {
            let low = match low_rank_memory_with(&dims, kind, rank, opts) {
                Ok(r) => r,
                Err(e) => return usage(e),
            };
            table.push((kind, "full", rank, full));
            table.push((kind, "low_rank", rank, low));
        }
    }

    let render = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "optimizer,mode,rank,slots,bytes")?;
        for (kind, mode, rank, rep) in &table {
            writeln!(
                w,
                "{},{mode},{rank},{},{}",
                kind.name(),
                rep.total_slots,
                rep.total_bytes
            )?;
        }
        Ok(())
    };
    let written = match &a.out {
        Some(path) => fs::File::create(path)
            .and_then(|f| {
                let mut w = io::BufWriter::new(f);
                render(&mut w)?;
                w.flush()
            })
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            }),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            render(&mut lock)
                .and_then(|_| writeln!(lock))
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    };
    if let Err(e) = written {
        return failure(e);
    }
    for kind in [OptimizerKind::Momentum, OptimizerKind::Adam] {
        let r = crossover_rank(&dims, kind).expect("stateful optimizer");
        println!("crossover_rank {} {r}", kind.name());
    }
    EXIT_OK
}

fn cmd_selfcheck(a: &SelfcheckArgs) -> i32 {
    let outcomes = run_selfcheck(&SelfcheckOptions {
        seed: a.seed,
        inject_fault: a.inject_fault,
    });
    let mut failed = Vec::new();
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        if !o.passed {
            failed.push(o.name);
        }
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        eprintln!("error: failed suites: {}", failed.join(", "));
        EXIT_FAILURE
    }
}
