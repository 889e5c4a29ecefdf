//! One function (and one argument struct) per subcommand.

use crate::svg;
use nsl_core::datagen::{build_dataset, Dataset, DatasetMeta};
use nsl_core::dynamics::PhSystem;
use nsl_core::envelope::{envelope_samples, interpolation_grid, DEFAULT_GRID_INTERVALS};
use nsl_core::model::{Arch, IdentModel, ModelMeta, NormStats};
use nsl_core::nslfit::{fit_nsl, formula_string, FitOptions, NslParams, PiecewiseInit};
use nsl_core::registry::{
    collect, load_outcomes, ErrorMetric, OutcomeFilter, Registry, Resource,
};
use nsl_core::seed::SeedTree;
use nsl_core::signal::SignalParams;
use nsl_core::sweep::{run_sweep, SweepConfig};
use nsl_core::train as trainer;
use nsl_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

/// Excitation signal knobs shared by `generate` and `train`.
#[derive(clap::Args)]
pub struct SignalArgs {
    /// Amplitude of every harmonic.
    #[arg(long, default_value_t = 0.5)]
    amplitude: f64,
    /// Base frequency in Hz; harmonic k sits at k times this.
    #[arg(long, default_value_t = 0.1)]
    base_freq: f64,
    /// Harmonics summed per input channel.
    #[arg(long, default_value_t = 10)]
    harmonics: usize,
}

impl SignalArgs {
    fn to_params(&self) -> SignalParams {
        SignalParams {
            amplitude: self.amplitude,
            base_freq: self.base_freq,
            harmonics: self.harmonics,
        }
    }
}

#[derive(clap::Args)]
pub struct GenerateArgs {
    /// Benchmark system: spring, ball, or motor.
    #[arg(long)]
    system: String,
    /// Trajectory count; the fractional part becomes a truncated rollout.
    #[arg(long)]
    traj: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rollout length in seconds.
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Integrator step in seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[command(flatten)]
    signal: SignalArgs,
    /// Dataset file to write; a .json sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let system = PhSystem::by_name(&a.system)?;
    let params = a.signal.to_params();
    let tree = SeedTree::from_key(&format!("generate|{}|{}", a.system, a.seed));
    let ds = build_dataset(&system, a.traj, a.horizon, a.dt, &params, &tree)?;
    ds.write(&a.out)?;
    let meta = DatasetMeta {
        system: a.system.clone(),
        seed: a.seed,
        trajectories: a.traj,
        horizon: a.horizon,
        dt: a.dt,
        signal: params,
    };
    meta.write(&a.out)?;
    println!(
        "wrote {}: {} rows ({} states, {} inputs), {:.2} s of data",
        a.out.display(),
        ds.rows,
        ds.n,
        ds.m,
        ds.data_seconds()
    );
    println!("derivative spread sigma: {}", format_slice(&ds.sigma));
    Ok(())
}

fn format_slice(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(clap::Args)]
pub struct SweepArgs {
    /// Sweep description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Registry file (JSON lines); consulted for resume, then appended to.
    #[arg(long, env = "NSL_REGISTRY")]
    registry: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = SweepConfig::from_path(&a.config)?;
    let registry = Registry::open(&a.registry)?;
    eprintln!("sweep: {} grid points, {} workers", cfg.total_runs(), a.workers);
    let progress = |done: usize, attempted: usize| {
        let step = (attempted / 20).max(1);
        if done.is_multiple_of(step) || done == attempted {
            eprintln!("  {done}/{attempted} runs");
        }
    };
    let summary = run_sweep(&cfg, &registry, a.workers, Some(&progress))?;
    println!(
        "{} new runs: {} ok, {} failed; {} already present",
        summary.attempted, summary.ok, summary.failed, summary.skipped
    );
    Ok(())
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Benchmark system: spring, ball, or motor.
    #[arg(long)]
    system: String,
    /// Model family: unstructured, input-affine, or ph.
    #[arg(long)]
    arch: Arch,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training trajectory count (fractional allowed); ignored with --data.
    #[arg(long, default_value_t = 1.0)]
    traj: f64,
    /// Training epochs.
    #[arg(long)]
    epochs: u64,
    /// Hidden width of every MLP block.
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    /// Hidden layers per MLP block.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Rollout length in seconds.
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Integrator step in seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[command(flatten)]
    signal: SignalArgs,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Held-out trajectories used for scoring.
    #[arg(long, default_value_t = 10.0)]
    val_traj: f64,
    /// Train on an existing dataset file instead of simulating.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint file to write; a .json sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let system = PhSystem::by_name(&a.system)?;
    let signal = a.signal.to_params();
    let tree = SeedTree::from_key(&format!("train|{}|{}|{}", a.system, a.arch, a.seed));
    let data = match &a.data {
        Some(path) => Dataset::read(path)?,
        None => build_dataset(&system, a.traj, a.horizon, a.dt, &signal, &tree.child("data"))?,
    };
    if data.n != system.state_dim() || data.m != system.input_dim() {
        return Err(Error::invalid(format!(
            "dataset has {} states and {} inputs, system {} needs {} and {}",
            data.n,
            data.m,
            a.system,
            system.state_dim(),
            system.input_dim()
        )));
    }
    let trajectories = data.rows as f64 * data.dt / a.horizon;

    let norm = NormStats::from_dataset(&data);
    let mut model = IdentModel::build(
        a.arch,
        data.n,
        data.m,
        a.hidden,
        a.depth,
        norm,
        &mut tree.child("init").rng(),
    )?;
    let mut cfg = trainer::TrainConfig::for_rows(a.epochs, data.rows, tree.child("train").seed_u64());
    cfg.lr = a.lr;
    let outcome = trainer::train(&mut model, &data, &cfg)?;

    // The validation stream depends only on (system, seed), matching the
    // sweep runner, so single runs and sweep runs are scored on the same
    // held-out data.
    let val_tree = SeedTree::from_key(&format!("validation|{}|{}", a.system, a.seed));
    let val = build_dataset(&system, a.val_traj, a.horizon, a.dt, &signal, &val_tree)?;
    let report = trainer::evaluate(&model, &val, a.epochs, trajectories)?;

    model.save(&a.out)?;
    let meta = ModelMeta {
        system: a.system.clone(),
        arch: a.arch,
        seed: a.seed,
        trajectories,
        epochs: a.epochs,
        hidden: a.hidden,
        depth: a.depth,
    };
    meta.write(&a.out)?;
    println!(
        "trained {} on {}: {} parameters, {} rows, {} epochs",
        a.arch,
        a.system,
        model.param_count(),
        data.rows,
        a.epochs
    );
    println!(
        "training loss {:.6} -> {:.6} over {} steps",
        outcome.initial_loss, outcome.final_loss, outcome.steps
    );
    println!(
        "held-out nmae {:.6}, nmse {:.6}, compute {:.4e}",
        report.nmae, report.nmse, report.compute
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(clap::Args)]
pub struct FitArgs {
    /// Registry file (JSON lines).
    #[arg(long, env = "NSL_REGISTRY")]
    registry: PathBuf,
    /// Resource axis: compute, data, or model.
    #[arg(long)]
    resource: Resource,
    /// Error metric: nmae or nmse.
    #[arg(long, default_value_t = ErrorMetric::Nmae)]
    error: ErrorMetric,
    /// Restrict to one system.
    #[arg(long)]
    system: Option<String>,
    /// Restrict to one model family.
    #[arg(long)]
    arch: Option<Arch>,
    /// Smooth transition points in the fitted law.
    #[arg(long, default_value_t = 0)]
    breaks: usize,
    /// Also fit a nonzero error floor.
    #[arg(long)]
    plateau: bool,
    /// Piecewise-linear initialization (JSON) overriding the automatic one.
    /// The report written by --out contains an editable template under
    /// "init".
    #[arg(long)]
    init: Option<PathBuf>,
    /// Envelope grid intervals.
    #[arg(long, default_value_t = DEFAULT_GRID_INTERVALS)]
    grid_intervals: usize,
    /// Optimizer iterations.
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    /// Optimizer learning rate.
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// Write the full fit report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write grid, envelope, and fitted values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Everything a fit produced, in one JSON document. `params` is the exact
/// fitted state; `formula` is its printable form and parses back to the
/// same law.
#[derive(Serialize, Deserialize)]
pub struct FitReport {
    pub resource: Resource,
    pub error: ErrorMetric,
    pub system: Option<String>,
    pub arch: Option<Arch>,
    pub points: usize,
    pub grid_intervals: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub breaks: usize,
    pub with_plateau: bool,
    pub iterations: usize,
    pub margin: f64,
    pub formula: String,
    pub params: NslParams,
    pub init: PiecewiseInit,
}

fn write_json<T: Serialize>(value: &T, path: &PathBuf) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let outcomes = load_outcomes(&a.registry)?;
    let filter = OutcomeFilter { system: a.system.clone(), arch: a.arch };
    let pts = collect(&outcomes, a.resource, a.error, &filter)?;
    let env = envelope_samples(&pts, a.grid_intervals)?;
    let init: Option<PiecewiseInit> = match &a.init {
        Some(path) => Some(serde_json::from_reader(BufReader::new(File::open(path)?))?),
        None => None,
    };
    let opts = FitOptions { iterations: a.iterations, lr: a.lr, with_plateau: a.plateau };
    let fit = fit_nsl(&env, a.breaks, init, &opts)?;
    let formula = formula_string(&fit.params, a.resource.symbol());

    println!(
        "{} runs ({}); envelope on [{:.3e}, {:.3e}], {} intervals",
        pts.len(),
        filter.describe(),
        env.r[0],
        env.r[env.r.len() - 1],
        env.intervals()
    );
    println!("{}({}) = {}", a.error, a.resource.symbol(), formula);
    println!("margin {:.6} after {} iterations", fit.margin, fit.iterations);

    if let Some(out) = &a.out {
        let report = FitReport {
            resource: a.resource,
            error: a.error,
            system: a.system.clone(),
            arch: a.arch,
            points: pts.len(),
            grid_intervals: a.grid_intervals,
            r_min: env.r[0],
            r_max: env.r[env.r.len() - 1],
            breaks: a.breaks,
            with_plateau: a.plateau,
            iterations: fit.iterations,
            margin: fit.margin,
            formula: formula.clone(),
            params: fit.params.clone(),
            init: fit.init.clone(),
        };
        write_json(&report, out)?;
        println!("wrote report {}", out.display());
    }
    if let Some(csv) = &a.csv {
        let mut f = BufWriter::new(File::create(csv)?);
        f.write_all(b"r,envelope,fit\n")?;
        for (r, e) in env.r.iter().zip(&env.e) {
            let v = fit.params.eval(*r)?;
            writeln!(f, "{r},{e},{v}")?;
        }
        f.flush()?;
        println!("wrote table {}", csv.display());
    }
    Ok(())
}

#[derive(clap::Args)]
pub struct PlotArgs {
    /// Registry file (JSON lines).
    #[arg(long, env = "NSL_REGISTRY")]
    registry: PathBuf,
    /// Resource axis: compute, data, or model.
    #[arg(long)]
    resource: Resource,
    /// Error metric: nmae or nmse.
    #[arg(long, default_value_t = ErrorMetric::Nmae)]
    error: ErrorMetric,
    /// Restrict to one system.
    #[arg(long)]
    system: Option<String>,
    /// Restrict to one model family.
    #[arg(long)]
    arch: Option<Arch>,
    /// Overlay the lower-envelope step curve.
    #[arg(long)]
    envelope: bool,
    /// Overlay the fitted law from a fit report (JSON).
    #[arg(long)]
    fit: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long)]
    out: PathBuf,
}

/// The two resources not on the x axis, in (color, size) order.
fn companions(resource: Resource) -> (Resource, Resource) {
    match resource {
        Resource::Compute => (Resource::Data, Resource::Model),
        Resource::Data => (Resource::Compute, Resource::Model),
        Resource::Model => (Resource::Compute, Resource::Data),
    }
}

/// Vertices of the nonincreasing step function through the running minima
/// of `points` (sorted by resource): a horizontal run to each improving
/// point, a vertical drop there, then out to the largest resource.
fn envelope_step(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite plot point"));
    let mut v: Vec<(f64, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for &(x, y) in &sorted {
        if y < best {
            if let Some(&(_, prev)) = v.last() {
                v.push((x, prev));
            }
            v.push((x, y));
            best = y;
        }
    }
    let x_max = sorted[sorted.len() - 1].0;
    if v[v.len() - 1].0 < x_max {
        v.push((x_max, best));
    }
    v
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let outcomes = load_outcomes(&a.registry)?;
    let filter = OutcomeFilter { system: a.system.clone(), arch: a.arch };
    let (color_res, size_res) = companions(a.resource);
    let points: Vec<svg::Point> = outcomes
        .iter()
        .filter(|o| o.is_ok() && filter.matches(o))
        .filter_map(|o| {
            a.error.of(o).map(|e| svg::Point {
                x: a.resource.of(o),
                y: e,
                color: color_res.of(o),
                size: size_res.of(o),
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no successful runs for {} ({})",
            filter.describe(),
            a.resource
        )));
    }

    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let envelope = a.envelope.then(|| envelope_step(&pairs));

    let curve = match &a.fit {
        Some(path) => {
            let report: FitReport =
                serde_json::from_reader(BufReader::new(File::open(path)?))?;
            if report.resource != a.resource || report.error != a.error {
                return Err(Error::invalid(format!(
                    "fit report is for {}/{}, plot axes are {}/{}",
                    report.resource, report.error, a.resource, a.error
                )));
            }
            Some(curve_points(&report.params, &pairs)?)
        }
        None => None,
    };

    let doc = svg::render(&svg::Chart {
        title: format!("{} vs {} ({})", a.error, a.resource, filter.describe()),
        x_label: axis_label(a.resource),
        y_label: a.error.to_string(),
        color_label: axis_label(color_res),
        size_label: axis_label(size_res),
        points,
        envelope,
        curve,
    });
    std::fs::write(&a.out, doc.as_bytes())?;
    println!("wrote {}: {} points", a.out.display(), pairs.len());
    Ok(())
}

fn axis_label(r: Resource) -> String {
    match r {
        Resource::Compute => "compute c".to_string(),
        Resource::Data => "data d [s]".to_string(),
        Resource::Model => "parameters p".to_string(),
    }
}

/// Sample a fitted law on a fine geometric grid across the data range.
fn curve_points(params: &NslParams, pairs: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let x_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let grid =
        if x_min < x_max { interpolation_grid(x_min, x_max, 200)? } else { vec![x_min] };
    grid.into_iter().map(|r| params.eval(r).map(|v| (r, v))).collect()
}
