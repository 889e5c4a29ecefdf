//! Grid sweeps: enumerate (system, architecture, seed, resource slot) tuples,
//! run each one through data generation, training, and evaluation, and append
//! the results to a registry.
//!
//! A *slot* is a grid coordinate: a nominal epoch count, a nominal amount of
//! data in seconds, a nominal hidden width, and a nominal depth. The concrete
//! run configuration is sampled from the slot so that neighbouring slots
//! overlap: the data amount is drawn uniformly from [d/2, d] seconds, and the
//! width and depth are drawn uniformly from the integers in [ceil(s/2), s].
//! The epoch count is taken verbatim.
//!
//! Every run owns an independent deterministic seed stream derived from its
//! coordinates, so results do not depend on execution order or on how many
//! worker threads are used. Re-running a sweep against an existing registry
//! skips every run id that is already recorded, which makes interrupted
//! sweeps resumable and finished sweeps idempotent.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_dataset, Dataset};
use crate::dynamics::PhSystem;
use crate::error::{Error, Result};
use crate::model::{param_count_for, Arch, IdentModel, NormStats};
use crate::registry::{Outcome, Registry, RunStatus, REGISTRY_VERSION};
use crate::seed::SeedTree;
use crate::signal::SignalParams;
use crate::train::{evaluate, train, TrainConfig};

fn default_epoch_grid() -> Vec<u64> {
    (1..=14).map(|k| 1u64 << k).collect()
}

fn default_data_grid() -> Vec<u64> {
    (1..=9).map(|k| 1u64 << k).collect()
}

fn default_hidden_grid() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

fn default_depth_grid() -> Vec<usize> {
    vec![2, 4]
}

fn default_horizon() -> f64 {
    10.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_val_trajectories() -> f64 {
    10.0
}

fn default_lr() -> f64 {
    1e-3
}

/// Replacement state box for one system, [x_min, x_max] componentwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsOverride {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
}

/// Full description of a sweep, loadable from TOML. The grids are the scale
/// knobs: a desk-sized sweep just lists shorter grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Benchmark system names ("spring", "ball", "motor").
    pub systems: Vec<String>,
    /// Model families to train on each system.
    pub architectures: Vec<Arch>,
    /// Base seeds; each seed is an independent replicate of the whole grid.
    pub seeds: Vec<u64>,
    #[serde(default = "default_epoch_grid")]
    pub epoch_grid: Vec<u64>,
    /// Nominal dataset sizes in seconds of simulated time.
    #[serde(default = "default_data_grid")]
    pub data_grid: Vec<u64>,
    #[serde(default = "default_hidden_grid")]
    pub hidden_grid: Vec<usize>,
    #[serde(default = "default_depth_grid")]
    pub depth_grid: Vec<usize>,
    /// Length of each simulated trajectory in seconds.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub signal: SignalParams,
    /// Held-out trajectories per (system, seed) pair.
    #[serde(default = "default_val_trajectories")]
    pub val_trajectories: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Optional fixed batch size; the default caps batches at 256 rows.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Per-system physical parameter overrides, e.g. `[params.ball] m = 0.2`.
    #[serde(default)]
    pub params: BTreeMap<String, BTreeMap<String, f64>>,
    /// Per-system sampling box overrides.
    #[serde(default)]
    pub bounds: BTreeMap<String, BoundsOverride>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            systems: vec!["spring".into(), "ball".into(), "motor".into()],
            architectures: Arch::ALL.to_vec(),
            seeds: vec![0],
            epoch_grid: default_epoch_grid(),
            data_grid: default_data_grid(),
            hidden_grid: default_hidden_grid(),
            depth_grid: default_depth_grid(),
            horizon: default_horizon(),
            dt: default_dt(),
            signal: SignalParams::default(),
            val_trajectories: default_val_trajectories(),
            lr: default_lr(),
            batch_size: None,
            params: BTreeMap::new(),
            bounds: BTreeMap::new(),
        }
    }
}

fn check_distinct<T: PartialEq + std::fmt::Debug>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid(format!("{what} list must not be empty")));
    }
    for (i, a) in items.iter().enumerate() {
        if items[..i].contains(a) {
            return Err(Error::invalid(format!("duplicate {what} entry {a:?}")));
        }
    }
    Ok(())
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_distinct(&self.systems, "system")?;
        check_distinct(&self.architectures, "architecture")?;
        check_distinct(&self.seeds, "seed")?;
        check_distinct(&self.epoch_grid, "epoch grid")?;
        check_distinct(&self.data_grid, "data grid")?;
        check_distinct(&self.hidden_grid, "hidden grid")?;
        check_distinct(&self.depth_grid, "depth grid")?;
        if self.epoch_grid.contains(&0) {
            return Err(Error::invalid("epoch grid entries must be positive"));
        }
        if self.data_grid.contains(&0) {
            return Err(Error::invalid("data grid entries must be positive"));
        }
        if self.hidden_grid.contains(&0) || self.depth_grid.contains(&0) {
            return Err(Error::invalid("width and depth grid entries must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive and finite"));
        }
        if !(self.dt > 0.0 && self.dt < self.horizon) {
            return Err(Error::invalid("dt must be positive and smaller than the horizon"));
        }
        if !(self.val_trajectories > 0.0 && self.val_trajectories.is_finite()) {
            return Err(Error::invalid("validation trajectory count must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        self.signal.validate()?;
        // Surfaces unknown system names, unknown parameter keys, and
        // malformed bounds before any run starts.
        self.build_systems()?;
        Ok(())
    }

    /// Instantiate every configured system with its overrides applied.
    pub fn build_systems(&self) -> Result<Vec<(String, PhSystem)>> {
        for name in self.params.keys().chain(self.bounds.keys()) {
            if !self.systems.contains(name) {
                return Err(Error::invalid(format!(
                    "override for {name:?} does not match any configured system"
                )));
            }
        }
        let mut out = Vec::with_capacity(self.systems.len());
        for name in &self.systems {
            let mut sys = PhSystem::by_name(name)?;
            if let Some(overrides) = self.params.get(name) {
                for (key, value) in overrides {
                    sys.set_param(key, *value)?;
                }
            }
            if let Some(b) = self.bounds.get(name) {
                sys = sys.with_bounds(b.x_min.clone(), b.x_max.clone())?;
            }
            out.push((name.clone(), sys));
        }
        Ok(out)
    }

    /// Total number of grid points.
    pub fn total_runs(&self) -> usize {
        self.systems.len()
            * self.architectures.len()
            * self.seeds.len()
            * self.epoch_grid.len()
            * self.data_grid.len()
            * self.hidden_grid.len()
            * self.depth_grid.len()
    }
}

/// Grid coordinates of a single run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunSpec {
    pub system: String,
    pub arch: Arch,
    pub seed: u64,
    pub epochs: u64,
    pub data_slot: u64,
    pub hidden_slot: usize,
    pub depth_slot: usize,
}

impl RunSpec {
    /// Canonical textual key. Everything derived for the run (its id and all
    /// of its random streams) hangs off this string.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}",
            self.system,
            self.arch,
            self.seed,
            self.epochs,
            self.data_slot,
            self.hidden_slot,
            self.depth_slot
        )
    }

    pub fn seed_tree(&self) -> SeedTree {
        SeedTree::from_key(&self.key())
    }

    pub fn run_id(&self) -> String {
        self.seed_tree().hex_id(16)
    }
}

/// Enumerate the grid in a fixed order: architecture, system, seed, epochs,
/// data, width, depth (innermost varies fastest).
pub fn enumerate_runs(cfg: &SweepConfig) -> Vec<RunSpec> {
    let mut runs = Vec::with_capacity(cfg.total_runs());
    for arch in &cfg.architectures {
        for system in &cfg.systems {
            for &seed in &cfg.seeds {
                for &epochs in &cfg.epoch_grid {
                    for &data_slot in &cfg.data_grid {
                        for &hidden_slot in &cfg.hidden_grid {
                            for &depth_slot in &cfg.depth_grid {
                                runs.push(RunSpec {
                                    system: system.clone(),
                                    arch: *arch,
                                    seed,
                                    epochs,
                                    data_slot,
                                    hidden_slot,
                                    depth_slot,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    runs
}

/// Concrete configuration sampled from a slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRun {
    /// Fractional trajectory count; `trajectories * horizon` seconds of data.
    pub trajectories: f64,
    pub hidden: usize,
    pub depth: usize,
}

/// Draw the concrete run configuration. Draw order (data amount, width,
/// depth) is part of the on-disk contract: changing it changes every run id's
/// dataset.
pub fn sample_run<R: Rng>(rng: &mut R, spec: &RunSpec, horizon: f64) -> SampledRun {
    let d_hi = spec.data_slot as f64;
    let d = rng.random_range(d_hi / 2.0..=d_hi);
    let hidden = rng.random_range(spec.hidden_slot.div_ceil(2)..=spec.hidden_slot);
    let depth = rng.random_range(spec.depth_slot.div_ceil(2)..=spec.depth_slot);
    SampledRun { trajectories: d / horizon, hidden, depth }
}

/// Deterministic held-out dataset for one (system, seed) pair. Independent of
/// every training stream by construction.
pub fn validation_dataset(
    system_name: &str,
    system: &PhSystem,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<Dataset> {
    let tree = SeedTree::from_key(&format!("validation|{system_name}|{seed}"));
    build_dataset(system, cfg.val_trajectories, cfg.horizon, cfg.dt, &cfg.signal, &tree)
}

fn with_reason(base: &Outcome, reason: String) -> Outcome {
    Outcome { reason: Some(reason), ..base.clone() }
}

/// Execute one run end to end and describe the result. Infrastructure errors
/// (a dataset that cannot be built, a training divergence) become a failed
/// outcome rather than an `Err`, so one bad run never aborts a sweep.
pub fn execute_run(spec: &RunSpec, system: &PhSystem, val: &Dataset, cfg: &SweepConfig) -> Outcome {
    let tree = spec.seed_tree();
    let run_id = tree.hex_id(16);
    let sampled = sample_run(&mut tree.child("sample").rng(), spec, cfg.horizon);
    let n = system.state_dim();
    let m = system.input_dim();
    let p = param_count_for(spec.arch, n, m, sampled.hidden, sampled.depth);

    let base = Outcome {
        v: REGISTRY_VERSION,
        run_id,
        system: spec.system.clone(),
        arch: spec.arch,
        seed: spec.seed,
        epochs: spec.epochs,
        data_slot: spec.data_slot,
        hidden_slot: spec.hidden_slot,
        depth_slot: spec.depth_slot,
        trajectories: sampled.trajectories,
        hidden: sampled.hidden,
        depth: sampled.depth,
        compute: p as f64 * spec.epochs as f64 * sampled.trajectories * 1000.0,
        data_seconds: sampled.trajectories * cfg.horizon,
        param_count: p,
        nmae: None,
        nmse: None,
        status: RunStatus::Failed,
        reason: None,
    };

    let data = match build_dataset(
        system,
        sampled.trajectories,
        cfg.horizon,
        cfg.dt,
        &cfg.signal,
        &tree.child("data"),
    ) {
        Ok(d) => d,
        Err(e) => return with_reason(&base, format!("data generation: {e}")),
    };
    let norm = NormStats::from_dataset(&data);
    let mut model = match IdentModel::build(
        spec.arch,
        n,
        m,
        sampled.hidden,
        sampled.depth,
        norm,
        &mut tree.child("init").rng(),
    ) {
        Ok(mdl) => mdl,
        Err(e) => return with_reason(&base, format!("model build: {e}")),
    };
    let mut tc = TrainConfig::for_rows(spec.epochs, data.rows, tree.child("train").seed_u64());
    tc.lr = cfg.lr;
    if let Some(b) = cfg.batch_size {
        tc.batch_size = b.min(data.rows).max(1);
    }
    if let Err(e) = train(&mut model, &data, &tc) {
        return with_reason(&base, format!("training: {e}"));
    }
    match evaluate(&model, val, spec.epochs, sampled.trajectories) {
        Ok(report) => Outcome {
            compute: report.compute,
            data_seconds: data.data_seconds(),
            param_count: report.param_count,
            nmae: Some(report.nmae),
            nmse: Some(report.nmse),
            status: RunStatus::Ok,
            ..base
        },
        Err(e) => with_reason(&base, format!("evaluation: {e}")),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSummary {
    /// Runs executed this invocation.
    pub attempted: usize,
    pub ok: usize,
    pub failed: usize,
    /// Runs already present in the registry.
    pub skipped: usize,
}

/// Run every grid point not yet in the registry, appending an outcome per
/// run. `workers` sets the thread count; results are bit-identical for any
/// worker count, only the append order varies. The progress callback receives
/// (done, attempted) counts.
pub fn run_sweep(
    cfg: &SweepConfig,
    registry: &Registry,
    workers: usize,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SweepSummary> {
    cfg.validate()?;
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let systems: HashMap<String, PhSystem> = cfg.build_systems()?.into_iter().collect();

    let existing = registry.existing_ids()?;
    let all = enumerate_runs(cfg);
    let total = all.len();
    let todo: Vec<RunSpec> = all.into_iter().filter(|s| !existing.contains(&s.run_id())).collect();
    let skipped = total - todo.len();

    // Validation sets are shared across every run of a (system, seed) pair;
    // build them once up front. A failure here is a configuration problem,
    // not a per-run accident, so it aborts the sweep.
    let mut val_sets: HashMap<(String, u64), Dataset> = HashMap::new();
    for name in &cfg.systems {
        for &seed in &cfg.seeds {
            if todo.iter().any(|s| s.system == *name && s.seed == seed) {
                let ds = validation_dataset(name, &systems[name], seed, cfg)?;
                val_sets.insert((name.clone(), seed), ds);
            }
        }
    }

    let attempted = todo.len();
    let ok = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        todo.par_iter().try_for_each(|spec| -> Result<()> {
            let system = &systems[&spec.system];
            let val = &val_sets[&(spec.system.clone(), spec.seed)];
            let outcome = execute_run(spec, system, val, cfg);
            match outcome.status {
                RunStatus::Ok => ok.fetch_add(1, Ordering::Relaxed),
                RunStatus::Failed => failed.fetch_add(1, Ordering::Relaxed),
            };
            registry.append(&outcome)?;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n, attempted);
            }
            Ok(())
        })
    })?;

    Ok(SweepSummary {
        attempted,
        ok: ok.load(Ordering::Relaxed),
        failed: failed.load(Ordering::Relaxed),
        skipped,
    })
}
