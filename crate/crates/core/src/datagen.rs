//! Trajectory simulation and dataset assembly.
//!
//! Trajectories are integrated with the classical fourth-order Runge-Kutta
//! method on a fixed grid `t_k = k dt`. The recorded derivative at a grid
//! point is the exact right-hand side there, not a finite difference, so a
//! learned model is scored against noise-free targets. Inputs are evaluated
//! continuously, including at stage midpoints, which keeps the integrator at
//! its nominal order for forced systems.
//!
//! Dataset size is controlled by a fractional trajectory count: `2.35`
//! trajectories means two full ones plus the first 35% of a third, all from
//! the same per-trajectory seed stream. Growing the count therefore extends
//! a dataset without resampling what is already there.

use crate::dynamics::PhSystem;
use crate::error::{Error, Result};
use crate::seed::SeedTree;
use crate::signal::{Multisine, SignalParams};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// One simulated rollout on the sampling grid. Row-major storage,
/// `states`/`derivs` are `len x n`, `inputs`/`outputs` are `len x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub len: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub derivs: Vec<f64>,
    pub outputs: Vec<f64>,
}

/// Integrate `points` grid samples spaced `dt` apart starting from `x0` at
/// `t = 0`, driving each input channel with its own multisine realization.
pub fn integrate_points(
    system: &PhSystem,
    x0: &[f64],
    signals: &[Multisine],
    points: usize,
    dt: f64,
) -> Result<Trajectory> {
    let (n, m) = (system.state_dim(), system.input_dim());
    if x0.len() != n {
        return Err(Error::invalid(format!("initial state must have {n} components")));
    }
    if signals.len() != m {
        return Err(Error::invalid(format!("need {m} input signals, got {}", signals.len())));
    }
    if points == 0 {
        return Err(Error::invalid("trajectory needs at least one grid point"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive and finite"));
    }

    let eval_u = |t: f64, buf: &mut [f64]| {
        for (q, sig) in signals.iter().enumerate() {
            buf[q] = sig.eval(t);
        }
    };

    let mut traj = Trajectory {
        n,
        m,
        len: points,
        times: Vec::with_capacity(points),
        states: Vec::with_capacity(points * n),
        inputs: Vec::with_capacity(points * m),
        derivs: Vec::with_capacity(points * n),
        outputs: Vec::with_capacity(points * m),
    };

    let mut x = x0.to_vec();
    let mut u = vec![0.0; m];
    let mut u_mid = vec![0.0; m];
    let mut u_end = vec![0.0; m];
    let mut stage = vec![0.0; n];

    for k in 0..points {
        let t = k as f64 * dt;
        eval_u(t, &mut u);
        let dx = system.rhs(&x, &u)?;
        let y = system.output(&x);
        let finite =
            x.iter().chain(&dx).chain(&y).chain(&u).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Diverged { step: k, detail: format!("system {}", system.name()) });
        }
        traj.times.push(t);
        traj.states.extend_from_slice(&x);
        traj.inputs.extend_from_slice(&u);
        traj.derivs.extend_from_slice(&dx);
        traj.outputs.extend_from_slice(&y);

        if k + 1 < points {
            // Classical RK4 with the input evaluated at stage times.
            eval_u(t + 0.5 * dt, &mut u_mid);
            eval_u(t + dt, &mut u_end);
            let k1 = dx;
            for i in 0..n {
                stage[i] = x[i] + 0.5 * dt * k1[i];
            }
            let k2 = system.rhs(&stage, &u_mid)?;
            for i in 0..n {
                stage[i] = x[i] + 0.5 * dt * k2[i];
            }
            let k3 = system.rhs(&stage, &u_mid)?;
            for i in 0..n {
                stage[i] = x[i] + dt * k3[i];
            }
            let k4 = system.rhs(&stage, &u_end)?;
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: k + 1,
                    detail: format!("system {}", system.name()),
                });
            }
        }
    }
    Ok(traj)
}

/// Integrate over `[0, horizon)` with `round(horizon/dt)` grid points.
pub fn integrate(
    system: &PhSystem,
    x0: &[f64],
    signals: &[Multisine],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon must be positive and finite"));
    }
    let points = (horizon / dt).round() as usize;
    integrate_points(system, x0, signals, points, dt)
}

/// Energy-balance defect of a simulated trajectory:
/// `|H(x_end) - H(x_0) - integral(y^T u - dissipated power)|` with the
/// integral taken by the trapezoidal rule on the sample grid. Small values
/// certify both the model structure and the integration accuracy.
pub fn power_balance_residual(system: &PhSystem, traj: &Trajectory) -> f64 {
    let (n, m) = (traj.n, traj.m);
    let mut prev = 0.0;
    let mut integral = 0.0;
    for k in 0..traj.len {
        let x = &traj.states[k * n..(k + 1) * n];
        let u = &traj.inputs[k * m..(k + 1) * m];
        let y = &traj.outputs[k * m..(k + 1) * m];
        let supplied: f64 = y.iter().zip(u).map(|(a, b)| a * b).sum();
        let net = supplied - system.dissipation(x);
        if k > 0 {
            let dt = traj.times[k] - traj.times[k - 1];
            integral += 0.5 * dt * (prev + net);
        }
        prev = net;
    }
    let h0 = system.hamiltonian(&traj.states[..n]);
    let h1 = system.hamiltonian(&traj.states[(traj.len - 1) * n..]);
    (h1 - h0 - integral).abs()
}

/// A training or validation set: concatenated trajectory samples plus the
/// per-column spread of the derivative targets used for normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub m: usize,
    pub rows: usize,
    pub dt: f64,
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub derivs: Vec<f64>,
    pub outputs: Vec<f64>,
    /// Population standard deviation of each derivative column; strictly
    /// positive, enforced at construction and load.
    pub sigma: Vec<f64>,
}

impl Dataset {
    /// Total represented sampling time in seconds.
    pub fn data_seconds(&self) -> f64 {
        self.rows as f64 * self.dt
    }

    pub fn state_row(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.m..(i + 1) * self.m]
    }

    pub fn deriv_row(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.n..(i + 1) * self.n]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.m..(i + 1) * self.m]
    }
}

/// Population standard deviation per column of a row-major `rows x cols`
/// matrix.
pub fn column_std(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols);
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            mean[c] += data[r * cols + c];
        }
    }
    for c in 0..cols {
        mean[c] /= rows as f64;
    }
    let mut var = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let d = data[r * cols + c] - mean[c];
            var[c] += d * d;
        }
    }
    var.iter().map(|v| (v / rows as f64).sqrt()).collect()
}

fn assemble(trajs: Vec<(Trajectory, usize)>, n: usize, m: usize, dt: f64) -> Result<Dataset> {
    let rows: usize = trajs.iter().map(|(_, take)| take).sum();
    let mut ds = Dataset {
        n,
        m,
        rows,
        dt,
        states: Vec::with_capacity(rows * n),
        inputs: Vec::with_capacity(rows * m),
        derivs: Vec::with_capacity(rows * n),
        outputs: Vec::with_capacity(rows * m),
        sigma: Vec::new(),
    };
    for (traj, take) in &trajs {
        ds.states.extend_from_slice(&traj.states[..take * n]);
        ds.inputs.extend_from_slice(&traj.inputs[..take * m]);
        ds.derivs.extend_from_slice(&traj.derivs[..take * n]);
        ds.outputs.extend_from_slice(&traj.outputs[..take * m]);
    }
    ds.sigma = column_std(&ds.derivs, rows, n);
    if let Some(j) = ds.sigma.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::DegenerateData(format!(
            "derivative column {j} has zero or non-finite spread"
        )));
    }
    Ok(ds)
}

/// Build a dataset of `trajectories` rollouts (fractional part allowed) of
/// the given horizon and step. Each trajectory draws its initial state and
/// then its per-channel phases from its own stream under `seed`, so datasets
/// with a larger count extend smaller ones bit for bit.
pub fn build_dataset(
    system: &PhSystem,
    trajectories: f64,
    horizon: f64,
    dt: f64,
    signal: &SignalParams,
    seed: &SeedTree,
) -> Result<Dataset> {
    if !(trajectories.is_finite() && trajectories > 0.0) {
        return Err(Error::invalid("trajectory count must be positive and finite"));
    }
    if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt.is_finite() && dt <= horizon) {
        return Err(Error::invalid("need 0 < dt <= horizon, both finite"));
    }
    signal.validate()?;
    let points = (horizon / dt).round() as usize;
    if points == 0 {
        return Err(Error::invalid("horizon shorter than half a step"));
    }

    let full = trajectories.floor() as usize;
    let frac = trajectories - full as f64;
    let partial_points = (frac * points as f64).floor() as usize;
    if full == 0 && partial_points == 0 {
        return Err(Error::invalid(format!(
            "trajectory count {trajectories} yields an empty dataset at {points} points per rollout"
        )));
    }

    let m = system.input_dim();
    let mut trajs = Vec::new();
    let count = full + usize::from(partial_points > 0);
    for i in 0..count {
        let take = if i < full { points } else { partial_points };
        let mut rng = seed.child_index("traj", i as u64).rng();
        let x0 = system.sample_initial_state(&mut rng);
        let signals: Vec<Multisine> =
            (0..m).map(|_| Multisine::sample(signal, &mut rng)).collect();
        let traj = integrate_points(system, &x0, &signals, take, dt)?;
        trajs.push((traj, take));
    }
    assemble(trajs, system.state_dim(), m, dt)
}

/// Provenance sidecar stored next to a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: String,
    pub seed: u64,
    pub trajectories: f64,
    pub horizon: f64,
    pub dt: f64,
    pub signal: SignalParams,
}

/// Path of the JSON sidecar belonging to a dataset or model file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

const DATASET_MAGIC: &[u8; 4] = b"NSLD";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    /// Write the binary dataset file (little-endian, fixed layout).
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LittleEndian>(DATASET_VERSION)?;
        w.write_u32::<LittleEndian>(self.n as u32)?;
        w.write_u32::<LittleEndian>(self.m as u32)?;
        w.write_u64::<LittleEndian>(self.rows as u64)?;
        w.write_f64::<LittleEndian>(self.dt)?;
        for block in [&self.states, &self.inputs, &self.derivs, &self.outputs, &self.sigma] {
            for &v in block.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let bad = |detail: &str| Error::MalformedFile {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != DATASET_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let dt = r.read_f64::<LittleEndian>()?;
        if n == 0 || m == 0 || rows == 0 {
            return Err(bad("empty dimensions"));
        }
        if rows.saturating_mul(n.max(m)) > (1 << 33) {
            return Err(bad("implausibly large dataset"));
        }
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let states = read_block(rows * n)?;
        let inputs = read_block(rows * m)?;
        let derivs = read_block(rows * n)?;
        let outputs = read_block(rows * m)?;
        let sigma = read_block(n)?;
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(bad("nonpositive derivative spread"));
        }
        Ok(Dataset { n, m, rows, dt, states, inputs, derivs, outputs, sigma })
    }
}

impl DatasetMeta {
    pub fn write(&self, dataset_path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(sidecar_path(dataset_path))?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read(dataset_path: &Path) -> Result<DatasetMeta> {
        let f = BufReader::new(File::open(sidecar_path(dataset_path))?);
        Ok(serde_json::from_reader(f)?)
    }
}
